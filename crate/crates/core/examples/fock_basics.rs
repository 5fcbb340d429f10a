//! Ladder operators, coherent states and displacements on a truncated space.

use qdopt::fock::{coherent_state, coherent_tail_mass, displacement, ladder_operators, FockDim, StateVector};
use qdopt::C64;

fn main() -> qdopt::Result<()> {
    let dim = FockDim::new(30)?;
    let (a, ad) = ladder_operators(dim);
    let comm = a.commutator(&ad);
    println!("[a, a^dagger] diagonal: {:.3} ... {:.3}", comm.get(0, 0).re, comm.get(30, 30).re);

    let beta = C64::new(1.0, -0.5);
    let v = coherent_state(beta, dim);
    println!("|beta> norm deficit {:.2e}, tail above n_max {:.2e}", v.norm_deficit(), coherent_tail_mass(beta, dim));

    let av = a.apply(&v);
    let gap = av.axpy(-beta, &v).norm();
    println!("|| a|beta> - beta|beta> || = {gap:.2e}");

    let moved = displacement(beta, dim).apply(&StateVector::basis(dim, 0)?);
    println!("|| D(beta)|0> - |beta> || = {:.2e}", moved.axpy(C64::new(-1.0, 0.0), &v).norm());
    Ok(())
}
