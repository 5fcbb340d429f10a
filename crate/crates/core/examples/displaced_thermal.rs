//! Channel output states and the closed-form densities around them.

use qdopt::channel::{derive_channel_matrices, displaced_thermal_state, heterodyne_likelihood, posterior_density};
use qdopt::fock::{coherent_state, FockDim};
use qdopt::C64;

fn main() -> qdopt::Result<()> {
    let params = derive_channel_matrices(&[1.0], &[1.5])?;
    println!("H = {:.4}, A = {:.4}, M = {:?}", params.h()[0], params.a()[0], params.m()[0]);

    let dim = FockDim::new(40)?;
    let theta = C64::new(0.8, 0.3);
    let rho = displaced_thermal_state(theta, 1.5, dim)?;
    println!("trace deficit {:.2e}", rho.trace_deficit());

    for beta in [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.8, 0.3)] {
        let q = rho.operator().expectation(&coherent_state(beta, dim)).re;
        println!(
            "beta {beta}: <beta|rho|beta> = {q:.10}, Husimi = {:.10}, posterior(theta|beta) = {:.6}",
            heterodyne_likelihood(beta, theta, 1.5),
            posterior_density(&[theta], &[beta], &params)?
        );
    }
    Ok(())
}
