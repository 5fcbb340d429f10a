//! Second-variation operators B and D of the information functional and the
//! grid certificate for B - D >= 0.

use qdopt::channel::ChannelParams;
use qdopt::fock::FockDim;
use qdopt::measurement::GridSpec;
use qdopt::shannon::{local_optimality_certificate, variation_operators};
use qdopt::C64;

fn main() -> qdopt::Result<()> {
    let params = ChannelParams::single(1.0, 1.0)?;
    let dim = FockDim::new(40)?;
    let r = variation_operators(C64::new(0.5, -0.5), &params, dim)?;
    println!(
        "beta = 0.5-0.5i: min eig B {:.2e}, D {:.2e}, B-D {:.2e}, ||B|beta>|| {:.2e}",
        r.min_eig_b, r.min_eig_d, r.min_eig_b_minus_d, r.stationarity_residual
    );
    let lowest: Vec<String> = r.eigenvalues_b_minus_d.iter().take(4).map(|x| format!("{x:.4}")).collect();
    println!("lowest eigenvalues of B - D: {}", lowest.join(", "));

    let grid = GridSpec { extent: 1.5, step: 0.5 }.points();
    for (s, l) in [(1.0, 1.0), (0.5, 1.2), (3.0, 2.0)] {
        let cert = local_optimality_certificate(&ChannelParams::single(s, l)?, &grid, dim, 1e-8)?;
        println!(
            "S={s} L={l}: worst min eig B-D {:.2e}, pass {}, spectral spread {:.3}",
            cert.worst_min_eig_b_minus_d, cert.pass, cert.spectral_spread
        );
    }
    Ok(())
}
