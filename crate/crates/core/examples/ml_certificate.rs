//! Maximum-likelihood optimality certificate of the coherent measurement.

use qdopt::bayes::coherent_ml_certificate;
use qdopt::fock::FockDim;
use qdopt::measurement::GridSpec;

fn main() -> qdopt::Result<()> {
    let grid = GridSpec { extent: 2.0, step: 0.5 }.points();
    let dim = FockDim::new(40)?;
    for l in [1.0, 1.5, 3.0] {
        let cert = coherent_ml_certificate(l, &grid, dim, 1e-6)?;
        println!(
            "L = {l}: Lambda = {:.4}, worst residual {:.2e}, worst min eig B {:.2e}, pass {}",
            cert.lambda, cert.worst_eigen_residual, cert.worst_min_eig_b, cert.pass
        );
    }
    Ok(())
}
