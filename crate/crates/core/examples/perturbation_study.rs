//! Information of the coherent family against random perturbations of it.

use qdopt::channel::ChannelParams;
use qdopt::fock::FockDim;
use qdopt::shannon::{info_of_heterodyne_vs_perturbed, PerturbationGrids};

fn main() -> qdopt::Result<()> {
    let params = ChannelParams::single(1.0, 1.0)?;
    let mut grids = PerturbationGrids::new(FockDim::new(30)?);
    grids.theta_step = 0.3;
    grids.beta_step = 0.3;
    let study = info_of_heterodyne_vs_perturbed(&params, 0.05, &[1, 2, 3, 4], grids)?;
    println!("I_coherent = {:.6}", study.i_coherent());
    for s in &study.samples {
        println!("seed {}: I = {:.6}, rescale {:.4}", s.seed, s.info, s.rescale);
    }
    println!("worst gain {:.3e}", study.worst_gain);
    Ok(())
}
