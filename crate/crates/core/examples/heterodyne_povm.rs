//! Discretized heterodyne POVM: completeness, outcome statistics, JSON.

use qdopt::channel::DensityOperator;
use qdopt::fock::{coherent_state, FockDim};
use qdopt::measurement::{heterodyne_grid_povm, identity_resolution_report, outcome_distribution, DiscretePOVM};
use qdopt::C64;

fn main() -> qdopt::Result<()> {
    let dim = FockDim::new(30)?;
    let povm = heterodyne_grid_povm(6.0, 0.1, dim)?;
    let report = identity_resolution_report(&povm);
    println!("{} outcomes, level-0 deficit {:.2e}, n_eff {:?}", povm.len(), report.deficits[0], report.n_eff);

    let rho = DensityOperator::pure(&coherent_state(C64::new(1.0, 0.5), dim))?;
    let dist = outcome_distribution(&povm, &rho)?;
    println!("total probability {:.12}, clipped {}", dist.total, dist.clipped);

    let small = heterodyne_grid_povm(2.0, 0.5, FockDim::new(3)?)?.complete_with_remainder()?;
    let json = small.to_json()?;
    let back = DiscretePOVM::from_json(&json)?;
    println!("round trip of a {}-outcome POVM: {} bytes, identical = {}", back.len(), json.len(), back.to_json()? == json);
    Ok(())
}
