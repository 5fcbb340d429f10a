//! Mutual information of heterodyne detection against ln(1 + S/L).

use qdopt::channel::ChannelParams;
use qdopt::fock::FockDim;
use qdopt::measurement::heterodyne_grid_povm;
use qdopt::shannon::{channel_output_state, gaussian_heterodyne_info, mutual_information, output_extent, PriorGrid};

fn main() -> qdopt::Result<()> {
    let dim = FockDim::new(40)?;
    for (s, l) in [(1.0, 1.0), (0.5, 1.5)] {
        let params = ChannelParams::single(s, l)?;
        let prior = PriorGrid::gaussian(&params, 6.0, 0.25)?;
        let povm = heterodyne_grid_povm(output_extent(&params, 6.0), 0.25, dim)?;
        let est = mutual_information(&povm, &prior, |t| channel_output_state(t, l, dim), dim)?;
        println!(
            "S={s} L={l}: I = {:.6} nats ({:.6} bits), exact {:.6}, error budget {:.1e}",
            est.value,
            est.bits,
            gaussian_heterodyne_info(&params),
            est.error_budget
        );
    }
    Ok(())
}
