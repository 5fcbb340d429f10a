//! Binary coherent discrimination: spectral solution, optimality check, and
//! the swapped (pessimal) rule.

use qdopt::bayes::{helstrom_binary, optimality_check, HypothesisEnsemble};
use qdopt::channel::DensityOperator;
use qdopt::fock::{coherent_state, FockDim};
use qdopt::measurement::DiscretePOVM;
use qdopt::C64;

fn main() -> qdopt::Result<()> {
    let dim = FockDim::new(30)?;
    for alpha in [0.25, 0.5, 1.0] {
        let plus = DensityOperator::pure(&coherent_state(C64::new(alpha, 0.0), dim))?;
        let minus = DensityOperator::pure(&coherent_state(C64::new(-alpha, 0.0), dim))?;
        let h = helstrom_binary(0.5, &plus, 0.5, &minus)?;
        let e = HypothesisEnsemble::min_error(vec![plus, minus], vec![0.5, 0.5])?;
        let ok = optimality_check(&h.povm, &e, 1e-8)?;
        let swapped = DiscretePOVM::from_operators(dim, vec![h.povm.effective_operator(1), h.povm.effective_operator(0)])?;
        let bad = optimality_check(&swapped, &e, 1e-8)?;
        println!(
            "alpha {alpha}: P_err {:.10}, optimal {:?}, swapped rule min eig {:.4}",
            h.p_err,
            ok.verdict,
            bad.worst_min_eig()
        );
    }
    Ok(())
}
