//! Exact check of the diagonal occupation-number inequality.

use qdopt::shannon::{occupation_inequality_check, occupation_sides};

fn main() -> qdopt::Result<()> {
    for h in [vec![0.5], vec![0.99], vec![0.3, 0.7]] {
        let n_max = if h.len() == 1 { 200 } else { 60 };
        let r = occupation_inequality_check(&h, n_max)?;
        println!(
            "h = {h:?}: {} tuples, holds {}, equality at {:?}, {} underflowed",
            r.tuples_checked, r.holds, r.equality_cases, r.underflowed
        );
    }
    let (lhs, rhs) = occupation_sides(&[0.5, 0.5], &[2, 1]);
    println!("sides at (2, 1): {lhs} >= {rhs}");
    Ok(())
}
