use std::collections::BTreeMap;

use serde_json::json;

use super::config::{Command, ExperimentConfig};
use super::report::{Cell, Check, CsvTable, Outcome};
use crate::bayes::{
    average_risk, coherent_ml_certificate, helstrom_binary, optimality_check, optimize_min_error,
    HypothesisEnsemble,
};
use crate::channel::{ChannelParams, DensityOperator};
use crate::error::{invalid, Result};
use crate::fock::{coherent_state, FockDim};
use crate::measurement::{heterodyne_grid_povm, identity_resolution_report, DiscretePOVM};
use crate::shannon::{
    channel_output_state, d_construction_defect, gaussian_heterodyne_info,
    info_of_heterodyne_vs_perturbed, local_optimality_certificate, mutual_information,
    occupation_inequality_check, output_extent, PerturbationGrids, PriorGrid,
};
use crate::C64;

/// Convergence threshold on the risk step of the fixed-point optimizer.
const OPTIMIZER_STEP_TOL: f64 = 1e-14;

/// Truncation of the brute-force D comparison.
const CONSTRUCTION_DIM: usize = 12;

pub(crate) fn dispatch(c: &ExperimentConfig) -> Result<Outcome> {
    match c.command {
        Command::VerifyMl => verify_ml(c),
        Command::Discriminate => discriminate(c),
        Command::Info => match &c.perturbation {
            Some(_) => perturbation(c),
            None => info(c),
        },
        Command::VerifyLocalOpt => verify_local_opt(c),
        Command::VerifyIneq9 => verify_ineq9(c),
        Command::PovmAudit => povm_audit(c),
    }
}

fn dim(c: &ExperimentConfig) -> Result<FockDim> {
    FockDim::new(c.dim.expect("resolved"))
}

/// Every `(S, L)` entry as its own single-mode channel.
fn channels(c: &ExperimentConfig) -> Result<Vec<ChannelParams>> {
    let ch = c.channel.as_ref().expect("resolved");
    ch.s.iter()
        .zip(&ch.l)
        .map(|(&s, &l)| ChannelParams::single(s, l))
        .collect()
}

fn tag(p: &ChannelParams) -> String {
    format!("[S={},L={}]", p.s()[0], p.l()[0])
}

fn beta_points(c: &ExperimentConfig) -> Vec<C64> {
    c.beta_grid.expect("resolved").points()
}

fn verify_ml(c: &ExperimentConfig) -> Result<Outcome> {
    let dim = dim(c)?;
    let pts = beta_points(c);
    let t = &c.tolerances;
    let (eig_tol, psd_tol) = (t.eigen_residual.unwrap(), t.psd.unwrap());
    let mut table = CsvTable::new(&["L", "beta_re", "beta_im", "eigen_residual", "min_eig_b", "norm_deficit"]);
    let mut checks = Vec::new();
    let mut details = Vec::new();
    for &l in &c.channel.as_ref().expect("resolved").l {
        let cert = coherent_ml_certificate(l, &pts, dim, eig_tol)?;
        for p in &cert.points {
            table.push(&[
                Cell::Num(l),
                Cell::Num(p.beta.re),
                Cell::Num(p.beta.im),
                Cell::Num(p.eigen_residual),
                Cell::Num(p.min_eig_b),
                Cell::Num(p.norm_deficit),
            ]);
        }
        checks.push(Check::at_most(format!("eigen_residual[L={l}]"), cert.worst_eigen_residual, eig_tol));
        checks.push(Check::at_least_minus(format!("min_eig_b[L={l}]"), cert.worst_min_eig_b, psd_tol));
        details.push(serde_json::to_value(&cert)?);
    }
    Ok(Outcome {
        checks,
        diagnostics: BTreeMap::new(),
        details: json!(details),
        table,
    })
}

/// `(1 - sqrt(1 - 4 p0 p1 |<alpha|-alpha>|^2)) / 2`.
pub(crate) fn binary_coherent_oracle(alpha: f64, p0: f64) -> f64 {
    let overlap = (-4.0 * alpha * alpha).exp();
    0.5 * (1.0 - (1.0 - 4.0 * p0 * (1.0 - p0) * overlap).sqrt())
}

fn discriminate(c: &ExperimentConfig) -> Result<Outcome> {
    let dim = dim(c)?;
    let alpha = c.alpha.expect("resolved");
    let p0 = c.prior.expect("resolved");
    let p1 = 1.0 - p0;
    let t = &c.tolerances;
    let (agree, opt) = (t.agreement.unwrap(), t.optimality.unwrap());
    let plus = DensityOperator::pure(&coherent_state(C64::new(alpha, 0.0), dim))?;
    let minus = DensityOperator::pure(&coherent_state(C64::new(-alpha, 0.0), dim))?;

    let oracle = binary_coherent_oracle(alpha, p0);
    let helstrom = helstrom_binary(p0, &plus, p1, &minus)?;
    let ensemble = HypothesisEnsemble::min_error(vec![plus, minus], vec![p0, p1])?;
    let fixed = optimize_min_error(&ensemble, c.max_iters.expect("resolved"), OPTIMIZER_STEP_TOL)?;
    let p_fixed = 1.0 + average_risk(&fixed.povm, &ensemble)?;
    let fixed_report = optimality_check(&fixed.povm, &ensemble, opt)?;
    let helstrom_report = optimality_check(&helstrom.povm, &ensemble, opt)?;
    let swapped = DiscretePOVM::from_operators(
        dim,
        vec![helstrom.povm.effective_operator(1), helstrom.povm.effective_operator(0)],
    )?;
    let p_swapped = 1.0 + average_risk(&swapped, &ensemble)?;
    let swapped_report = optimality_check(&swapped, &ensemble, opt)?;

    let stationarity = |r: &crate::bayes::OptimalityReport| r.max_residual().max(r.lambda_hermiticity);
    let checks = vec![
        Check::at_most("helstrom_vs_oracle", (helstrom.p_err - oracle).abs(), agree),
        Check::at_most("helstrom_consistency", helstrom.consistency_defect, agree),
        Check::at_most("fixedpoint_vs_helstrom", (p_fixed - helstrom.p_err).abs(), agree),
        Check::at_most("fixedpoint_stationarity", stationarity(&fixed_report), opt),
        Check::at_least_minus("fixedpoint_min_eig_b", fixed_report.worst_min_eig(), opt),
        Check::at_most("helstrom_stationarity", stationarity(&helstrom_report), opt),
        Check::at_least_minus("helstrom_min_eig_b", helstrom_report.worst_min_eig(), opt),
        Check::below_minus("pessimal_min_eig_b", swapped_report.worst_min_eig(), opt),
    ];
    let mut table = CsvTable::new(&["method", "p_err", "stationarity_residual", "min_eig_b"]);
    table.push(&[Cell::Text("oracle".into()), Cell::Num(oracle), Cell::Num(0.0), Cell::Num(0.0)]);
    for (name, p, r) in [
        ("helstrom", helstrom.p_err, &helstrom_report),
        ("fixedpoint", p_fixed, &fixed_report),
        ("pessimal", p_swapped, &swapped_report),
    ] {
        table.push(&[
            Cell::Text(name.into()),
            Cell::Num(p),
            Cell::Num(stationarity(r)),
            Cell::Num(r.worst_min_eig()),
        ]);
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("fixedpoint_iterations".into(), fixed.iterations as f64);
    diagnostics.insert("support_rank".into(), fixed.support_rank as f64);
    let details = json!({
        "alpha": alpha,
        "priors": [p0, p1],
        "p_err_oracle": oracle,
        "p_err_helstrom": helstrom.p_err,
        "p_err_helstrom_direct": helstrom.p_err_direct,
        "p_err_fixedpoint": p_fixed,
        "p_err_pessimal": p_swapped,
        "fixedpoint_converged": fixed.converged,
        "risk_trace": fixed.risk_trace,
        "fixedpoint_verdict": fixed_report.verdict,
        "helstrom_verdict": helstrom_report.verdict,
        "pessimal_verdict": swapped_report.verdict,
    });
    Ok(Outcome {
        checks,
        diagnostics,
        details,
        table,
    })
}

fn info(c: &ExperimentConfig) -> Result<Outcome> {
    let dim = dim(c)?;
    let g = c.info_grid.expect("resolved");
    let tol = c.tolerances.info.unwrap();
    let mut table = CsvTable::new(&[
        "S",
        "L",
        "i_numeric",
        "i_analytic",
        "abs_error",
        "error_budget",
        "prior_tail",
        "identity_deficit",
    ]);
    let mut checks = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut details = Vec::new();
    for p in channels(c)? {
        let l = p.l()[0];
        let prior = PriorGrid::gaussian(&p, g.n_sigma, g.step)?;
        let povm = heterodyne_grid_povm(output_extent(&p, g.n_sigma), g.step, dim)?;
        let est = mutual_information(&povm, &prior, |th| channel_output_state(th, l, dim), dim)?;
        let exact = gaussian_heterodyne_info(&p);
        let err = (est.value - exact).abs();
        table.push(&[
            Cell::Num(p.s()[0]),
            Cell::Num(l),
            Cell::Num(est.value),
            Cell::Num(exact),
            Cell::Num(err),
            Cell::Num(est.error_budget),
            Cell::Num(est.prior_tail),
            Cell::Num(est.identity_deficit),
        ]);
        checks.push(Check::at_most(format!("info_error{}", tag(&p)), err, tol));
        diagnostics.insert(format!("error_budget{}", tag(&p)), est.error_budget);
        details.push(json!({ "analytic": exact, "estimate": est }));
    }
    Ok(Outcome {
        checks,
        diagnostics,
        details: json!(details),
        table,
    })
}

fn perturbation(c: &ExperimentConfig) -> Result<Outcome> {
    let dim = dim(c)?;
    let g = c.info_grid.expect("resolved");
    let pc = c.perturbation.as_ref().expect("checked by dispatch");
    let seed = c.seed.expect("resolved");
    let seeds: Vec<u64> = (0..pc.count as u64).map(|i| seed.wrapping_add(i)).collect();
    let grids = PerturbationGrids {
        dim,
        theta_sigmas: g.n_sigma,
        theta_step: g.step,
        beta_sigmas: g.n_sigma,
        beta_step: g.step,
    };
    let t = &c.tolerances;
    let mut table = CsvTable::new(&[
        "S",
        "L",
        "seed",
        "i_coherent",
        "i_perturbed",
        "gain",
        "rescale",
        "remainder_min_eig",
    ]);
    let mut checks = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut details = Vec::new();
    for p in channels(c)? {
        let study = info_of_heterodyne_vs_perturbed(&p, pc.scale, &seeds, grids)?;
        let i0 = study.i_coherent();
        for s in &study.samples {
            table.push(&[
                Cell::Num(p.s()[0]),
                Cell::Num(p.l()[0]),
                Cell::Int(s.seed as i64),
                Cell::Num(i0),
                Cell::Num(s.info),
                Cell::Num(s.info - i0),
                Cell::Num(s.rescale),
                Cell::Num(s.remainder_min_eig),
            ]);
        }
        let exact = gaussian_heterodyne_info(&p);
        checks.push(Check::at_most(format!("coherent_info_error{}", tag(&p)), (i0 - exact).abs(), t.info.unwrap()));
        checks.push(Check::at_most(format!("perturbation_gain{}", tag(&p)), study.worst_gain, t.perturbation.unwrap()));
        let worst_remainder = study
            .samples
            .iter()
            .map(|s| s.remainder_min_eig)
            .fold(f64::INFINITY, f64::min);
        diagnostics.insert(format!("worst_remainder_min_eig{}", tag(&p)), worst_remainder);
        details.push(serde_json::to_value(&study)?);
    }
    Ok(Outcome {
        checks,
        diagnostics,
        details: json!(details),
        table,
    })
}

fn verify_local_opt(c: &ExperimentConfig) -> Result<Outcome> {
    let dim = dim(c)?;
    let pts = beta_points(c);
    let t = &c.tolerances;
    let (psd, stat, cons) = (t.psd.unwrap(), t.stationarity.unwrap(), t.construction.unwrap());
    let mut table = CsvTable::new(&[
        "S",
        "L",
        "beta_re",
        "beta_im",
        "min_eig_b",
        "min_eig_d",
        "min_eig_b_minus_d",
        "stationarity_residual",
        "reduced_bracket_defect",
    ]);
    let mut checks = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut details = Vec::new();
    for p in channels(c)? {
        let cert = local_optimality_certificate(&p, &pts, dim, psd)?;
        for q in &cert.points {
            table.push(&[
                Cell::Num(p.s()[0]),
                Cell::Num(p.l()[0]),
                Cell::Num(q.beta.re),
                Cell::Num(q.beta.im),
                Cell::Num(q.min_eig_b),
                Cell::Num(q.min_eig_d),
                Cell::Num(q.min_eig_b_minus_d),
                Cell::Num(q.stationarity_residual),
                Cell::Num(q.reduced_bracket_defect),
            ]);
        }
        let construction =
            d_construction_defect(&cert.coefficients, &pts, FockDim::new(CONSTRUCTION_DIM)?)?;
        let k = tag(&p);
        checks.push(Check::at_least_minus(format!("min_eig_b_minus_d{k}"), cert.worst_min_eig_b_minus_d, psd));
        checks.push(Check::at_least_minus(format!("min_eig_b{k}"), cert.worst_min_eig_b, psd));
        checks.push(Check::at_least_minus(format!("min_eig_d{k}"), cert.worst_min_eig_d, psd));
        checks.push(Check::at_most(format!("stationarity{k}"), cert.worst_stationarity, stat));
        checks.push(Check::at_most(format!("d_construction_defect{k}"), construction, cons));
        diagnostics.insert(format!("spectral_spread{k}"), cert.spectral_spread);
        diagnostics.insert(format!("reduced_bracket_defect{k}"), cert.reduced_bracket_defect);
        details.push(serde_json::to_value(&cert)?);
    }
    Ok(Outcome {
        checks,
        diagnostics,
        details: json!(details),
        table,
    })
}

fn verify_ineq9(c: &ExperimentConfig) -> Result<Outcome> {
    let n_max = c.n_max.expect("resolved");
    let mut table = CsvTable::new(&[
        "h",
        "n_max",
        "tuples_checked",
        "holds",
        "holds_float",
        "worst_margin",
        "equality_cases",
        "underflowed",
    ]);
    let mut checks = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut details = Vec::new();
    for h in c.h.as_ref().expect("resolved") {
        let r = occupation_inequality_check(h, n_max)?;
        let k = format!("[h={}]", h.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"));
        table.push(&[
            Cell::Text(k[3..k.len() - 1].to_string()),
            Cell::Int(n_max as i64),
            Cell::Int(r.tuples_checked as i64),
            Cell::Bool(r.holds),
            Cell::Bool(r.holds_float),
            Cell::Num(r.worst_margin),
            Cell::Int(r.equality_cases.len() as i64),
            Cell::Int(r.underflowed as i64),
        ]);
        checks.push(Check::flag(format!("holds{k}"), r.holds));
        checks.push(Check::flag(format!("equality_at_zero_and_one{k}"), r.equality_at_zero_and_one_only()));
        diagnostics.insert(format!("worst_margin{k}"), r.worst_margin);
        details.push(serde_json::to_value(&r)?);
    }
    Ok(Outcome {
        checks,
        diagnostics,
        details: json!(details),
        table,
    })
}

fn povm_audit(c: &ExperimentConfig) -> Result<Outcome> {
    let (povm, default_levels) = match (&c.povm_file, c.beta_grid) {
        (Some(path), _) => {
            let p = DiscretePOVM::from_json(&std::fs::read_to_string(path)?)?;
            let n = p.dim().size();
            (p, n)
        }
        (None, Some(g)) => (heterodyne_grid_povm(g.extent, g.step, dim(c)?)?, 1),
        (None, None) => return invalid("povm-audit needs a POVM file or a beta grid"),
    };
    let t = &c.tolerances;
    let (psd, deficit) = (t.psd.unwrap(), t.deficit.unwrap());
    let report = identity_resolution_report(&povm);
    let levels = c.audit_levels.unwrap_or(default_levels).min(report.deficits.len());
    let psd_checks = povm.element_psd_checks(psd)?;
    let worst_element = psd_checks
        .iter()
        .map(|p| p.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let audited = report.deficits[..levels]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max);
    let checks = vec![
        Check::at_least_minus("element_min_eig", worst_element, psd),
        Check::at_most(format!("identity_deficit[levels<{levels}]"), audited, deficit),
    ];
    let mut table = CsvTable::new(&["level", "deficit"]);
    for (n, d) in report.deficits.iter().enumerate() {
        table.push(&[Cell::Int(n as i64), Cell::Num(*d)]);
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("elements".into(), povm.len() as f64);
    diagnostics.insert("max_abs_deficit".into(), report.max_abs_deficit());
    diagnostics.insert("max_off_diagonal".into(), report.max_off_diagonal);
    diagnostics.insert("n_eff".into(), report.n_eff.map_or(-1.0, |n| n as f64));
    Ok(Outcome {
        checks,
        diagnostics,
        details: json!({ "identity": report, "element_psd": psd_checks }),
        table,
    })
}
