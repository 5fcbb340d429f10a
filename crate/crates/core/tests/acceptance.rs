//! Acceptance suite: one line per criterion, exit status 1 if any fails.

use std::process::ExitCode;
use std::time::Instant;

use qdopt::bayes::{helstrom_binary, optimality_check, optimize_min_error, HypothesisEnsemble};
use qdopt::channel::DensityOperator;
use qdopt::fock::{coherent_state, FockDim};
use qdopt::measurement::{
    heterodyne_grid_povm, identity_resolution_report, DiscretePOVM, GridSpec,
};
use qdopt::parallel::{with_env_threads, THREADS_ENV};
use qdopt::runner::{
    execute, ChannelConfig, Command, ExperimentConfig, PerturbationConfig, RunOutput, SigmaGrid,
};
use qdopt::shannon::perturbed_povm;
use qdopt::C64;

const ML_EIGEN_RESIDUAL: f64 = 1e-6;
const ML_PSD: f64 = 1e-9;
const HELSTROM_AGREEMENT: f64 = 1e-6;
const OPTIMALITY_TOL: f64 = 1e-8;
const INFO_TOL: f64 = 1e-3;
const LOCAL_OPT_TOL: f64 = 1e-8;
const SPECTRAL_SPREAD_TOL: f64 = 1e-7;
const CONSTRUCTION_TOL: f64 = 1e-9;
const PERTURBATION_TOL: f64 = 2e-3;
const ELEMENT_PSD_TOL: f64 = 1e-9;
const VACUUM_DEFICIT_TOL: f64 = 1e-4;
const PRINTED_HELSTROM: f64 = 0.102490;

struct Verdict {
    label: String,
    pass: bool,
    detail: String,
    /// Everything that must be byte-identical across worker counts.
    fingerprint: String,
}

fn verdict_line(out: &RunOutput) -> String {
    let v: Vec<String> = out
        .report
        .checks
        .iter()
        .map(|c| format!("{}={}", c.name, c.pass))
        .collect();
    format!("{}\n{}", v.join(";"), out.csv())
}

fn run_cfg(c: ExperimentConfig) -> RunOutput {
    execute(&c).unwrap_or_else(|e| panic!("{} failed: {e}", c.command.name()))
}

fn check(out: &RunOutput, name: &str) -> (bool, f64) {
    let c = out
        .report
        .check(name)
        .unwrap_or_else(|| panic!("missing check {name}"));
    (c.pass, c.value)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn channel(s: &[f64], l: &[f64]) -> Option<ChannelConfig> {
    Some(ChannelConfig {
        s: s.to_vec(),
        l: l.to_vec(),
    })
}

fn criterion_1() -> Verdict {
    let mut c = ExperimentConfig::new(Command::VerifyMl);
    c.channel = channel(&[1.0, 1.0, 1.0], &[1.0, 1.5, 3.0]);
    c.dim = Some(40);
    c.beta_grid = Some(GridSpec { extent: 2.0, step: 0.5 });
    c.tolerances.eigen_residual = Some(ML_EIGEN_RESIDUAL);
    c.tolerances.psd = Some(ML_PSD);
    let (out, secs) = timed(|| run_cfg(c));
    let worst_res = out
        .report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("eigen_residual"))
        .map(|c| c.value)
        .fold(0.0, f64::max);
    let worst_b = out
        .report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("min_eig_b"))
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    Verdict {
        label: "ML coherent optimality".into(),
        pass: out.report.pass && secs < 10.0,
        detail: format!("worst residual {worst_res:.2e}, worst min eig B {worst_b:.2e}, {secs:.1} s"),
        fingerprint: verdict_line(&out),
    }
}

fn discriminate(alpha: f64) -> RunOutput {
    let mut c = ExperimentConfig::new(Command::Discriminate);
    c.alpha = Some(alpha);
    c.prior = Some(0.5);
    c.dim = Some(30);
    c.tolerances.agreement = Some(HELSTROM_AGREEMENT);
    c.tolerances.optimality = Some(OPTIMALITY_TOL);
    run_cfg(c)
}

fn criterion_2() -> Verdict {
    let (outs, secs) = timed(|| [0.25, 0.5, 1.0].map(discriminate));
    let mut pass = secs < 5.0;
    let mut worst_gap = 0.0f64;
    let mut fp = String::new();
    for out in &outs {
        for name in [
            "helstrom_vs_oracle",
            "fixedpoint_vs_helstrom",
            "fixedpoint_stationarity",
            "fixedpoint_min_eig_b",
        ] {
            pass &= check(out, name).0;
        }
        worst_gap = worst_gap.max(check(out, "fixedpoint_vs_helstrom").1);
        fp.push_str(&verdict_line(out));
    }
    let p_half = outs[1].report.details["p_err_helstrom"].as_f64().unwrap();
    let formula = 0.5 * (1.0 - (1.0 - (-1.0f64).exp()).sqrt());
    pass &= (p_half - formula).abs() <= HELSTROM_AGREEMENT;
    Verdict {
        label: "Helstrom agreement".into(),
        pass,
        detail: format!(
            "max |fixed point - Helstrom| {worst_gap:.2e}; alpha=0.5 P_err {p_half:.10} (formula {formula:.10}, printed {PRINTED_HELSTROM} differs by {:.1e}); {secs:.2} s",
            (p_half - PRINTED_HELSTROM).abs()
        ),
        fingerprint: fp,
    }
}

fn criterion_3() -> Verdict {
    let dim = FockDim::new(30).unwrap();
    let (rows, secs) = timed(|| {
        with_env_threads(|| {
            [0.25, 0.5, 1.0].map(|alpha| {
                let plus = DensityOperator::pure(&coherent_state(C64::new(alpha, 0.0), dim)).unwrap();
                let minus = DensityOperator::pure(&coherent_state(C64::new(-alpha, 0.0), dim)).unwrap();
                let h = helstrom_binary(0.5, &plus, 0.5, &minus).unwrap();
                let e = HypothesisEnsemble::min_error(vec![plus, minus], vec![0.5, 0.5]).unwrap();
                let swapped = DiscretePOVM::from_operators(
                    dim,
                    vec![h.povm.effective_operator(1), h.povm.effective_operator(0)],
                )
                .unwrap();
                let r = optimality_check(&swapped, &e, OPTIMALITY_TOL).unwrap();
                (r.verdict.nonnegativity, r.worst_min_eig())
            })
        })
    });
    let pass = rows.iter().all(|(ok, m)| !ok && *m < 0.0) && secs < 1.0;
    Verdict {
        label: "pessimal-rule rejection".into(),
        pass,
        detail: format!(
            "min eig B of swapped rule: {}; {secs:.2} s",
            rows.iter().map(|r| format!("{:.4}", r.1)).collect::<Vec<_>>().join(", ")
        ),
        fingerprint: format!("{rows:?}"),
    }
}

fn criterion_4() -> Verdict {
    let mut c = ExperimentConfig::new(Command::Info);
    c.channel = channel(&[1.0, 3.0], &[1.0, 2.0]);
    c.dim = Some(60);
    c.info_grid = Some(SigmaGrid { n_sigma: 6.0, step: 0.2 });
    c.tolerances.info = Some(INFO_TOL);
    let (out, secs) = timed(|| run_cfg(c));
    let (_, e1) = check(&out, "info_error[S=1,L=1]");
    let (_, e2) = check(&out, "info_error[S=3,L=2]");
    Verdict {
        label: "Gaussian mutual information".into(),
        pass: out.report.pass && secs < 60.0,
        detail: format!("|I - ln 2| {e1:.2e}, |I - ln 2.5| {e2:.2e}, {secs:.1} s"),
        fingerprint: verdict_line(&out),
    }
}

fn local_opt() -> (RunOutput, f64) {
    let mut c = ExperimentConfig::new(Command::VerifyLocalOpt);
    c.channel = channel(&[1.0, 0.5, 3.0], &[1.0, 1.2, 2.0]);
    c.dim = Some(40);
    c.beta_grid = Some(GridSpec { extent: 1.5, step: 0.5 });
    c.tolerances.psd = Some(LOCAL_OPT_TOL);
    c.tolerances.stationarity = Some(LOCAL_OPT_TOL);
    c.tolerances.construction = Some(CONSTRUCTION_TOL);
    timed(|| run_cfg(c))
}

fn criterion_5(out: &RunOutput, secs: f64) -> Verdict {
    let worst = |prefix: &str| {
        out.report
            .checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.value)
            .fold(f64::INFINITY, f64::min)
    };
    let construction = out
        .report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("d_construction_defect"))
        .map(|c| c.value)
        .fold(0.0, f64::max);
    Verdict {
        label: "local optimality: B - D, B, D >= 0, B|beta> = 0, D construction".into(),
        pass: out.report.pass && secs < 60.0,
        detail: format!(
            "min eig B-D {:.2e}, B {:.2e}, D {:.2e}, D construction defect {construction:.2e}, {secs:.1} s",
            worst("min_eig_b_minus_d"),
            worst("min_eig_b["),
            worst("min_eig_d"),
        ),
        fingerprint: verdict_line(out),
    }
}

fn criterion_5_spectra(out: &RunOutput) -> Verdict {
    let spreads: Vec<(String, f64)> = out
        .report
        .diagnostics
        .iter()
        .filter(|(k, _)| k.starts_with("spectral_spread"))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let worst = spreads.iter().map(|s| s.1).fold(0.0, f64::max);
    Verdict {
        label: "local optimality: spectra of B - D independent of beta".into(),
        pass: worst <= SPECTRAL_SPREAD_TOL,
        detail: format!("largest eigenvalue spread over the grid {worst:.3e} (tolerance {SPECTRAL_SPREAD_TOL:e})"),
        fingerprint: format!("{spreads:?}"),
    }
}

fn criterion_6() -> Verdict {
    let single: Vec<Vec<f64>> = [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
        .iter()
        .map(|&h| vec![h])
        .collect();
    let pairs = vec![
        vec![0.01, 0.99],
        vec![0.1, 0.9],
        vec![0.3, 0.7],
        vec![0.5, 0.5],
        vec![0.9, 0.9],
        vec![0.2, 0.6],
    ];
    let cfg = |h: Vec<Vec<f64>>, n_max| {
        let mut c = ExperimentConfig::new(Command::VerifyIneq9);
        c.h = Some(h);
        c.n_max = Some(n_max);
        c
    };
    let ((a, b), secs) = timed(|| (run_cfg(cfg(single, 200)), run_cfg(cfg(pairs, 60))));
    Verdict {
        label: "occupation inequality".into(),
        pass: a.report.pass && b.report.pass && secs < 5.0,
        detail: format!(
            "{} single-mode and {} two-mode instances, equality only at total 0 and 1, {secs:.2} s",
            a.table.len(),
            b.table.len()
        ),
        fingerprint: format!("{}{}", verdict_line(&a), verdict_line(&b)),
    }
}

fn criterion_7() -> Verdict {
    let mut c = ExperimentConfig::new(Command::Info);
    c.channel = channel(&[1.0], &[1.0]);
    c.dim = Some(40);
    c.info_grid = Some(SigmaGrid { n_sigma: 6.0, step: 0.2 });
    c.perturbation = Some(PerturbationConfig { scale: 0.05, count: 20 });
    c.seed = Some(0);
    c.tolerances.perturbation = Some(PERTURBATION_TOL);
    let (out, secs) = timed(|| run_cfg(c));
    let (ok, gain) = check(&out, "perturbation_gain[S=1,L=1]");
    Verdict {
        label: "perturbation end-to-end".into(),
        pass: ok && secs < 120.0,
        detail: format!("worst I_perturbed - I_coherent {gain:.3e} over 20 seeds, {secs:.1} s"),
        fingerprint: verdict_line(&out),
    }
}

fn criterion_8() -> Verdict {
    let mut c = ExperimentConfig::new(Command::PovmAudit);
    c.dim = Some(30);
    c.beta_grid = Some(GridSpec { extent: 6.0, step: 0.1 });
    c.audit_levels = Some(1);
    c.tolerances.psd = Some(ELEMENT_PSD_TOL);
    c.tolerances.deficit = Some(VACUUM_DEFICIT_TOL);
    let ((audit, others), secs) = timed(|| {
        let audit = run_cfg(c);
        let others = with_env_threads(constructed_povms);
        (audit, others)
    });
    let (_, vacuum) = check(&audit, "identity_deficit[levels<1]");
    let all_ok = others.iter().all(|(_, ok, _)| *ok);
    Verdict {
        label: "POVM hygiene".into(),
        pass: audit.report.pass && all_ok && secs < 10.0,
        detail: format!(
            "grid vacuum deficit {vacuum:.2e}; {} other constructions PSD and reported; {secs:.2} s",
            others.len()
        ),
        fingerprint: format!("{}{others:?}", verdict_line(&audit)),
    }
}

/// Element PSD and a full-length identity report for every other POVM the
/// library builds.
fn constructed_povms() -> Vec<(&'static str, bool, Vec<u64>)> {
    let dim = FockDim::new(20).unwrap();
    let plus = DensityOperator::pure(&coherent_state(C64::new(0.5, 0.0), dim)).unwrap();
    let minus = DensityOperator::pure(&coherent_state(C64::new(-0.5, 0.0), dim)).unwrap();
    let third = DensityOperator::pure(&coherent_state(C64::new(0.0, 0.6), dim)).unwrap();
    let helstrom = helstrom_binary(0.5, &plus, 0.5, &minus).unwrap().povm;
    let e = HypothesisEnsemble::min_error(vec![plus, minus, third], vec![0.3, 0.3, 0.4]).unwrap();
    let fixed = optimize_min_error(&e, 2000, 1e-14).unwrap().povm;
    let grid = heterodyne_grid_povm(3.0, 0.25, dim).unwrap();
    let completed = grid.clone().complete_with_remainder().unwrap();
    let (perturbed, _) = perturbed_povm(&grid, 0.05, 7).unwrap();
    let from_json = DiscretePOVM::from_json(&helstrom.to_json().unwrap()).unwrap();
    [
        ("helstrom", helstrom),
        ("fixed_point", fixed),
        ("heterodyne_completed", completed),
        ("perturbed", perturbed),
        ("json_round_trip", from_json),
    ]
    .into_iter()
    .map(|(name, p)| {
        let psd = p
            .element_psd_checks(ELEMENT_PSD_TOL)
            .unwrap()
            .iter()
            .all(|c| c.is_psd);
        let report = identity_resolution_report(&p);
        let reported = report.deficits.len() == p.dim().size();
        let bits = report.deficits.iter().map(|d| d.to_bits()).collect();
        (name, psd && reported, bits)
    })
    .collect()
}

fn all_criteria() -> Vec<(String, Verdict)> {
    let (local, local_secs) = local_opt();
    vec![
        ("1".into(), criterion_1()),
        ("2".into(), criterion_2()),
        ("3".into(), criterion_3()),
        ("4".into(), criterion_4()),
        ("5".into(), criterion_5(&local, local_secs)),
        ("5b".into(), criterion_5_spectra(&local)),
        ("6".into(), criterion_6()),
        ("7".into(), criterion_7()),
        ("8".into(), criterion_8()),
    ]
}

fn main() -> ExitCode {
    let threads_before = std::env::var(THREADS_ENV).ok();
    std::env::set_var(THREADS_ENV, "1");
    let first = all_criteria();
    let mut failed = 0;
    for (id, v) in &first {
        println!(
            "criterion {id:<2} {} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.label,
            v.detail
        );
        failed += usize::from(!v.pass);
    }

    std::env::set_var(THREADS_ENV, "4");
    let t = Instant::now();
    let second = all_criteria();
    let mismatches: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|((_, a), (_, b))| a.fingerprint != b.fingerprint || a.pass != b.pass)
        .map(|((id, _), _)| id.as_str())
        .collect();
    let deterministic = mismatches.is_empty();
    println!(
        "criterion 9  {} determinism: criteria 1-8 with {THREADS_ENV}=1 and 4 give identical verdicts and CSV bytes{} ({:.1} s rerun)",
        if deterministic { "PASS" } else { "FAIL" },
        if deterministic {
            String::new()
        } else {
            format!("; differing: {}", mismatches.join(", "))
        },
        t.elapsed().as_secs_f64()
    );
    failed += usize::from(!deterministic);
    match threads_before {
        Some(v) => std::env::set_var(THREADS_ENV, v),
        None => std::env::remove_var(THREADS_ENV),
    }

    println!("{failed} of {} acceptance lines failed", first.len() + 1);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
