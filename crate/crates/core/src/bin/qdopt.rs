use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdopt::measurement::GridSpec;
use qdopt::runner::{
    exit_code, parse_pair, run, ChannelConfig, Command, ExperimentConfig, PerturbationConfig,
    SigmaGrid, Tolerances,
};

#[derive(Parser)]
#[command(name = "qdopt", version, about = "Quantum detector optimality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Sub {
    /// Maximum-likelihood certificate of the coherent measurement.
    VerifyMl,
    /// Binary coherent discrimination: Helstrom vs fixed point.
    Discriminate,
    /// Mutual information of heterodyne detection (optionally perturbed).
    Info,
    /// Operator inequality B - D >= 0 over a grid.
    VerifyLocalOpt,
    /// Exhaustive occupation-number inequality.
    VerifyIneq9,
    /// Completeness and positivity audit of a POVM.
    PovmAudit {
        /// Serialized POVM; without it the heterodyne grid is audited.
        file: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Opts {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Truncation n_max.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Signal covariances, comma separated.
    #[arg(long = "S", global = true, value_delimiter = ',')]
    s: Option<Vec<f64>>,
    /// Noise covariances, comma separated.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    l: Option<Vec<f64>>,
    #[arg(long, global = true)]
    beta_extent: Option<f64>,
    #[arg(long, global = true)]
    beta_step: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Prior of the +alpha hypothesis.
    #[arg(long, global = true)]
    prior: Option<f64>,
    /// Info grids as n_sigma:step.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Occupation instance, comma separated per mode; repeat for more.
    #[arg(long, global = true)]
    h: Vec<String>,
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Lowest levels whose deficit is checked by povm-audit.
    #[arg(long, global = true)]
    levels: Option<usize>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    perturb_scale: Option<f64>,
    /// Number of perturbation seeds, counted from --seed.
    #[arg(long, global = true)]
    perturb_seeds: Option<usize>,
    /// Tolerance override name=value; repeatable.
    #[arg(long, global = true)]
    tol: Vec<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

fn command_of(sub: &Sub) -> Command {
    match sub {
        Sub::VerifyMl => Command::VerifyMl,
        Sub::Discriminate => Command::Discriminate,
        Sub::Info => Command::Info,
        Sub::VerifyLocalOpt => Command::VerifyLocalOpt,
        Sub::VerifyIneq9 => Command::VerifyIneq9,
        Sub::PovmAudit { .. } => Command::PovmAudit,
    }
}

fn build_config(cli: Cli) -> qdopt::Result<ExperimentConfig> {
    let command = command_of(&cli.command);
    let o = cli.opts;
    let mut file = match &o.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::new(command),
    };
    file.command = command;
    let defaults = file.resolved();

    let mut f = ExperimentConfig::new(command);
    if o.s.is_some() || o.l.is_some() {
        let base = defaults.channel.clone().expect("resolved");
        let s = o.s.unwrap_or(base.s);
        let l = o.l.unwrap_or(base.l);
        let (s, l) = match (s.len(), l.len()) {
            (a, b) if a == b => (s, l),
            (1, b) => (vec![s[0]; b], l),
            (a, 1) => (s, vec![l[0]; a]),
            _ => (s, l),
        };
        f.channel = Some(ChannelConfig { s, l });
    }
    f.dim = o.dim;
    if o.beta_extent.is_some() || o.beta_step.is_some() {
        let base = defaults.beta_grid.unwrap_or(GridSpec {
            extent: 2.0,
            step: 0.5,
        });
        f.beta_grid = Some(GridSpec {
            extent: o.beta_extent.unwrap_or(base.extent),
            step: o.beta_step.unwrap_or(base.step),
        });
    }
    f.alpha = o.alpha;
    f.prior = o.prior;
    if let Some(g) = &o.grid {
        let (n_sigma, step) = parse_pair(g)?;
        f.info_grid = Some(SigmaGrid { n_sigma, step });
    }
    if !o.h.is_empty() {
        let parsed = o
            .h
            .iter()
            .map(|inst| {
                inst.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|e| qdopt::Error::InvalidArgument(format!("--h {x}: {e}")))
                    })
                    .collect::<qdopt::Result<Vec<f64>>>()
            })
            .collect::<qdopt::Result<Vec<_>>>()?;
        f.h = Some(parsed);
    }
    f.n_max = o.nmax;
    f.audit_levels = o.levels;
    f.max_iters = o.max_iters;
    if o.perturb_scale.is_some() || o.perturb_seeds.is_some() {
        let base = file.perturbation.clone().unwrap_or(PerturbationConfig {
            scale: 0.05,
            count: 20,
        });
        f.perturbation = Some(PerturbationConfig {
            scale: o.perturb_scale.unwrap_or(base.scale),
            count: o.perturb_seeds.unwrap_or(base.count),
        });
    }
    if !o.tol.is_empty() {
        let mut obj = serde_json::Map::new();
        for t in &o.tol {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| qdopt::Error::InvalidArgument(format!("--tol {t}: expected name=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| qdopt::Error::InvalidArgument(format!("--tol {t}: {e}")))?;
            obj.insert(k.trim().to_string(), serde_json::json!(v));
        }
        f.tolerances = serde_json::from_value::<Tolerances>(serde_json::Value::Object(obj))?;
    }
    f.threads = o.threads;
    f.seed = o.seed;
    f.output.report = o.report;
    f.output.csv = o.csv;
    if let Sub::PovmAudit { file: Some(p) } = cli.command {
        f.povm_file = Some(p);
    }
    let merged = file.overlay(f);
    merged.validate()?;
    Ok(merged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli).and_then(|c| run(&c));
    match result {
        Ok(out) => {
            let r = &out.report;
            for c in &r.checks {
                println!(
                    "{} {} = {:e} (required {} {:e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.relation,
                    c.tolerance
                );
            }
            for (k, v) in &r.diagnostics {
                println!("info {k} = {v:e}");
            }
            println!(
                "{} {} in {:.2} s",
                r.command.name(),
                if r.pass { "passed" } else { "failed" },
                r.wall_time_s
            );
            ExitCode::from(r.exit_status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
