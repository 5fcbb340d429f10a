//! Experiment configuration: one JSON document, flags layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measurement::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyMl,
    Discriminate,
    Info,
    VerifyLocalOpt,
    VerifyIneq9,
    PovmAudit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyMl => "verify-ml",
            Command::Discriminate => "discriminate",
            Command::Info => "info",
            Command::VerifyLocalOpt => "verify-local-opt",
            Command::VerifyIneq9 => "verify-ineq9",
            Command::PovmAudit => "povm-audit",
        }
    }
}

/// Per-mode covariances. Operator commands treat every mode as a separate
/// single-mode channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub s: Vec<f64>,
    pub l: Vec<f64>,
}

/// Grid measured in standard deviations: `n_sigma:step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaGrid {
    pub n_sigma: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub scale: f64,
    /// Number of seeds, starting at the run seed.
    pub count: usize,
}

/// Every field is optional; missing values take the per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub info: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deficit: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelConfig>,
    /// Truncation `n_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Sweep lattice (verify-ml, verify-local-opt) or audit grid (povm-audit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<GridSpec>,
    /// Prior and heterodyne grids of the info command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_grid: Option<SigmaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Prior of the `|+alpha>` hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
    /// Occupation-inequality instances; each inner list is one multimode `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm_file: Option<PathBuf>,
    /// Lowest Fock levels whose identity deficit must stay within tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            channel: None,
            dim: None,
            beta_grid: None,
            info_grid: None,
            alpha: None,
            prior: None,
            h: None,
            n_max: None,
            povm_file: None,
            audit_levels: None,
            perturbation: None,
            max_iters: None,
            tolerances: Tolerances::default(),
            seed: None,
            threads: None,
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Range checks the schema expresses beyond types.
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.channel {
            if c.s.is_empty() || c.s.len() != c.l.len() {
                return invalid("channel.s and channel.l must be non-empty lists of equal length");
            }
        }
        if self.dim == Some(0) {
            return invalid("dim must be at least 1");
        }
        if let Some(g) = self.beta_grid {
            if !(g.extent >= 0.0 && g.step > 0.0) {
                return invalid("beta_grid needs extent >= 0 and step > 0");
            }
        }
        if let Some(g) = self.info_grid {
            if !(g.n_sigma > 0.0 && g.step > 0.0) {
                return invalid("info_grid needs n_sigma > 0 and step > 0");
            }
        }
        if let Some(p) = self.prior {
            if !(0.0..=1.0).contains(&p) {
                return invalid("prior must lie in [0, 1]");
            }
        }
        if self.threads == Some(0) {
            return invalid("threads must be at least 1");
        }
        let t = &self.tolerances;
        for v in [
            t.eigen_residual,
            t.psd,
            t.stationarity,
            t.agreement,
            t.optimality,
            t.info,
            t.perturbation,
            t.construction,
            t.deficit,
        ]
        .into_iter()
        .flatten()
        {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid("tolerances must be finite and nonnegative");
            }
        }
        Ok(())
    }

    /// Fields set in `flags` replace the ones here.
    pub fn overlay(mut self, flags: ExperimentConfig) -> Self {
        self.command = flags.command;
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { self.$f = flags.$f; } )* };
        }
        take!(channel, dim, beta_grid, info_grid, alpha, prior, h, n_max, povm_file,
              audit_levels, perturbation, max_iters, seed, threads);
        macro_rules! take_tol {
            ($($f:ident),*) => { $( if flags.tolerances.$f.is_some() { self.tolerances.$f = flags.tolerances.$f; } )* };
        }
        take_tol!(eigen_residual, psd, stationarity, agreement, optimality, info, perturbation,
                  construction, deficit);
        if flags.output.report.is_some() {
            self.output.report = flags.output.report;
        }
        if flags.output.csv.is_some() {
            self.output.csv = flags.output.csv;
        }
        self
    }

    /// Fills every unset field with the default of this command.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        let d = Defaults::of(self.command);
        c.channel.get_or_insert(ChannelConfig {
            s: vec![d.s],
            l: vec![d.l],
        });
        c.dim.get_or_insert(d.dim);
        c.seed.get_or_insert(0);
        c.max_iters.get_or_insert(1000);
        match self.command {
            Command::VerifyMl | Command::VerifyLocalOpt => {
                c.beta_grid.get_or_insert(d.beta_grid);
            }
            Command::Discriminate => {
                c.alpha.get_or_insert(0.5);
                c.prior.get_or_insert(0.5);
            }
            Command::Info => {
                c.info_grid.get_or_insert(SigmaGrid {
                    n_sigma: 6.0,
                    step: 0.2,
                });
            }
            Command::VerifyIneq9 => {
                c.h.get_or_insert(vec![vec![0.5]]);
                c.n_max.get_or_insert(200);
            }
            Command::PovmAudit => {
                if c.povm_file.is_none() {
                    c.beta_grid.get_or_insert(GridSpec {
                        extent: 6.0,
                        step: 0.1,
                    });
                }
            }
        }
        let t = &mut c.tolerances;
        t.eigen_residual.get_or_insert(1e-6);
        t.psd.get_or_insert(d.psd);
        t.stationarity.get_or_insert(1e-8);
        t.agreement.get_or_insert(1e-6);
        t.optimality.get_or_insert(1e-8);
        t.info.get_or_insert(1e-3);
        t.perturbation.get_or_insert(2e-3);
        t.construction.get_or_insert(1e-9);
        t.deficit.get_or_insert(1e-4);
        c
    }
}

struct Defaults {
    s: f64,
    l: f64,
    dim: usize,
    beta_grid: GridSpec,
    psd: f64,
}

impl Defaults {
    fn of(command: Command) -> Self {
        let base = Defaults {
            s: 1.0,
            l: 1.0,
            dim: 40,
            beta_grid: GridSpec {
                extent: 2.0,
                step: 0.5,
            },
            psd: 1e-9,
        };
        match command {
            Command::Discriminate => Defaults { dim: 30, ..base },
            Command::Info => Defaults { dim: 60, ..base },
            Command::VerifyLocalOpt => Defaults {
                beta_grid: GridSpec {
                    extent: 1.5,
                    step: 0.5,
                },
                psd: 1e-8,
                ..base
            },
            Command::PovmAudit => Defaults { dim: 30, ..base },
            _ => base,
        }
    }
}

/// Parses `a:b` into two reals.
pub fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| crate::Error::InvalidArgument(format!("expected a:b, got {s}")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| crate::Error::InvalidArgument(format!("{x}: {e}")))
    };
    Ok((parse(a)?, parse(b)?))
}
