//! `--config` files and their merge with explicit flags.
//!
//! A config file is one flat JSON object whose keys are flag names with
//! underscores (`beta_max`, `log_domain`, ...). Unknown keys are rejected.
//! Keys that do not apply to the running subcommand are ignored, so one file
//! can serve several subcommands.

use std::path::Path;

use semisparse::pipelines::ScaleLevel;
use semisparse::SolverConfig;
use serde::Deserialize;

use crate::args::{GroupingArg, ModeArg, NormalizationArg, SolverArgs, StencilArg};
use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
    pub beta0: Option<f64>,
    pub beta_max: Option<f64>,
    pub order: Option<usize>,
    pub grouping: Option<GroupingArg>,
    pub stencil: Option<StencilArg>,
    pub pad: Option<usize>,
    pub max_iter: Option<usize>,
    pub crop: Option<usize>,
    pub boost: Option<f64>,
    pub log_domain: Option<bool>,
    pub levels: Option<Vec<ScaleLevel>>,
    pub target_range: Option<f64>,
    pub saturation: Option<f64>,
    pub dog_sigma: Option<f64>,
    pub dog_k: Option<f64>,
    pub edge_tau: Option<f64>,
    pub mode: Option<ModeArg>,
    pub soft: Option<f64>,
    pub epsilon: Option<f64>,
    pub bins: Option<usize>,
    pub range_max: Option<f64>,
    pub normalization: Option<NormalizationArg>,
    pub max_order: Option<usize>,
    pub length: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub channels: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub instances: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Solver settings: explicit flags, then this file, then library defaults.
    pub fn solver(&self, flags: &SolverArgs) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let config = SolverConfig {
            lambda: pick(flags.lambda, self.lambda, d.lambda),
            alpha: pick(flags.alpha, self.alpha, d.alpha),
            kappa: pick(flags.kappa, self.kappa, d.kappa),
            tau: pick(flags.tau, self.tau, d.tau),
            beta0: flags.beta0.or(self.beta0).or(d.beta0),
            beta_max: pick(flags.beta_max, self.beta_max, d.beta_max),
            order: pick(flags.order, self.order, d.order),
            stencil: flags.stencil.or(self.stencil).map_or(d.stencil, Into::into),
            grouping: flags.grouping.or(self.grouping).map_or(d.grouping, Into::into),
            pad: flags.pad.or(self.pad).or(d.pad),
            max_iter: pick(flags.max_iter, self.max_iter, d.max_iter),
        };
        config.validate()?;
        Ok(config)
    }
}

/// First of `flag`, `file`, `default` that is set.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
