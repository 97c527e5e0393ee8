//! Command-line flags and the run configuration they resolve to.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use reluctant_core::selective_mle::Method;
use reluctant_core::spline_basis::BasisConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_REPLICATIONS: usize = 500;
pub const FAST_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Simulate,
    Analyze,
    Validate,
}

#[derive(Parser, Debug, Default)]
#[command(
    name = "reluctant",
    version,
    about = "Selective inference for pairwise interactions after a sparse additive model fit"
)]
pub struct Args {
    /// Mode as a positional word; same as --mode
    #[arg(value_enum, conflicts_with = "mode")]
    pub command: Option<Mode>,

    #[arg(long, value_enum)]
    pub mode: Option<Mode>,

    /// TOML run configuration; flags given on the command line override it
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Simulation setting 1-4; all four when omitted
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub setting: Option<u8>,

    #[arg(long, value_parser = positive)]
    pub sigma: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub rho_cross: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub gamma_inter: Option<f64>,

    #[arg(long)]
    pub s_inter: Option<usize>,

    /// Replications per configuration
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,

    /// Share of information used for selection
    #[arg(long, value_parser = open_unit)]
    pub r: Option<f64>,

    #[arg(long, value_parser = open_unit)]
    pub alpha: Option<f64>,

    /// Magnitude from which an interaction target counts as a true signal
    #[arg(long, value_parser = non_negative)]
    pub t0: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Comma-separated subset of selective,naive,split
    #[arg(long, value_delimiter = ',', value_parser = method)]
    pub methods: Option<Vec<Method>>,

    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Name of the response column in --dataset
    #[arg(long)]
    pub response: Option<String>,

    /// Fraction of rows drawn for the analysis subsample in validate mode
    #[arg(long, value_parser = open_unit)]
    pub subsample_frac: Option<f64>,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: Option<u64>,

    /// Use 100 replications instead of 500
    #[arg(long)]
    pub fast: bool,

    /// Generate a synthetic flight-delay style dataset instead of reading one
    #[arg(long)]
    pub demo: bool,

    #[arg(long, value_parser = clap::value_parser!(u64).range(20..))]
    pub demo_rows: Option<u64>,

    /// Draw a fresh interaction set in every replication
    #[arg(long)]
    pub resample_interactions: bool,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("{s}: {e}"))
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} must be positive"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} must be non-negative"))
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie strictly between 0 and 1"))
    }
}

fn method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Fully resolved parameters of one run; echoed to `run_config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub setting: Option<u8>,
    pub sigma: Option<f64>,
    pub rho_cross: Option<f64>,
    pub gamma_inter: Option<f64>,
    pub s_inter: Option<usize>,
    pub replications: usize,
    pub r: f64,
    pub alpha: f64,
    pub t0: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub dataset: Option<PathBuf>,
    pub response: Option<String>,
    pub subsample_frac: f64,
    pub repeats: usize,
    pub demo: bool,
    pub demo_rows: usize,
    pub resample_interactions: bool,
    pub basis: BasisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            setting: None,
            sigma: None,
            rho_cross: None,
            gamma_inter: None,
            s_inter: None,
            replications: DEFAULT_REPLICATIONS,
            r: 0.9,
            alpha: 0.1,
            t0: 0.1,
            seed: 2024,
            out: PathBuf::from("out"),
            methods: Method::ALL.to_vec(),
            dataset: None,
            response: None,
            subsample_frac: 0.1,
            repeats: 1,
            demo: false,
            demo_rows: 1000,
            resample_interactions: false,
            basis: BasisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Config file (if any) overlaid with the flags that were given.
    pub fn from_args(args: &Args) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(m) = args.command.or(args.mode) {
            cfg.mode = m;
        }
        if args.fast {
            cfg.replications = FAST_REPLICATIONS;
        }
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &args.$field {
                    cfg.$field = Some(v.clone());
                }
            };
            ($field:ident => $dst:ident) => {
                if let Some(v) = &args.$field {
                    cfg.$dst = v.clone();
                }
            };
        }
        take!(setting);
        take!(sigma);
        take!(rho_cross);
        take!(gamma_inter);
        take!(s_inter);
        take!(dataset);
        take!(response);
        take!(r => r);
        take!(alpha => alpha);
        take!(t0 => t0);
        take!(seed => seed);
        take!(out => out);
        take!(methods => methods);
        take!(subsample_frac => subsample_frac);
        if let Some(n) = args.reps {
            cfg.replications = n as usize;
        }
        if let Some(n) = args.repeats {
            cfg.repeats = n as usize;
        }
        if let Some(n) = args.demo_rows {
            cfg.demo_rows = n as usize;
        }
        cfg.demo |= args.demo;
        cfg.resample_interactions |= args.resample_interactions;
        cfg.methods.sort_unstable();
        cfg.methods.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return bad("r must lie strictly between 0 and 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie strictly between 0 and 1");
        }
        if !(self.t0 >= 0.0) {
            return bad("t0 must be non-negative");
        }
        if !(self.subsample_frac > 0.0 && self.subsample_frac < 1.0) {
            return bad("subsample fraction must lie strictly between 0 and 1 so that the holdout is disjoint and nonempty");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("no methods requested");
        }
        if let Some(s) = self.setting {
            if !(1..=4).contains(&s) {
                return bad("setting must be between 1 and 4");
            }
        }
        if matches!(self.mode, Mode::Analyze | Mode::Validate) && !self.demo {
            if self.dataset.is_none() {
                return bad("--dataset (or --demo) is required in this mode");
            }
            if self.response.is_none() {
                return bad("--response is required with --dataset");
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
