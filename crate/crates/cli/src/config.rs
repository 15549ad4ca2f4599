//! Run configuration: a TOML file with sections, overridden by flags.
//!
//! Precedence, highest first: command-line flag, `VITL_OUT_DIR` (output
//! directory only), config file, built-in default. Relative paths in a config
//! file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use vitl_core::data::{EmotionSelector, Mode, NEUTRAL_LABEL};
use vitl_core::eval::SplitPlan;
use vitl_core::{EmotionPoint, Result, VitlError};

pub const OUT_DIR_ENV: &str = "VITL_OUT_DIR";

fn config_err(msg: impl Into<String>) -> VitlError {
    VitlError::Config(msg.into())
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub data: DataSection,
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub split: SplitSection,
    pub sweep: SweepSection,
    pub generate: GenerateSection,
    pub predict: PredictSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub dataset: Option<PathBuf>,
    /// `builtin` or a path to an embedding table.
    pub embedding: Option<String>,
    pub mode: Option<String>,
    pub theta0: Option<String>,
    pub observed_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub gamma_x: Option<f64>,
    pub gamma_theta: Option<f64>,
    pub lambda: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub gamma_x: Option<Vec<f64>>,
    pub gamma_theta: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub folds: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub n_splits: Option<usize>,
    pub test_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ranks: Option<Vec<usize>>,
    pub fractions: Option<Vec<f64>>,
    pub masks_per_split: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub identity: Option<String>,
    pub path: Option<String>,
    pub radii: Option<Vec<f64>>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub model: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    toml::from_str(text).map_err(|e| config_err(format!("config: {}", e.message())))
}

/// Reads and parses a config file, resolving its relative paths.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config file {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut cfg.data.dataset,
        &mut cfg.generate.model,
        &mut cfg.generate.input,
        &mut cfg.predict.model,
        &mut cfg.predict.queries,
        &mut cfg.output.dir,
    ] {
        if let Some(v) = p.as_mut() {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
    }
    if let Some(e) = cfg.data.embedding.as_mut() {
        if e != "builtin" && Path::new(e.as_str()).is_relative() {
            *e = base.join(e.as_str()).to_string_lossy().into_owned();
        }
    }
    Ok(cfg)
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observation file (identity, emotion, θ columns, landmark columns).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Emotion embedding table, or `builtin`; re-embeds θ from labels.
    #[arg(long)]
    pub embedding: Option<String>,
    /// `single` or `joint`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Reference emotion for single mode: a label or comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<String>,
    #[arg(long = "gamma-x")]
    pub gamma_x: Option<f64>,
    #[arg(long = "gamma-theta")]
    pub gamma_theta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Rank of the output matrix A (identity when absent).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long = "observed-fraction")]
    pub observed_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// `radial` or `angular`.
    #[arg(long)]
    pub path: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Path start (angular) or direction (radial): a label or coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Landmark file whose first row is the generation input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset identity whose reference-emotion landmarks are the generation input.
    #[arg(long)]
    pub identity: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long = "test-fraction")]
    pub test_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long = "masks-per-split")]
    pub masks_per_split: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Fit,
    Cv,
    RankSweep,
    MaskSweep,
    Generate,
    Predict,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fit" => Experiment::Fit,
            "cv" => Experiment::Cv,
            "rank-sweep" => Experiment::RankSweep,
            "mask-sweep" => Experiment::MaskSweep,
            "generate" => Experiment::Generate,
            "predict" => Experiment::Predict,
            other => {
                return Err(config_err(format!(
                    "unknown experiment '{other}' (expected fit, cv, rank-sweep, mask-sweep, generate or predict)"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Radial,
    Angular,
}

/// An emotion given on the command line: label or explicit coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum EmotionArg {
    Label(String),
    Coords(Vec<f64>),
}

impl EmotionArg {
    pub fn parse(s: &str) -> Self {
        let parts: Option<Vec<f64>> = s.split(',').map(|c| c.trim().parse::<f64>().ok()).collect();
        match parts {
            Some(v) if !v.is_empty() => EmotionArg::Coords(v),
            _ => EmotionArg::Label(s.trim().to_string()),
        }
    }

    pub fn selector(&self) -> Result<EmotionSelector> {
        Ok(match self {
            EmotionArg::Label(l) => EmotionSelector::Label(l.clone()),
            EmotionArg::Coords(c) => EmotionSelector::Point(EmotionPoint::new(c.clone())?),
        })
    }
}

/// Fully resolved settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub embedding: Option<String>,
    pub mode: Mode,
    pub theta0: EmotionArg,
    pub gamma_x: Option<f64>,
    pub gamma_theta: Option<f64>,
    pub lambda: Option<f64>,
    pub rank: Option<usize>,
    /// Cross-validation candidates: a flag gives a single point, then
    /// `[grid]` lists, then `[kernel]` scalars.
    pub grid: GridSection,
    pub folds: usize,
    pub plan: SplitPlan,
    pub observed_fraction: f64,
    pub ranks: Option<Vec<usize>>,
    pub fractions: Vec<f64>,
    pub masks_per_split: usize,
    pub model: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub identity: Option<String>,
    pub path: PathKind,
    pub radii: Vec<f64>,
    pub from: Option<EmotionArg>,
    pub to: Option<EmotionArg>,
    pub steps: usize,
    pub out_dir: PathBuf,
}

pub const DEFAULT_LAMBDA: f64 = 1e-3;

impl RunConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(DEFAULT_LAMBDA)
    }

    /// Merges flags over the config file named by `--config` (if any).
    pub fn resolve(selected: Option<Experiment>, flags: &Flags, env_out: Option<PathBuf>) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => load_config(p)?,
            None => FileConfig::default(),
        };
        Self::merge(selected, flags, &file, env_out)
    }

    pub fn merge(selected: Option<Experiment>, flags: &Flags, file: &FileConfig, env_out: Option<PathBuf>) -> Result<Self> {
        let experiment = match (selected, &file.experiment) {
            (Some(e), _) => e,
            (None, Some(s)) => Experiment::parse(s)?,
            (None, None) => return Err(config_err("no experiment selected (subcommand or `experiment` key)")),
        };
        let theta0 = EmotionArg::parse(flags.theta0.as_deref().or(file.data.theta0.as_deref()).unwrap_or(NEUTRAL_LABEL));
        let mode = match flags.mode.as_deref().or(file.data.mode.as_deref()).unwrap_or("single") {
            "single" => Mode::Single(theta0.selector()?),
            "joint" => Mode::Joint,
            other => return Err(config_err(format!("unknown mode '{other}' (expected single or joint)"))),
        };
        let path = match flags.path.as_deref().or(file.generate.path.as_deref()).unwrap_or("radial") {
            "radial" => PathKind::Radial,
            "angular" => PathKind::Angular,
            other => return Err(config_err(format!("unknown path '{other}' (expected radial or angular)"))),
        };
        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let test_fraction = flags.test_fraction.or(file.split.test_fraction).unwrap_or(0.1);
        let default_folds = SplitPlan::default().fold_count;
        let folds = flags.folds.or(file.grid.folds).unwrap_or(default_folds);
        let plan = SplitPlan {
            n_splits: flags.splits.or(file.split.n_splits).unwrap_or(SplitPlan::default().n_splits),
            test_fraction,
            fold_count: folds,
            seed,
        };
        let observed_fraction = flags.observed_fraction.or(file.data.observed_fraction).unwrap_or(1.0);
        if !(0.0..=1.0).contains(&observed_fraction) {
            return Err(config_err(format!("observed_fraction must lie in [0, 1], got {observed_fraction}")));
        }
        let fractions = flags
            .fractions
            .clone()
            .or_else(|| flags.observed_fraction.map(|f| vec![f]))
            .or_else(|| file.sweep.fractions.clone())
            .unwrap_or_else(|| vec![1.0, 0.8, 0.6, 0.4, 0.2]);
        let model = flags.model.clone().or_else(|| match experiment {
            Experiment::Predict => file.predict.model.clone().or_else(|| file.generate.model.clone()),
            _ => file.generate.model.clone().or_else(|| file.predict.model.clone()),
        });
        let out_dir = flags
            .out
            .clone()
            .or(env_out)
            .or_else(|| file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("vitl-out"));

        let cfg = RunConfig {
            experiment,
            seed,
            dataset: flags.dataset.clone().or_else(|| file.data.dataset.clone()),
            embedding: flags.embedding.clone().or_else(|| file.data.embedding.clone()),
            mode,
            theta0,
            gamma_x: flags.gamma_x.or(file.kernel.gamma_x),
            gamma_theta: flags.gamma_theta.or(file.kernel.gamma_theta),
            lambda: flags.lambda.or(file.kernel.lambda),
            rank: flags.rank.or(file.kernel.rank),
            grid: GridSection {
                gamma_x: flags.gamma_x.map(|v| vec![v]).or_else(|| file.grid.gamma_x.clone()).or_else(|| file.kernel.gamma_x.map(|v| vec![v])),
                gamma_theta: flags
                    .gamma_theta
                    .map(|v| vec![v])
                    .or_else(|| file.grid.gamma_theta.clone())
                    .or_else(|| file.kernel.gamma_theta.map(|v| vec![v])),
                lambda: flags.lambda.map(|v| vec![v]).or_else(|| file.grid.lambda.clone()).or_else(|| file.kernel.lambda.map(|v| vec![v])),
                folds: Some(folds),
            },
            folds,
            plan,
            observed_fraction,
            ranks: flags.ranks.clone().or_else(|| file.sweep.ranks.clone()),
            fractions,
            masks_per_split: flags.masks_per_split.or(file.sweep.masks_per_split).unwrap_or(4),
            model,
            queries: flags.queries.clone().or_else(|| file.predict.queries.clone()),
            input: flags.input.clone().or_else(|| file.generate.input.clone()),
            identity: flags.identity.clone().or_else(|| file.generate.identity.clone()),
            path,
            radii: flags.radii.clone().or_else(|| file.generate.radii.clone()).unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]),
            from: flags.from.as_deref().or(file.generate.from.as_deref()).map(EmotionArg::parse),
            to: flags.to.as_deref().or(file.generate.to.as_deref()).map(EmotionArg::parse),
            steps: flags.steps.or(file.generate.steps).unwrap_or(10),
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that every path the experiment needs was given and exists.
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(config_err(format!("lambda must be positive, got {l}")));
            }
        }
        for (name, g) in [("gamma_x", self.gamma_x), ("gamma_theta", self.gamma_theta)] {
            if let Some(g) = g {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(config_err(format!("{name} must be positive, got {g}")));
                }
            }
        }
        let needs_dataset = match self.experiment {
            Experiment::Fit | Experiment::Cv | Experiment::RankSweep | Experiment::MaskSweep => true,
            Experiment::Generate => self.input.is_none(),
            Experiment::Predict => false,
        };
        if needs_dataset {
            require("dataset", "--dataset or [data] dataset", &self.dataset)?;
        }
        if matches!(self.experiment, Experiment::Generate | Experiment::Predict) {
            require("model", "--model", &self.model)?;
        }
        if self.experiment == Experiment::Predict {
            require("query file", "--queries or [predict] queries", &self.queries)?;
        }
        if self.experiment == Experiment::Generate {
            if self.input.is_none() && self.identity.is_none() {
                return Err(config_err("generate needs --input or --identity"));
            }
            if let Some(p) = &self.input {
                exists("input", p)?;
            }
        }
        if let Some(e) = &self.embedding {
            if e != "builtin" {
                exists("embedding", Path::new(e))?;
            }
        }
        Ok(())
    }
}

fn require(what: &str, how: &str, p: &Option<PathBuf>) -> Result<()> {
    match p {
        None => Err(config_err(format!("no {what} given ({how})"))),
        Some(p) => exists(what, p),
    }
}

fn exists(what: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(VitlError::Data(format!("{what} not found: {}", p.display())))
    }
}
