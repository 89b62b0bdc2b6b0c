use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::optim::{LnbConfig, LnbMode};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Matfac,
    MnistMlp,
    MnistMlpInverted,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Matfac => "matfac",
            Experiment::MnistMlp => "mnist-mlp",
            Experiment::MnistMlpInverted => "mnist-mlp-inverted",
        }
    }

    /// Whether a larger eval metric is better (accuracy) or worse (loss).
    pub fn higher_is_better(self) -> bool {
        self != Experiment::Matfac
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matfac" => Ok(Experiment::Matfac),
            "mnist-mlp" => Ok(Experiment::MnistMlp),
            "mnist-mlp-inverted" => Ok(Experiment::MnistMlpInverted),
            _ => Err(Error::config(format!(
                "unknown experiment {s:?} (expected matfac, mnist-mlp or mnist-mlp-inverted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    LnbOnline,
    LnbFullBatch,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::LnbOnline => "lnb-online",
            OptimizerKind::LnbFullBatch => "lnb-fullbatch",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lnb-online" => Ok(OptimizerKind::LnbOnline),
            "lnb-fullbatch" => Ok(OptimizerKind::LnbFullBatch),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::config(format!(
                "unknown optimizer {s:?} (expected lnb-online, lnb-fullbatch or adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Tanh,
    Relu,
}

/// Everything one training run needs. Built from defaults, then a key-value
/// file, then `key=value` overrides, in increasing precedence.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// CSV destination; `None` keeps metrics in memory only.
    pub output: Option<PathBuf>,

    /// Directory holding the four IDX files (plain or `.gz`).
    pub data_dir: PathBuf,
    /// Explicit IDX paths; each defaults to the standard file name in `data_dir`.
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Use only the first `train_subset` training samples (0 = all).
    pub train_subset: usize,
    /// Use only the first `eval_subset` test samples (0 = all).
    pub eval_subset: usize,
    pub hidden: usize,
    pub layers: usize,
    pub activation: ActivationKind,

    /// Multiplies the reference matrix factorization sizes
    /// (10⁴ samples, 60 → 60 → 100).
    pub scale: Real,
    pub kappa: Real,
    /// Correlation decay between neighbouring input columns.
    pub corr: Real,

    /// Adam learning rate.
    pub lr: Real,
    /// Multiplies the LNB step size after every step, starting from the
    /// first `epsilon` entry. 1 keeps the configured schedule as is.
    pub epsilon_decay: Real,
    pub lnb: LnbConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Matfac,
            optimizer: OptimizerKind::LnbOnline,
            seed: 0,
            epochs: 10,
            batch_size: 1000,
            output: None,
            data_dir: PathBuf::from("data/digits"),
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_subset: 0,
            eval_subset: 0,
            hidden: 800,
            layers: 2,
            activation: ActivationKind::Tanh,
            scale: 1.0,
            kappa: 1e5,
            corr: 0.5,
            lr: 1e-4,
            epsilon_decay: 1.0,
            lnb: LnbConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("invalid value {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Defaults overlaid with the file at `path` and then with `overrides`.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.parse()?,
            "optimizer" => {
                self.optimizer = value.parse()?;
                self.lnb.mode = match self.optimizer {
                    OptimizerKind::LnbFullBatch => LnbMode::FullBatch,
                    _ => LnbMode::Online,
                };
            }
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "output" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data_dir" => self.data_dir = PathBuf::from(value),
            "train_images" => self.train_images = Some(PathBuf::from(value)),
            "train_labels" => self.train_labels = Some(PathBuf::from(value)),
            "test_images" => self.test_images = Some(PathBuf::from(value)),
            "test_labels" => self.test_labels = Some(PathBuf::from(value)),
            "train_subset" => self.train_subset = parse(key, value)?,
            "eval_subset" => self.eval_subset = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "activation" => {
                self.activation = match value {
                    "tanh" => ActivationKind::Tanh,
                    "relu" => ActivationKind::Relu,
                    _ => return Err(Error::config(format!("unknown activation {value:?}"))),
                }
            }
            "scale" => self.scale = parse(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "corr" => self.corr = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epsilon" => {
                self.lnb.schedule = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "epsilon_decay" => self.epsilon_decay = parse(key, value)?,
            "weight_decay" => self.lnb.weight_decay = parse(key, value)?,
            "ridge" => self.lnb.ridge = parse(key, value)?,
            "min_norm" => self.lnb.min_norm = parse(key, value)?,
            "grad_decay" => self.lnb.grad_decay = parse(key, value)?,
            "moment_decay" => self.lnb.moment_decay = parse(key, value)?,
            "cg_iters" => self.lnb.cg_iters = parse(key, value)?,
            "cg_tol" => self.lnb.cg_tol = parse(key, value)?,
            "var_floor" => self.lnb.var_floor = parse(key, value)?,
            "raw_step" => self.lnb.raw_step = parse_bool(key, value)?,
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.experiment == Experiment::Matfac {
            if !(self.scale > 0.0) {
                return Err(Error::config("scale must be positive"));
            }
            if !(self.kappa >= 1.0) {
                return Err(Error::config("kappa must be at least 1"));
            }
            if !(self.corr.abs() < 1.0) {
                return Err(Error::config("corr must lie in (-1, 1)"));
            }
        } else if self.hidden == 0 {
            return Err(Error::config("hidden must be at least 1"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::config("epsilon_decay must lie in (0, 1]"));
        }
        match self.optimizer {
            OptimizerKind::Adam if !(self.lr > 0.0 && self.lr.is_finite()) => {
                Err(Error::config("lr must be positive"))
            }
            OptimizerKind::Adam => Ok(()),
            _ => self.lnb.validate(),
        }
    }

    /// LNB settings with `epsilon_decay` expanded into a per-step schedule
    /// covering `steps` steps.
    pub fn lnb_config(&self, steps: usize) -> LnbConfig {
        let mut lnb = self.lnb.clone();
        if self.epsilon_decay != 1.0 {
            let base = lnb.schedule[0];
            let mut eps = base;
            lnb.schedule = (0..steps.max(1))
                .map(|_| {
                    let e = eps;
                    eps *= self.epsilon_decay;
                    e
                })
                .collect();
        }
        lnb
    }

    /// IDX path for one of the four MNIST files, honouring explicit overrides.
    pub fn idx_path(&self, explicit: &Option<PathBuf>, standard: &str) -> PathBuf {
        if let Some(p) = explicit {
            return p.clone();
        }
        let plain = self.data_dir.join(standard);
        let gz = self.data_dir.join(format!("{standard}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    }

    /// `(n, d_in, d_hidden, d_out)` of the factorization problem at this scale.
    pub fn matfac_dims(&self) -> (usize, usize, usize, usize) {
        let at = |base: Real| ((base * self.scale).round() as usize).max(1);
        (at(1e4), at(60.0), at(60.0), at(100.0))
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} with {} (seed {}, {} epochs, batch {})",
            self.experiment.name(),
            self.optimizer.name(),
            self.seed,
            self.epochs,
            self.batch_size
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# comment\nexperiment = mnist-mlp\nepochs=3\nlr = 1e-3 # trailing\n").unwrap();
        cfg.set("epochs", "5").unwrap();
        assert_eq!(cfg.experiment, Experiment::MnistMlp);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.lr, 1e-3);
    }

    #[test]
    fn optimizer_selects_lnb_mode() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("optimizer", "lnb-fullbatch").unwrap();
        assert_eq!(cfg.lnb.mode, LnbMode::FullBatch);
        cfg.set("epsilon", "0.1, 0.05").unwrap();
        assert_eq!(cfg.lnb.schedule, vec![0.1, 0.05]);
    }

    #[test]
    fn invalid_entries_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("epochs", "x"), Err(Error::Config(_))));
        assert!(matches!(cfg.apply_text("just words"), Err(Error::Config(_))));
        cfg.batch_size = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn desk_scale_dimensions() {
        let cfg = ExperimentConfig {
            scale: 0.1,
            ..Default::default()
        };
        assert_eq!(cfg.matfac_dims(), (1000, 6, 6, 10));
    }
}
