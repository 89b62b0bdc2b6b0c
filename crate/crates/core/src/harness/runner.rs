use std::cmp::Ordering;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use crate::autodiff::{forward, predict, Graph, ParamSet};
use crate::harness::config::{ActivationKind, Experiment, ExperimentConfig, OptimizerKind};
use crate::harness::idx::load_idx;
use crate::harness::metrics::{write_csv, MetricsRow};
use crate::harness::synth::gen_matfac;
use crate::models::{accuracy, build_matfac, build_mlp, init_params, Activation, LossKind, ModelSpec};
use crate::optim::{Adam, Lnb, Optimizer};
use crate::{rng, Error, Real, Result, Tensor};

/// Stream used for the held-out matrix factorization samples.
const EVAL_STREAM: u64 = 12;
/// Epoch `e` shuffles with stream `SHUFFLE_STREAM + e`.
const SHUFFLE_STREAM: u64 = 100;

/// Training and evaluation splits. Labels are class indices for classifiers
/// and target rows for regression.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train_x: Tensor,
    pub train_y: Tensor,
    pub eval_x: Tensor,
    pub eval_y: Tensor,
}

fn take_rows(t: Tensor, limit: usize) -> Tensor {
    if limit == 0 || limit >= t.rows() {
        t
    } else {
        t.slice_rows(0, limit)
    }
}

fn take(t: Tensor, limit: usize) -> Tensor {
    if t.ndim() == 1 {
        if limit == 0 || limit >= t.len() {
            t
        } else {
            Tensor::vector(t.data()[..limit].to_vec())
        }
    } else {
        take_rows(t, limit)
    }
}

fn load_pair(images: PathBuf, labels: PathBuf, limit: usize) -> Result<(Tensor, Tensor)> {
    let x = load_idx(&images)?;
    let y = load_idx(&labels)?;
    if x.ndim() != 2 || y.ndim() != 1 || x.rows() != y.len() {
        return Err(Error::config(format!(
            "{} holds {:?} but {} holds {:?}",
            images.display(),
            x.shape(),
            labels.display(),
            y.shape()
        )));
    }
    Ok((take(x, limit), take(y, limit)))
}

/// Loads or generates the data a config describes.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.experiment {
        Experiment::Matfac => {
            let (n, d_in, d_hidden, d_out) = cfg.matfac_dims();
            let p = gen_matfac(n, d_in, d_hidden, d_out, cfg.kappa, cfg.corr, cfg.seed)?;
            let (eval_x, eval_y) = p.resample(n, cfg.seed, EVAL_STREAM)?;
            Ok(Dataset {
                train_x: p.x,
                train_y: p.y,
                eval_x,
                eval_y,
            })
        }
        Experiment::MnistMlp | Experiment::MnistMlpInverted => {
            let (train_x, train_y) = load_pair(
                cfg.idx_path(&cfg.train_images, "train-images-idx3-ubyte"),
                cfg.idx_path(&cfg.train_labels, "train-labels-idx1-ubyte"),
                cfg.train_subset,
            )?;
            let (eval_x, eval_y) = load_pair(
                cfg.idx_path(&cfg.test_images, "t10k-images-idx3-ubyte"),
                cfg.idx_path(&cfg.test_labels, "t10k-labels-idx1-ubyte"),
                cfg.eval_subset,
            )?;
            let mut data = Dataset {
                train_x,
                train_y,
                eval_x,
                eval_y,
            };
            if cfg.experiment == Experiment::MnistMlpInverted {
                invert_pixels(&mut data);
            }
            Ok(data)
        }
    }
}

/// `x → 1 − x` on both splits.
pub fn invert_pixels(data: &mut Dataset) {
    for t in [&mut data.train_x, &mut data.eval_x] {
        t.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    }
}

/// The network for `cfg`, sized for `data`.
pub fn build_model(cfg: &ExperimentConfig, data: &Dataset) -> Result<Graph> {
    match cfg.experiment {
        Experiment::Matfac => {
            let (_, _, d_hidden, _) = cfg.matfac_dims();
            build_matfac(data.train_x.cols(), d_hidden, data.train_y.cols())
        }
        _ => {
            let classes = data
                .train_y
                .data()
                .iter()
                .chain(data.eval_y.data())
                .fold(0.0 as Real, |m, &v| m.max(v)) as usize
                + 1;
            let mut dims = vec![data.train_x.cols()];
            dims.extend(std::iter::repeat_n(cfg.hidden, cfg.layers));
            dims.push(classes.max(2));
            let act = match cfg.activation {
                ActivationKind::Tanh => Activation::Tanh,
                ActivationKind::Relu => Activation::Relu,
            };
            build_mlp(&ModelSpec::mlp(&dims, act, LossKind::SoftmaxCrossEntropy, cfg.seed))
        }
    }
}

/// The optimizer for `cfg`; `steps` sizes a decaying LNB schedule.
pub fn build_optimizer(cfg: &ExperimentConfig, steps: usize) -> Box<dyn Optimizer> {
    match cfg.optimizer {
        OptimizerKind::Adam => Box::new(Adam::new(cfg.lr)),
        OptimizerKind::LnbOnline | OptimizerKind::LnbFullBatch => Box::new(Lnb::new(cfg.lnb_config(steps))),
    }
}

/// Held-out loss (regression) or accuracy (classification).
pub fn evaluate(cfg: &ExperimentConfig, graph: &Graph, params: &ParamSet, data: &Dataset) -> Result<Real> {
    match cfg.experiment {
        Experiment::Matfac => Ok(forward(graph, params, &data.eval_x, &data.eval_y)?.0),
        _ => accuracy(&predict(graph, params, &data.eval_x)?, &data.eval_y),
    }
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub optimizer: OptimizerKind,
    pub rows: Vec<MetricsRow>,
    pub params: ParamSet,
    /// Loss on the whole training split after the last step.
    pub final_train_loss: Real,
    pub final_eval: Real,
    pub best_eval: Real,
    pub wall_time_s: Real,
    pub steps: usize,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = if self.experiment.higher_is_better() {
            "accuracy"
        } else {
            "eval loss"
        };
        let metric = |v: Real| {
            if self.experiment.higher_is_better() {
                format!("{v:.4}")
            } else {
                format!("{v:.6e}")
            }
        };
        write!(
            f,
            "{} {}: {} steps, final train loss {:.6e}, final {what} {}, best {what} {}, optimizer time {:.3} s",
            self.experiment.name(),
            self.optimizer.name(),
            self.steps,
            self.final_train_loss,
            metric(self.final_eval),
            metric(self.best_eval),
            self.wall_time_s
        )
    }
}

fn with_context(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, step {step}: {msg}")),
        other => other,
    }
}

fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
    if t.ndim() == 1 {
        Tensor::vector(idx.iter().map(|&i| t.data()[i]).collect())
    } else {
        t.select_rows(idx)
    }
}

/// Trains on already loaded data without touching the file system.
pub fn train_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunSummary> {
    cfg.validate()?;
    let graph = build_model(cfg, data)?;
    let mut params = init_params(&graph, cfg.seed);
    let n = data.train_x.rows();
    let full_batch = cfg.batch_size >= n;
    let per_epoch = if full_batch { 1 } else { n.div_ceil(cfg.batch_size) };
    let mut opt = build_optimizer(cfg, per_epoch * cfg.epochs);

    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut elapsed = 0.0;
    let mut steps = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let (mut alpha, mut z) = (Real::NAN, Real::NAN);
        let mut run_step = |x: &Tensor, y: &Tensor, params: &mut ParamSet| -> Result<()> {
            let start = Instant::now();
            let report = opt
                .step(&graph, params, x, y)
                .map_err(|e| with_context(e, epoch, steps + 1))?;
            elapsed += start.elapsed().as_secs_f64() as Real;
            steps += 1;
            loss_sum += report.loss;
            batches += 1;
            alpha = report.alpha;
            z = report.z;
            Ok(())
        };
        if full_batch {
            run_step(&data.train_x, &data.train_y, &mut params)?;
        } else {
            let order = rng::permutation(&mut rng::stream(cfg.seed, SHUFFLE_STREAM + epoch as u64), n);
            for chunk in order.chunks(cfg.batch_size) {
                let x = data.train_x.select_rows(chunk);
                let y = gather(&data.train_y, chunk);
                run_step(&x, &y, &mut params)?;
            }
        }
        let eval = evaluate(cfg, &graph, &params, data).map_err(|e| with_context(e, epoch, steps))?;
        rows.push(MetricsRow {
            experiment: cfg.experiment.name().into(),
            optimizer: cfg.optimizer.name().into(),
            epoch,
            step: steps,
            wall_time_s: elapsed,
            train_loss: loss_sum / batches as Real,
            eval_metric: eval,
            alpha,
            z,
        });
    }

    let final_train_loss = forward(&graph, &params, &data.train_x, &data.train_y)
        .map_err(|e| with_context(e, cfg.epochs, steps))?
        .0;
    let evals = rows.iter().map(|r| r.eval_metric);
    let best_eval = if cfg.experiment.higher_is_better() {
        evals.fold(Real::NEG_INFINITY, Real::max)
    } else {
        evals.fold(Real::INFINITY, Real::min)
    };
    Ok(RunSummary {
        experiment: cfg.experiment,
        optimizer: cfg.optimizer,
        final_eval: rows.last().map_or(Real::NAN, |r| r.eval_metric),
        rows,
        params,
        final_train_loss,
        best_eval,
        wall_time_s: elapsed,
        steps,
    })
}

/// Loads data, trains, and writes the metrics CSV when `cfg.output` is set.
/// Nothing is written unless the whole run succeeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let summary = train_on(cfg, &data)?;
    if let Some(path) = &cfg.output {
        write_csv(path, &summary.rows)?;
    }
    Ok(summary)
}

/// One grid cell: the axis value and its final eval metric or failure message.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub value: String,
    pub outcome: std::result::Result<Real, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub axis: String,
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the winner, if any cell succeeded.
    pub best: Option<usize>,
}

impl GridReport {
    pub fn best_value(&self) -> Option<&str> {
        self.best.map(|i| self.cells[i].value.as_str())
    }

    pub fn failures(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

impl fmt::Display for GridReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, cell) in self.cells.iter().enumerate() {
            let mark = if Some(i) == self.best { "*" } else { " " };
            match &cell.outcome {
                Ok(m) => writeln!(f, "{mark} {}={:<12} {m:.9e}", self.axis, cell.value)?,
                Err(e) => writeln!(f, "{mark} {}={:<12} failed: {e}", self.axis, cell.value)?,
            }
        }
        match self.best_value() {
            Some(v) => write!(f, "best {}={v}", self.axis),
            None => write!(f, "every cell failed"),
        }
    }
}

/// Orders axis values numerically when both parse as numbers.
fn value_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Index of the best finite metric; ties go to the smaller axis value.
pub fn select_best(cells: &[GridCell], higher_is_better: bool) -> Option<usize> {
    let mut best: Option<(usize, Real)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let Ok(m) = cell.outcome else { continue };
        if !m.is_finite() {
            continue;
        }
        best = match best {
            None => Some((i, m)),
            Some((j, b)) => {
                let better = if higher_is_better { m > b } else { m < b };
                let tie_smaller = m == b && value_order(&cell.value, &cells[j].value) == Ordering::Less;
                if better || tie_smaller {
                    Some((i, m))
                } else {
                    Some((j, b))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

/// Runs `cell` for every value, recording failures instead of stopping.
pub fn grid_search_with<F>(axis: &str, values: &[String], higher_is_better: bool, mut cell: F) -> GridReport
where
    F: FnMut(&str) -> Result<Real>,
{
    let cells: Vec<GridCell> = values
        .iter()
        .map(|v| GridCell {
            value: v.clone(),
            outcome: cell(v).map_err(|e| e.to_string()).and_then(|m| {
                if m.is_finite() {
                    Ok(m)
                } else {
                    Err(format!("non-finite eval metric {m}"))
                }
            }),
        })
        .collect();
    GridReport {
        axis: axis.to_string(),
        best: select_best(&cells, higher_is_better),
        cells,
    }
}

/// Per-cell CSV path: `dir/stem-axis-value.ext`.
fn cell_output(base: &std::path::Path, axis: &str, value: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}-{axis}-{value}{ext}"))
}

/// Runs `base` once per value of `axis` with the same seed and picks the
/// best final eval metric. Returns the report and the winning config.
pub fn grid_search(
    base: &ExperimentConfig,
    axis: &str,
    values: &[String],
) -> Result<(GridReport, Option<ExperimentConfig>)> {
    if values.is_empty() {
        return Err(Error::config("grid needs at least one value"));
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        cfg.set(axis, v)?;
        if let Some(out) = &base.output {
            cfg.output = Some(cell_output(out, axis, v));
        }
        configs.push(cfg);
    }
    let mut next = configs.iter();
    let report = grid_search_with(axis, values, base.experiment.higher_is_better(), |_| {
        let cfg = next.next().expect("one config per value");
        run_experiment(cfg).map(|s| s.final_eval)
    });
    let best = report.best.map(|i| configs[i].clone());
    Ok((report, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_value_wins() {
        let r = grid_search_with("lr", &values(&["0.1"]), false, |_| Ok(3.0));
        assert_eq!(r.best_value(), Some("0.1"));
    }

    #[test]
    fn ties_go_to_smaller_value() {
        let r = grid_search_with("lr", &values(&["1e-2", "1e-4", "1e-3"]), true, |_| Ok(0.5));
        assert_eq!(r.best_value(), Some("1e-4"));
    }

    #[test]
    fn failures_are_reported_and_skipped() {
        let r = grid_search_with("lr", &values(&["1", "2", "3"]), false, |v| match v {
            "1" => Err(Error::numeric("diverged")),
            "2" => Ok(Real::NAN),
            _ => Ok(7.0),
        });
        assert_eq!(r.best_value(), Some("3"));
        assert_eq!(r.failures().count(), 2);
    }

    #[test]
    fn cell_paths_carry_the_value() {
        let p = cell_output(std::path::Path::new("out/m.csv"), "lr", "1e-3");
        assert_eq!(p, PathBuf::from("out/m-lr-1e-3.csv"));
    }

    #[test]
    fn matfac_full_batch_lnb_runs() {
        let cfg = ExperimentConfig {
            scale: 0.05,
            epochs: 3,
            batch_size: 100_000,
            ..Default::default()
        };
        let data = load_dataset(&cfg).unwrap();
        let s = train_on(&cfg, &data).unwrap();
        assert_eq!(s.rows.len(), 3);
        assert_eq!(s.steps, 3);
        assert!(s.rows.windows(2).all(|w| w[0].wall_time_s <= w[1].wall_time_s));
    }
}
