//! Unsupervised training: the loss is the batch mean of the sum MSE of the
//! allocations the network emits, so no labelled allocations are needed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::channel::{self, ChannelInstance};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::msecore::{self, MseReport, PowerAllocation, POWER_SUM_RTOL};
use crate::neuralnet::{self, ForwardTrace, Gradients, InputTransform, Mode, NetworkArch, NetworkParams};
use crate::rng;

/// Default factor applied to the loss before the optimizer sees its gradient.
pub const DEFAULT_LOSS_SCALE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer {s:?} (sgd|adam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh instances every iteration: iteration t uses instances
    /// `t·s .. (t+1)·s` of the dataset keyed by `seed`.
    OnTheFly { seed: u64 },
    /// Cycle through a dataset file in order.
    FixedDataset(PathBuf),
    /// Cycle through the given instances in order.
    InMemory(Vec<ChannelInstance>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub data_source: DataSource,
    pub eval_every: usize,
    pub holdout_size: usize,
    pub holdout_seed: u64,
    /// Seed of the weight initialization.
    pub init_seed: u64,
    pub loss_scale: f64,
    pub input_transform: InputTransform,
    /// Best held-out parameters are written here whenever they improve.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            iterations: 1000,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            data_source: DataSource::OnTheFly { seed: 1 },
            eval_every: 50,
            holdout_size: 2000,
            holdout_seed: 2,
            init_seed: 0,
            loss_scale: DEFAULT_LOSS_SCALE,
            input_transform: InputTransform::Raw,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.holdout_size == 0 {
            return bad("holdout_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if !(self.loss_scale.is_finite() && self.loss_scale > 0.0) {
            return bad("loss_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_epsilon <= 0.0 {
            return bad("adam parameters out of range");
        }
        if let Some(dir) = self.checkpoint_path.as_deref().and_then(Path::parent) {
            if !dir.as_os_str().is_empty() && !dir.is_dir() {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint directory {} does not exist",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub iteration: usize,
    /// Batch mean sum MSE, unscaled.
    pub loss: f64,
    /// Held-out mean sum MSE in infer mode, when evaluated at this iteration.
    pub holdout_mean: Option<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    pub loss_scale: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,holdout_mean,elapsed_s\n");
        for r in &self.rows {
            let holdout = r.holdout_mean.map(|h| format!("{h:e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{},{:.6}", r.iteration, r.loss, holdout, r.elapsed_s);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Loss, gradients and the train-mode trace of one mini-batch.
pub struct BatchResult {
    pub loss: f64,
    pub grads: Gradients,
    pub trace: ForwardTrace,
}

/// Check every emitted allocation against the per-user power constraint.
pub fn check_output_feasibility(output: &Array2<f64>, config: &SystemConfig) -> Result<()> {
    let tau = config.num_pilots;
    for (i, row) in output.outer_iter().enumerate() {
        for (k, group) in row.exact_chunks(tau).into_iter().enumerate() {
            let total = config.p_tot(k);
            let sum = group.sum();
            if ((sum - total) / total).abs() > POWER_SUM_RTOL || group.iter().any(|p| !p.is_finite() || *p <= 0.0) {
                return Err(Error::InvalidAllocation(format!(
                    "sample {i}, user {k}: allocation {group} violates the power constraint"
                )));
            }
        }
    }
    Ok(())
}

fn sample_allocation(output: &Array2<f64>, i: usize, config: &SystemConfig) -> PowerAllocation {
    PowerAllocation {
        p: output
            .row(i)
            .to_owned()
            .into_shape_with_order((config.num_users, config.num_pilots))
            .expect("n_L = K·tau"),
    }
}

/// Mean sum MSE over the batch and its gradient with respect to every
/// trainable parameter.
pub fn loss_and_grad(params: &NetworkParams, batch: &[ChannelInstance], config: &SystemConfig) -> Result<BatchResult> {
    if batch.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a training batch needs at least 2 instances, got {}",
            batch.len()
        )));
    }
    let input = neuralnet::input_batch(batch);
    let trace = params.forward(input.view(), Mode::Train)?;
    check_output_feasibility(&trace.output, config)?;
    let s = batch.len() as f64;
    let per_sample = batch
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let alloc = sample_allocation(&trace.output, i, config);
            let f = msecore::sum_mse(inst, &alloc, config)?;
            let q = msecore::sum_mse_scaled_gradient(inst, &alloc, config)?;
            Ok((f, msecore::logit_gradient_from_scaled(&alloc.p, q)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut d_logits = Array2::zeros(trace.logits.raw_dim());
    for (i, (f, g)) in per_sample.into_iter().enumerate() {
        loss += f;
        let flat = g.into_shape_with_order(config.num_users * config.num_pilots).expect("K·tau");
        d_logits.row_mut(i).assign(&(flat / s));
    }
    loss /= s;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss}")));
    }
    let grads = params.backward_from_logits(&trace, &d_logits)?;
    Ok(BatchResult { loss, grads, trace })
}

enum Optimizer {
    Sgd,
    Adam {
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        step: i32,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, params: &mut NetworkParams) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => {
                let zeros = params.trainable_slices_mut().iter().map(|s| vec![0.0; s.len()]).collect::<Vec<_>>();
                Optimizer::Adam {
                    m: zeros.clone(),
                    v: zeros,
                    step: 0,
                }
            }
        }
    }

    fn apply(&mut self, params: &mut NetworkParams, grads: &Gradients, cfg: &TrainConfig) {
        let lr = cfg.learning_rate;
        let scale = cfg.loss_scale;
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.trainable_slices_mut().into_iter().zip(grads.slices()) {
                    for (p, g) in p.iter_mut().zip(g) {
                        *p -= lr * scale * g;
                    }
                }
            }
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(*step);
                let c2 = 1.0 - b2.powi(*step);
                for (((p, g), m), v) in params
                    .trainable_slices_mut()
                    .into_iter()
                    .zip(grads.slices())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = g * scale;
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_epsilon);
                    }
                }
            }
        }
    }
}

/// Outcome of [`train`].
pub struct TrainOutcome {
    pub final_params: NetworkParams,
    /// Parameters with the lowest held-out mean sum MSE.
    pub best_params: NetworkParams,
    pub best_iteration: usize,
    pub best_holdout_mean: f64,
    pub log: TrainLog,
}

struct Batches {
    source: DataSource,
    fixed: Vec<ChannelInstance>,
    cursor: usize,
}

impl Batches {
    fn new(source: &DataSource) -> Result<Self> {
        let fixed = match source {
            DataSource::OnTheFly { .. } => Vec::new(),
            DataSource::FixedDataset(path) => channel::read_dataset(path)?,
            DataSource::InMemory(data) => data.clone(),
        };
        if !matches!(source, DataSource::OnTheFly { .. }) && fixed.is_empty() {
            return Err(Error::InvalidConfig("training dataset is empty".into()));
        }
        Ok(Self {
            source: source.clone(),
            fixed,
            cursor: 0,
        })
    }

    fn next(&mut self, iteration: usize, size: usize, config: &SystemConfig) -> Result<Vec<ChannelInstance>> {
        match &self.source {
            DataSource::OnTheFly { seed } => {
                let mut cfg = config.clone();
                cfg.rng_seed = *seed;
                channel::generate_range(&cfg, (iteration * size) as u64, size)
            }
            _ => {
                let n = self.fixed.len();
                let batch = (0..size).map(|i| self.fixed[(self.cursor + i) % n].clone()).collect();
                self.cursor = (self.cursor + size) % n;
                Ok(batch)
            }
        }
    }
}

/// Held-out set used for model selection.
pub fn holdout_set(config: &SystemConfig, train: &TrainConfig) -> Result<Vec<ChannelInstance>> {
    let mut cfg = config.clone();
    cfg.rng_seed = train.holdout_seed;
    channel::generate_dataset(&cfg, train.holdout_size)
}

/// Mean sum MSE of the network's infer-mode allocations over `data`.
pub fn mean_sum_mse(params: &NetworkParams, data: &[ChannelInstance], config: &SystemConfig) -> Result<f64> {
    let output = params.infer(neuralnet::input_batch(data).view())?;
    check_output_feasibility(&output, config)?;
    let values = data
        .par_iter()
        .enumerate()
        .map(|(i, inst)| msecore::sum_mse(inst, &sample_allocation(&output, i, config), config))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Train a freshly initialized network.
pub fn train(arch: &NetworkArch, train_cfg: &TrainConfig, config: &SystemConfig) -> Result<TrainOutcome> {
    train_cfg.validate()?;
    config.validate()?;
    let params = neuralnet::init_params(arch, config, train_cfg.input_transform, &mut rng::seeded(train_cfg.init_seed))?;
    train_from(params, train_cfg, config)
}

/// Continue training from existing parameters.
pub fn train_from(mut params: NetworkParams, train_cfg: &TrainConfig, config: &SystemConfig) -> Result<TrainOutcome> {
    train_cfg.validate()?;
    config.validate()?;
    params.arch.check_scenario(config)?;
    let holdout = holdout_set(config, train_cfg)?;
    let mut batches = Batches::new(&train_cfg.data_source)?;
    let mut optimizer = Optimizer::new(train_cfg.optimizer, &mut params);
    let mut log = TrainLog {
        rows: Vec::with_capacity(train_cfg.iterations),
        loss_scale: train_cfg.loss_scale,
    };
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let start = Instant::now();

    for iteration in 0..train_cfg.iterations {
        let batch = batches.next(iteration, train_cfg.batch_size, config)?;
        let result = match loss_and_grad(&params, &batch, config) {
            Ok(r) if r.loss.is_finite() && r.grads.max_abs().is_finite() => r,
            Ok(r) => {
                return Err(Error::Diverged {
                    iteration,
                    loss: r.loss,
                })
            }
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    iteration,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        params.update_running_stats(&result.trace)?;
        optimizer.apply(&mut params, &result.grads, train_cfg);

        let last = iteration + 1 == train_cfg.iterations;
        let holdout_mean = if (iteration + 1) % train_cfg.eval_every == 0 || last {
            let h = mean_sum_mse(&params, &holdout, config)?;
            if !h.is_finite() {
                return Err(Error::Diverged { iteration, loss: h });
            }
            if best.as_ref().is_none_or(|(b, _, _)| h < *b) {
                if let Some(path) = &train_cfg.checkpoint_path {
                    neuralnet::save_params(&params, path)?;
                }
                best = Some((h, iteration, params.clone()));
            }
            Some(h)
        } else {
            None
        };
        log.rows.push(TrainLogRow {
            iteration,
            loss: result.loss,
            holdout_mean,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }
    let (best_holdout_mean, best_iteration, best_params) = best.expect("last iteration is always evaluated");
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_iteration,
        best_holdout_mean,
        log,
    })
}

/// Distribution summary of per-instance sum MSE values.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sorted values with empirical quantiles i/n, i = 1..n.
    pub cdf: Vec<(f64, f64)>,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("cannot summarize an empty set".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let cdf = sorted
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, (i + 1) as f64 / n as f64))
            .collect();
        Ok(Self {
            count: n,
            mean: values.iter().sum::<f64>() / n as f64,
            median,
            cdf,
        })
    }
}

/// Per-instance reports for one method plus their summary.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub method: String,
    pub reports: Vec<MseReport>,
    pub summary: Summary,
    pub total_seconds: f64,
}

impl Evaluation {
    pub fn values(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.sum_mse).collect()
    }

    fn from_reports(method: &str, reports: Vec<MseReport>, total_seconds: f64) -> Result<Self> {
        let values = reports.iter().map(|r| r.sum_mse).collect::<Vec<_>>();
        Ok(Self {
            method: method.to_string(),
            summary: Summary::from_values(&values)?,
            reports,
            total_seconds,
        })
    }
}

fn check_dataset(dataset: &[ChannelInstance], config: &SystemConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Dimension("dataset is empty".into()));
    }
    if let Some(i) = dataset
        .iter()
        .position(|c| c.lambda.dim() != (config.num_users, config.num_raus))
    {
        return Err(Error::Dimension(format!(
            "instance {i} has shape {:?}, scenario needs {}x{}",
            dataset[i].lambda.dim(),
            config.num_users,
            config.num_raus
        )));
    }
    Ok(())
}

/// Evaluate the trained network on every instance (one batched infer-mode
/// forward pass).
pub fn evaluate(params: &NetworkParams, dataset: &[ChannelInstance], config: &SystemConfig) -> Result<Evaluation> {
    check_dataset(dataset, config)?;
    params.arch.check_scenario(config)?;
    let start = Instant::now();
    let output = params.infer(neuralnet::input_batch(dataset).view())?;
    let inference_seconds = start.elapsed().as_secs_f64();
    check_output_feasibility(&output, config)?;
    let per_instance = inference_seconds / dataset.len() as f64;
    let reports = dataset
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            Ok(msecore::per_link_mse(inst, &sample_allocation(&output, i, config), config)?
                .with_method("dnn", per_instance))
        })
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_reports("dnn", reports, inference_seconds)
}

/// Evaluate any per-instance allocation rule. The time recorded per instance
/// covers the rule only, not the MSE evaluation.
pub fn evaluate_method<F>(method: &str, dataset: &[ChannelInstance], config: &SystemConfig, mut allocate: F) -> Result<Evaluation>
where
    F: FnMut(usize, &ChannelInstance) -> Result<PowerAllocation>,
{
    check_dataset(dataset, config)?;
    let mut total = 0.0;
    let mut reports = Vec::with_capacity(dataset.len());
    for (i, inst) in dataset.iter().enumerate() {
        let start = Instant::now();
        let alloc = allocate(i, inst)?;
        let secs = start.elapsed().as_secs_f64();
        total += secs;
        reports.push(msecore::per_link_mse(inst, &alloc, config)?.with_method(method, secs));
    }
    Evaluation::from_reports(method, reports, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators;
    use crate::neuralnet::BatchStats;

    fn small_cfg() -> SystemConfig {
        let mut c = SystemConfig::with_dims(4, 2, 2, 2);
        c.rng_seed = 5;
        c
    }

    fn small_net(cfg: &SystemConfig) -> NetworkParams {
        let arch = NetworkArch::for_scenario(cfg, &[6, 5]).unwrap();
        neuralnet::init_params(&arch, cfg, InputTransform::Log10, &mut rng::seeded(9)).unwrap()
    }

    #[test]
    fn identical_instances_give_single_instance_loss() {
        let cfg = small_cfg();
        let net = small_net(&cfg);
        let inst = channel::generate_dataset(&cfg, 1).unwrap().remove(0);
        let batch = vec![inst.clone(); 4];
        let r = loss_and_grad(&net, &batch, &cfg).unwrap();
        let alloc = sample_allocation(&r.trace.output, 0, &cfg);
        let single = msecore::sum_mse(&inst, &alloc, &cfg).unwrap();
        assert!((r.loss - single).abs() <= 1e-14 * single);
        assert!(r.loss >= 0.0);
    }

    #[test]
    fn batch_loss_is_mean_of_frozen_stat_singles() {
        let cfg = small_cfg();
        let net = small_net(&cfg);
        let batch = channel::generate_dataset(&cfg, 5).unwrap();
        let r = loss_and_grad(&net, &batch, &cfg).unwrap();
        let stats: Vec<BatchStats> = r.trace.hidden.iter().map(|t| t.stats.clone()).collect();
        let mut total = 0.0;
        for inst in &batch {
            let x = neuralnet::input_batch(std::slice::from_ref(inst));
            let t = net.forward_with_stats(x.view(), &stats).unwrap();
            total += msecore::sum_mse(inst, &sample_allocation(&t.output, 0, &cfg), &cfg).unwrap();
        }
        let mean = total / batch.len() as f64;
        assert!((r.loss - mean).abs() <= 1e-12 * mean, "{} vs {mean}", r.loss);
    }

    #[test]
    fn single_instance_batch_rejected() {
        let cfg = small_cfg();
        let net = small_net(&cfg);
        let batch = channel::generate_dataset(&cfg, 1).unwrap();
        assert!(loss_and_grad(&net, &batch, &cfg).is_err());
        let tc = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let cfg = small_cfg();
        let data = channel::generate_dataset(&cfg, 8).unwrap();
        let tc = TrainConfig {
            batch_size: 8,
            iterations: 5,
            learning_rate: 0.0,
            data_source: DataSource::InMemory(data),
            eval_every: 2,
            holdout_size: 10,
            input_transform: InputTransform::Log10,
            ..TrainConfig::default()
        };
        let arch = NetworkArch::for_scenario(&cfg, &[6, 5]).unwrap();
        let out = train(&arch, &tc, &cfg).unwrap();
        let init = neuralnet::init_params(&arch, &cfg, InputTransform::Log10, &mut rng::seeded(0)).unwrap();
        let mut a = out.final_params.clone();
        let mut b = init;
        let sa: Vec<Vec<f64>> = a.trainable_slices_mut().iter().map(|s| s.to_vec()).collect();
        let sb: Vec<Vec<f64>> = b.trainable_slices_mut().iter().map(|s| s.to_vec()).collect();
        assert_eq!(sa, sb);
        let first = out.log.rows[0].loss;
        assert!(out.log.rows.iter().all(|r| r.loss == first));
        assert_eq!(out.log.rows.len(), 5);
        assert!(out.log.rows[1].holdout_mean.is_some());
        assert!(out.log.rows[4].holdout_mean.is_some());
        assert!(out.log.rows[0].holdout_mean.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_cfg();
        let tc = TrainConfig {
            batch_size: 16,
            iterations: 6,
            eval_every: 3,
            holdout_size: 20,
            input_transform: InputTransform::Log10,
            ..TrainConfig::default()
        };
        let arch = NetworkArch::for_scenario(&cfg, &[6, 5]).unwrap();
        let a = train(&arch, &tc, &cfg).unwrap();
        let b = train(&arch, &tc, &cfg).unwrap();
        let strip = |log: &TrainLog| log.rows.iter().map(|r| (r.iteration, r.loss.to_bits(), r.holdout_mean.map(f64::to_bits))).collect::<Vec<_>>();
        assert_eq!(strip(&a.log), strip(&b.log));
        assert_eq!(a.best_params, b.best_params);
    }

    #[test]
    fn checkpoint_dir_must_exist() {
        let tc = TrainConfig {
            checkpoint_path: Some(PathBuf::from("/definitely/not/here/net.bin")),
            ..TrainConfig::default()
        };
        assert!(matches!(tc.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn log_csv_format() {
        let log = TrainLog {
            rows: vec![
                TrainLogRow {
                    iteration: 0,
                    loss: 1.5e-7,
                    holdout_mean: None,
                    elapsed_s: 0.25,
                },
                TrainLogRow {
                    iteration: 1,
                    loss: 1.25e-7,
                    holdout_mean: Some(1e-7),
                    elapsed_s: 0.5,
                },
            ],
            loss_scale: 1e8,
        };
        assert_eq!(
            log.to_csv(),
            "iteration,loss,holdout_mean,elapsed_s\n0,1.5e-7,,0.250000\n1,1.25e-7,1e-7,0.500000\n"
        );
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::from_values(&[3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.cdf, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
        let one = Summary::from_values(&[7.0]).unwrap();
        assert_eq!(one.cdf, vec![(7.0, 1.0)]);
        assert_eq!(one.median, 7.0);
        assert!(Summary::from_values(&[]).is_err());
    }

    #[test]
    fn appa_evaluation_uses_the_objective() {
        let cfg = small_cfg();
        let data = channel::generate_dataset(&cfg, 3).unwrap();
        let eval = evaluate_method("appa", &data, &cfg, |_, _| Ok(allocators::appa(&cfg))).unwrap();
        for (r, inst) in eval.reports.iter().zip(&data) {
            assert_eq!(r.sum_mse, msecore::sum_mse(inst, &allocators::appa(&cfg), &cfg).unwrap());
        }
        assert!(evaluate_method("appa", &[], &cfg, |_, _| Ok(allocators::appa(&cfg))).is_err());
    }

    #[test]
    fn network_evaluation_is_feasible() {
        let cfg = small_cfg();
        let net = small_net(&cfg);
        let data = channel::generate_dataset(&cfg, 4).unwrap();
        let eval = evaluate(&net, &data, &cfg).unwrap();
        assert_eq!(eval.reports.len(), 4);
        assert_eq!(eval.summary.count, 4);
    }
}
