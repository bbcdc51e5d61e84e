//! Fully connected pilot power allocation network.
//!
//! Input: the K·M large-scale fading coefficients, user-major. Hidden layers
//! compute `ReLU(BN(W_l o_{l-1} + b_l))`, with the first layer's bias fixed at
//! zero. The output layer produces logits `t = W_L o_{L-1} + b_L`, splits them
//! into K groups of τ and maps group k to `p_tot_k · softmax(t_k)`, so every
//! output satisfies the per-user power constraint by construction.
//!
//! Batches are stored one sample per row.

mod checkpoint;

pub use checkpoint::{load_params, load_params_expecting, save_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in the moving average.
pub const BN_MOMENTUM: f64 = 0.9;

/// Hidden layer widths used for the K=12, τ=4 scenario.
pub const DEFAULT_HIDDEN: [usize; 5] = [64, 128, 128, 128, 64];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    /// n_0 … n_L.
    pub layer_sizes: Vec<usize>,
}

impl NetworkArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidConfig(
                "need an input layer, at least one hidden layer and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        Ok(Self { layer_sizes })
    }

    /// `[K·M, hidden…, K·τ]`.
    pub fn for_scenario(config: &SystemConfig, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![config.num_users * config.num_raus];
        sizes.extend_from_slice(hidden);
        sizes.push(config.num_users * config.num_pilots);
        Self::new(sizes)
    }

    pub fn check_scenario(&self, config: &SystemConfig) -> Result<()> {
        let n0 = self.layer_sizes[0];
        let nl = *self.layer_sizes.last().expect("nonempty");
        if n0 != config.num_users * config.num_raus || nl != config.num_users * config.num_pilots {
            return Err(Error::Dimension(format!(
                "architecture {:?} does not fit K={}, M={}, tau={} (need n_0 = {}, n_L = {})",
                self.layer_sizes,
                config.num_users,
                config.num_raus,
                config.num_pilots,
                config.num_users * config.num_raus,
                config.num_users * config.num_pilots
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Multiply-accumulates of one forward pass for one sample: Σ_l n_{l-1} n_l.
    pub fn forward_macs(&self) -> u64 {
        self.layer_sizes.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }
}

/// Transform applied to λ before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputTransform {
    #[default]
    Raw,
    Log10,
}

impl InputTransform {
    pub fn code(self) -> u32 {
        match self {
            InputTransform::Raw => 0,
            InputTransform::Log10 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(InputTransform::Raw),
            1 => Some(InputTransform::Log10),
            _ => None,
        }
    }
}

impl std::fmt::Display for InputTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputTransform::Raw => "raw",
            InputTransform::Log10 => "log10",
        })
    }
}

impl std::str::FromStr for InputTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(InputTransform::Raw),
            "log10" => Ok(InputTransform::Log10),
            _ => Err(Error::InvalidConfig(format!("unknown input transform {s:?} (raw|log10)"))),
        }
    }
}

/// Scenario constants the output layer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputScaling {
    pub num_users: usize,
    pub num_raus: usize,
    pub num_pilots: usize,
    pub pilot_power_total: Vec<f64>,
}

impl OutputScaling {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self {
            num_users: config.num_users,
            num_raus: config.num_raus,
            num_pilots: config.num_pilots,
            pilot_power_total: config.pilot_power_total.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// n_l × n_{l-1}.
    pub weight: Array2<f64>,
    /// Always zero and never updated for the first hidden layer.
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: NetworkArch,
    pub scaling: OutputScaling,
    pub input_transform: InputTransform,
    pub hidden: Vec<HiddenLayer>,
    pub output: OutputLayer,
}

/// He-normal weights, zero biases, γ = 1, β = 0, running statistics (0, 1).
pub fn init_params(arch: &NetworkArch, config: &SystemConfig, transform: InputTransform, rng: &mut Rng) -> Result<NetworkParams> {
    arch.check_scenario(config)?;
    let mut gaussian = |rows: usize, cols: usize| {
        let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("positive std");
        Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
    };
    let sizes = &arch.layer_sizes;
    let hidden = (1..sizes.len() - 1)
        .map(|l| {
            let n = sizes[l];
            HiddenLayer {
                weight: gaussian(n, sizes[l - 1]),
                bias: Array1::zeros(n),
                gamma: Array1::ones(n),
                beta: Array1::zeros(n),
                running_mean: Array1::zeros(n),
                running_var: Array1::ones(n),
            }
        })
        .collect();
    let last = sizes.len() - 1;
    let output = OutputLayer {
        weight: gaussian(sizes[last], sizes[last - 1]),
        bias: Array1::zeros(sizes[last]),
    };
    Ok(NetworkParams {
        arch: arch.clone(),
        scaling: OutputScaling::from_config(config),
        input_transform: transform,
        hidden,
        output,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; the trace can be back-propagated.
    Train,
    /// Running statistics.
    Infer,
}

/// Normalization statistics of one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased (1/s) variance.
    pub var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Layer input o_{l-1}.
    pub input: Array2<f64>,
    /// W_l o_{l-1} + b_l.
    pub pre_bn: Array2<f64>,
    /// Normalized pre-activations before γ, β.
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub stats: BatchStats,
    /// o_l = ReLU(γ x̂ + β).
    pub output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub hidden: Vec<LayerTrace>,
    /// Input of the output layer, o_{L-1}.
    pub last_hidden: Array2<f64>,
    pub logits: Array2<f64>,
    /// s × K·τ allocations, user-major.
    pub output: Array2<f64>,
    /// Multiply-accumulates spent in the dense layers.
    pub mac_count: u64,
    /// Additions, multiplications, exponentials and comparisons outside the
    /// dense layers (normalization, ReLU, softmax, scaling).
    pub elementwise_ops: u64,
}

impl ForwardTrace {
    /// Allocation of sample `i` as a K×τ matrix.
    pub fn allocation(&self, i: usize, num_users: usize, num_pilots: usize) -> Array2<f64> {
        self.output
            .row(i)
            .to_owned()
            .into_shape_with_order((num_users, num_pilots))
            .expect("n_L = K·τ")
    }
}

enum Normalization<'a> {
    Batch,
    Running,
    Fixed(&'a [BatchStats]),
}

fn dense(input: &Array2<f64>, weight: &Array2<f64>, macs: &mut u64) -> Array2<f64> {
    *macs += (input.nrows() * input.ncols() * weight.nrows()) as u64;
    input.dot(&weight.t())
}

impl NetworkParams {
    pub fn num_users(&self) -> usize {
        self.scaling.num_users
    }

    pub fn num_pilots(&self) -> usize {
        self.scaling.num_pilots
    }

    /// Forward pass. Pure: running statistics are updated separately with
    /// [`update_running_stats`](Self::update_running_stats).
    pub fn forward(&self, batch: ArrayView2<f64>, mode: Mode) -> Result<ForwardTrace> {
        if mode == Mode::Train && batch.nrows() < 2 {
            return Err(Error::Mode(format!(
                "train mode needs at least 2 samples for batch statistics, got {}",
                batch.nrows()
            )));
        }
        let norm = match mode {
            Mode::Train => Normalization::Batch,
            Mode::Infer => Normalization::Running,
        };
        self.forward_impl(batch, mode, norm)
    }

    /// Forward pass normalizing every hidden layer with the given statistics.
    /// The trace is marked as infer mode.
    pub fn forward_with_stats(&self, batch: ArrayView2<f64>, stats: &[BatchStats]) -> Result<ForwardTrace> {
        if stats.len() != self.hidden.len() {
            return Err(Error::Dimension(format!(
                "{} stat sets for {} hidden layers",
                stats.len(),
                self.hidden.len()
            )));
        }
        self.forward_impl(batch, Mode::Infer, Normalization::Fixed(stats))
    }

    fn forward_impl(&self, batch: ArrayView2<f64>, mode: Mode, norm: Normalization<'_>) -> Result<ForwardTrace> {
        let n0 = self.arch.input_size();
        if batch.ncols() != n0 {
            return Err(Error::Dimension(format!(
                "input batch has {} columns, network expects n_0 = {n0}",
                batch.ncols()
            )));
        }
        if batch.nrows() == 0 {
            return Err(Error::Dimension("empty input batch".into()));
        }
        let s = batch.nrows() as f64;
        let mut macs = 0u64;
        let mut ew = 0u64;
        let mut x = match self.input_transform {
            InputTransform::Raw => batch.to_owned(),
            InputTransform::Log10 => batch.mapv(f64::log10),
        };
        let mut traces = Vec::with_capacity(self.hidden.len());
        for (l, layer) in self.hidden.iter().enumerate() {
            let mut z = dense(&x, &layer.weight, &mut macs);
            if l > 0 {
                z += &layer.bias;
                ew += z.len() as u64;
            }
            let stats = match &norm {
                Normalization::Batch => {
                    let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / s;
                    ew += 3 * z.len() as u64;
                    BatchStats { mean, var }
                }
                Normalization::Running => BatchStats {
                    mean: layer.running_mean.clone(),
                    var: layer.running_var.clone(),
                },
                Normalization::Fixed(all) => all[l].clone(),
            };
            let inv_std = stats.var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let normalized = (&z - &stats.mean) * &inv_std;
            let mut out = &normalized * &layer.gamma + &layer.beta;
            out.mapv_inplace(|v| v.max(0.0));
            ew += 5 * z.len() as u64;
            let next = out.clone();
            traces.push(LayerTrace {
                input: std::mem::replace(&mut x, next),
                pre_bn: z,
                normalized,
                inv_std,
                stats,
                output: out,
            });
        }
        let mut logits = dense(&x, &self.output.weight, &mut macs);
        logits += &self.output.bias;
        ew += logits.len() as u64;
        let output = self.grouped_softmax(&logits);
        ew += 5 * logits.len() as u64;
        Ok(ForwardTrace {
            mode,
            hidden: traces,
            last_hidden: x,
            logits,
            output,
            mac_count: macs,
            elementwise_ops: ew,
        })
    }

    /// `p_tot_k · softmax(t_k)` per user group, with max subtraction. Each
    /// exponential is floored at the smallest normal double so entries stay
    /// strictly positive when logits within a group differ by more than ~708.
    pub fn grouped_softmax(&self, logits: &Array2<f64>) -> Array2<f64> {
        let tau = self.num_pilots();
        let mut out = logits.clone();
        for mut row in out.outer_iter_mut() {
            for (k, mut group) in row.exact_chunks_mut(tau).into_iter().enumerate() {
                let max = group.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                group.mapv_inplace(|t| (t - max).exp().max(f64::MIN_POSITIVE));
                let scale = self.scaling.pilot_power_total[k] / group.sum();
                group.mapv_inplace(|e| e * scale);
            }
        }
        out
    }

    /// Moving-average update from a train-mode trace. Uses the unbiased
    /// batch variance.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.mode != Mode::Train {
            return Err(Error::Mode("running statistics need a train-mode trace".into()));
        }
        for (layer, t) in self.hidden.iter_mut().zip(&trace.hidden) {
            let s = t.pre_bn.nrows() as f64;
            let unbiased = &t.stats.var * (s / (s - 1.0));
            layer.running_mean = &layer.running_mean * BN_MOMENTUM + &t.stats.mean * (1.0 - BN_MOMENTUM);
            layer.running_var = &layer.running_var * BN_MOMENTUM + &unbiased * (1.0 - BN_MOMENTUM);
        }
        Ok(())
    }

    /// Allocations for a batch of fading matrices in infer mode.
    pub fn infer(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Infer)?.output)
    }

    /// Back-propagate `∂loss/∂p` (s × K·τ) through the scaled softmax.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &Array2<f64>) -> Result<Gradients> {
        if d_output.dim() != trace.output.dim() {
            return Err(Error::Dimension(format!(
                "output gradient {:?} vs output {:?}",
                d_output.dim(),
                trace.output.dim()
            )));
        }
        // ∂/∂t_b = p_b g_b − s_b Σ_c p_c g_c within each group, s = p / p_tot.
        let tau = self.num_pilots();
        let mut d_logits = &trace.output * d_output;
        for (mut drow, prow) in d_logits.outer_iter_mut().zip(trace.output.outer_iter()) {
            for (k, (mut dg, pg)) in drow
                .exact_chunks_mut(tau)
                .into_iter()
                .zip(prow.exact_chunks(tau))
                .enumerate()
            {
                let weighted = dg.sum();
                let total = self.scaling.pilot_power_total[k];
                for (d, p) in dg.iter_mut().zip(pg.iter()) {
                    *d -= p / total * weighted;
                }
            }
        }
        self.backward_from_logits(trace, &d_logits)
    }

    /// Back-propagate `∂loss/∂t` (s × K·τ) from the logits.
    pub fn backward_from_logits(&self, trace: &ForwardTrace, d_logits: &Array2<f64>) -> Result<Gradients> {
        if trace.mode != Mode::Train {
            return Err(Error::Mode("backward needs a train-mode trace".into()));
        }
        if d_logits.dim() != trace.logits.dim() {
            return Err(Error::Dimension(format!(
                "logit gradient {:?} vs logits {:?}",
                d_logits.dim(),
                trace.logits.dim()
            )));
        }
        let s = d_logits.nrows() as f64;
        let out_weight = d_logits.t().dot(&trace.last_hidden);
        let out_bias = d_logits.sum_axis(Axis(0));
        let mut d_x = d_logits.dot(&self.output.weight);

        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (l, (layer, t)) in self.hidden.iter().zip(&trace.hidden).enumerate().rev() {
            let mut d_y = d_x;
            ndarray::Zip::from(&mut d_y).and(&t.output).for_each(|d, o| {
                if *o <= 0.0 {
                    *d = 0.0;
                }
            });
            let gamma = (&d_y * &t.normalized).sum_axis(Axis(0));
            let beta = d_y.sum_axis(Axis(0));
            let d_norm = &d_y * &layer.gamma;
            let sum_d = d_norm.sum_axis(Axis(0));
            let sum_dx = (&d_norm * &t.normalized).sum_axis(Axis(0));
            let d_z = (&d_norm * s - &sum_d - &t.normalized * &sum_dx) * &(&t.inv_std / s);
            let weight = d_z.t().dot(&t.input);
            let bias = (l > 0).then(|| d_z.sum_axis(Axis(0)));
            d_x = d_z.dot(&layer.weight);
            hidden.push(HiddenGrad {
                weight,
                bias,
                gamma,
                beta,
            });
        }
        hidden.reverse();
        Ok(Gradients {
            hidden,
            output_weight: out_weight,
            output_bias: out_bias,
        })
    }

    /// Trainable tensors in canonical order: per hidden layer W, b (l ≥ 2), γ, β;
    /// then W_L, b_L. Matches [`Gradients::slices`].
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (l, layer) in self.hidden.iter_mut().enumerate() {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            if l > 0 {
                out.push(layer.bias.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.gamma.as_slice_mut().expect("standard layout"));
            out.push(layer.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_trainable(&self) -> usize {
        let mut total = self.output.weight.len() + self.output.bias.len();
        for (l, layer) in self.hidden.iter().enumerate() {
            total += layer.weight.len() + layer.gamma.len() + layer.beta.len();
            if l > 0 {
                total += layer.bias.len();
            }
        }
        total
    }

    /// Mutable access to trainable parameter `index` in canonical flat order.
    pub fn trainable_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for slice in self.trainable_slices_mut() {
            if index < slice.len() {
                return Some(&mut slice[index]);
            }
            index -= slice.len();
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct HiddenGrad {
    pub weight: Array2<f64>,
    /// `None` for the first hidden layer, whose bias is frozen.
    pub bias: Option<Array1<f64>>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub hidden: Vec<HiddenGrad>,
    pub output_weight: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.hidden {
            out.push(g.weight.as_slice().expect("standard layout"));
            if let Some(b) = &g.bias {
                out.push(b.as_slice().expect("standard layout"));
            }
            out.push(g.gamma.as_slice().expect("standard layout"));
            out.push(g.beta.as_slice().expect("standard layout"));
        }
        out.push(self.output_weight.as_slice().expect("standard layout"));
        out.push(self.output_bias.as_slice().expect("standard layout"));
        out
    }

    pub fn get(&self, mut index: usize) -> Option<f64> {
        for slice in self.slices() {
            if index < slice.len() {
                return Some(slice[index]);
            }
            index -= slice.len();
        }
        None
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.hidden {
            g.weight *= factor;
            if let Some(b) = &mut g.bias {
                *b *= factor;
            }
            g.gamma *= factor;
            g.beta *= factor;
        }
        self.output_weight *= factor;
        self.output_bias *= factor;
    }
}

/// Stack fading matrices into an s × K·M input batch (user-major per row).
pub fn input_batch<'a>(instances: impl IntoIterator<Item = &'a crate::channel::ChannelInstance>) -> Array2<f64> {
    let rows = instances.into_iter().map(|c| c.lambda.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
    let cols = rows.first().map_or(0, Vec::len);
    let flat = rows.into_iter().flatten().collect::<Vec<_>>();
    Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat).expect("rows share a length")
}
