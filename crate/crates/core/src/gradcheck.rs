//! Central finite-difference checks of the analytic gradients.
//!
//! The objective suite perturbs single entries p_k^b of random interior
//! allocations. The network suite perturbs single trainable parameters and
//! re-runs the train-mode forward pass on the same batch, so batch-norm
//! statistics move with the perturbation exactly as back-propagation assumes.
//! Coordinates whose perturbation flips a ReLU are redrawn: the loss is not
//! differentiable across the kink.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::allocators::allocation_from_logits;
use crate::channel::{self, ChannelInstance};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::msecore::{self, PowerAllocation};
use crate::neuralnet::{self, InputTransform, Mode, NetworkArch, NetworkParams};
use crate::rng;
use crate::trainer;

pub const DEFAULT_MSE_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_NETWORK_TOLERANCE: f64 = 1e-4;
/// Perturbation of p_k^b relative to p_k^tot.
pub const MSE_STEP_REL: f64 = 1e-6;
/// Absolute perturbation of a network parameter.
pub const NETWORK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedCoordinate {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub tolerance: f64,
    pub coordinates: Vec<CheckedCoordinate>,
    /// Coordinates redrawn because the perturbation crossed a ReLU kink.
    pub skipped_kinks: usize,
}

impl SuiteResult {
    pub fn max_rel_error(&self) -> f64 {
        self.coordinates.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.coordinates.is_empty() && self.max_rel_error() < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Interior allocation with logits drawn from N(0, 1).
pub fn random_interior_allocation(config: &SystemConfig, rng: &mut rng::Rng) -> PowerAllocation {
    let logits = Array2::from_shape_simple_fn((config.num_users, config.num_pilots), || {
        rng.sample::<f64, _>(StandardNormal)
    });
    allocation_from_logits(&logits, config)
}

/// Check `sum_mse_gradient` on `instances.len()` instances, `per_instance`
/// randomly drawn coordinates each.
pub fn check_mse_gradient(
    instances: &[ChannelInstance],
    config: &SystemConfig,
    per_instance: usize,
    tolerance: f64,
    seed: u64,
) -> Result<SuiteResult> {
    let mut r = rng::seeded(seed);
    let mut coordinates = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let alloc = random_interior_allocation(config, &mut r);
        let grad = msecore::sum_mse_gradient(inst, &alloc, config)?;
        for _ in 0..per_instance {
            let k = r.random_range(0..config.num_users);
            let b = r.random_range(0..config.num_pilots);
            let h = MSE_STEP_REL * config.p_tot(k);
            let eval = |delta: f64| -> Result<f64> {
                let mut p = alloc.p.clone();
                p[[k, b]] += delta;
                msecore::sum_mse(inst, &PowerAllocation::from_matrix(p)?, config)
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let analytic = grad[[k, b]];
            coordinates.push(CheckedCoordinate {
                label: format!("instance {i}, p[{k}][{b}]"),
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    Ok(SuiteResult {
        name: "sum_mse_gradient".into(),
        tolerance,
        coordinates,
        skipped_kinks: 0,
    })
}

fn relu_pattern(params: &NetworkParams, input: &Array2<f64>) -> Result<Vec<bool>> {
    let trace = params.forward(input.view(), Mode::Train)?;
    let mut pattern = Vec::new();
    for (t, layer) in trace.hidden.iter().zip(&params.hidden) {
        let pre = &t.normalized * &layer.gamma + &layer.beta;
        pattern.extend(pre.iter().map(|v| *v > 0.0));
    }
    Ok(pattern)
}

/// Check end-to-end network gradients of the batch-mean sum MSE over `batch`
/// at `coords` randomly drawn parameters. The hidden biases after the first
/// layer are excluded from sampling: batch normalization subtracts them out,
/// so their true gradient is identically zero and a relative error is not
/// meaningful. [`hidden_bias_gradient_bound`] covers them.
pub fn check_network_gradient(
    params: &NetworkParams,
    batch: &[ChannelInstance],
    config: &SystemConfig,
    coords: usize,
    tolerance: f64,
    seed: u64,
) -> Result<SuiteResult> {
    let base = trainer::loss_and_grad(params, batch, config)?;
    let input = neuralnet::input_batch(batch);
    let base_pattern = relu_pattern(params, &input)?;
    let eligible = eligible_indices(params);
    let mut r = rng::seeded(seed);
    let mut coordinates = Vec::new();
    let mut skipped = 0;
    let mut attempts = 0;
    while coordinates.len() < coords && attempts < 100 * coords {
        attempts += 1;
        let idx = eligible[r.random_range(0..eligible.len())];
        let mut plus = params.clone();
        *plus.trainable_mut(idx).expect("index in range") += NETWORK_STEP;
        let mut minus = params.clone();
        *minus.trainable_mut(idx).expect("index in range") -= NETWORK_STEP;
        if relu_pattern(&plus, &input)? != base_pattern || relu_pattern(&minus, &input)? != base_pattern {
            skipped += 1;
            continue;
        }
        let lp = trainer::loss_and_grad(&plus, batch, config)?.loss;
        let lm = trainer::loss_and_grad(&minus, batch, config)?.loss;
        let numeric = (lp - lm) / (2.0 * NETWORK_STEP);
        let analytic = base.grads.get(idx).expect("index in range");
        coordinates.push(CheckedCoordinate {
            label: parameter_label(params, idx),
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(SuiteResult {
        name: "network_gradient".into(),
        tolerance,
        coordinates,
        skipped_kinks: skipped,
    })
}

/// Largest |∂loss/∂b_l| over hidden layers l ≥ 2 relative to the largest
/// gradient entry overall. Zero in exact arithmetic.
pub fn hidden_bias_gradient_bound(params: &NetworkParams, batch: &[ChannelInstance], config: &SystemConfig) -> Result<f64> {
    let grads = trainer::loss_and_grad(params, batch, config)?.grads;
    let bias_max = grads
        .hidden
        .iter()
        .filter_map(|g| g.bias.as_ref())
        .flat_map(|b| b.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(bias_max / grads.max_abs())
}

fn eligible_indices(params: &NetworkParams) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (l, layer) in params.hidden.iter().enumerate() {
        let w = layer.weight.len();
        out.extend(offset..offset + w);
        offset += w;
        if l > 0 {
            offset += layer.bias.len();
        }
        let gb = layer.gamma.len() + layer.beta.len();
        out.extend(offset..offset + gb);
        offset += gb;
    }
    let tail = params.output.weight.len() + params.output.bias.len();
    out.extend(offset..offset + tail);
    out
}

fn parameter_label(params: &NetworkParams, mut idx: usize) -> String {
    for (l, layer) in params.hidden.iter().enumerate() {
        let mut parts = vec![("W", layer.weight.len())];
        if l > 0 {
            parts.push(("b", layer.bias.len()));
        }
        parts.push(("gamma", layer.gamma.len()));
        parts.push(("beta", layer.beta.len()));
        for (name, len) in parts {
            if idx < len {
                return format!("hidden{} {name}[{idx}]", l + 1);
            }
            idx -= len;
        }
    }
    if idx < params.output.weight.len() {
        return format!("output W[{idx}]");
    }
    format!("output b[{}]", idx - params.output.weight.len())
}

/// Settings of the standard verification run.
#[derive(Debug, Clone)]
pub struct GradcheckSettings {
    pub instances: usize,
    pub coords: usize,
    pub mse_tolerance: f64,
    pub network_tolerance: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub input_transform: InputTransform,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            instances: 5,
            coords: 50,
            mse_tolerance: DEFAULT_MSE_TOLERANCE,
            network_tolerance: DEFAULT_NETWORK_TOLERANCE,
            seed: 2024,
            hidden: neuralnet::DEFAULT_HIDDEN.to_vec(),
            input_transform: InputTransform::Raw,
        }
    }
}

/// Both suites on seeded instances of `config`. The network suite perturbs
/// `coords` parameters of a freshly initialized network and uses the
/// instances as one batch.
pub fn run_standard(config: &SystemConfig, settings: &GradcheckSettings) -> Result<Vec<SuiteResult>> {
    let mut cfg = config.clone();
    cfg.rng_seed = settings.seed;
    let instances = channel::generate_dataset(&cfg, settings.instances.max(2))?;
    let per_instance = settings.coords.div_ceil(settings.instances.max(1));
    let mse = check_mse_gradient(
        &instances[..settings.instances.max(1)],
        config,
        per_instance,
        settings.mse_tolerance,
        settings.seed,
    )?;
    let arch = NetworkArch::for_scenario(config, &settings.hidden)?;
    let params = neuralnet::init_params(&arch, config, settings.input_transform, &mut rng::seeded(settings.seed))?;
    let net = check_network_gradient(
        &params,
        &instances,
        config,
        settings.coords,
        settings.network_tolerance,
        settings.seed + 1,
    )?;
    Ok(vec![mse, net])
}
