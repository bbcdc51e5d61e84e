//! Closed-form MMSE channel-estimation error and the sum-MSE objective.
//!
//! User k transmits the pilot `φ_k = Σ_b √p_k^b s_b` over τ orthonormal basis
//! vectors. With `ρ_kj = φ_k^H φ_j = Σ_b √(p_k^b p_j^b)` and `P_k = Σ_b p_k^b`,
//! the MMSE estimate of the block of `g_k` seen by RAU m has error
//!
//! ```text
//! π_km = N λ_km (Σ_{j≠k} ρ_kj² λ_jm + σ² P_k) / (Σ_j ρ_kj² λ_jm + σ² P_k)
//! ```
//!
//! and the objective is `Σ_k Σ_m π_km`. The Monte-Carlo oracle in this module
//! simulates the received pilot signal and the estimator directly and never
//! touches the formula above.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{complex_gaussian, ChannelInstance};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Relative tolerance for the per-user power constraint Σ_b p_k^b = p_k^tot.
pub const POWER_SUM_RTOL: f64 = 1e-9;

/// K×τ pilot power allocation; entry (k, b) is the power user k puts on pilot b.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Array2<f64>,
}

impl PowerAllocation {
    /// Accepts any finite nonnegative matrix. The objective and its gradient
    /// are defined off the power constraint too, which finite differences need.
    pub fn from_matrix(p: Array2<f64>) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("allocation entry {v}")));
        }
        if let Some(((k, b), v)) = p.indexed_iter().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidAllocation(format!("p[{k}][{b}] = {v} is negative")));
        }
        Ok(Self { p })
    }

    /// Like [`from_matrix`](Self::from_matrix), and additionally requires row k
    /// to sum to `p_k^tot` of `config`.
    pub fn new(p: Array2<f64>, config: &SystemConfig) -> Result<Self> {
        let alloc = Self::from_matrix(p)?;
        alloc.check_feasible(config)?;
        Ok(alloc)
    }

    /// Every user splits its power evenly over the τ pilots.
    pub fn uniform(config: &SystemConfig) -> Self {
        let tau = config.num_pilots as f64;
        Self {
            p: Array2::from_shape_fn((config.num_users, config.num_pilots), |(k, _)| config.p_tot(k) / tau),
        }
    }

    pub fn check_feasible(&self, config: &SystemConfig) -> Result<()> {
        let (k, tau) = self.p.dim();
        if k != config.num_users || tau != config.num_pilots {
            return Err(Error::Dimension(format!(
                "allocation is {k}x{tau}, scenario needs {}x{}",
                config.num_users, config.num_pilots
            )));
        }
        for (user, row) in self.p.outer_iter().enumerate() {
            let total = config.p_tot(user);
            let sum = row.sum();
            if ((sum - total) / total).abs() > POWER_SUM_RTOL {
                return Err(Error::InvalidAllocation(format!(
                    "row {user} sums to {sum}, expected {total}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.p.nrows()
    }

    pub fn num_pilots(&self) -> usize {
        self.p.ncols()
    }

    /// Σ_b p_k^b for every user.
    pub fn row_totals(&self) -> Array1<f64> {
        self.p.sum_axis(Axis(1))
    }
}

/// Per-link MSE values of one instance under one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    /// K×M matrix of π_km.
    pub pi: Array2<f64>,
    pub sum_mse: f64,
    pub method_tag: String,
    pub elapsed_seconds: f64,
    /// Standard error of each entry when `pi` is a Monte-Carlo estimate.
    pub std_error: Option<Array2<f64>>,
}

impl MseReport {
    fn closed_form(pi: Array2<f64>) -> Self {
        let sum_mse = pi.sum();
        Self {
            pi,
            sum_mse,
            method_tag: "closed_form".into(),
            elapsed_seconds: 0.0,
            std_error: None,
        }
    }

    pub fn with_method(mut self, tag: impl Into<String>, elapsed_seconds: f64) -> Self {
        self.method_tag = tag.into();
        self.elapsed_seconds = elapsed_seconds;
        self
    }
}

/// ρ = Σ_b √(p_k^b p_j^b), the inner product of two users' pilot signals.
pub fn cross_correlation(p_k: ArrayView1<f64>, p_j: ArrayView1<f64>) -> Result<f64> {
    if p_k.len() != p_j.len() {
        return Err(Error::Dimension(format!(
            "pilot rows of length {} and {}",
            p_k.len(),
            p_j.len()
        )));
    }
    let mut rho = 0.0;
    for (a, b) in p_k.iter().zip(p_j.iter()) {
        if *a < 0.0 || *b < 0.0 {
            return Err(Error::InvalidAllocation(format!("negative pilot power {}", a.min(*b))));
        }
        rho += (a * b).sqrt();
    }
    Ok(rho)
}

/// All pairwise ρ_kj. The diagonal holds P_k exactly.
pub fn correlation_matrix(alloc: &PowerAllocation) -> Array2<f64> {
    let k = alloc.num_users();
    let totals = alloc.row_totals();
    let mut rho = Array2::zeros((k, k));
    for i in 0..k {
        rho[[i, i]] = totals[i];
        for j in (i + 1)..k {
            let r = alloc
                .p
                .row(i)
                .iter()
                .zip(alloc.p.row(j).iter())
                .map(|(a, b)| (a * b).sqrt())
                .sum::<f64>();
            rho[[i, j]] = r;
            rho[[j, i]] = r;
        }
    }
    rho
}

fn check_inputs(lambda: &ChannelInstance, alloc: &PowerAllocation, config: &SystemConfig) -> Result<()> {
    config.validate_basic()?;
    let (k, m) = lambda.lambda.dim();
    if k != config.num_users || m != config.num_raus {
        return Err(Error::Dimension(format!(
            "fading matrix is {k}x{m}, scenario needs {}x{}",
            config.num_users, config.num_raus
        )));
    }
    if alloc.p.dim() != (config.num_users, config.num_pilots) {
        return Err(Error::Dimension(format!(
            "allocation is {:?}, scenario needs {}x{}",
            alloc.p.dim(),
            config.num_users,
            config.num_pilots
        )));
    }
    if let Some(v) = lambda.lambda.iter().chain(alloc.p.iter()).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input value {v}")));
    }
    if let Some(v) = alloc.p.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidAllocation(format!("negative pilot power {v}")));
    }
    Ok(())
}

/// Interference-plus-noise `A_km` and total `D_km = A_km + P_k² λ_km` for every link.
struct LinkTerms {
    rho: Array2<f64>,
    totals: Array1<f64>,
    interference: Array2<f64>,
    denom: Array2<f64>,
}

fn link_terms(lambda: &Array2<f64>, alloc: &PowerAllocation, noise: f64) -> LinkTerms {
    let rho = correlation_matrix(alloc);
    let totals = alloc.row_totals();
    let (k_users, m_raus) = lambda.dim();
    let mut interference = Array2::zeros((k_users, m_raus));
    let mut denom = Array2::zeros((k_users, m_raus));
    for k in 0..k_users {
        for m in 0..m_raus {
            let mut a = 0.0;
            for j in 0..k_users {
                if j != k {
                    let r = rho[[k, j]];
                    a += r * r * lambda[[j, m]];
                }
            }
            a += noise * totals[k];
            interference[[k, m]] = a;
            denom[[k, m]] = a + totals[k] * totals[k] * lambda[[k, m]];
        }
    }
    LinkTerms {
        rho,
        totals,
        interference,
        denom,
    }
}

/// π_km for every user and RAU.
pub fn per_link_mse(lambda: &ChannelInstance, alloc: &PowerAllocation, config: &SystemConfig) -> Result<MseReport> {
    check_inputs(lambda, alloc, config)?;
    let n = config.antennas_per_rau as f64;
    let t = link_terms(&lambda.lambda, alloc, config.noise_power);
    let mut pi = Array2::zeros(lambda.lambda.raw_dim());
    ndarray::Zip::from(&mut pi)
        .and(&lambda.lambda)
        .and(&t.interference)
        .and(&t.denom)
        .for_each(|pi, l, a, d| *pi = n * l * a / d);
    Ok(MseReport::closed_form(pi))
}

/// Σ_k Σ_m π_km.
pub fn sum_mse(lambda: &ChannelInstance, alloc: &PowerAllocation, config: &SystemConfig) -> Result<f64> {
    Ok(per_link_mse(lambda, alloc, config)?.sum_mse)
}

/// Sum of π_km over the members of one pilot group when every user puts its
/// whole power on a single pilot. Then ρ_kj² = p_k p_j inside a group and 0
/// across groups, and π_km reduces to
/// `N λ_km (I_km + σ²) / (I_km + p_k λ_km + σ²)` with
/// `I_km = Σ_{j in group, j≠k} p_j λ_jm`.
pub fn group_mse(lambda: &Array2<f64>, members: &[usize], powers: &[f64], noise: f64, antennas: f64) -> f64 {
    let m_raus = lambda.ncols();
    let mut total = 0.0;
    for &k in members {
        for m in 0..m_raus {
            let mut interference = 0.0;
            for &j in members {
                if j != k {
                    interference += powers[j] * lambda[[j, m]];
                }
            }
            let l = lambda[[k, m]];
            total += antennas * l * (interference + noise) / (interference + powers[k] * l + noise);
        }
    }
    total
}

/// Sum MSE of a one-hot allocation given as a 0-based pilot index per user.
pub fn assignment_sum_mse(lambda: &ChannelInstance, assignment: &[usize], config: &SystemConfig) -> Result<f64> {
    config.validate_basic()?;
    if assignment.len() != config.num_users || lambda.lambda.dim() != (config.num_users, config.num_raus) {
        return Err(Error::Dimension(format!(
            "assignment of length {} / fading {:?} for K={}, M={}",
            assignment.len(),
            lambda.lambda.dim(),
            config.num_users,
            config.num_raus
        )));
    }
    if let Some(b) = assignment.iter().find(|b| **b >= config.num_pilots) {
        return Err(Error::InvalidAllocation(format!("pilot index {b} out of range")));
    }
    let antennas = config.antennas_per_rau as f64;
    Ok((0..config.num_pilots)
        .map(|b| {
            let members = (0..config.num_users).filter(|k| assignment[*k] == b).collect::<Vec<_>>();
            group_mse(&lambda.lambda, &members, &config.pilot_power_total, config.noise_power, antennas)
        })
        .sum())
}

/// Partial derivatives of the objective through the correlation structure.
///
/// `dp_total[k]` is Σ_m ∂π_km/∂P_k and `coupling[k][j]` (j ≠ k) is
/// `H_kj ρ_kj` where `H_kj = Σ_m ∂π_km/∂(ρ_kj²) + Σ_m ∂π_jm/∂(ρ_jk²)`.
struct ObjectivePartials {
    dp_total: Array1<f64>,
    coupling: Array2<f64>,
}

fn objective_partials(lambda: &Array2<f64>, alloc: &PowerAllocation, config: &SystemConfig) -> ObjectivePartials {
    let n = config.antennas_per_rau as f64;
    let noise = config.noise_power;
    let t = link_terms(lambda, alloc, noise);
    let (k_users, m_raus) = lambda.dim();
    let mut dp_total = Array1::zeros(k_users);
    let mut g = Array2::<f64>::zeros((k_users, k_users));
    for k in 0..k_users {
        let p = t.totals[k];
        for m in 0..m_raus {
            let l = lambda[[k, m]];
            let d = t.denom[[k, m]];
            let d2 = d * d;
            dp_total[k] += n * l * l * p * (noise * p - 2.0 * t.interference[[k, m]]) / d2;
            let common = n * l * l * p * p / d2;
            for j in 0..k_users {
                if j != k {
                    g[[k, j]] += common * lambda[[j, m]];
                }
            }
        }
    }
    let mut coupling = Array2::zeros((k_users, k_users));
    for k in 0..k_users {
        for j in 0..k_users {
            if j != k {
                coupling[[k, j]] = (g[[k, j]] + g[[j, k]]) * t.rho[[k, j]];
            }
        }
    }
    ObjectivePartials { dp_total, coupling }
}

/// ∂(sum MSE)/∂p_k^b. Undefined where any p_k^b is zero because ρ involves
/// `√p_k^b`; such points are rejected.
pub fn sum_mse_gradient(lambda: &ChannelInstance, alloc: &PowerAllocation, config: &SystemConfig) -> Result<Array2<f64>> {
    check_inputs(lambda, alloc, config)?;
    if let Some(((user, pilot), _)) = alloc.p.indexed_iter().find(|(_, v)| **v == 0.0) {
        return Err(Error::NonDifferentiable { user, pilot });
    }
    let parts = objective_partials(&lambda.lambda, alloc, config);
    let (k_users, tau) = alloc.p.dim();
    Ok(Array2::from_shape_fn((k_users, tau), |(i, b)| {
        let pib = alloc.p[[i, b]];
        let mut grad = parts.dp_total[i];
        for j in 0..k_users {
            if j != i {
                grad += parts.coupling[[i, j]] * (alloc.p[[j, b]] / pib).sqrt();
            }
        }
        grad
    }))
}

/// `p_k^b · ∂(sum MSE)/∂p_k^b`, which stays finite on the boundary of the
/// simplex because the `1/√p_k^b` factor is cancelled analytically.
pub fn sum_mse_scaled_gradient(
    lambda: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<Array2<f64>> {
    check_inputs(lambda, alloc, config)?;
    Ok(scaled_gradient_unchecked(&lambda.lambda, alloc, config))
}

fn scaled_gradient_unchecked(lambda: &Array2<f64>, alloc: &PowerAllocation, config: &SystemConfig) -> Array2<f64> {
    let parts = objective_partials(lambda, alloc, config);
    let (k_users, tau) = alloc.p.dim();
    Array2::from_shape_fn((k_users, tau), |(i, b)| {
        let pib = alloc.p[[i, b]];
        let mut acc = parts.dp_total[i] * pib;
        for j in 0..k_users {
            if j != i {
                acc += parts.coupling[[i, j]] * (pib * alloc.p[[j, b]]).sqrt();
            }
        }
        acc
    })
}

/// Gradient with respect to softmax logits when `p_k = P_k · softmax(t_k)`.
/// Uses `∂F/∂t_kb = q_kb − s_kb Σ_c q_kc` with `q = p ⊙ ∇F` and `s_k = p_k / P_k`.
pub fn sum_mse_logit_gradient(
    lambda: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<Array2<f64>> {
    let q = sum_mse_scaled_gradient(lambda, alloc, config)?;
    Ok(logit_gradient_from_scaled(&alloc.p, q))
}

pub(crate) fn logit_gradient_from_scaled(p: &Array2<f64>, mut q: Array2<f64>) -> Array2<f64> {
    for (mut qrow, prow) in q.outer_iter_mut().zip(p.outer_iter()) {
        let total = prow.sum();
        let qsum = qrow.sum();
        for (qv, pv) in qrow.iter_mut().zip(prow.iter()) {
            *qv -= pv / total * qsum;
        }
    }
    q
}

/// Realizations simulated per RNG stream in the Monte-Carlo oracle.
pub const MC_CHUNK: usize = 2048;

/// Default realization count of the Monte-Carlo oracle.
pub const MC_DEFAULT_REALIZATIONS: usize = 100_000;

/// Empirical per-link estimation error of the MMSE estimator, obtained by
/// simulating `Y = Σ_j g_j φ_j^H + N`, correlating with each pilot and
/// applying `ĝ_k = (Σ_b p_k^b) Λ_k Q_k^{-1} y_k`.
///
/// Realizations are grouped in chunks of [`MC_CHUNK`]; chunk c draws from
/// stream c of `seed`, and chunk sums are reduced in order, so the result does
/// not depend on the thread count.
pub fn mc_mse_oracle(
    lambda: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
    num_realizations: usize,
    seed: u64,
) -> Result<MseReport> {
    check_inputs(lambda, alloc, config)?;
    if num_realizations == 0 {
        return Err(Error::InvalidConfig("num_realizations must be at least 1".into()));
    }
    let start = std::time::Instant::now();
    let (k_users, m_raus) = lambda.lambda.dim();
    let n_ant = config.antennas_per_rau;
    let tau = config.num_pilots;
    let rows = m_raus * n_ant;
    let noise = config.noise_power;

    // Pilot signals, their pairwise inner products and the MMSE coefficients
    // of the diagonal Q_k.
    let phi = alloc.p.mapv(f64::sqrt);
    let gram = phi.dot(&phi.t());
    let weight = alloc.row_totals();
    let coeff = Array2::from_shape_fn((k_users, m_raus), |(k, m)| {
        let q: f64 = (0..k_users)
            .map(|j| gram[[k, j]] * gram[[k, j]] * lambda.lambda[[j, m]])
            .sum::<f64>()
            + noise * weight[k];
        weight[k] * lambda.lambda[[k, m]] / q
    });
    let amp = lambda.lambda.mapv(f64::sqrt);

    let chunks = num_realizations.div_ceil(MC_CHUNK);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(num_realizations - c * MC_CHUNK);
            let mut r = rng::stream(seed, c as u64);
            let mut sum = Array2::<f64>::zeros((k_users, m_raus));
            let mut sum_sq = Array2::<f64>::zeros((k_users, m_raus));
            let mut g = Array2::<Complex64>::zeros((rows, k_users));
            let mut nmat = Array2::<Complex64>::zeros((rows, tau));
            for _ in 0..count {
                for row in 0..rows {
                    let m = row / n_ant;
                    for k in 0..k_users {
                        g[[row, k]] = complex_gaussian(1.0, &mut r) * amp[[k, m]];
                    }
                    for b in 0..tau {
                        nmat[[row, b]] = complex_gaussian(noise, &mut r);
                    }
                }
                for k in 0..k_users {
                    for m in 0..m_raus {
                        let mut err = 0.0;
                        for row in m * n_ant..(m + 1) * n_ant {
                            // y_k = Y φ_k = Σ_j g_j (φ_j^H φ_k) + N φ_k
                            let mut y = Complex64::new(0.0, 0.0);
                            for j in 0..k_users {
                                y += g[[row, j]] * gram[[j, k]];
                            }
                            for b in 0..tau {
                                y += nmat[[row, b]] * phi[[k, b]];
                            }
                            let e = g[[row, k]] - y * coeff[[k, m]];
                            err += e.norm_sqr();
                        }
                        sum[[k, m]] += err;
                        sum_sq[[k, m]] += err * err;
                    }
                }
            }
            (sum, sum_sq)
        })
        .collect::<Vec<_>>();

    let mut sum = Array2::<f64>::zeros((k_users, m_raus));
    let mut sum_sq = Array2::<f64>::zeros((k_users, m_raus));
    for (s, sq) in &partials {
        sum += s;
        sum_sq += sq;
    }
    let count = num_realizations as f64;
    let mean = &sum / count;
    let std_error = Array2::from_shape_fn((k_users, m_raus), |(k, m)| {
        if num_realizations < 2 {
            return f64::NAN;
        }
        let var = (sum_sq[[k, m]] - count * mean[[k, m]] * mean[[k, m]]) / (count - 1.0);
        (var.max(0.0) / count).sqrt()
    });
    let sum_mse = mean.sum();
    Ok(MseReport {
        pi: mean,
        sum_mse,
        method_tag: "monte_carlo".into(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        std_error: Some(std_error),
    })
}
