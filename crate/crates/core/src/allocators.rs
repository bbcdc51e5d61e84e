//! Baseline allocation strategies and the per-instance continuous reference.
//!
//! APPA splits each user's power evenly. RPA and ESPA put each user's whole
//! power on one pilot; ESPA enumerates all τ^K assignments.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use crate::channel::ChannelInstance;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::msecore::{self, MseReport, PowerAllocation};
use crate::rng::Rng;

/// Default cap on the number of assignments ESPA may evaluate.
pub const DEFAULT_ESPA_BUDGET: u128 = 20_000_000;

/// Relative slack under which two objective values count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Largest K for which ESPA memoizes the MSE of every user subset.
const MAX_TABLE_USERS: usize = 20;

/// One pilot per user, stored 0-based. Displayed 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PilotAssignment {
    pub assignment: Vec<usize>,
}

impl PilotAssignment {
    pub fn new(assignment: Vec<usize>, num_pilots: usize) -> Result<Self> {
        if let Some(b) = assignment.iter().find(|b| **b >= num_pilots) {
            return Err(Error::InvalidAllocation(format!(
                "pilot index {b} out of range for tau = {num_pilots}"
            )));
        }
        Ok(Self { assignment })
    }

    /// One-hot rows scaled by each user's total power.
    pub fn to_allocation(&self, config: &SystemConfig) -> Result<PowerAllocation> {
        if self.assignment.len() != config.num_users {
            return Err(Error::Dimension(format!(
                "assignment for {} users, scenario has {}",
                self.assignment.len(),
                config.num_users
            )));
        }
        let p = Array2::from_shape_fn((config.num_users, config.num_pilots), |(k, b)| {
            if self.assignment[k] == b {
                config.p_tot(k)
            } else {
                0.0
            }
        });
        PowerAllocation::new(p, config)
    }
}

impl fmt::Display for PilotAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self.assignment.iter().map(|b| (b + 1).to_string()).collect::<Vec<_>>();
        write!(f, "({})", parts.join(","))
    }
}

/// Average pilot power allocation.
pub fn appa(config: &SystemConfig) -> PowerAllocation {
    PowerAllocation::uniform(config)
}

/// Random pilot assignment: each user's pilot uniform over τ, independently.
pub fn rpa(config: &SystemConfig, rng: &mut Rng) -> PilotAssignment {
    PilotAssignment {
        assignment: (0..config.num_users)
            .map(|_| rng.random_range(0..config.num_pilots))
            .collect(),
    }
}

/// Best value and its (earliest) assignment index within a range.
#[derive(Debug, Clone, Copy)]
struct Incumbent {
    value: f64,
    index: u128,
}

impl Incumbent {
    /// `other` comes later in lexicographic order; it wins only by more than the tie slack.
    fn merge(self, other: Incumbent) -> Incumbent {
        if other.value < self.value - TIE_RTOL * self.value.abs() {
            other
        } else {
            self
        }
    }
}

fn decode(mut index: u128, num_users: usize, num_pilots: usize) -> Vec<usize> {
    let mut digits = vec![0; num_users];
    for d in digits.iter_mut().rev() {
        *d = (index % num_pilots as u128) as usize;
        index /= num_pilots as u128;
    }
    digits
}

/// Exhaustive-search pilot assignment.
///
/// Assignments are enumerated as mixed-radix numbers with user 1 as the most
/// significant digit, so index order is lexicographic order. Among assignments
/// within [`TIE_RTOL`] of the best value the lexicographically smallest wins.
pub fn espa(lambda: &ChannelInstance, config: &SystemConfig, budget: u128) -> Result<(PilotAssignment, MseReport)> {
    config.validate_basic()?;
    let (k_users, tau) = (config.num_users, config.num_pilots);
    if lambda.lambda.dim() != (k_users, config.num_raus) {
        return Err(Error::Dimension(format!(
            "fading matrix {:?}, scenario needs {k_users}x{}",
            lambda.lambda.dim(),
            config.num_raus
        )));
    }
    let needed = (tau as u128).checked_pow(k_users as u32).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let start = Instant::now();
    let antennas = config.antennas_per_rau as f64;
    let powers = &config.pilot_power_total;
    let noise = config.noise_power;

    let table = (k_users <= MAX_TABLE_USERS && (1u128 << k_users) <= 8 * needed).then(|| {
        (0..1usize << k_users)
            .into_par_iter()
            .map(|mask| {
                let members = (0..k_users).filter(|k| mask >> k & 1 == 1).collect::<Vec<_>>();
                msecore::group_mse(&lambda.lambda, &members, powers, noise, antennas)
            })
            .collect::<Vec<f64>>()
    });

    let chunks = needed.min(256);
    let per_chunk = needed.div_ceil(chunks);
    let best = (0..chunks)
        .into_par_iter()
        .filter_map(|c| {
            let lo = c * per_chunk;
            let hi = ((c + 1) * per_chunk).min(needed);
            (lo < hi).then(|| search_range(lambda, config, table.as_deref(), lo, hi))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(Incumbent::merge)
        .expect("at least one assignment");

    let assignment = PilotAssignment {
        assignment: decode(best.index, k_users, tau),
    };
    let report = msecore::per_link_mse(lambda, &assignment.to_allocation(config)?, config)?
        .with_method("espa", start.elapsed().as_secs_f64());
    Ok((assignment, report))
}

fn search_range(lambda: &ChannelInstance, config: &SystemConfig, table: Option<&[f64]>, lo: u128, hi: u128) -> Incumbent {
    let (k_users, tau) = (config.num_users, config.num_pilots);
    let antennas = config.antennas_per_rau as f64;
    let mut digits = decode(lo, k_users, tau);
    let mut masks = vec![0usize; tau];
    for (k, b) in digits.iter().enumerate() {
        masks[*b] |= 1 << k;
    }
    let evaluate = |masks: &[usize]| -> f64 {
        match table {
            Some(t) => masks.iter().map(|m| t[*m]).sum(),
            None => masks
                .iter()
                .map(|mask| {
                    let members = (0..k_users).filter(|k| mask >> k & 1 == 1).collect::<Vec<_>>();
                    msecore::group_mse(
                        &lambda.lambda,
                        &members,
                        &config.pilot_power_total,
                        config.noise_power,
                        antennas,
                    )
                })
                .sum(),
        }
    };
    let mut best = Incumbent {
        value: evaluate(&masks),
        index: lo,
    };
    for index in lo + 1..hi {
        // increment the mixed-radix counter, least significant digit = last user
        let mut k = k_users - 1;
        loop {
            let old = digits[k];
            masks[old] &= !(1 << k);
            let new = if old + 1 == tau { 0 } else { old + 1 };
            digits[k] = new;
            masks[new] |= 1 << k;
            if new != 0 || k == 0 {
                break;
            }
            k -= 1;
        }
        best = best.merge(Incumbent {
            value: evaluate(&masks),
            index,
        });
    }
    best
}

/// Defaults for [`continuous_opt`].
pub const CONTOPT_DEFAULT_STEPS: usize = 500;
pub const CONTOPT_DEFAULT_STEP_SIZE: f64 = 0.1;

/// Allocation with logits `ln(p_k^b / P_k)`. Requires strictly positive entries.
pub fn allocation_logits(alloc: &PowerAllocation) -> Result<Array2<f64>> {
    if let Some(((user, pilot), _)) = alloc.p.indexed_iter().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonDifferentiable { user, pilot });
    }
    let totals = alloc.row_totals();
    Ok(Array2::from_shape_fn(alloc.p.dim(), |(k, b)| (alloc.p[[k, b]] / totals[k]).ln()))
}

/// `p_k = p_k^tot · softmax(logits_k)` for every user.
pub fn allocation_from_logits(logits: &Array2<f64>, config: &SystemConfig) -> PowerAllocation {
    let mut p = logits.clone();
    for (k, mut row) in p.outer_iter_mut().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|t| (t - max).exp());
        let sum = row.sum();
        let scale = config.p_tot(k) / sum;
        row.mapv_inplace(|e| e * scale);
    }
    PowerAllocation { p }
}

/// Per-instance reference optimizer for the continuous problem.
///
/// Runs first-order descent on the logits of `p_k = p_k^tot · softmax(u_k)`
/// using the analytic gradient chained through the softmax Jacobian. Every
/// step has Euclidean length `step_size` in logit space along the negative
/// gradient. Returns the iterate with the lowest objective seen, `init`
/// included; stops early at an exactly stationary point.
pub fn continuous_opt(
    lambda: &ChannelInstance,
    config: &SystemConfig,
    init: &PowerAllocation,
    steps: usize,
    step_size: f64,
) -> Result<PowerAllocation> {
    init.check_feasible(config)?;
    let mut logits = allocation_logits(init)?;
    let mut current = allocation_from_logits(&logits, config);
    let f0 = msecore::sum_mse(lambda, &current, config)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("initial objective {f0}")));
    }
    let mut best = (f0, init.clone());
    for step in 1..=steps {
        let q = msecore::sum_mse_scaled_gradient(lambda, &current, config)?;
        let grad = msecore::logit_gradient_from_scaled(&current.p, q);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        logits.scaled_add(-step_size / norm, &grad);
        current = allocation_from_logits(&logits, config);
        let f = msecore::sum_mse(lambda, &current, config)?;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("objective {f} at step {step}")));
        }
        if f < best.0 {
            best = (f, current.clone());
        }
    }
    Ok(best.1)
}

/// Uniform allocation with seeded logit jitter of standard deviation `jitter`.
/// The exactly uniform point is stationary by pilot symmetry, so descent
/// needs a perturbed start.
pub fn jittered_uniform(config: &SystemConfig, jitter: f64, rng: &mut Rng) -> PowerAllocation {
    let logits = Array2::from_shape_simple_fn((config.num_users, config.num_pilots), || {
        jitter * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    allocation_from_logits(&logits, config)
}

/// One-hot assignment softened to the interior: the assigned pilot's logit
/// exceeds the others by `margin`.
pub fn softened_assignment(assignment: &PilotAssignment, config: &SystemConfig, margin: f64) -> PowerAllocation {
    let logits = Array2::from_shape_fn((config.num_users, config.num_pilots), |(k, b)| {
        if assignment.assignment[k] == b {
            margin
        } else {
            0.0
        }
    });
    allocation_from_logits(&logits, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn appa_entries_and_rows() {
        let cfg = SystemConfig::paper_scenario();
        let a = appa(&cfg);
        assert!(a.p.iter().all(|v| *v == 1.5));
        for row in a.p.outer_iter() {
            assert_eq!(row.sum(), 6.0);
        }
        a.check_feasible(&cfg).unwrap();
    }

    #[test]
    fn rpa_deterministic_and_degenerate() {
        let cfg = SystemConfig::paper_scenario();
        assert_eq!(rpa(&cfg, &mut rng::seeded(4)), rpa(&cfg, &mut rng::seeded(4)));
        let one = SystemConfig::with_dims(5, 2, 2, 1);
        assert_eq!(rpa(&one, &mut rng::seeded(4)).assignment, vec![0; 5]);
    }

    #[test]
    fn assignment_display_and_range() {
        let a = PilotAssignment::new(vec![0, 2, 1], 3).unwrap();
        assert_eq!(a.to_string(), "(1,3,2)");
        assert!(PilotAssignment::new(vec![0, 3], 3).is_err());
    }

    #[test]
    fn espa_separates_two_users() {
        let cfg = SystemConfig::with_dims(2, 2, 2, 2);
        let lambda = ChannelInstance::new(array![[1e-6, 3e-8], [2e-7, 4e-6]]).unwrap();
        let (a, report) = espa(&lambda, &cfg, DEFAULT_ESPA_BUDGET).unwrap();
        assert_eq!(a.assignment, vec![0, 1]);
        assert_eq!(report.method_tag, "espa");
    }

    #[test]
    fn espa_tie_break_on_identical_users() {
        let cfg = SystemConfig::with_dims(3, 2, 2, 3);
        let lambda = ChannelInstance::new(array![[1e-6, 3e-8], [1e-6, 3e-8], [1e-6, 3e-8]]).unwrap();
        let (a, _) = espa(&lambda, &cfg, DEFAULT_ESPA_BUDGET).unwrap();
        assert_eq!(a.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn espa_budget() {
        let cfg = SystemConfig::paper_scenario();
        let lambda = ChannelInstance::new(Array2::from_elem((12, 4), 1e-7)).unwrap();
        let err = espa(&lambda, &cfg, 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { needed: 16_777_216, budget: 1000 }));
    }

    #[test]
    fn espa_without_table_agrees() {
        // tau = 1 has a single assignment and skips the subset table
        let cfg = SystemConfig::with_dims(3, 1, 2, 1);
        let lambda = ChannelInstance::new(array![[1e-6], [2e-7], [5e-8]]).unwrap();
        let (a, report) = espa(&lambda, &cfg, 10).unwrap();
        assert_eq!(a.assignment, vec![0, 0, 0]);
        let direct = msecore::assignment_sum_mse(&lambda, &a.assignment, &cfg).unwrap();
        assert!((report.sum_mse - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn contopt_zero_steps_is_identity() {
        let cfg = SystemConfig::with_dims(3, 2, 2, 2);
        let lambda = ChannelInstance::new(array![[1e-6, 3e-8], [2e-7, 4e-6], [5e-7, 5e-7]]).unwrap();
        let init = PowerAllocation::new(array![[1.0, 5.0], [2.0, 4.0], [3.0, 3.0]], &cfg).unwrap();
        let out = continuous_opt(&lambda, &cfg, &init, 0, 0.1).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn contopt_rejects_boundary_init() {
        let cfg = SystemConfig::with_dims(2, 1, 2, 2);
        let lambda = ChannelInstance::new(array![[1e-6], [2e-6]]).unwrap();
        let init = PowerAllocation::new(array![[6.0, 0.0], [3.0, 3.0]], &cfg).unwrap();
        assert!(continuous_opt(&lambda, &cfg, &init, 10, 0.1).is_err());
    }

    #[test]
    fn logits_round_trip() {
        let cfg = SystemConfig::with_dims(2, 1, 2, 3);
        let alloc = PowerAllocation::new(array![[1.0, 2.0, 3.0], [0.5, 0.5, 5.0]], &cfg).unwrap();
        let back = allocation_from_logits(&allocation_logits(&alloc).unwrap(), &cfg);
        for (a, b) in alloc.p.iter().zip(back.p.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
