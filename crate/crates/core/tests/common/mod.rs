//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use pilotnet::SystemConfig;

/// Direct loop transcription of the closed-form per-link MSE.
pub fn reference_pi(lambda: &Array2<f64>, p: &Array2<f64>, noise: f64, n: f64) -> Array2<f64> {
    let (k_users, m_raus) = lambda.dim();
    let tau = p.ncols();
    let rho = |k: usize, j: usize| (0..tau).map(|b| (p[[k, b]] * p[[j, b]]).sqrt()).sum::<f64>();
    let mut out = Array2::zeros((k_users, m_raus));
    for k in 0..k_users {
        let pk: f64 = (0..tau).map(|b| p[[k, b]]).sum();
        for m in 0..m_raus {
            let mut interference = 0.0;
            let mut total = 0.0;
            for j in 0..k_users {
                let term = rho(k, j).powi(2) * lambda[[j, m]];
                total += term;
                if j != k {
                    interference += term;
                }
            }
            out[[k, m]] = n * lambda[[k, m]] * (interference + noise * pk) / (total + noise * pk);
        }
    }
    out
}

pub fn reference_sum(lambda: &Array2<f64>, p: &Array2<f64>, cfg: &SystemConfig) -> f64 {
    reference_pi(lambda, p, cfg.noise_power, cfg.antennas_per_rau as f64).sum()
}

/// Sum MSE of a one-hot assignment straight from the closed form, with
/// ρ_kj² = p_k·p_j when two users share a pilot and 0 otherwise.
pub fn one_hot_sum(lambda: &Array2<f64>, assignment: &[usize], cfg: &SystemConfig) -> f64 {
    let (k_users, m_raus) = lambda.dim();
    let n = cfg.antennas_per_rau as f64;
    let mut total = 0.0;
    for k in 0..k_users {
        let pk = cfg.p_tot(k);
        for m in 0..m_raus {
            let mut same = 0.0;
            for j in 0..k_users {
                if assignment[j] == assignment[k] {
                    same += pk * cfg.p_tot(j) * lambda[[j, m]];
                }
            }
            let own = pk * pk * lambda[[k, m]];
            let noise = cfg.noise_power * pk;
            total += n * lambda[[k, m]] * (same - own + noise) / (same + noise);
        }
    }
    total
}

/// All τ^K assignments in lexicographic order; the first one within 1e-12
/// relative of the minimum wins.
pub fn brute_force(lambda: &Array2<f64>, cfg: &SystemConfig) -> (Vec<usize>, f64) {
    let k = cfg.num_users;
    let tau = cfg.num_pilots;
    let mut all = Vec::new();
    let mut a = vec![0usize; k];
    loop {
        all.push((a.clone(), one_hot_sum(lambda, &a, cfg)));
        let mut pos = k;
        loop {
            if pos == 0 {
                let best = all.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
                let chosen = all.iter().find(|(_, v)| *v <= best * (1.0 + 1e-12)).unwrap();
                return chosen.clone();
            }
            pos -= 1;
            a[pos] += 1;
            if a[pos] < tau {
                break;
            }
            a[pos] = 0;
        }
        if a.iter().all(|x| *x == 0) {
            unreachable!();
        }
    }
}
