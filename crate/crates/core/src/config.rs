//! Scenario constants and the `key = value` config file format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All constants describing one distributed massive MIMO scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Remote antenna units (M).
    pub num_raus: usize,
    /// Antennas per RAU (N).
    pub antennas_per_rau: usize,
    /// Single-antenna users (K).
    pub num_users: usize,
    /// Orthonormal pilot basis vectors (τ).
    pub num_pilots: usize,
    /// Circumradius of the hexagonal cell, meters.
    pub cell_radius_m: f64,
    /// Path loss exponent ζ.
    pub pathloss_exponent: f64,
    /// Standard deviation of `10·log10(s)` for the log-normal shadowing, dB.
    pub shadow_std_db: f64,
    /// Per-user total pilot power, Watts. One entry per user.
    pub pilot_power_total: Vec<f64>,
    /// Noise power σ_n², Watts.
    pub noise_power: f64,
    /// Users closer than this to any RAU are resampled.
    pub min_link_distance_m: f64,
    pub rng_seed: u64,
    /// Keep the RAU layout of instance 0 for every instance of a dataset.
    pub freeze_geometry: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::paper_scenario()
    }
}

impl SystemConfig {
    /// K=12 users, τ=4 pilots, M=4 RAUs with N=2 antennas in a 500 m hexagon.
    pub fn paper_scenario() -> Self {
        let num_users = 12;
        Self {
            num_raus: 4,
            antennas_per_rau: 2,
            num_users,
            num_pilots: 4,
            cell_radius_m: 500.0,
            pathloss_exponent: 3.0,
            shadow_std_db: 6.0_f64.sqrt(),
            pilot_power_total: vec![6.0; num_users],
            noise_power: 1e-8,
            min_link_distance_m: 30.0,
            rng_seed: 0,
            freeze_geometry: false,
        }
    }

    /// A config with the given dimensions and the paper scenario's physical constants.
    pub fn with_dims(num_users: usize, num_raus: usize, antennas_per_rau: usize, num_pilots: usize) -> Self {
        Self {
            num_users,
            num_raus,
            antennas_per_rau,
            num_pilots,
            pilot_power_total: vec![6.0; num_users],
            ..Self::paper_scenario()
        }
    }

    pub fn p_tot(&self, user: usize) -> f64 {
        self.pilot_power_total[user]
    }

    /// Replace the per-user power vector by `K` copies of `watts`.
    pub fn set_uniform_power(&mut self, watts: f64) {
        self.pilot_power_total = vec![watts; self.num_users];
    }

    /// Checks that hold for every use of the config, including the
    /// evaluation routines that accept τ ≥ K.
    pub fn validate_basic(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_raus == 0 || self.antennas_per_rau == 0 || self.num_users == 0 || self.num_pilots == 0 {
            return bad("M, N, K and tau must all be positive".into());
        }
        if self.pilot_power_total.len() != self.num_users {
            return bad(format!(
                "pilot_power_total has {} entries, expected K = {}",
                self.pilot_power_total.len(),
                self.num_users
            ));
        }
        if let Some(p) = self.pilot_power_total.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad(format!("pilot power must be positive and finite, got {p}"));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return bad(format!("noise_power must be positive, got {}", self.noise_power));
        }
        Ok(())
    }

    /// Full scenario validation used before generating data: adds the
    /// pilot shortage condition τ < K and the geometric constants.
    pub fn validate(&self) -> Result<()> {
        self.validate_basic()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_pilots >= self.num_users {
            return bad(format!(
                "tau = {} must be smaller than K = {}",
                self.num_pilots, self.num_users
            ));
        }
        if !(self.cell_radius_m.is_finite() && self.cell_radius_m > 0.0) {
            return bad(format!("cell radius must be positive, got {}", self.cell_radius_m));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return bad(format!("path loss exponent must be positive, got {}", self.pathloss_exponent));
        }
        if !(self.shadow_std_db.is_finite() && self.shadow_std_db >= 0.0) {
            return bad(format!("shadow_std_db must be nonnegative, got {}", self.shadow_std_db));
        }
        if !(self.min_link_distance_m.is_finite() && self.min_link_distance_m > 0.0) {
            return bad(format!(
                "min_link_distance_m must be positive, got {}",
                self.min_link_distance_m
            ));
        }
        Ok(())
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse value {v:?} for key {key}")))
        }
        match key {
            "num_raus" | "M" => self.num_raus = num(key, value)?,
            "antennas_per_rau" | "N" => self.antennas_per_rau = num(key, value)?,
            "num_users" | "K" => {
                self.num_users = num(key, value)?;
                if self.pilot_power_total.len() != self.num_users {
                    let p = self.pilot_power_total.first().copied().unwrap_or(6.0);
                    self.set_uniform_power(p);
                }
            }
            "num_pilots" | "tau" => self.num_pilots = num(key, value)?,
            "cell_radius_m" | "r" => self.cell_radius_m = num(key, value)?,
            "pathloss_exponent" | "zeta" => self.pathloss_exponent = num(key, value)?,
            "shadow_std_db" => self.shadow_std_db = num(key, value)?,
            "shadow_var_db" => {
                let var: f64 = num(key, value)?;
                if var < 0.0 {
                    return Err(Error::InvalidConfig("shadow_var_db must be nonnegative".into()));
                }
                self.shadow_std_db = var.sqrt();
            }
            "pilot_power_total" | "p_tot" => {
                let parts = value
                    .split(',')
                    .map(|s| num::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if parts.len() == 1 {
                    self.set_uniform_power(parts[0]);
                } else {
                    self.pilot_power_total = parts;
                }
            }
            "noise_power" | "sigma2" => self.noise_power = num(key, value)?,
            "min_link_distance_m" | "dmin" => self.min_link_distance_m = num(key, value)?,
            "rng_seed" | "seed" => self.rng_seed = num(key, value)?,
            "freeze_geometry" => self.freeze_geometry = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::paper_scenario();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Render as the same `key = value` text `apply_text` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let powers = self
            .pilot_power_total
            .iter()
            .map(|p| format!("{p:?}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "num_raus = {}", self.num_raus);
        let _ = writeln!(out, "antennas_per_rau = {}", self.antennas_per_rau);
        let _ = writeln!(out, "num_users = {}", self.num_users);
        let _ = writeln!(out, "num_pilots = {}", self.num_pilots);
        let _ = writeln!(out, "cell_radius_m = {:?}", self.cell_radius_m);
        let _ = writeln!(out, "pathloss_exponent = {:?}", self.pathloss_exponent);
        let _ = writeln!(out, "shadow_std_db = {:?}", self.shadow_std_db);
        let _ = writeln!(out, "pilot_power_total = {powers}");
        let _ = writeln!(out, "noise_power = {:?}", self.noise_power);
        let _ = writeln!(out, "min_link_distance_m = {:?}", self.min_link_distance_m);
        let _ = writeln!(out, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(out, "freeze_geometry = {}", self.freeze_geometry);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scenario_is_valid() {
        let cfg = SystemConfig::paper_scenario();
        cfg.validate().unwrap();
        assert_eq!(cfg.pilot_power_total.len(), 12);
        assert!((cfg.shadow_std_db - 2.449_489_742_783_178).abs() < 1e-12);
    }

    #[test]
    fn pilot_shortage_is_enforced() {
        let mut cfg = SystemConfig::paper_scenario();
        cfg.num_pilots = 12;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        // evaluation code paths still accept it
        cfg.validate_basic().unwrap();
    }

    #[test]
    fn nonpositive_power_rejected() {
        let mut cfg = SystemConfig::paper_scenario();
        cfg.pilot_power_total[3] = 0.0;
        assert!(cfg.validate_basic().is_err());
        let mut cfg = SystemConfig::paper_scenario();
        cfg.noise_power = -1.0;
        assert!(cfg.validate_basic().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = SystemConfig::with_dims(5, 3, 4, 2);
        cfg.pilot_power_total = vec![1.0, 2.0, 3.0, 4.0, 5.5];
        cfg.rng_seed = 99;
        cfg.freeze_geometry = true;
        let mut back = SystemConfig::paper_scenario();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_aliases_and_variance_flag() {
        let mut cfg = SystemConfig::paper_scenario();
        cfg.apply_text("# scenario\nK = 6\n tau=2 # two pilots\n\nshadow_var_db = 36\n").unwrap();
        assert_eq!(cfg.num_users, 6);
        assert_eq!(cfg.pilot_power_total, vec![6.0; 6]);
        assert_eq!(cfg.num_pilots, 2);
        assert_eq!(cfg.shadow_std_db, 6.0);
    }

    #[test]
    fn bad_lines_rejected() {
        let mut cfg = SystemConfig::paper_scenario();
        assert!(cfg.apply_text("K 12").is_err());
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("K = twelve").is_err());
    }
}
