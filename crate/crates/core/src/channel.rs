//! Cell geometry, large-scale fading datasets and small-scale fading draws.
//!
//! The cell is a flat-topped regular hexagon of circumradius `r` centered at
//! the origin. RAUs and users are placed i.i.d. uniformly inside it; a user
//! that lands closer than `min_link_distance_m` to any RAU is redrawn.
//! The large-scale coefficient of link (k, m) is `d^-ζ · s` with
//! `10·log10(s) ~ N(0, shadow_std_db²)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Redraws allowed per user before placement is declared infeasible.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Whether `p` lies in the flat-topped hexagon of circumradius `radius`
/// centered at the origin (boundary included).
pub fn in_hexagon(p: Point, radius: f64) -> bool {
    let (ax, ay) = (p.x.abs(), p.y.abs());
    ay <= SQRT3 / 2.0 * radius && SQRT3 * ax + ay <= SQRT3 * radius
}

/// Uniform point in the hexagon by rejection from its bounding box.
pub fn sample_in_hexagon(radius: f64, rng: &mut Rng) -> Point {
    let half_height = SQRT3 / 2.0 * radius;
    loop {
        let p = Point::new(
            rng.random_range(-radius..=radius),
            rng.random_range(-half_height..=half_height),
        );
        if in_hexagon(p, radius) {
            return p;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub rau_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

impl Geometry {
    /// K×M link distances.
    pub fn distances(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.user_positions.len(), self.rau_positions.len()), |(k, m)| {
            self.user_positions[k].distance(self.rau_positions[m])
        })
    }
}

/// Place RAUs and users uniformly over the hexagon.
pub fn sample_geometry(config: &SystemConfig, rng: &mut Rng) -> Result<Geometry> {
    config.validate()?;
    let raus = (0..config.num_raus)
        .map(|_| sample_in_hexagon(config.cell_radius_m, rng))
        .collect::<Vec<_>>();
    place_users(raus, config, rng)
}

/// Place users around an existing RAU layout.
pub fn place_users(raus: Vec<Point>, config: &SystemConfig, rng: &mut Rng) -> Result<Geometry> {
    let mut users = Vec::with_capacity(config.num_users);
    for user in 0..config.num_users {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = sample_in_hexagon(config.cell_radius_m, rng);
            if raus.iter().all(|r| p.distance(*r) >= config.min_link_distance_m) {
                placed = Some(p);
                break;
            }
        }
        match placed {
            Some(p) => users.push(p),
            None => {
                return Err(Error::GeometryInfeasible {
                    user,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }
    Ok(Geometry {
        rau_positions: raus,
        user_positions: users,
    })
}

/// One realization of the K×M large-scale fading coefficients (linear scale).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    pub lambda: Array2<f64>,
}

impl ChannelInstance {
    pub fn new(lambda: Array2<f64>) -> Result<Self> {
        if let Some(v) = lambda.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonFinite(format!(
                "large-scale fading entries must be positive and finite, got {v}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn num_users(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn num_raus(&self) -> usize {
        self.lambda.ncols()
    }

    /// Row-major (user-major) flattening: `[λ_11 … λ_1M, λ_21 …]`.
    pub fn flatten(&self) -> impl Iterator<Item = f64> + '_ {
        self.lambda.iter().copied()
    }
}

/// λ_{k,m} = d_{k,m}^{-ζ} · 10^{x/10}, with `shadow_db` holding the x values.
pub fn fading_from_distances(distances: &Array2<f64>, zeta: f64, shadow_db: &Array2<f64>) -> Array2<f64> {
    let mut lambda = distances.mapv(|d| d.powf(-zeta));
    lambda.zip_mut_with(shadow_db, |l, x| *l *= 10f64.powf(x / 10.0));
    lambda
}

pub fn large_scale_fading(geometry: &Geometry, config: &SystemConfig, rng: &mut Rng) -> Result<ChannelInstance> {
    let distances = geometry.distances();
    if let Some(d) = distances.iter().find(|d| **d < config.min_link_distance_m) {
        return Err(Error::InvalidConfig(format!(
            "link distance {d} below min_link_distance_m {}",
            config.min_link_distance_m
        )));
    }
    let shadow = Array2::from_shape_simple_fn(distances.raw_dim(), || {
        config.shadow_std_db * rng.sample::<f64, _>(StandardNormal)
    });
    ChannelInstance::new(fading_from_distances(&distances, config.pathloss_exponent, &shadow))
}

/// Small-scale fading for all users: (M·N)×K i.i.d. CN(0, 1) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallScaleDraw {
    pub h: Array2<Complex64>,
}

pub fn sample_small_scale(config: &SystemConfig, rng: &mut Rng) -> SmallScaleDraw {
    let rows = config.num_raus * config.antennas_per_rau;
    SmallScaleDraw {
        h: Array2::from_shape_simple_fn((rows, config.num_users), || complex_gaussian(1.0, rng)),
    }
}

/// One CN(0, variance) sample.
pub fn complex_gaussian(variance: f64, rng: &mut Rng) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Generate instances `first .. first + count` of the dataset keyed by
/// `config.rng_seed`. Instance `i` only depends on `(seed, i)`, so any
/// split of the index range yields the same data.
pub fn generate_range(config: &SystemConfig, first: u64, count: usize) -> Result<Vec<ChannelInstance>> {
    config.validate()?;
    let frozen = if config.freeze_geometry {
        let mut r = rng::stream(config.rng_seed, rng::FROZEN_GEOMETRY_STREAM);
        Some(
            (0..config.num_raus)
                .map(|_| sample_in_hexagon(config.cell_radius_m, &mut r))
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(config.rng_seed, first + i);
            let geometry = match &frozen {
                Some(raus) => place_users(raus.clone(), config, &mut r)?,
                None => sample_geometry(config, &mut r)?,
            };
            large_scale_fading(&geometry, config, &mut r)
        })
        .collect()
}

pub fn generate_dataset(config: &SystemConfig, count: usize) -> Result<Vec<ChannelInstance>> {
    generate_range(config, 0, count)
}

/// Write `K M` followed by one instance per line.
pub fn write_dataset(path: &Path, instances: &[ChannelInstance]) -> Result<()> {
    let (k, m) = match instances.first() {
        Some(first) => (first.num_users(), first.num_raus()),
        None => {
            return Err(Error::Dimension("cannot write an empty dataset".into()));
        }
    };
    if let Some(bad) = instances.iter().position(|c| c.lambda.dim() != (k, m)) {
        return Err(Error::Dimension(format!(
            "instance {bad} has shape {:?}, expected ({k}, {m})",
            instances[bad].lambda.dim()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{k} {m}")?;
    for inst in instances {
        let mut first = true;
        for v in inst.flatten() {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{v:e}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<ChannelInstance>> {
    let malformed = |reason: String| Error::Malformed {
        what: "dataset",
        path: path.to_path_buf(),
        reason,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| malformed("missing header".into()))??;
    let dims = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| malformed(format!("bad header {header:?}: {e}")))?;
    let (k, m) = match dims.as_slice() {
        [k, m] if *k > 0 && *m > 0 => (*k, *m),
        _ => return Err(malformed(format!("header must be `K M`, got {header:?}"))),
    };
    let mut instances = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| malformed(format!("line {}: {e}", idx + 2)))?;
        if values.len() != k * m {
            return Err(Error::Dimension(format!(
                "{}: line {} has {} values, header declares K·M = {}",
                path.display(),
                idx + 2,
                values.len(),
                k * m
            )));
        }
        let lambda = Array2::from_shape_vec((k, m), values).expect("length checked");
        instances.push(ChannelInstance::new(lambda).map_err(|e| malformed(format!("line {}: {e}", idx + 2)))?);
    }
    Ok(instances)
}
