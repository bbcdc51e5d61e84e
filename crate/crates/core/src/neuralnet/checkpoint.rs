//! Binary checkpoint format.
//!
//! ```text
//! magic            8 bytes  "PILOTNET"
//! version          u32
//! input transform  u32      0 = raw, 1 = log10
//! K, M, tau        u32 × 3
//! p_tot            f64 × K
//! layer count      u32      L + 1
//! layer sizes      u32 × (L + 1)
//! per hidden layer W (row-major), b, gamma, beta, running mean, running var
//! output layer     W (row-major), b
//! ```
//!
//! All integers and floats are little-endian. Nothing may follow the last array.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{HiddenLayer, InputTransform, NetworkArch, NetworkParams, OutputLayer, OutputScaling};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PILOTNET";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) {
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(params.input_transform.code());
    w.u32(params.scaling.num_users as u32);
    w.u32(params.scaling.num_raus as u32);
    w.u32(params.scaling.num_pilots as u32);
    w.f64s(&params.scaling.pilot_power_total);
    w.u32(params.arch.layer_sizes.len() as u32);
    for n in &params.arch.layer_sizes {
        w.u32(*n as u32);
    }
    for layer in &params.hidden {
        w.f64s(layer.weight.iter());
        w.f64s(layer.bias.iter());
        w.f64s(layer.gamma.iter());
        w.f64s(layer.beta.iter());
        w.f64s(layer.running_mean.iter());
        w.f64s(layer.running_var.iter());
    }
    w.f64s(params.output.weight.iter());
    w.f64s(params.output.bias.iter());
    fs::write(path, w.0)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Malformed {
            what: "checkpoint",
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.malformed(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64s(n)?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        Ok(Array2::from_shape_vec((rows, cols), self.f64s(rows * cols)?).expect("sized read"))
    }
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(r.malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let transform_code = r.u32()?;
    let input_transform =
        InputTransform::from_code(transform_code).ok_or_else(|| r.malformed(format!("input transform code {transform_code}")))?;
    let num_users = r.u32()? as usize;
    let num_raus = r.u32()? as usize;
    let num_pilots = r.u32()? as usize;
    let pilot_power_total = r.f64s(num_users)?;
    let count = r.u32()? as usize;
    if count > 1024 {
        return Err(r.malformed(format!("implausible layer count {count}")));
    }
    let sizes = (0..count).map(|_| r.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let arch = NetworkArch::new(sizes).map_err(|e| r.malformed(e.to_string()))?;
    if arch.input_size() != num_users * num_raus || arch.output_size() != num_users * num_pilots {
        return Err(r.malformed(format!(
            "layer sizes {:?} inconsistent with K={num_users}, M={num_raus}, tau={num_pilots}",
            arch.layer_sizes
        )));
    }
    let sizes = &arch.layer_sizes;
    let mut hidden = Vec::with_capacity(arch.num_hidden());
    for l in 1..sizes.len() - 1 {
        let n = sizes[l];
        hidden.push(HiddenLayer {
            weight: r.matrix(n, sizes[l - 1])?,
            bias: r.vector(n)?,
            gamma: r.vector(n)?,
            beta: r.vector(n)?,
            running_mean: r.vector(n)?,
            running_var: r.vector(n)?,
        });
    }
    let last = sizes.len() - 1;
    let output = OutputLayer {
        weight: r.matrix(sizes[last], sizes[last - 1])?,
        bias: r.vector(sizes[last])?,
    };
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if hidden[0].bias.iter().any(|b| *b != 0.0) {
        return Err(r.malformed("first hidden layer bias must be zero"));
    }
    if hidden.iter().any(|l| l.running_var.iter().any(|v| *v < 0.0)) {
        return Err(r.malformed("negative running variance"));
    }
    Ok(NetworkParams {
        arch,
        scaling: OutputScaling {
            num_users,
            num_raus,
            num_pilots,
            pilot_power_total,
        },
        input_transform,
        hidden,
        output,
    })
}

/// Load and require the stored architecture to equal `expected`.
pub fn load_params_expecting(path: &Path, expected: &NetworkArch) -> Result<NetworkParams> {
    let params = load_params(path)?;
    if &params.arch != expected {
        return Err(Error::Dimension(format!(
            "checkpoint {} has layer sizes {:?}, expected {:?}",
            path.display(),
            params.arch.layer_sizes,
            expected.layer_sizes
        )));
    }
    Ok(params)
}
