//! The three-layer tanh auto-encoder.
//!
//! ```text
//! y = tanh(W1 x + b1)      hidden, d entries
//! z = tanh(W2 y + b2)      output, D entries
//! ```
//!
//! The Jacobian is reported with entry `(i, j) = ∂z_j / ∂x_i`, i.e.
//! `J = W1ᵀ (W2ᵀ ⊙ (1 - y²)(1 - z²)ᵀ)`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::binio;
use crate::data::DataMatrix;
use crate::error::{format_err, invalid, Error, Result};

/// Weights, biases and the input scale of a trained (or initialized) model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// `d x D` encoder weights.
    pub w1: DMatrix<f64>,
    /// `D x d` decoder weights.
    pub w2: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    /// Normalization scale applied to raw inputs before encoding.
    pub scale: f64,
}

impl NetworkParams {
    pub fn zeros(dims: usize, bits: usize) -> Self {
        Self {
            w1: DMatrix::zeros(bits, dims),
            w2: DMatrix::zeros(dims, bits),
            b1: DVector::zeros(bits),
            b2: DVector::zeros(dims),
            scale: 1.0,
        }
    }

    /// Assembles parameters, checking shapes and finiteness.
    pub fn new(w1: DMatrix<f64>, w2: DMatrix<f64>, b1: DVector<f64>, b2: DVector<f64>, scale: f64) -> Result<Self> {
        let (bits, dims) = w1.shape();
        if w2.shape() != (dims, bits) {
            return Err(invalid(format!("W2 is {:?}, expected {:?}", w2.shape(), (dims, bits))));
        }
        if b1.len() != bits || b2.len() != dims {
            return Err(invalid("bias lengths do not match the weight shapes"));
        }
        let p = Self { w1, w2, b1, b2, scale };
        if !p.is_finite() || !(scale.is_finite() && scale > 0.0) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(p)
    }

    /// Input dimension `D`.
    pub fn dims(&self) -> usize {
        self.w1.ncols()
    }

    /// Code length `d`.
    pub fn bits(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_params(&self) -> usize {
        2 * self.dims() * self.bits() + self.dims() + self.bits()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).chain(self.b1.iter()).chain(self.b2.iter()).all(|v| v.is_finite())
    }

    /// Flattens to `[W1, W2, b1, b2]`, each block column-major.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(self.b1.as_slice());
        v.extend_from_slice(self.b2.as_slice());
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector), reusing this shape and scale.
    pub fn with_vector(&self, theta: &[f64]) -> Self {
        let (d, dd) = (self.bits(), self.dims());
        assert_eq!(theta.len(), self.num_params(), "parameter vector length");
        let (w1, rest) = theta.split_at(d * dd);
        let (w2, rest) = rest.split_at(d * dd);
        let (b1, b2) = rest.split_at(d);
        Self {
            w1: DMatrix::from_column_slice(d, dd, w1),
            w2: DMatrix::from_column_slice(dd, d, w2),
            b1: DVector::from_column_slice(b1),
            b2: DVector::from_column_slice(b2),
            scale: self.scale,
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Hidden and output activations for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

pub fn forward(p: &NetworkParams, x: &DVector<f64>) -> Result<ForwardCache> {
    p.check_input(x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    let y = (&p.w1 * x + &p.b1).map(f64::tanh);
    let z = (&p.w2 * &y + &p.b2).map(f64::tanh);
    Ok(ForwardCache { y, z })
}

/// Activations for a whole batch: `(Y, Z)` with one column per point.
pub fn forward_batch(p: &NetworkParams, x: &DataMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    p.check_input(x.dims())?;
    let mut y = &p.w1 * x.as_matrix();
    for mut c in y.column_iter_mut() {
        c += &p.b1;
        c.apply(|v| *v = v.tanh());
    }
    let mut z = &p.w2 * &y;
    for mut c in z.column_iter_mut() {
        c += &p.b2;
        c.apply(|v| *v = v.tanh());
    }
    Ok((y, z))
}

/// `J(i, j) = ∂z_j/∂x_i` given the activations at `x`.
pub(crate) fn jacobian_from_cache(p: &NetworkParams, cache: &ForwardCache) -> DMatrix<f64> {
    // M(j, i) = sum_k W2(j,k) s_k W1(k,i); J = (diag(t) M)ᵀ
    let s = cache.y.map(|v| 1.0 - v * v);
    let t = cache.z.map(|v| 1.0 - v * v);
    let mut ws = p.w2.clone();
    for (k, mut c) in ws.column_iter_mut().enumerate() {
        c *= s[k];
    }
    let mut m = ws * &p.w1;
    for (j, mut row) in m.row_iter_mut().enumerate() {
        row *= t[j];
    }
    m.transpose()
}

/// Analytic input-to-output Jacobian at `x`, entry `(i, j) = ∂z_j / ∂x_i`.
pub fn jacobian(p: &NetworkParams, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let cache = forward(p, x)?;
    Ok(jacobian_from_cache(p, &cache))
}

/// Input-to-hidden Jacobian, entry `(i, k) = ∂y_k / ∂x_i = W1(k, i)(1 - y_k²)`.
pub fn hidden_jacobian(p: &NetworkParams, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let cache = forward(p, x)?;
    let mut jh = p.w1.transpose();
    for (k, mut c) in jh.column_iter_mut().enumerate() {
        c *= 1.0 - cache.y[k] * cache.y[k];
    }
    Ok(jh)
}

const MODEL_MAGIC: &[u8; 4] = b"AJBN";
const MODEL_VERSION: u32 = 1;

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

/// Writes the `.ajb` model: magic `AJBN`, `u32` version, D, d, `f64` scale,
/// then row-major `f64` blocks W1, W2, b1, b2.
pub fn write_model(mut w: impl Write, p: &NetworkParams) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    binio::write_u32(&mut w, MODEL_VERSION)?;
    binio::write_u32(&mut w, binio::to_u32(p.dims(), "D")?)?;
    binio::write_u32(&mut w, binio::to_u32(p.bits(), "d")?)?;
    binio::write_f64s(&mut w, [p.scale])?;
    binio::write_f64s(&mut w, row_major(&p.w1))?;
    binio::write_f64s(&mut w, row_major(&p.w2))?;
    binio::write_f64s(&mut w, p.b1.iter().copied())?;
    binio::write_f64s(&mut w, p.b2.iter().copied())?;
    Ok(())
}

pub fn read_model(mut r: impl Read) -> Result<NetworkParams> {
    binio::expect_magic(&mut r, MODEL_MAGIC)?;
    let version = binio::read_u32(&mut r, "version")?;
    if version != MODEL_VERSION {
        return Err(format_err(format!("unsupported model version {version}")));
    }
    let dims = binio::read_u32(&mut r, "D")? as usize;
    let bits = binio::read_u32(&mut r, "d")? as usize;
    let scale = binio::read_f64s(&mut r, 1, "scale")?[0];
    let w1 = DMatrix::from_row_slice(bits, dims, &binio::read_f64s(&mut r, bits * dims, "W1")?);
    let w2 = DMatrix::from_row_slice(dims, bits, &binio::read_f64s(&mut r, bits * dims, "W2")?);
    let b1 = DVector::from_vec(binio::read_f64s(&mut r, bits, "b1")?);
    let b2 = DVector::from_vec(binio::read_f64s(&mut r, dims, "b2")?);
    binio::expect_end(&mut r)?;
    NetworkParams::new(w1, w2, b1, b2, scale).map_err(|e| format_err(e.to_string()))
}

pub fn model_to_bytes(p: &NetworkParams) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(&mut buf, p).expect("writing to a Vec cannot fail");
    buf
}
