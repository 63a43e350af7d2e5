//! Local tangent-space estimation.
//!
//! For each training point the `D + d` nearest neighbours (the point itself
//! included) are gathered by brute force, centred on their mean, and the
//! leading eigenvectors of their covariance give an orthonormal basis `T_i`.
//! The number of directions kept is the smaller of `d` and the rank needed to
//! capture 98% of the local variance. The regularizer only ever consumes the
//! projector `T_i T_iᵀ`.

use std::cmp::Ordering;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::binio;
use crate::data::DataMatrix;
use crate::error::{format_err, invalid, Error, Result};

/// Fraction of local variance the kept directions must explain.
pub const ENERGY_FRACTION: f64 = 0.98;

/// Orthonormal basis (`D x r`, `r <= d`) of the estimated tangent space at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBasis {
    pub point_index: usize,
    basis: DMatrix<f64>,
    /// Set when the neighbourhood had no variance and the basis is empty.
    pub degenerate: bool,
}

impl TangentBasis {
    /// Wraps a basis, checking orthonormality of its columns to 1e-10.
    pub fn new(point_index: usize, basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        if r > basis.nrows() {
            return Err(invalid(format!("basis has {r} columns but only {} rows", basis.nrows())));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(r, r)).amax();
        if err >= 1e-10 {
            return Err(invalid(format!("basis columns are not orthonormal (error {err:e})")));
        }
        Ok(Self {
            point_index,
            basis,
            degenerate: false,
        })
    }

    /// Empty basis for a degenerate neighbourhood.
    pub fn empty(point_index: usize, dims: usize) -> Self {
        Self {
            point_index,
            basis: DMatrix::zeros(dims, 0),
            degenerate: true,
        }
    }

    pub fn dims(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
}

/// `T Tᵀ`: symmetric, idempotent, trace `r`.
pub fn projector(t: &TangentBasis) -> DMatrix<f64> {
    &t.basis * t.basis.transpose()
}

/// The `D x D` target matched by the network Jacobian at one point.
///
/// Usually built from a tangent basis; a dense matrix can be supplied for
/// tests and experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Basis(DMatrix<f64>),
    Dense(DMatrix<f64>),
}

impl Projector {
    pub fn from_tangent(t: &TangentBasis) -> Self {
        Projector::Basis(t.basis.clone())
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid("jacobian target must be square"));
        }
        Ok(Projector::Dense(m))
    }

    pub fn dims(&self) -> usize {
        match self {
            Projector::Basis(b) => b.nrows(),
            Projector::Dense(m) => m.nrows(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Projector::Basis(b) => b * b.transpose(),
            Projector::Dense(m) => m.clone(),
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` points nearest to column `i`, nearest first.
///
/// The query point itself always comes first; other ties are broken by
/// ascending index.
pub fn knn_bruteforce(x: &DataMatrix, i: usize, k: usize) -> Result<Vec<usize>> {
    let n = x.count();
    if i >= n {
        return Err(invalid(format!("point index {i} out of range for {n} points")));
    }
    if k == 0 || k > n {
        return Err(invalid(format!("k = {k} must be in 1..={n}")));
    }
    let q = x.column_slice(i);
    let mut cand: Vec<(f64, usize)> = (0..n)
        .map(|j| (if j == i { f64::NEG_INFINITY } else { squared_distance(q, x.column_slice(j)) }, j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    Ok(cand.into_iter().map(|(_, j)| j).collect())
}

/// Estimates the tangent basis at column `i` from its `D + d` nearest neighbours.
pub fn estimate_tangent(x: &DataMatrix, i: usize, d: usize) -> Result<TangentBasis> {
    let dims = x.dims();
    let k = dims + d;
    if x.count() < k {
        return Err(invalid(format!(
            "tangent estimation needs at least D + d = {k} points, have {}",
            x.count()
        )));
    }
    let neighbours = knn_bruteforce(x, i, k)?;
    Ok(local_pca(x, &neighbours, i, d))
}

fn local_pca(x: &DataMatrix, neighbours: &[usize], i: usize, d: usize) -> TangentBasis {
    let dims = x.dims();
    let local = x.select(neighbours).into_matrix();
    let mean = local.column_mean();
    let centered = DMatrix::from_fn(dims, local.ncols(), |r, c| local[(r, c)] - mean[r]);
    let cov = &centered * centered.transpose() / local.ncols() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let energies: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    let total: f64 = energies.iter().sum();
    if total <= 1e-20 * mean.norm_squared().max(1.0) {
        return TangentBasis::empty(i, dims);
    }

    let mut acc = 0.0;
    let mut r98 = dims;
    for (j, e) in energies.iter().enumerate() {
        acc += e;
        if acc >= ENERGY_FRACTION * total {
            r98 = j + 1;
            break;
        }
    }
    let r = r98.min(d).min(dims);
    let mut basis = DMatrix::zeros(dims, r);
    for (c, &j) in order.iter().take(r).enumerate() {
        basis.column_mut(c).copy_from(&eig.eigenvectors.column(j));
    }
    TangentBasis {
        point_index: i,
        basis,
        degenerate: false,
    }
}

/// Tangent bases for every column of `x`, in column order. Runs in parallel
/// across points; the result does not depend on the thread count.
pub fn estimate_all(x: &DataMatrix, d: usize) -> Result<Vec<TangentBasis>> {
    let k = x.dims() + d;
    if x.count() < k {
        return Err(invalid(format!(
            "tangent estimation needs at least D + d = {k} points, have {}",
            x.count()
        )));
    }
    (0..x.count())
        .into_par_iter()
        .map(|i| estimate_tangent(x, i, d))
        .collect()
}

const TANGENT_MAGIC: &[u8; 4] = b"AJBT";

/// Writes the tangent cache: magic `AJBT`, `u32` D, d, N, then per point a
/// `u32` rank followed by the `D x r` basis in column-major `f64`.
pub fn write_tangents(mut w: impl Write, bases: &[TangentBasis], dims: usize, bits: usize) -> Result<()> {
    w.write_all(TANGENT_MAGIC)?;
    binio::write_u32(&mut w, binio::to_u32(dims, "D")?)?;
    binio::write_u32(&mut w, binio::to_u32(bits, "d")?)?;
    binio::write_u32(&mut w, binio::to_u32(bases.len(), "N")?)?;
    for t in bases {
        if t.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: t.dims(),
            });
        }
        binio::write_u32(&mut w, binio::to_u32(t.rank(), "r")?)?;
        binio::write_f64s(&mut w, t.basis.iter().copied())?;
    }
    Ok(())
}

/// Reads a tangent cache, returning `(D, d, bases)`.
pub fn read_tangents(mut r: impl Read) -> Result<(usize, usize, Vec<TangentBasis>)> {
    binio::expect_magic(&mut r, TANGENT_MAGIC)?;
    let dims = binio::read_u32(&mut r, "D")? as usize;
    let bits = binio::read_u32(&mut r, "d")? as usize;
    let n = binio::read_u32(&mut r, "N")? as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let rank = binio::read_u32(&mut r, "rank")? as usize;
        if rank > dims {
            return Err(format_err(format!("point {i}: rank {rank} exceeds D = {dims}")));
        }
        let vals = binio::read_f64s(&mut r, dims * rank, "basis")?;
        let basis = DMatrix::from_vec(dims, rank, vals);
        out.push(if rank == 0 {
            TangentBasis::empty(i, dims)
        } else {
            TangentBasis::new(i, basis).map_err(|e| format_err(format!("point {i}: {e}")))?
        });
    }
    binio::expect_end(&mut r)?;
    Ok((dims, bits, out))
}
