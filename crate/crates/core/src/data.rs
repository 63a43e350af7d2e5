//! Point sets and the scale normalization applied before training.
//!
//! Points are stored one per column (`D` rows by `N` columns), so column `j`
//! of a [`DataMatrix`] is record `j` of the file it came from.

use nalgebra::{DMatrix, DVectorView};

use crate::error::{invalid, Error, Result};

/// Target norm of the largest training vector after scaling.
pub const NORMALIZED_MAX_NORM: f64 = 0.8;

/// A `D x N` matrix of finite `f64` values, one point per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a matrix, rejecting NaN and infinite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows().max(1), pos / values.nrows().max(1));
            return Err(Error::NonFinite(format!("entry ({r}, {c})")));
        }
        Ok(Self { values })
    }

    /// The empty matrix produced by reading an empty file: no columns, no known dimension.
    pub fn empty() -> Self {
        Self {
            values: DMatrix::zeros(0, 0),
        }
    }

    /// Builds a matrix from points given as rows of equal length.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let Some(first) = points.first() else {
            return Ok(Self::empty());
        };
        let dims = first.as_ref().len();
        let mut values = DMatrix::zeros(dims, points.len());
        for (j, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: p.len(),
                });
            }
            values.column_mut(j).copy_from_slice(p);
        }
        Self::new(values)
    }

    /// Builds a matrix from a column-major buffer of `dims * count` values.
    pub fn from_column_major(dims: usize, count: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims * count {
            return Err(Error::DimensionMismatch {
                expected: dims * count,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_vec(dims, count, data))
    }

    /// Dimension `D` of each point (0 for an empty matrix read from an empty file).
    pub fn dims(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points `N`.
    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.values.column(j)
    }

    pub fn column_slice(&self, j: usize) -> &[f64] {
        let d = self.dims();
        &self.values.as_slice()[j * d..(j + 1) * d]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    /// New matrix made of the listed columns, in the listed order.
    pub fn select(&self, indices: &[usize]) -> DataMatrix {
        let d = self.dims();
        let mut out = DMatrix::zeros(d, indices.len());
        for (dst, &src) in indices.iter().enumerate() {
            out.column_mut(dst).copy_from(&self.values.column(src));
        }
        DataMatrix { values: out }
    }

    /// Largest Euclidean column norm (0 for an empty matrix).
    pub fn max_column_norm(&self) -> f64 {
        self.values
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Multiplicative scale fitted on the training set and reused for base and query sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    scale: f64,
}

impl Normalizer {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("normalizer scale must be finite and > 0, got {scale}")));
        }
        Ok(Self { scale })
    }

    /// `0.8 / max_i ||x_i||`, so the largest training vector ends up with norm 0.8.
    pub fn fit(train: &DataMatrix) -> Result<Self> {
        if train.is_empty() {
            return Err(invalid("cannot fit a normalizer on an empty matrix"));
        }
        let max_norm = train.max_column_norm();
        if max_norm <= 0.0 {
            return Err(Error::DegenerateScale);
        }
        Self::new(NORMALIZED_MAX_NORM / max_norm)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Multiplies every entry by the scale. Points outside the fit set may exceed norm 0.8.
    pub fn apply(&self, x: &DataMatrix) -> DataMatrix {
        DataMatrix {
            values: &x.values * self.scale,
        }
    }

    /// Like [`apply`](Self::apply) but checks the expected dimension first.
    pub fn apply_checked(&self, x: &DataMatrix, dims: usize) -> Result<DataMatrix> {
        if !x.is_empty() && x.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: x.dims(),
            });
        }
        Ok(self.apply(x))
    }

    pub fn unapply(&self, x: &DataMatrix) -> DataMatrix {
        DataMatrix {
            values: &x.values / self.scale,
        }
    }
}
