//! Synthetic datasets: the 2-simplex in R³ and smooth curved manifolds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{invalid, Result};

/// `n` points uniform on `{x₁ + x₂ + x₃ = 1, xᵢ > 0}`.
pub fn simplex(n: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        // normalized exponentials are uniform on the simplex
        let e: [f64; 3] = [rng.sample(Exp1), rng.sample(Exp1), rng.sample(Exp1)];
        let s: f64 = e.iter().sum();
        data.extend(e.iter().map(|v| v / s));
    }
    DataMatrix::from_column_major(3, n, data).expect("simplex points are finite")
}

/// Shape of a [`CurvedManifold`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSpec {
    pub intrinsic: usize,
    pub ambient: usize,
    /// Number of sinusoidal features bending the embedding.
    pub features: usize,
    /// Frequency scale of the bends.
    pub curvature: f64,
    /// Standard deviation of isotropic ambient noise.
    pub noise: f64,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        Self {
            intrinsic: 8,
            ambient: 64,
            features: 32,
            curvature: 1.5,
            noise: 0.01,
        }
    }
}

/// `x = A u + B sin(Ω u) + noise` for `u` uniform in `[-1, 1]^m`. Both maps
/// are odd, so the data is centred at the origin in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvedManifold {
    spec: ManifoldSpec,
    linear: DMatrix<f64>,
    bend: DMatrix<f64>,
    freq: DMatrix<f64>,
}

impl CurvedManifold {
    pub fn new(spec: ManifoldSpec, seed: u64) -> Result<Self> {
        if spec.intrinsic == 0 || spec.ambient < spec.intrinsic {
            return Err(invalid("manifold needs 0 < intrinsic <= ambient dimensions"));
        }
        if !(spec.noise >= 0.0 && spec.curvature >= 0.0) {
            return Err(invalid("noise and curvature must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let (m, dd, f) = (spec.intrinsic, spec.ambient, spec.features);
        let linear = normal(dd, m, 1.0 / (dd as f64).sqrt());
        let bend = normal(dd, f, 1.0 / (dd as f64).sqrt());
        let freq = normal(f, m, spec.curvature);
        Ok(Self { spec, linear, bend, freq })
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    /// Noise-free point at latent coordinates `u`.
    pub fn embed(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.linear * u + &self.bend * (&self.freq * u).map(f64::sin)
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> DataMatrix {
        let dd = self.spec.ambient;
        let mut out = DMatrix::zeros(dd, n);
        for j in 0..n {
            let u = DVector::from_fn(self.spec.intrinsic, |_, _| rng.random_range(-1.0..=1.0));
            let mut x = self.embed(&u);
            for v in x.iter_mut() {
                *v += self.spec.noise * rng.sample::<f64, _>(StandardNormal);
            }
            out.set_column(j, &x);
        }
        DataMatrix::new(out).expect("manifold samples are finite")
    }
}

/// Base, query, and training sets drawn independently from one manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSplit {
    pub base: DataMatrix,
    pub queries: DataMatrix,
    pub train: DataMatrix,
}

pub fn manifold_split(spec: ManifoldSpec, base: usize, queries: usize, train: usize, seed: u64) -> Result<RetrievalSplit> {
    let m = CurvedManifold::new(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    Ok(RetrievalSplit {
        base: m.sample(base, &mut rng),
        queries: m.sample(queries, &mut rng),
        train: m.sample(train, &mut rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_points_lie_on_the_simplex() {
        let x = simplex(500, 3);
        for j in 0..x.count() {
            let c = x.column_slice(j);
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(c.iter().all(|&v| v > 0.0));
        }
        assert_eq!(x, simplex(500, 3));
    }

    #[test]
    fn simplex_is_uniform() {
        // marginal of a uniform 2-simplex: P(x₁ < 1/2) = 3/4
        let x = simplex(20000, 4);
        let frac = (0..x.count()).filter(|&j| x.column_slice(j)[0] < 0.5).count() as f64 / 20000.0;
        assert!((frac - 0.75).abs() < 0.01);
    }

    #[test]
    fn manifold_is_centred_and_low_dimensional() {
        let spec = ManifoldSpec {
            noise: 0.0,
            ..ManifoldSpec::default()
        };
        let split = manifold_split(spec, 4000, 10, 10, 5).unwrap();
        let x = split.base.as_matrix();
        let mean = x.column_mean();
        let spread = x.column_iter().map(|c| c.norm()).sum::<f64>() / 4000.0;
        assert!(mean.norm() < 0.1 * spread);

        // local neighbourhoods are close to 8-dimensional
        let m = CurvedManifold::new(spec, 5).unwrap();
        let u = DVector::from_element(8, 0.2);
        let h = 1e-6;
        let mut jac = DMatrix::zeros(64, 8);
        for k in 0..8 {
            let mut up = u.clone();
            up[k] += h;
            jac.set_column(k, &((m.embed(&up) - m.embed(&u)) / h));
        }
        let sv = jac.singular_values();
        assert!(sv.iter().all(|&s| s > 1e-3));
    }
}
