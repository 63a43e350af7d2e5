//! Comparison models trained with the same machinery.
//!
//! * AutoBin: reconstruction + binarization, no Jacobian term.
//! * DAutoBin: AutoBin fed with masked-out inputs, reconstructing the clean ones.
//! * CAutoBin: AutoBin plus a contractive penalty on the input-to-hidden Jacobian.
//! * LSH: random Gaussian projection, no training.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::net::NetworkParams;
use crate::objective::{evaluate, Cost, GradientSet, ObjectiveConfig, Problem, Regularizer};

/// Default contractive weight.
pub const DEFAULT_LAMBDA_C: f64 = 0.01;
/// Default binarization weight for the contractive variant.
pub const DEFAULT_CAUTOBIN_ALPHA: f64 = 0.01;

/// Which model to train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    AutoJacoBin,
    AutoBin,
    /// Each input entry is zeroed with probability `corruption_t`.
    DAutoBin { corruption_t: f64 },
    CAutoBin { lambda_c: f64 },
    Lsh,
}

impl Method {
    /// Whether the method needs per-point tangent estimates.
    pub fn needs_tangents(&self) -> bool {
        matches!(self, Method::AutoJacoBin)
    }

    pub fn is_trained(&self) -> bool {
        !matches!(self, Method::Lsh)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::AutoJacoBin => "auto-jacobin",
            Method::AutoBin => "autobin",
            Method::DAutoBin { .. } => "dautobin",
            Method::CAutoBin { .. } => "cautobin",
            Method::Lsh => "lsh",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::DAutoBin { corruption_t } if !(0.0..=1.0).contains(&corruption_t) => {
                Err(invalid(format!("corruption threshold must be in [0, 1], got {corruption_t}")))
            }
            Method::CAutoBin { lambda_c } if !(lambda_c >= 0.0 && lambda_c.is_finite()) => {
                Err(invalid(format!("contractive weight must be >= 0, got {lambda_c}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a method name with default variant parameters
/// (`t = 0.1` for dautobin, `λ_c = 0.01` for cautobin).
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto-jacobin" | "autojacobin" | "jacobin" => Ok(Method::AutoJacoBin),
            "autobin" => Ok(Method::AutoBin),
            "dautobin" => Ok(Method::DAutoBin { corruption_t: 0.1 }),
            "cautobin" => Ok(Method::CAutoBin {
                lambda_c: DEFAULT_LAMBDA_C,
            }),
            "lsh" => Ok(Method::Lsh),
            other => Err(invalid(format!("unknown method {other:?}"))),
        }
    }
}

fn unpack(r: Result<(Cost, Option<GradientSet>)>) -> Result<Cost> {
    Ok(r?.0)
}

fn grad_of(r: Result<(Cost, Option<GradientSet>)>) -> Result<GradientSet> {
    Ok(r?.1.expect("gradient requested"))
}

pub fn autobin_problem<'a>(batch: &'a DataMatrix, cfg: &'a ObjectiveConfig) -> Problem<'a> {
    Problem {
        inputs: batch,
        targets: batch,
        regularizer: Regularizer::None,
        config: cfg,
    }
}

pub fn dautobin_problem<'a>(clean: &'a DataMatrix, corrupted: &'a DataMatrix, cfg: &'a ObjectiveConfig) -> Problem<'a> {
    Problem {
        inputs: corrupted,
        targets: clean,
        regularizer: Regularizer::None,
        config: cfg,
    }
}

pub fn cautobin_problem<'a>(batch: &'a DataMatrix, lambda_c: f64, cfg: &'a ObjectiveConfig) -> Problem<'a> {
    Problem {
        inputs: batch,
        targets: batch,
        regularizer: Regularizer::Contractive(lambda_c),
        config: cfg,
    }
}

/// `Σ ||x_i - z_i||² + α ||Y Yᵀ - n I||₁^ε`.
pub fn autobin_objective(p: &NetworkParams, batch: &DataMatrix, cfg: &ObjectiveConfig) -> Result<Cost> {
    unpack(evaluate(p, &autobin_problem(batch, cfg), false))
}

pub fn autobin_gradients(p: &NetworkParams, batch: &DataMatrix, cfg: &ObjectiveConfig) -> Result<GradientSet> {
    grad_of(evaluate(p, &autobin_problem(batch, cfg), true))
}

/// Reconstructs the clean batch from the corrupted one; the binary term uses
/// the hidden codes of the corrupted inputs.
pub fn dautobin_objective(
    p: &NetworkParams,
    clean: &DataMatrix,
    corrupted: &DataMatrix,
    cfg: &ObjectiveConfig,
) -> Result<Cost> {
    check_same_shape(clean, corrupted)?;
    unpack(evaluate(p, &dautobin_problem(clean, corrupted, cfg), false))
}

pub fn dautobin_gradients(
    p: &NetworkParams,
    clean: &DataMatrix,
    corrupted: &DataMatrix,
    cfg: &ObjectiveConfig,
) -> Result<GradientSet> {
    check_same_shape(clean, corrupted)?;
    grad_of(evaluate(p, &dautobin_problem(clean, corrupted, cfg), true))
}

/// AutoBin plus `λ_c Σ_i ||J^h_i||_F²`, with `J^h(i, k) = W1(k, i)(1 - y_k²)`.
pub fn cautobin_objective(p: &NetworkParams, batch: &DataMatrix, lambda_c: f64, cfg: &ObjectiveConfig) -> Result<Cost> {
    unpack(evaluate(p, &cautobin_problem(batch, lambda_c, cfg), false))
}

pub fn cautobin_gradients(
    p: &NetworkParams,
    batch: &DataMatrix,
    lambda_c: f64,
    cfg: &ObjectiveConfig,
) -> Result<GradientSet> {
    grad_of(evaluate(p, &cautobin_problem(batch, lambda_c, cfg), true))
}

fn check_same_shape(a: &DataMatrix, b: &DataMatrix) -> Result<()> {
    if a.dims() != b.dims() || a.count() != b.count() {
        return Err(invalid(format!(
            "clean batch is {}x{} but corrupted batch is {}x{}",
            a.dims(),
            a.count(),
            b.dims(),
            b.count()
        )));
    }
    Ok(())
}

/// Zeroes each entry independently: draw `r` uniform in `[0, 1)`, zero iff `r <= t`.
pub fn corrupt_mask(x: &[f64], t: f64, rng: &mut impl Rng) -> Vec<f64> {
    x.iter()
        .map(|&v| if rng.random::<f64>() <= t { 0.0 } else { v })
        .collect()
}

/// Corrupts every column of a matrix, column by column.
pub fn corrupt_matrix(x: &DataMatrix, t: f64, rng: &mut impl Rng) -> DataMatrix {
    let mut m = x.as_matrix().clone();
    for v in m.iter_mut() {
        if rng.random::<f64>() <= t {
            *v = 0.0;
        }
    }
    DataMatrix::new(m).expect("masking keeps entries finite")
}

/// Random-projection hashing: `W1` has i.i.d. standard normal entries, all
/// other parameters are zero. Codes are `sign(W1 x)`.
pub fn lsh_generate(dims: usize, bits: usize, seed: u64) -> Result<NetworkParams> {
    if bits == 0 || dims == 0 {
        return Err(invalid("LSH needs at least one bit and one input dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // filled row by row so row k depends only on the seed and k
    let mut w1 = DMatrix::zeros(bits, dims);
    for k in 0..bits {
        for i in 0..dims {
            w1[(k, i)] = rng.sample(StandardNormal);
        }
    }
    Ok(NetworkParams {
        w1,
        w2: DMatrix::zeros(dims, bits),
        b1: DVector::zeros(bits),
        b2: DVector::zeros(dims),
        scale: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::encode;
    use crate::objective::{grad_check_problem, objective, TermMask};
    use crate::tangent::Projector;
    use rand_distr::{Distribution, Uniform};

    fn random_setup(dims: usize, bits: usize, n: usize, seed: u64) -> (NetworkParams, DataMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |r, c, sc: f64| DMatrix::from_fn(r, c, |_, _| sc * rng.sample::<f64, _>(StandardNormal));
        let p = NetworkParams::new(
            g(bits, dims, 0.6),
            g(dims, bits, 0.6),
            g(bits, 1, 0.2).column(0).into_owned(),
            g(dims, 1, 0.2).column(0).into_owned(),
            1.0,
        )
        .unwrap();
        let u = Uniform::new(-0.8, 0.8).unwrap();
        let x = DataMatrix::new(DMatrix::from_fn(dims, n, |_, _| u.sample(&mut rng))).unwrap();
        (p, x)
    }

    #[test]
    fn autobin_is_jacobin_without_jacobian() {
        let (p, x) = random_setup(6, 3, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<Projector> = (0..5)
            .map(|_| Projector::from_matrix(DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>())).unwrap())
            .collect();
        let cfg = ObjectiveConfig::default();
        let full = objective(&p, &x, &a, &cfg).unwrap();
        let auto = autobin_objective(&p, &x, &cfg).unwrap();
        assert!((auto.total - (full.total - full.jacobian)).abs() < 1e-10 * full.total);
    }

    #[test]
    fn autobin_alpha_zero_is_plain_reconstruction() {
        let (p, x) = random_setup(5, 2, 4, 3);
        let c = autobin_objective(&p, &x, &ObjectiveConfig::with_alpha(0.0)).unwrap();
        let (_, z) = crate::net::forward_batch(&p, &x).unwrap();
        assert!((c.total - (z - x.as_matrix()).norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn variant_gradients_match_finite_differences() {
        let (p, x) = random_setup(8, 4, 5, 17);
        let cfg = ObjectiveConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy = corrupt_matrix(&x, 0.2, &mut rng);
        let checks = [
            ("autobin", grad_check_problem(&p, &autobin_problem(&x, &cfg), 1e-6).unwrap()),
            ("dautobin", grad_check_problem(&p, &dautobin_problem(&x, &noisy, &cfg), 1e-6).unwrap()),
            ("cautobin", grad_check_problem(&p, &cautobin_problem(&x, 0.5, &cfg), 1e-6).unwrap()),
        ];
        for (name, e) in checks {
            assert!(e.max() < 1e-6, "{name}: {e:?}");
        }
        let only_contractive = ObjectiveConfig {
            terms: TermMask {
                recon: false,
                jacobian: true,
                binary: false,
            },
            ..cfg
        };
        let e = grad_check_problem(&p, &cautobin_problem(&x, 0.5, &only_contractive), 1e-6).unwrap();
        assert!(e.max() < 1e-6);
    }

    #[test]
    fn degenerate_parameters_reduce_to_autobin() {
        let (p, x) = random_setup(5, 3, 6, 9);
        let cfg = ObjectiveConfig::default();
        let auto = autobin_objective(&p, &x, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let untouched = corrupt_matrix(&x, 0.0, &mut rng);
        assert_eq!(dautobin_objective(&p, &x, &untouched, &cfg).unwrap(), auto);
        assert_eq!(cautobin_objective(&p, &x, 0.0, &cfg).unwrap(), auto);
        assert_eq!(
            autobin_gradients(&p, &x, &cfg).unwrap(),
            cautobin_gradients(&p, &x, 0.0, &cfg).unwrap()
        );
    }

    #[test]
    fn closed_forms_at_zero_params() {
        let (_, x) = random_setup(4, 2, 3, 5);
        let p = NetworkParams::zeros(4, 2);
        let cfg = ObjectiveConfig::default();
        let zero_in = DataMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let d = dautobin_objective(&p, &x, &zero_in, &cfg).unwrap();
        assert!((d.recon - x.as_matrix().norm_squared()).abs() < 1e-14);

        let c = cautobin_objective(&p, &x, 0.3, &cfg).unwrap();
        assert_eq!(c.jacobian, 0.0);
        let n = 3.0;
        let bin = cfg.alpha * (2.0 * (n * n + cfg.epsilon).sqrt() + 2.0 * cfg.epsilon.sqrt());
        assert!((c.total - (x.as_matrix().norm_squared() + bin)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (p, x) = random_setup(4, 2, 3, 5);
        let other = DataMatrix::new(DMatrix::zeros(4, 2)).unwrap();
        assert!(dautobin_objective(&p, &x, &other, &ObjectiveConfig::default()).is_err());
    }

    #[test]
    fn corruption_extremes_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = vec![1.5; 1000];
        assert_eq!(corrupt_mask(&x, 0.0, &mut rng), x);
        assert!(corrupt_mask(&x, 1.0, &mut rng).iter().all(|&v| v == 0.0));
        let big = vec![1.0; 100_000];
        let zeros = corrupt_mask(&big, 0.2, &mut rng).iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 1e5;
        assert!((frac - 0.2).abs() < 0.01, "zero fraction {frac}");
    }

    #[test]
    fn lsh_is_deterministic_and_scale_invariant() {
        let a = lsh_generate(16, 8, 7).unwrap();
        assert_eq!(a, lsh_generate(16, 8, 7).unwrap());
        assert_ne!(a, lsh_generate(16, 8, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DataMatrix::new(DMatrix::from_fn(16, 20, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap();
        let scaled = DataMatrix::new(x.as_matrix() * 3.7).unwrap();
        assert_eq!(encode(&a, &x, false).unwrap(), encode(&a, &scaled, false).unwrap());
    }

    #[test]
    fn lsh_bit_disagreement_tracks_angle() {
        let u = [1.0, 0.0, 0.0];
        let angle: f64 = 1.1;
        let v = [angle.cos(), angle.sin(), 0.0];
        let x = DataMatrix::from_points(&[u, v]).unwrap();
        let runs = 10_000;
        let mut disagree = 0;
        for seed in 0..runs {
            let p = lsh_generate(3, 1, seed).unwrap();
            let c = encode(&p, &x, false).unwrap();
            if c.bit(0, 0) != c.bit(1, 0) {
                disagree += 1;
            }
        }
        let frac = disagree as f64 / runs as f64;
        assert!((frac - angle / std::f64::consts::PI).abs() < 0.02, "{frac}");
    }

    #[test]
    fn method_parsing() {
        assert_eq!("lsh".parse::<Method>().unwrap(), Method::Lsh);
        assert_eq!("Auto-JacoBin".parse::<Method>().unwrap(), Method::AutoJacoBin);
        assert!("itq".parse::<Method>().is_err());
        assert!(Method::DAutoBin { corruption_t: 1.5 }.validate().is_err());
        assert!(Method::AutoJacoBin.needs_tangents());
        assert!(!Method::Lsh.is_trained());
    }
}
