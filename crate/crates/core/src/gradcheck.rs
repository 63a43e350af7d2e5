//! Finite-difference checks of the analytic gradients on random instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{invalid, Result};
use crate::net::NetworkParams;
use crate::objective::{compare_gradients, evaluate, fd_gradient, BlockErrors, ObjectiveConfig, Problem, Regularizer, TermMask};
use crate::tangent::Projector;
use crate::variants::{corrupt_matrix, Method};

/// Corruption level used for the frozen denoising mask.
const CHECK_CORRUPTION: f64 = 0.3;

/// A random network, batch, frozen corrupted batch, and Jacobian targets.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub params: NetworkParams,
    pub inputs: DataMatrix,
    pub corrupted: DataMatrix,
    pub targets: Vec<Projector>,
}

impl GradInstance {
    pub fn random(dims: usize, bits: usize, points: usize, seed: u64) -> Result<Self> {
        if dims == 0 || bits == 0 || points == 0 {
            return Err(invalid("gradient check needs positive dims, bits, and points"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |r: usize, c: usize, s: f64, rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(r, c, |_, _| s * rng.sample::<f64, _>(StandardNormal))
        };
        let params = NetworkParams::new(
            normal(bits, dims, 0.5, &mut rng),
            normal(dims, bits, 0.5, &mut rng),
            DVector::from_fn(bits, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)),
            DVector::from_fn(dims, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)),
            1.0,
        )?;
        let inputs = DataMatrix::new(DMatrix::from_fn(dims, points, |_, _| rng.random_range(-0.5..0.5)))?;
        let corrupted = corrupt_matrix(&inputs, CHECK_CORRUPTION, &mut rng);
        let targets = (0..points)
            .map(|_| {
                let rank = rng.random_range(1..=dims);
                let g = normal(dims, rank, 1.0, &mut rng);
                let q = g.qr().q();
                Projector::from_matrix(&q * q.transpose())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            inputs,
            corrupted,
            targets,
        })
    }
}

/// Errors for one term (or `total`) of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermCheck {
    pub term: &'static str,
    pub errors: BlockErrors,
}

fn only(recon: bool, jacobian: bool, binary: bool) -> TermMask {
    TermMask { recon, jacobian, binary }
}

/// Checks every term of `method` separately and then the total.
/// `fault` is added to one analytic entry to confirm the check can fail.
pub fn check_method(inst: &GradInstance, method: Method, base: &ObjectiveConfig, h: f64, fault: f64) -> Result<Vec<TermCheck>> {
    method.validate()?;
    let (inputs, regularizer, second) = match method {
        Method::AutoJacoBin => (&inst.inputs, Regularizer::Tangent(&inst.targets), Some("jacobian")),
        Method::AutoBin => (&inst.inputs, Regularizer::None, None),
        Method::DAutoBin { .. } => (&inst.corrupted, Regularizer::None, None),
        Method::CAutoBin { lambda_c } => (&inst.inputs, Regularizer::Contractive(lambda_c), Some("contractive")),
        Method::Lsh => return Err(invalid("LSH has no trainable objective")),
    };
    let mut terms = vec![("recon", only(true, false, false))];
    if let Some(name) = second {
        terms.push((name, only(false, true, false)));
    }
    terms.push(("binary", only(false, false, true)));
    terms.push(("total", TermMask::default()));

    terms
        .into_iter()
        .map(|(term, mask)| {
            let cfg = ObjectiveConfig { terms: mask, ..*base };
            let prob = Problem {
                inputs,
                targets: &inst.inputs,
                regularizer,
                config: &cfg,
            };
            let mut analytic = evaluate(&inst.params, &prob, true)?.1.expect("gradient requested");
            analytic.dw1[(0, 0)] += fault;
            let fd = fd_gradient(&inst.params, h, |q| Ok(evaluate(q, &prob, false)?.0.total))?;
            Ok(TermCheck {
                term,
                errors: compare_gradients(&analytic, &fd),
            })
        })
        .collect()
}
