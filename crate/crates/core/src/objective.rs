//! The training objective and its analytic gradient.
//!
//! For a batch of `n` points the cost is
//!
//! ```text
//! C = Σ_i ||x_i - z_i||²  +  Σ_i ||J_i - A_i||_F²  +  α ||Y Yᵀ - n I||₁^ε
//! ```
//!
//! where `A_i = T_i T_iᵀ` is the tangent projector at `x_i` and
//! `||M||₁^ε = Σ_jk sqrt(M_jk² + ε)` is a smooth stand-in for the entrywise
//! 1-norm. The same engine also evaluates the comparison models (no Jacobian
//! term, corrupted inputs, or a contractive penalty on the hidden Jacobian).
//!
//! Gradients are computed by reverse-mode differentiation written out by
//! hand. Per point the Jacobian term costs three `D x d x D` products, which
//! dominates training time; points are processed in fixed-size chunks in
//! parallel and the chunk results are summed in order, so the result does
//! not depend on the number of threads.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::net::{forward_batch, NetworkParams};
use crate::tangent::Projector;

/// Default smoothing constant of the approximate 1-norm.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Default weight of the binarization term.
pub const DEFAULT_ALPHA: f64 = 0.1;

const CHUNK: usize = 16;

/// Which objective terms are active. All on by default; switching terms off
/// is used to check each term's gradient in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask {
    pub recon: bool,
    pub jacobian: bool,
    pub binary: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        Self {
            recon: true,
            jacobian: true,
            binary: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// Diagonal target of `Y Yᵀ`; `None` means the number of points in the batch.
    pub batch_target: Option<usize>,
    pub terms: TermMask,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            batch_target: None,
            terms: TermMask::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Objective value split by term. `jacobian` holds the tangent-matching term,
/// or the contractive penalty for the contractive variant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cost {
    pub total: f64,
    pub recon: f64,
    pub jacobian: f64,
    pub binary: f64,
}

impl Cost {
    fn new(recon: f64, jacobian: f64, binary: f64) -> Self {
        Self {
            total: recon + jacobian + binary,
            recon,
            jacobian,
            binary,
        }
    }
}

/// Gradient blocks, shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dw1: DMatrix<f64>,
    pub dw2: DMatrix<f64>,
    pub db1: DVector<f64>,
    pub db2: DVector<f64>,
}

impl GradientSet {
    pub fn zeros(dims: usize, bits: usize) -> Self {
        Self {
            dw1: DMatrix::zeros(bits, dims),
            dw2: DMatrix::zeros(dims, bits),
            db1: DVector::zeros(bits),
            db2: DVector::zeros(dims),
        }
    }

    /// Same layout as [`NetworkParams::to_vector`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dw1.len() + self.db1.len() + self.db2.len());
        v.extend_from_slice(self.dw1.as_slice());
        v.extend_from_slice(self.dw2.as_slice());
        v.extend_from_slice(self.db1.as_slice());
        v.extend_from_slice(self.db2.as_slice());
        v
    }

    pub fn from_vector(dims: usize, bits: usize, v: &[f64]) -> Self {
        let (w1, rest) = v.split_at(bits * dims);
        let (w2, rest) = rest.split_at(bits * dims);
        let (b1, b2) = rest.split_at(bits);
        Self {
            dw1: DMatrix::from_column_slice(bits, dims, w1),
            dw2: DMatrix::from_column_slice(dims, bits, w2),
            db1: DVector::from_column_slice(b1),
            db2: DVector::from_column_slice(b2),
        }
    }

    /// Blocks in the order W1, W2, b1, b2.
    pub fn blocks(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("W1", self.dw1.as_slice()),
            ("W2", self.dw2.as_slice()),
            ("b1", self.db1.as_slice()),
            ("b2", self.db2.as_slice()),
        ]
    }

    fn add_assign(&mut self, other: &GradientSet) {
        self.dw1 += &other.dw1;
        self.dw2 += &other.dw2;
        self.db1 += &other.db1;
        self.db2 += &other.db2;
    }
}

/// Second term of the objective.
#[derive(Debug, Clone, Copy)]
pub enum Regularizer<'a> {
    None,
    /// Match the network Jacobian to one target per point.
    Tangent(&'a [Projector]),
    /// `λ Σ_i ||J^h_i||_F²` on the input-to-hidden Jacobian.
    Contractive(f64),
}

/// One batch evaluation problem: inputs fed to the network, reconstruction
/// targets, and the regularizer.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub inputs: &'a DataMatrix,
    pub targets: &'a DataMatrix,
    pub regularizer: Regularizer<'a>,
    pub config: &'a ObjectiveConfig,
}

impl<'a> Problem<'a> {
    fn validate(&self, p: &NetworkParams) -> Result<()> {
        self.config.validate()?;
        let (dims, n) = (p.dims(), self.inputs.count());
        if self.inputs.dims() != dims && n > 0 {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.inputs.dims(),
            });
        }
        if self.targets.count() != n || (n > 0 && self.targets.dims() != dims) {
            return Err(invalid("reconstruction targets must have the same shape as the inputs"));
        }
        match self.regularizer {
            Regularizer::Tangent(targets) => {
                if targets.len() != n {
                    return Err(invalid(format!(
                        "expected {n} jacobian targets, got {}",
                        targets.len()
                    )));
                }
                if let Some(bad) = targets.iter().find(|a| a.dims() != dims) {
                    return Err(Error::DimensionMismatch {
                        expected: dims,
                        found: bad.dims(),
                    });
                }
            }
            Regularizer::Contractive(l) if !(l >= 0.0 && l.is_finite()) => {
                return Err(invalid(format!("contractive weight must be >= 0, got {l}")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Value (and optionally gradient) of a batch problem.
pub fn evaluate(p: &NetworkParams, prob: &Problem<'_>, want_grad: bool) -> Result<(Cost, Option<GradientSet>)> {
    prob.validate(p)?;
    let cfg = prob.config;
    let terms = cfg.terms;
    let (dims, bits, n) = (p.dims(), p.bits(), prob.inputs.count());
    if n == 0 {
        return Ok((Cost::default(), want_grad.then(|| GradientSet::zeros(dims, bits))));
    }

    let (y, z) = forward_batch(p, prob.inputs)?;
    let s = y.map(|v| 1.0 - v * v);
    let t = z.map(|v| 1.0 - v * v);

    // output-preactivation and hidden-preactivation adjoints, one column per point
    let mut gc = DMatrix::zeros(dims, n);
    let mut ga = DMatrix::zeros(bits, n);
    let mut direct = GradientSet::zeros(dims, bits);

    let mut recon = 0.0;
    if terms.recon {
        let diff = &z - prob.targets.as_matrix();
        recon = diff.norm_squared();
        if want_grad {
            gc.zip_zip_apply(&diff, &t, |g, d, tt| *g += 2.0 * d * tt);
        }
    }

    let mut binary = 0.0;
    let mut gy_binary = None;
    if terms.binary && cfg.alpha != 0.0 {
        let target = cfg.batch_target.unwrap_or(n) as f64;
        let mut m = &y * y.transpose();
        for k in 0..bits {
            m[(k, k)] -= target;
        }
        let root = m.map(|v| (v * v + cfg.epsilon).sqrt());
        binary = cfg.alpha * root.sum();
        if want_grad {
            let ratio = m.component_div(&root);
            gy_binary = Some(ratio * &y * (2.0 * cfg.alpha));
        }
    }

    let mut jac = 0.0;
    if terms.jacobian {
        match prob.regularizer {
            Regularizer::None => {}
            Regularizer::Tangent(targets) => {
                let part = tangent_term(p, &y, &z, &s, &t, targets, want_grad);
                jac = part.cost;
                if want_grad {
                    gc += part.gc;
                    ga += part.ga;
                    direct.add_assign(&part.grad);
                }
            }
            Regularizer::Contractive(lambda) => {
                // ||J^h||_F² = Σ_k s_k² ||W1_k·||²
                let row_norms: Vec<f64> = p.w1.row_iter().map(|r| r.norm_squared()).collect();
                let mut s2_sum = vec![0.0; bits];
                for i in 0..n {
                    for k in 0..bits {
                        let sk = s[(k, i)];
                        jac += lambda * sk * sk * row_norms[k];
                        s2_sum[k] += sk * sk;
                        if want_grad {
                            ga[(k, i)] += 2.0 * lambda * sk * row_norms[k] * (-2.0 * y[(k, i)] * sk);
                        }
                    }
                }
                if want_grad {
                    for (k, mut row) in direct.dw1.row_iter_mut().enumerate() {
                        row += p.w1.row(k) * (2.0 * lambda * s2_sum[k]);
                    }
                }
            }
        }
    }

    let cost = Cost::new(recon, jac, binary);
    if !want_grad {
        return Ok((cost, None));
    }

    let mut grad = direct;
    grad.dw2 += &gc * y.transpose();
    grad.db2 += gc.column_sum();
    let mut gy = p.w2.transpose() * &gc;
    if let Some(gb) = gy_binary {
        gy += gb;
    }
    ga.zip_zip_apply(&gy, &s, |g, gyv, sv| *g += gyv * sv);
    grad.dw1 += &ga * prob.inputs.as_matrix().transpose();
    grad.db1 += ga.column_sum();
    Ok((cost, Some(grad)))
}

struct TangentPart {
    cost: f64,
    gc: DMatrix<f64>,
    ga: DMatrix<f64>,
    grad: GradientSet,
}

fn tangent_term(
    p: &NetworkParams,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    s: &DMatrix<f64>,
    t: &DMatrix<f64>,
    targets: &[Projector],
    want_grad: bool,
) -> TangentPart {
    let (dims, bits, n) = (p.dims(), p.bits(), y.ncols());
    let w1t = p.w1.transpose();
    let w2t = p.w2.transpose();

    let chunks: Vec<TangentPart> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut part = TangentPart {
                cost: 0.0,
                gc: DMatrix::zeros(dims, hi - lo),
                ga: DMatrix::zeros(bits, hi - lo),
                grad: GradientSet::zeros(dims, bits),
            };
            let mut ws = p.w2.clone();
            for i in lo..hi {
                // M = W2 diag(s) W1, K = diag(t) M, J = Kᵀ; E = K - Aᵀ
                for (k, mut col) in ws.column_iter_mut().enumerate() {
                    col.copy_from(&p.w2.column(k));
                    col *= s[(k, i)];
                }
                let m = &ws * &p.w1;
                let target = targets[i].matrix();
                let mut e = DMatrix::from_fn(dims, dims, |r, q| t[(r, i)] * m[(r, q)] - target[(q, r)]);
                part.cost += e.norm_squared();
                if !want_grad {
                    continue;
                }
                let col = i - lo;
                for r in 0..dims {
                    let u: f64 = e.row(r).dot(&m.row(r));
                    part.gc[(r, col)] += 2.0 * u * (-2.0 * z[(r, i)] * t[(r, i)]);
                }
                // G = 2 diag(t) E, reusing e's storage
                for (r, mut row) in e.row_iter_mut().enumerate() {
                    row *= 2.0 * t[(r, i)];
                }
                let h = &e * &w1t;
                let q = &w2t * &e;
                for k in 0..bits {
                    let sk = s[(k, i)];
                    let gs: f64 = p.w2.column(k).dot(&h.column(k));
                    part.ga[(k, col)] += gs * (-2.0 * y[(k, i)] * sk);
                    part.grad.dw2.column_mut(k).axpy(sk, &h.column(k), 1.0);
                    let mut row = part.grad.dw1.row_mut(k);
                    row += q.row(k) * sk;
                }
            }
            part
        })
        .collect();

    let mut out = TangentPart {
        cost: 0.0,
        gc: DMatrix::zeros(dims, n),
        ga: DMatrix::zeros(bits, n),
        grad: GradientSet::zeros(dims, bits),
    };
    for (c, part) in chunks.into_iter().enumerate() {
        let lo = c * CHUNK;
        out.cost += part.cost;
        if want_grad {
            out.gc.columns_mut(lo, part.gc.ncols()).copy_from(&part.gc);
            out.ga.columns_mut(lo, part.ga.ncols()).copy_from(&part.ga);
            out.grad.add_assign(&part.grad);
        }
    }
    out
}

fn tangent_problem<'a>(batch: &'a DataMatrix, tangents: &'a [Projector], cfg: &'a ObjectiveConfig) -> Problem<'a> {
    Problem {
        inputs: batch,
        targets: batch,
        regularizer: Regularizer::Tangent(tangents),
        config: cfg,
    }
}

/// Full objective with the tangent-matching term.
pub fn objective(p: &NetworkParams, batch: &DataMatrix, tangents: &[Projector], cfg: &ObjectiveConfig) -> Result<Cost> {
    Ok(evaluate(p, &tangent_problem(batch, tangents, cfg), false)?.0)
}

pub fn gradients(
    p: &NetworkParams,
    batch: &DataMatrix,
    tangents: &[Projector],
    cfg: &ObjectiveConfig,
) -> Result<GradientSet> {
    let (_, g) = evaluate(p, &tangent_problem(batch, tangents, cfg), true)?;
    Ok(g.expect("gradient requested"))
}

/// Maximum relative discrepancy per parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockErrors {
    pub w1: f64,
    pub w2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl BlockErrors {
    pub fn max(&self) -> f64 {
        self.w1.max(self.w2).max(self.b1).max(self.b2)
    }
}

/// Central finite-difference gradient of a scalar function of the parameters.
pub fn fd_gradient(
    p: &NetworkParams,
    h: f64,
    mut value: impl FnMut(&NetworkParams) -> Result<f64>,
) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let theta = p.to_vector();
    let mut probe = theta.clone();
    let mut g = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = value(&p.with_vector(&probe))?;
        probe[i] = theta[i] - h;
        let down = value(&p.with_vector(&probe))?;
        probe[i] = theta[i];
        g[i] = (up - down) / (2.0 * h);
    }
    Ok(GradientSet::from_vector(p.dims(), p.bits(), &g))
}

/// `max |analytic - fd| / max(1, |fd|)` for each block.
pub fn compare_gradients(analytic: &GradientSet, fd: &GradientSet) -> BlockErrors {
    let err = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let e = (x - y).abs() / y.abs().max(1.0);
                if e.is_nan() {
                    f64::INFINITY
                } else {
                    e
                }
            })
            .fold(0.0, f64::max)
    };
    BlockErrors {
        w1: err(analytic.dw1.as_slice(), fd.dw1.as_slice()),
        w2: err(analytic.dw2.as_slice(), fd.dw2.as_slice()),
        b1: err(analytic.db1.as_slice(), fd.db1.as_slice()),
        b2: err(analytic.db2.as_slice(), fd.db2.as_slice()),
    }
}

/// Checks the analytic gradient of `prob` against central differences.
pub fn grad_check_problem(p: &NetworkParams, prob: &Problem<'_>, h: f64) -> Result<BlockErrors> {
    let (_, analytic) = evaluate(p, prob, true)?;
    let fd = fd_gradient(p, h, |q| Ok(evaluate(q, prob, false)?.0.total))?;
    Ok(compare_gradients(&analytic.expect("gradient requested"), &fd))
}

/// Largest relative gradient error of the full objective over all parameters.
pub fn grad_check(
    p: &NetworkParams,
    batch: &DataMatrix,
    tangents: &[Projector],
    cfg: &ObjectiveConfig,
    h: f64,
) -> Result<f64> {
    Ok(grad_check_problem(p, &tangent_problem(batch, tangents, cfg), h)?.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangent::TangentBasis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    struct Instance {
        params: NetworkParams,
        batch: DataMatrix,
        targets: Vec<Projector>,
    }

    fn instance(dims: usize, bits: usize, n: usize, seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |r, c, sc: f64| DMatrix::from_fn(r, c, |_, _| sc * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let params = NetworkParams::new(
            g(bits, dims, 0.6),
            g(dims, bits, 0.6),
            g(bits, 1, 0.2).column(0).into_owned(),
            g(dims, 1, 0.2).column(0).into_owned(),
            1.0,
        )
        .unwrap();
        let u = Uniform::new(-0.8, 0.8).unwrap();
        let batch = DataMatrix::new(DMatrix::from_fn(dims, n, |_, _| u.sample(&mut rng))).unwrap();
        let targets = (0..n)
            .map(|i| {
                let q = DMatrix::from_fn(dims, 2, |_, _| StandardNormal.sample(&mut rng)).qr().q();
                Projector::from_tangent(&TangentBasis::new(i, q).unwrap())
            })
            .collect();
        Instance { params, batch, targets }
    }

    // Straight transcription of the cost as nested scalar loops.
    fn naive_cost(inst: &Instance, cfg: &ObjectiveConfig) -> (f64, f64, f64) {
        let p = &inst.params;
        let (dd, d, n) = (p.dims(), p.bits(), inst.batch.count());
        let mut ys = vec![vec![0.0; d]; n];
        let (mut recon, mut jac) = (0.0, 0.0);
        for i in 0..n {
            let x = inst.batch.column_slice(i);
            let y: Vec<f64> = (0..d)
                .map(|k| ((0..dd).map(|m| p.w1[(k, m)] * x[m]).sum::<f64>() + p.b1[k]).tanh())
                .collect();
            let z: Vec<f64> = (0..dd)
                .map(|j| ((0..d).map(|k| p.w2[(j, k)] * y[k]).sum::<f64>() + p.b2[j]).tanh())
                .collect();
            for j in 0..dd {
                recon += (x[j] - z[j]).powi(2);
            }
            let a = inst.targets[i].matrix();
            for r in 0..dd {
                for c in 0..dd {
                    let mut jrc = 0.0;
                    for k in 0..d {
                        jrc += p.w1[(k, r)] * p.w2[(c, k)] * (1.0 - y[k] * y[k]);
                    }
                    jrc *= 1.0 - z[c] * z[c];
                    jac += (jrc - a[(r, c)]).powi(2);
                }
            }
            ys[i] = y;
        }
        let mut bin = 0.0;
        for a in 0..d {
            for b in 0..d {
                let mut m: f64 = (0..n).map(|i| ys[i][a] * ys[i][b]).sum();
                if a == b {
                    m -= n as f64;
                }
                bin += (m * m + cfg.epsilon).sqrt();
            }
        }
        (recon, jac, cfg.alpha * bin)
    }

    #[test]
    fn objective_matches_naive_loops() {
        for seed in 0..4 {
            let inst = instance(6, 3, 7, seed);
            let cfg = ObjectiveConfig::default();
            let c = objective(&inst.params, &inst.batch, &inst.targets, &cfg).unwrap();
            let (r, j, b) = naive_cost(&inst, &cfg);
            let naive_total = r + j + b;
            assert!((c.total - naive_total).abs() <= 1e-10 * naive_total.abs());
            assert!((c.recon - r).abs() <= 1e-10 * r.max(1e-300));
            assert!((c.jacobian - j).abs() <= 1e-10 * j);
            assert!((c.binary - b).abs() <= 1e-10 * b);
            assert_eq!(c.total, c.recon + c.jacobian + c.binary);
        }
    }

    #[test]
    fn zero_alpha_drops_binary_term() {
        let inst = instance(5, 2, 4, 1);
        let c = objective(&inst.params, &inst.batch, &inst.targets, &ObjectiveConfig::with_alpha(0.0)).unwrap();
        assert_eq!(c.binary, 0.0);
        assert_eq!(c.total, c.recon + c.jacobian);
    }

    #[test]
    fn closed_form_at_zero() {
        let (dims, bits) = (3, 4);
        let p = NetworkParams::zeros(dims, bits);
        let x = DataMatrix::new(DMatrix::zeros(dims, 1)).unwrap();
        let a = vec![Projector::from_matrix(DMatrix::zeros(dims, dims)).unwrap()];
        let cfg = ObjectiveConfig::default();
        let c = objective(&p, &x, &a, &cfg).unwrap();
        let d = bits as f64;
        let expected = cfg.alpha * (d * (1.0 + cfg.epsilon).sqrt() + d * (d - 1.0) * cfg.epsilon.sqrt());
        assert_eq!(c.recon, 0.0);
        assert_eq!(c.jacobian, 0.0);
        assert!((c.binary - expected).abs() < 1e-14);
    }

    #[test]
    fn projector_count_mismatch() {
        let inst = instance(4, 2, 3, 0);
        let err = objective(&inst.params, &inst.batch, &inst.targets[..2], &ObjectiveConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let inst = instance(8, 4, 5, 42);
        let err = grad_check(&inst.params, &inst.batch, &inst.targets, &ObjectiveConfig::default(), 1e-6).unwrap();
        assert!(err < 1e-6, "max relative error {err:e}");
    }

    #[test]
    fn per_term_gradients_match() {
        let inst = instance(7, 3, 4, 8);
        for (recon, jacobian, binary) in [(true, false, false), (false, true, false), (false, false, true), (false, true, true)] {
            let cfg = ObjectiveConfig {
                terms: TermMask { recon, jacobian, binary },
                ..ObjectiveConfig::default()
            };
            let err = grad_check(&inst.params, &inst.batch, &inst.targets, &cfg, 1e-6).unwrap();
            assert!(err < 1e-6, "terms ({recon},{jacobian},{binary}): {err:e}");
        }
    }

    #[test]
    fn nonsymmetric_dense_targets_use_fixed_orientation() {
        let mut inst = instance(5, 3, 3, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        inst.targets = (0..3)
            .map(|_| Projector::from_matrix(DMatrix::from_fn(5, 5, |_, _| StandardNormal.sample(&mut rng))).unwrap())
            .collect();
        let cfg = ObjectiveConfig::default();
        let c = objective(&inst.params, &inst.batch, &inst.targets, &cfg).unwrap();
        let (_, j, _) = naive_cost(&inst, &cfg);
        assert!((c.jacobian - j).abs() <= 1e-10 * j);
        assert!(grad_check(&inst.params, &inst.batch, &inst.targets, &cfg, 1e-6).unwrap() < 1e-6);
    }

    #[test]
    fn detects_injected_fault() {
        let inst = instance(8, 4, 5, 3);
        let cfg = ObjectiveConfig::default();
        let prob = tangent_problem(&inst.batch, &inst.targets, &cfg);
        let (_, g) = evaluate(&inst.params, &prob, true).unwrap();
        let mut g = g.unwrap();
        g.dw1[(1, 2)] += 1e-3;
        let fd = fd_gradient(&inst.params, 1e-6, |q| Ok(evaluate(q, &prob, false)?.0.total)).unwrap();
        assert!(compare_gradients(&g, &fd).max() > 1e-4);
    }

    #[test]
    fn zero_network_check_is_finite() {
        let p = NetworkParams::zeros(4, 2);
        let x = DataMatrix::new(DMatrix::from_element(4, 3, 0.1)).unwrap();
        let a: Vec<Projector> = (0..3).map(|_| Projector::from_matrix(DMatrix::identity(4, 4)).unwrap()).collect();
        let err = grad_check(&p, &x, &a, &ObjectiveConfig::default(), 1e-6).unwrap();
        assert!(err.is_finite());
        assert!(err < 1e-6);
    }

    #[test]
    fn stationary_when_reconstruction_and_jacobian_are_exact() {
        // x = 0 with zero biases is a fixed point (z = 0 = x); targets set to the current Jacobian.
        let inst = instance(5, 3, 1, 6);
        let mut p = inst.params.clone();
        p.b1.fill(0.0);
        p.b2.fill(0.0);
        let x = DataMatrix::new(DMatrix::zeros(5, 1)).unwrap();
        let j = crate::net::jacobian(&p, &DVector::zeros(5)).unwrap();
        let a = vec![Projector::from_matrix(j).unwrap()];
        let g = gradients(&p, &x, &a, &ObjectiveConfig::with_alpha(0.0)).unwrap();
        assert!(g.to_vector().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn batch_target_overrides_column_count() {
        let inst = instance(4, 2, 3, 5);
        let mut cfg = ObjectiveConfig::default();
        let a = objective(&inst.params, &inst.batch, &inst.targets, &cfg).unwrap();
        cfg.batch_target = Some(3);
        assert_eq!(objective(&inst.params, &inst.batch, &inst.targets, &cfg).unwrap(), a);
        cfg.batch_target = Some(1000);
        assert!(objective(&inst.params, &inst.batch, &inst.targets, &cfg).unwrap().binary > a.binary);
    }
}
