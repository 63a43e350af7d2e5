//! Mini-batch steepest descent with a Wolfe line search.
//!
//! Randomness comes from one ChaCha8 stream seeded by [`TrainConfig::seed`],
//! consumed in this order: the initial rotation, then for each epoch the
//! batch shuffle followed by (denoising variant only) the corruption draws.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::linesearch::{wolfe_step, LineSearchOutcome, WolfeConfig};
use crate::net::NetworkParams;
use crate::objective::{evaluate, Cost, ObjectiveConfig, Problem, Regularizer, DEFAULT_ALPHA, DEFAULT_EPSILON};
use crate::tangent::Projector;
use crate::variants::{corrupt_matrix, lsh_generate, Method};

/// Halvings of the initial step tried when every trial step is non-finite.
const LINE_SEARCH_RETRIES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub bits: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Overrides `epochs × batches` when set.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub method: Method,
    pub wolfe: WolfeConfig,
    /// Also evaluate the full training objective at init and after each epoch.
    pub track_full_cost: bool,
}

impl TrainConfig {
    pub fn new(bits: usize) -> Self {
        Self {
            bits,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            epochs: 5,
            batch_size: 1000,
            max_iterations: None,
            seed: 0,
            method: Method::AutoJacoBin,
            wolfe: WolfeConfig::default(),
            track_full_cost: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bits == 0 {
            return Err(invalid("bits must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.batch_size > n {
            return Err(invalid(format!(
                "batch size {} exceeds the {n} training points",
                self.batch_size
            )));
        }
        self.method.validate()?;
        self.wolfe.validate()?;
        self.objective().validate()
    }

    fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            ..ObjectiveConfig::default()
        }
    }

    /// Number of mini-batches per epoch.
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_iterations(&self, n: usize) -> usize {
        self.max_iterations
            .unwrap_or(self.epochs * self.batches_per_epoch(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// 1-based.
    pub iteration: usize,
    /// Batch objective after the step.
    pub cost: Cost,
    pub step: f64,
    pub evals: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    /// Full training objective; entry 0 is at initialization, entry `e` after
    /// epoch `e`. Empty unless requested.
    pub epoch_costs: Vec<Cost>,
    /// The data had fewer than `bits` principal directions.
    pub rank_deficient: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub params: NetworkParams,
    pub rank_deficient: bool,
}

/// PCA projection times a random rotation: `W1 = R P`, `W2 = W1ᵀ`,
/// `b1 = -W1 μ`, `b2 = μ`.
pub fn init_params(x: &DataMatrix, bits: usize, seed: u64) -> Result<Initialization> {
    init_with_rng(x, bits, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn init_with_rng(x: &DataMatrix, bits: usize, rng: &mut impl Rng) -> Result<Initialization> {
    let (dims, n) = (x.dims(), x.count());
    if bits == 0 || n <= bits {
        return Err(invalid(format!("initialization needs more than {bits} points, got {n}")));
    }
    if bits > dims {
        return Err(invalid(format!("cannot project {dims} dimensions onto {bits} orthonormal directions")));
    }
    let xm = x.as_matrix();
    let mean: DVector<f64> = xm.column_mean();
    let mut centered = xm.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let cov = &centered * centered.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank_deficient = order[..bits]
        .iter()
        .any(|&k| !(eig.eigenvalues[k] > 1e-12 * top) || top == 0.0);
    let mut proj = DMatrix::zeros(bits, dims);
    for (row, &k) in order[..bits].iter().enumerate() {
        proj.row_mut(row).copy_from(&eig.eigenvectors.column(k).transpose());
    }

    let w1 = random_rotation(bits, rng) * proj;
    let b1 = -(&w1 * &mean);
    let w2 = w1.transpose();
    let params = NetworkParams::new(w1, w2, b1, mean, 1.0)?;
    Ok(Initialization { params, rank_deficient })
}

/// Haar-distributed rotation (orthogonal, determinant +1).
pub fn random_rotation(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Splits `0..n` (already permuted) into `m` nearly equal consecutive batches.
pub fn partition(order: &[usize], batches: usize) -> Vec<&[usize]> {
    let n = order.len();
    (0..batches)
        .map(|b| &order[b * n / batches..(b + 1) * n / batches])
        .collect()
}

/// Trains a model on normalized data. `tangents` holds one Jacobian target
/// per training point and is only read by the tangent-matching method.
pub fn train(x: &DataMatrix, tangents: &[Projector], cfg: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    let start = Instant::now();
    let n = x.count();
    if cfg.method == Method::Lsh {
        let p = lsh_generate(x.dims(), cfg.bits, cfg.seed)?;
        return Ok((
            p,
            TrainReport {
                trace: Vec::new(),
                epoch_costs: Vec::new(),
                rank_deficient: false,
                wall_time: start.elapsed(),
            },
        ));
    }
    cfg.validate(n)?;
    if cfg.method.needs_tangents() && tangents.len() != n {
        return Err(invalid(format!("expected {n} tangent projectors, got {}", tangents.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = init_with_rng(x, cfg.bits, &mut rng)?;
    let mut params = init.params;
    let obj = cfg.objective();
    let total = cfg.total_iterations(n);
    let m = cfg.batches_per_epoch(n);

    let mut report = TrainReport {
        trace: Vec::with_capacity(total),
        epoch_costs: Vec::new(),
        rank_deficient: init.rank_deficient,
        wall_time: Duration::ZERO,
    };
    if cfg.track_full_cost {
        report.epoch_costs.push(full_cost(&params, x, tangents, cfg, &obj)?);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut iteration = 0;
    while iteration < total {
        order.shuffle(&mut rng);
        let corrupted = match cfg.method {
            Method::DAutoBin { corruption_t } => Some(corrupt_matrix(x, corruption_t, &mut rng)),
            _ => None,
        };
        for batch_idx in partition(&order, m) {
            if iteration == total {
                break;
            }
            let clean = x.select(batch_idx);
            let inputs = corrupted.as_ref().map(|c| c.select(batch_idx));
            let batch_tangents: Vec<Projector> = if cfg.method.needs_tangents() {
                batch_idx.iter().map(|&i| tangents[i].clone()).collect()
            } else {
                Vec::new()
            };
            let prob = Problem {
                inputs: inputs.as_ref().unwrap_or(&clean),
                targets: &clean,
                regularizer: regularizer(cfg.method, &batch_tangents),
                config: &obj,
            };
            let (outcome, cost) = step(&mut params, &prob, &cfg.wolfe)?;
            iteration += 1;
            report.trace.push(TraceRow {
                iteration,
                cost,
                step: outcome.step,
                evals: outcome.evals,
                fallback: outcome.fallback,
            });
        }
        if cfg.track_full_cost {
            report.epoch_costs.push(full_cost(&params, x, tangents, cfg, &obj)?);
        }
    }
    report.wall_time = start.elapsed();
    Ok((params, report))
}

fn regularizer(method: Method, tangents: &[Projector]) -> Regularizer<'_> {
    match method {
        Method::AutoJacoBin => Regularizer::Tangent(tangents),
        Method::CAutoBin { lambda_c } => Regularizer::Contractive(lambda_c),
        _ => Regularizer::None,
    }
}

/// Uncorrupted objective over the whole training set.
fn full_cost(p: &NetworkParams, x: &DataMatrix, tangents: &[Projector], cfg: &TrainConfig, obj: &ObjectiveConfig) -> Result<Cost> {
    let prob = Problem {
        inputs: x,
        targets: x,
        regularizer: regularizer(cfg.method, tangents),
        config: obj,
    };
    Ok(evaluate(p, &prob, false)?.0)
}

/// One gradient step with line search, updating `params` in place.
fn step(params: &mut NetworkParams, prob: &Problem<'_>, wolfe: &WolfeConfig) -> Result<(LineSearchOutcome, Cost)> {
    let (cost0, grad) = evaluate(params, prob, true)?;
    let g = grad.expect("gradient requested").to_vector();
    let theta = params.to_vector();
    let mut cfg = *wolfe;
    let mut attempt = 0;
    let outcome = loop {
        let r = wolfe_step(&theta, &g, &cfg, |th| {
            let (c, gr) = evaluate(&params.with_vector(th), prob, true)?;
            Ok((c.total, gr.expect("gradient requested").to_vector()))
        });
        match r {
            Err(Error::LineSearch(_)) if attempt < LINE_SEARCH_RETRIES => {
                attempt += 1;
                cfg.initial_step *= 0.5;
            }
            other => break other?,
        }
    };
    if outcome.step == 0.0 {
        return Ok((outcome, cost0));
    }
    let next: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - outcome.step * gi).collect();
    let updated = params.with_vector(&next);
    let cost = evaluate(&updated, prob, false)?.0;
    *params = updated;
    Ok((outcome, cost))
}

/// `iteration,total,recon,jacobian,binary,step,evals,fallback`.
pub fn write_trace_csv(mut w: impl Write, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iteration,total,recon,jacobian,binary,step,evals,fallback")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.cost.total,
            r.cost.recon,
            r.cost.jacobian,
            r.cost.binary,
            r.step,
            r.evals,
            u8::from(r.fallback)
        )?;
    }
    Ok(())
}

/// `epoch,total,recon,jacobian,binary`, epoch 0 being the initialization.
pub fn write_epoch_csv(mut w: impl Write, costs: &[Cost]) -> Result<()> {
    writeln!(w, "epoch,total,recon,jacobian,binary")?;
    for (e, c) in costs.iter().enumerate() {
        writeln!(w, "{e},{},{},{},{}", c.total, c.recon, c.jacobian, c.binary)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model_to_bytes;
    use crate::synth::simplex;
    use crate::tangent::estimate_all;

    fn toy(n: usize, seed: u64) -> (DataMatrix, Vec<Projector>) {
        let x = simplex(n, seed);
        let t = estimate_all(&x, 3).unwrap().iter().map(Projector::from_tangent).collect();
        (x, t)
    }

    fn gaussian(dims: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(dims, n, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal))).unwrap()
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..8 {
            let r = random_rotation(d, &mut rng);
            assert!((r.transpose() * &r - DMatrix::<f64>::identity(d, d)).amax() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_properties() {
        let x = gaussian(6, 200, 2);
        let init = init_params(&x, 4, 9).unwrap();
        let p = &init.params;
        assert!(!init.rank_deficient);
        assert!((&p.w1 * p.w1.transpose() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        assert_eq!(p.w2, p.w1.transpose());
        let mean = x.as_matrix().column_mean();
        assert!((&p.w1 * &mean + &p.b1).amax() < 1e-15);
        assert_eq!(p.b2, mean);
        assert_eq!(model_to_bytes(p), model_to_bytes(&init_params(&x, 4, 9).unwrap().params));
        assert_ne!(p.w1, init_params(&x, 4, 10).unwrap().params.w1);
    }

    #[test]
    fn full_rank_square_init_is_orthogonal() {
        let x = gaussian(3, 100, 3);
        let p = init_params(&x, 3, 0).unwrap().params;
        assert!((&p.w2 * &p.w1 - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        // points on a line in R³
        let pts: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect();
        let init = init_params(&DataMatrix::from_points(&pts).unwrap(), 2, 0).unwrap();
        assert!(init.rank_deficient);
        let w1 = &init.params.w1;
        assert!((w1 * w1.transpose() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!(init_params(&DataMatrix::from_points(&pts).unwrap(), 4, 0).is_err());
    }

    #[test]
    fn partition_covers_every_point_once() {
        let order: Vec<usize> = (0..1003).rev().collect();
        for m in [1, 2, 7, 1003] {
            let parts = partition(&order, m);
            assert_eq!(parts.len(), m);
            let mut all: Vec<usize> = parts.concat();
            all.sort();
            assert_eq!(all, (0..1003).collect::<Vec<_>>());
            let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (x, t) = toy(100, 0);
        let mut cfg = TrainConfig::new(3);
        cfg.epochs = 0;
        cfg.batch_size = 50;
        cfg.seed = 4;
        let (p, report) = train(&x, &t, &cfg).unwrap();
        assert!(report.trace.is_empty());
        assert_eq!(p, init_params(&x, 3, 4).unwrap().params);
    }

    #[test]
    fn toy_training_lowers_cost_and_is_deterministic() {
        let (x, t) = toy(300, 1);
        let mut cfg = TrainConfig::new(3);
        cfg.batch_size = 100;
        cfg.epochs = 4;
        cfg.seed = 7;
        cfg.track_full_cost = true;
        let (p, report) = train(&x, &t, &cfg).unwrap();
        assert_eq!(report.trace.len(), 12);
        assert_eq!(report.epoch_costs.len(), 5);
        assert!(report.epoch_costs[4].total < report.epoch_costs[0].total);
        for r in &report.trace {
            assert!(r.cost.total.is_finite());
            assert!(r.step >= 0.0);
        }
        let (p2, report2) = train(&x, &t, &cfg).unwrap();
        assert_eq!(model_to_bytes(&p), model_to_bytes(&p2));
        assert_eq!(report.trace, report2.trace);
    }

    #[test]
    fn accepted_steps_decrease_the_batch_cost() {
        let (x, t) = toy(200, 2);
        let mut cfg = TrainConfig::new(3);
        cfg.batch_size = 200;
        cfg.epochs = 3;
        let (_, report) = train(&x, &t, &cfg).unwrap();
        // one batch covering everything: batch cost is the full cost
        let mut prev = f64::INFINITY;
        for r in &report.trace {
            if !r.fallback {
                assert!(r.cost.total <= prev);
            }
            prev = r.cost.total;
        }
    }

    #[test]
    fn iteration_override() {
        let x = gaussian(5, 120, 5);
        let mut cfg = TrainConfig::new(2);
        cfg.method = Method::AutoBin;
        cfg.batch_size = 40;
        cfg.max_iterations = Some(5);
        let (_, report) = train(&x, &[], &cfg).unwrap();
        assert_eq!(report.trace.len(), 5);
    }

    #[test]
    fn variants_train() {
        let x = gaussian(5, 120, 6);
        for method in [Method::AutoBin, Method::DAutoBin { corruption_t: 0.1 }, Method::CAutoBin { lambda_c: 0.01 }] {
            let mut cfg = TrainConfig::new(3);
            cfg.method = method;
            cfg.batch_size = 120;
            cfg.epochs = 2;
            cfg.track_full_cost = true;
            let (p, report) = train(&x, &[], &cfg).unwrap();
            assert!(p.is_finite());
            assert_eq!(report.trace.len(), 2);
            // the tracked cost is the clean objective, which the denoising
            // variant does not minimize directly
            if !matches!(method, Method::DAutoBin { .. }) {
                assert!(report.epoch_costs[2].total < report.epoch_costs[0].total, "{method}");
            }
        }
    }

    #[test]
    fn lsh_skips_training() {
        let x = gaussian(5, 10, 7);
        let mut cfg = TrainConfig::new(8);
        cfg.method = Method::Lsh;
        cfg.seed = 3;
        let (p, report) = train(&x, &[], &cfg).unwrap();
        assert!(report.trace.is_empty());
        assert_eq!(p, lsh_generate(5, 8, 3).unwrap());
    }

    #[test]
    fn config_errors() {
        let x = gaussian(5, 10, 8);
        let mut cfg = TrainConfig::new(2);
        cfg.method = Method::AutoBin;
        assert!(train(&x, &[], &cfg).is_err()); // batch 1000 > 10
        cfg.batch_size = 5;
        cfg.method = Method::AutoJacoBin;
        assert!(train(&x, &[], &cfg).is_err()); // missing tangents
    }

    #[test]
    fn trace_csv_format() {
        let rows = [TraceRow {
            iteration: 1,
            cost: Cost {
                total: 3.5,
                recon: 1.0,
                jacobian: 2.0,
                binary: 0.5,
            },
            step: 0.25,
            evals: 3,
            fallback: false,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,total,recon,jacobian,binary,step,evals,fallback\n1,3.5,1,2,0.5,0.25,3,0\n"
        );
    }
}
