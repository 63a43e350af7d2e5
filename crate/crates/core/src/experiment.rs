//! End-to-end helpers: fit a model on raw vectors, encode, and score it.

use std::io::Write;

use nalgebra::DMatrix;

use crate::codes::{encode, BinaryCodes};
use crate::data::{DataMatrix, Normalizer};
use crate::error::{invalid, Result};
use crate::metrics::{recall_curve, RecallCurve};
use crate::net::{forward_batch, NetworkParams};
use crate::retrieval::GroundTruth;
use crate::synth::simplex;
use crate::tangent::{estimate_all, Projector};
use crate::train::{init_params, train, TrainConfig, TrainReport};

/// Tangent projectors for every (normalized) training point.
pub fn tangent_projectors(x: &DataMatrix, bits: usize) -> Result<Vec<Projector>> {
    let n = x.count();
    if n < x.dims() + bits {
        return Err(invalid(format!(
            "tangent estimation needs at least D + d = {} points, got {n}",
            x.dims() + bits
        )));
    }
    Ok(estimate_all(x, bits)?.iter().map(Projector::from_tangent).collect())
}

/// Normalizes raw training vectors, estimates tangents when the method needs
/// them, and trains. The returned model carries the normalization scale.
pub fn fit(raw: &DataMatrix, cfg: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    let norm = Normalizer::fit(raw)?;
    let x = norm.apply(raw);
    let tangents = if cfg.method.needs_tangents() {
        tangent_projectors(&x, cfg.bits)?
    } else {
        Vec::new()
    };
    let (mut p, report) = train(&x, &tangents, cfg)?;
    p.scale = norm.scale();
    Ok((p, report))
}

/// Codes for raw vectors, scaled with the model's own normalization.
pub fn encode_raw(p: &NetworkParams, raw: &DataMatrix, use_bias: bool) -> Result<BinaryCodes> {
    let norm = Normalizer::new(p.scale)?;
    encode(p, &norm.apply_checked(raw, p.dims())?, use_bias)
}

/// Recall curve of a model on raw base and query vectors.
pub fn evaluate(
    p: &NetworkParams,
    base: &DataMatrix,
    queries: &DataMatrix,
    gt: &GroundTruth,
    max_retrieve: usize,
    use_bias: bool,
) -> Result<RecallCurve> {
    let b = encode_raw(p, base, use_bias)?;
    let q = encode_raw(p, queries, use_bias)?;
    recall_curve(gt, &b, &q, max_retrieve)
}

/// Settings of the simplex warping demo.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub points: usize,
    pub train: TrainConfig,
}

impl ToyConfig {
    /// 1,000 points, 3 bits, batches of 100 over 5 epochs (50 iterations).
    pub fn new(seed: u64) -> Self {
        let mut train = TrainConfig::new(3);
        train.batch_size = 100;
        train.epochs = 5;
        train.seed = seed;
        train.track_full_cost = true;
        Self { points: 1000, train }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySummary {
    /// Distinct sign patterns of the hidden features.
    pub distinct_codes: usize,
    /// Distinct codes of `sign(W1 x)`.
    pub distinct_codes_no_bias: usize,
    pub mean_abs_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyOutcome {
    pub data: DataMatrix,
    pub init: NetworkParams,
    pub params: NetworkParams,
    pub report: TrainReport,
    pub before: ToySummary,
    pub after: ToySummary,
    /// Hidden features after training, one column per point.
    pub hidden: DMatrix<f64>,
    pub codes: BinaryCodes,
}

fn summarize(p: &NetworkParams, x: &DataMatrix) -> Result<(ToySummary, DMatrix<f64>, BinaryCodes)> {
    let (y, _) = forward_batch(p, x)?;
    let codes = encode(p, x, true)?;
    let summary = ToySummary {
        distinct_codes: codes.distinct(),
        distinct_codes_no_bias: encode(p, x, false)?.distinct(),
        mean_abs_y: y.abs().mean(),
    };
    Ok((summary, y, codes))
}

/// Samples the simplex `{x₁ + x₂ + x₃ = 1, xᵢ > 0}`, trains on it, and
/// summarizes the hidden layer before and after training.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyOutcome> {
    let raw = simplex(cfg.points, cfg.train.seed);
    let norm = Normalizer::fit(&raw)?;
    let x = norm.apply(&raw);
    let tangents = if cfg.train.method.needs_tangents() {
        tangent_projectors(&x, cfg.train.bits)?
    } else {
        Vec::new()
    };
    let mut init = init_params(&x, cfg.train.bits, cfg.train.seed)?.params;
    let (mut params, report) = train(&x, &tangents, &cfg.train)?;
    let (before, _, _) = summarize(&init, &x)?;
    let (after, hidden, codes) = summarize(&params, &x)?;
    init.scale = norm.scale();
    params.scale = norm.scale();
    Ok(ToyOutcome {
        data: x,
        init,
        params,
        report,
        before,
        after,
        hidden,
        codes,
    })
}

/// `stage,distinct_codes,distinct_codes_no_bias,mean_abs_y` with an `init`
/// row and a `trained` row.
pub fn write_toy_summary(mut w: impl Write, out: &ToyOutcome) -> Result<()> {
    writeln!(w, "stage,distinct_codes,distinct_codes_no_bias,mean_abs_y")?;
    for (stage, s) in [("init", &out.before), ("trained", &out.after)] {
        writeln!(w, "{stage},{},{},{}", s.distinct_codes, s.distinct_codes_no_bias, s.mean_abs_y)?;
    }
    Ok(())
}

/// `point,y1,...,yd,code`: hidden features and the code (as a bit string) per point.
pub fn write_toy_hidden(mut w: impl Write, out: &ToyOutcome) -> Result<()> {
    let bits = out.hidden.nrows();
    let header: Vec<String> = (1..=bits).map(|j| format!("y{j}")).collect();
    writeln!(w, "point,{},code", header.join(","))?;
    for (i, col) in out.hidden.column_iter().enumerate() {
        let ys: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        let code: String = (0..bits).map(|j| if out.codes.bit(i, j) { '1' } else { '0' }).collect();
        writeln!(w, "{i},{},{code}", ys.join(","))?;
    }
    Ok(())
}
