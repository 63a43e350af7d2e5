//! Recall@i and its mean over the retrieval budget.

use std::io::Write;

use rayon::prelude::*;

use crate::codes::{hamming_rank, BinaryCodes};
use crate::error::{invalid, Result};
use crate::retrieval::GroundTruth;

/// `|TE ∩ TH| / |TE|`.
pub fn recall_at(truth: &[usize], retrieved: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(invalid("recall needs at least one true neighbour"));
    }
    let hits = truth.iter().filter(|t| retrieved.contains(t)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean recall for `i = 1..=K` retrieved codes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve {
    /// `values[i - 1]` is Recall@i.
    pub values: Vec<f64>,
    pub m_recall: f64,
    pub k: usize,
}

impl RecallCurve {
    pub fn from_values(values: Vec<f64>, k: usize) -> Result<Self> {
        let m_recall = m_recall(&values)?;
        Ok(Self { values, m_recall, k })
    }

    pub fn max_retrieve(&self) -> usize {
        self.values.len()
    }

    /// Recall@i for 1-based `i`.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i - 1]
    }
}

/// `Σ_i Recall@i / K`.
pub fn m_recall(values: &[f64]) -> Result<f64> {
    let Some(&first) = values.first() else {
        return Err(invalid("m-Recall of an empty curve"));
    };
    // shifted so that a constant curve returns its value exactly
    let shift = values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64;
    Ok(first + shift)
}

/// Averages Recall@i over all queries, from one Hamming ranking per query.
pub fn recall_curve(gt: &GroundTruth, base: &BinaryCodes, queries: &BinaryCodes, max_retrieve: usize) -> Result<RecallCurve> {
    if max_retrieve == 0 || max_retrieve > base.count() {
        return Err(invalid(format!(
            "cannot retrieve {max_retrieve} of {} base codes",
            base.count()
        )));
    }
    if gt.queries() != queries.count() {
        return Err(invalid(format!(
            "ground truth has {} queries but {} query codes were given",
            gt.queries(),
            queries.count()
        )));
    }
    if base.bits() != queries.bits() {
        return Err(invalid("base and query codes have different lengths"));
    }
    if gt.queries() == 0 {
        return Err(invalid("no queries to evaluate"));
    }
    // integer hit counts keep the reduction exact and order independent
    let hits = (0..queries.count())
        .into_par_iter()
        .map(|j| {
            let mut truth = gt.row(j).to_vec();
            truth.sort_unstable();
            let ranking = hamming_rank(base, queries.code(j));
            let mut first = vec![0u64; max_retrieve];
            for (pos, idx) in ranking[..max_retrieve].iter().enumerate() {
                if truth.binary_search(idx).is_ok() {
                    first[pos] += 1;
                }
            }
            first
        })
        .reduce(
            || vec![0u64; max_retrieve],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let denom = (gt.k() * gt.queries()) as f64;
    let mut running = 0u64;
    let values = hits
        .iter()
        .map(|h| {
            running += h;
            running as f64 / denom
        })
        .collect();
    RecallCurve::from_values(values, gt.k())
}

/// `i,recall` rows followed by `m_recall,<value>`.
pub fn write_recall_csv(mut w: impl Write, curve: &RecallCurve) -> Result<()> {
    writeln!(w, "i,recall")?;
    for (i, v) in curve.values.iter().enumerate() {
        writeln!(w, "{},{v}", i + 1)?;
    }
    writeln!(w, "m_recall,{}", curve.m_recall)?;
    Ok(())
}
