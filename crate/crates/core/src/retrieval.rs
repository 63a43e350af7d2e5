//! Exact Euclidean neighbours and candidate reranking.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::binio;
use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_query(base: &DataMatrix, q: &[f64]) -> Result<()> {
    if q.len() != base.dims() {
        return Err(Error::DimensionMismatch {
            expected: base.dims(),
            found: q.len(),
        });
    }
    Ok(())
}

/// Sorts `(distance, index)` pairs and keeps the first `k` indices.
fn nearest(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// The `k` base points nearest to `q`, ties by ascending index.
pub fn euclid_topk(base: &DataMatrix, q: &[f64], k: usize) -> Result<Vec<usize>> {
    check_query(base, q)?;
    if k == 0 || k > base.count() {
        return Err(invalid(format!("cannot take {k} neighbours from {} points", base.count())));
    }
    let scored = (0..base.count())
        .map(|i| (squared_distance(base.column_slice(i), q), i))
        .collect();
    Ok(nearest(scored, k))
}

/// The `k` candidates nearest to `q`, ordered by distance then index.
pub fn rerank(base: &DataMatrix, candidates: &[usize], q: &[f64], k: usize) -> Result<Vec<usize>> {
    check_query(base, q)?;
    if k > candidates.len() {
        return Err(invalid(format!("cannot keep {k} of {} candidates", candidates.len())));
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i >= base.count()) {
        return Err(invalid(format!("candidate {bad} is out of range")));
    }
    let scored = candidates
        .iter()
        .map(|&i| (squared_distance(base.column_slice(i), q), i))
        .collect();
    Ok(nearest(scored, k))
}

/// True Euclidean neighbour lists, one per query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    k: usize,
    rows: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn new(k: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("ground truth needs k >= 1"));
        }
        for r in &rows {
            if r.len() != k {
                return Err(invalid(format!("ground-truth row has {} entries, expected {k}", r.len())));
            }
            let mut s = r.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != k {
                return Err(invalid("ground-truth row repeats an index"));
            }
        }
        Ok(Self { k, rows })
    }

    /// Exact ground truth for every query, computed in parallel.
    pub fn compute(base: &DataMatrix, queries: &DataMatrix, k: usize) -> Result<Self> {
        if queries.count() > 0 && queries.dims() != base.dims() {
            return Err(Error::DimensionMismatch {
                expected: base.dims(),
                found: queries.dims(),
            });
        }
        let rows = (0..queries.count())
            .into_par_iter()
            .map(|j| euclid_topk(base, queries.column_slice(j), k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn queries(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// The first `k` entries of every row.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(invalid(format!("cannot truncate k={} ground truth to {k}", self.k)));
        }
        Ok(Self {
            k,
            rows: self.rows.iter().map(|r| r[..k].to_vec()).collect(),
        })
    }
}

const GT_MAGIC: &[u8; 4] = b"AJBG";

/// `.ajbg`: magic `AJBG`, `u32` k, `u32` Q, then `k` `u32` indices per query.
pub fn write_ground_truth(mut w: impl Write, gt: &GroundTruth) -> Result<()> {
    w.write_all(GT_MAGIC)?;
    binio::write_u32(&mut w, binio::to_u32(gt.k, "k")?)?;
    binio::write_u32(&mut w, binio::to_u32(gt.rows.len(), "query count")?)?;
    for r in &gt.rows {
        for &i in r {
            binio::write_u32(&mut w, binio::to_u32(i, "index")?)?;
        }
    }
    Ok(())
}

pub fn read_ground_truth(mut r: impl Read) -> Result<GroundTruth> {
    binio::expect_magic(&mut r, GT_MAGIC)?;
    let k = binio::read_u32(&mut r, "k")? as usize;
    let q = binio::read_u32(&mut r, "query count")? as usize;
    let mut rows = Vec::with_capacity(q);
    for _ in 0..q {
        let mut row = Vec::with_capacity(k);
        for _ in 0..k {
            row.push(binio::read_u32(&mut r, "index")? as usize);
        }
        rows.push(row);
    }
    binio::expect_end(&mut r)?;
    GroundTruth::new(k, rows).map_err(|e| crate::error::format_err(e.to_string()))
}
