//! Weighted dynamic time warping between feature sequences.
//!
//! The step pattern is the symmetric `{(1,0), (0,1), (1,1)}` set. A warping
//! path is scored by the sum of frame distances over its cells; ties in
//! accumulated cost are broken toward the shorter path, so the optimum is
//! the lexicographic minimum of `(cost, path length)` over all admissible
//! paths. With `length_normalization` the accumulated cost of that path is
//! divided by its cell count, which makes scores comparable across samples
//! of different lengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FRAME_FEATURES};
use crate::selection::FeatureSelection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwParams {
    /// Divide the accumulated cost by the warping-path length.
    pub length_normalization: bool,
    /// Optional Sakoe-Chiba band half-width; `None` means unconstrained.
    /// When set, it is widened to at least the length difference of the two
    /// sequences so an alignment always exists.
    pub band: Option<usize>,
}

impl Default for DtwParams {
    fn default() -> Self {
        DtwParams { length_normalization: true, band: None }
    }
}

/// Weighted Euclidean distance between two feature rows already restricted
/// to the kept columns: `sqrt(sum_f w_f (u_f - v_f)^2)`.
pub fn frame_distance(u: &[f64], v: &[f64], weights: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "frame_distance: rows of {} and {} values with {} weights",
            u.len(),
            v.len(),
            weights.len()
        )));
    }
    if u.len() == 1 {
        return Ok(weights[0].sqrt() * (u[0] - v[0]).abs());
    }
    let mut acc = 0.0;
    for ((a, b), w) in u.iter().zip(v).zip(weights) {
        let d = a - b;
        acc += w * d * d;
    }
    Ok(acc.sqrt())
}

/// A sequence restricted to the kept columns with each column pre-scaled by
/// `sqrt(w)`, so the DTW inner loop is a plain Euclidean distance over
/// contiguous rows.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    rows: usize,
    dims: usize,
    data: Vec<f64>,
}

impl PreparedSequence {
    pub fn from_selection(seq: &FeatureSequence, selection: &FeatureSelection) -> PreparedSequence {
        let kept = &selection.kept;
        let scale: Vec<f64> = selection.weights.iter().map(|w| w.sqrt()).collect();
        let rows = seq.rows();
        let mut data = Vec::with_capacity(rows * kept.len());
        for r in 0..rows {
            let row = seq.row(r);
            for (c, s) in kept.iter().zip(&scale) {
                data.push(row[*c] * s);
            }
        }
        PreparedSequence { rows, dims: kept.len(), data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dims..(r + 1) * self.dims]
    }
}

/// Row distance used by the DTW kernels. For a single dimension this is
/// `|a - b|` computed directly so it agrees bit-for-bit with the batched
/// per-feature kernel.
#[inline]
fn row_distance(u: &[f64], v: &[f64]) -> f64 {
    if u.len() == 1 {
        return (u[0] - v[0]).abs();
    }
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        let d = a - b;
        acc += d * d;
    }
    acc.sqrt()
}

#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    len: u32,
}

const DEAD: Cell = Cell { cost: f64::INFINITY, len: 0 };

#[inline]
fn better(a: Cell, b: Cell) -> Cell {
    if a.cost < b.cost || (a.cost == b.cost && a.len < b.len) {
        a
    } else {
        b
    }
}

fn band_range(i: usize, n: usize, m: usize, band: Option<usize>) -> (usize, usize) {
    match band {
        None => (0, m - 1),
        Some(b) => {
            let b = b.max(n.abs_diff(m));
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(m - 1);
            (lo, hi)
        }
    }
}

/// DTW between two prepared sequences; see the module docs for the scoring
/// rule. Both sequences must share the same dimensionality.
pub fn dtw_prepared(a: &PreparedSequence, b: &PreparedSequence, params: &DtwParams) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch(format!(
            "dtw over {} vs {} dimensions",
            a.dims, b.dims
        )));
    }
    if a.rows == 0 || b.rows == 0 || a.dims == 0 {
        return Err(Error::degenerate("dtw on an empty sequence"));
    }
    let (n, m) = (a.rows, b.rows);
    let banded = params.band.is_some();
    let mut prev = vec![DEAD; m];
    let mut cur = vec![DEAD; m];
    for i in 0..n {
        if banded {
            cur.fill(DEAD);
        }
        let (lo, hi) = band_range(i, n, m, params.band);
        let row_a = a.row(i);
        for j in lo..=hi {
            let local = row_distance(row_a, b.row(j));
            let best = if i == 0 && j == 0 {
                Cell { cost: 0.0, len: 0 }
            } else {
                let diag = if j > 0 { prev[j - 1] } else { DEAD };
                let up = prev[j];
                let left = if j > 0 { cur[j - 1] } else { DEAD };
                better(better(diag, up), left)
            };
            cur[j] = Cell { cost: best.cost + local, len: best.len + 1 };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let last = prev[m - 1];
    if !last.cost.is_finite() {
        return Err(Error::degenerate("dtw band admits no alignment"));
    }
    if params.length_normalization {
        Ok(last.cost / last.len as f64)
    } else {
        Ok(last.cost)
    }
}

/// Weighted DTW between two feature sequences restricted to the selection's
/// kept columns. Both sequences are expected to be normalized with the
/// selection's fitted statistics.
pub fn dtw_distance(
    a: &FeatureSequence,
    b: &FeatureSequence,
    selection: &FeatureSelection,
    params: &DtwParams,
) -> Result<f64> {
    let pa = PreparedSequence::from_selection(a, selection);
    let pb = PreparedSequence::from_selection(b, selection);
    dtw_prepared(&pa, &pb, params)
}

/// Single-feature DTW distances for a set of columns, computed in lockstep
/// over one pass of the alignment grid. Entry `k` equals the DTW distance of
/// column `features[k]` alone with unit weight, identical to running
/// [`dtw_prepared`] on that column.
pub fn dtw_per_feature(
    a: &FeatureSequence,
    b: &FeatureSequence,
    features: &[usize],
    params: &DtwParams,
) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(&bad) = features.iter().find(|&&f| f >= FRAME_FEATURES) {
        return Err(Error::DimensionMismatch(format!("feature index {bad} out of range")));
    }
    let (n, m) = (a.rows(), b.rows());
    if n == 0 || m == 0 {
        return Err(Error::degenerate("dtw on an empty sequence"));
    }
    let nf = features.len();
    let gather = |seq: &FeatureSequence| -> Vec<f64> {
        let mut out = Vec::with_capacity(seq.rows() * nf);
        for r in 0..seq.rows() {
            let row = seq.row(r);
            out.extend(features.iter().map(|&f| row[f]));
        }
        out
    };
    let sa = gather(a);
    let sb = gather(b);
    let banded = params.band.is_some();

    // Lockstep DP state: per column of the grid, nf (cost, len) lanes.
    let mut prev_cost = vec![f64::INFINITY; m * nf];
    let mut prev_len = vec![0u32; m * nf];
    let mut cur_cost = vec![f64::INFINITY; m * nf];
    let mut cur_len = vec![0u32; m * nf];

    for i in 0..n {
        if banded {
            cur_cost.fill(f64::INFINITY);
            cur_len.fill(0);
        }
        let (lo, hi) = band_range(i, n, m, params.band);
        let ra = &sa[i * nf..(i + 1) * nf];
        for j in lo..=hi {
            let rb = &sb[j * nf..(j + 1) * nf];
            let base = j * nf;
            if i == 0 && j == 0 {
                for f in 0..nf {
                    cur_cost[f] = (ra[f] - rb[f]).abs();
                    cur_len[f] = 1;
                }
            } else if j == 0 {
                for f in 0..nf {
                    cur_cost[f] = prev_cost[f] + (ra[f] - rb[f]).abs();
                    cur_len[f] = prev_len[f] + 1;
                }
            } else {
                // All three predecessors exist as array reads; out-of-range
                // ones hold infinity and lose the comparison.
                for f in 0..nf {
                    let local = (ra[f] - rb[f]).abs();
                    let mut bc = prev_cost[base - nf + f];
                    let mut bl = prev_len[base - nf + f];
                    let uc = prev_cost[base + f];
                    let ul = prev_len[base + f];
                    if uc < bc || (uc == bc && ul < bl) {
                        bc = uc;
                        bl = ul;
                    }
                    let lc = cur_cost[base - nf + f];
                    let ll = cur_len[base - nf + f];
                    if lc < bc || (lc == bc && ll < bl) {
                        bc = lc;
                        bl = ll;
                    }
                    cur_cost[base + f] = bc + local;
                    cur_len[base + f] = bl + 1;
                }
            }
        }
        std::mem::swap(&mut prev_cost, &mut cur_cost);
        std::mem::swap(&mut prev_len, &mut cur_len);
    }

    let base = (m - 1) * nf;
    let mut out = Vec::with_capacity(nf);
    for f in 0..nf {
        let cost = prev_cost[base + f];
        if !cost.is_finite() {
            return Err(Error::degenerate("dtw band admits no alignment"));
        }
        if params.length_normalization {
            out.push(cost / prev_len[base + f] as f64);
        } else {
            out.push(cost);
        }
    }
    Ok(out)
}
