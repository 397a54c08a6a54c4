//! Verification metrics: equal error rate, precision-recall sweeps, and the
//! correlation fits used to relate usability statistics to security.
//!
//! Scores are oriented so that higher means more genuine-like. The EER
//! estimator sweeps the sorted distinct scores as candidate thresholds with
//! `FAR(t) = P(impostor > t)` and `FRR(t) = P(genuine < t)` and linearly
//! interpolates between the two operating points where `FAR - FRR` changes
//! sign. On `genuine {0.6, 0.4}, impostor {0.5, 0.3}` this yields 0.25, the
//! same value as interpolating the DET curve through its achievable
//! operating points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Genuine and impostor score lists for one verification experiment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Operating point of the threshold sweep.
#[derive(Debug, Clone, Copy)]
struct OpPoint {
    theta: f64,
    far: f64,
    frr: f64,
}

fn sweep_points(genuine: &[f64], impostor: &[f64]) -> Vec<OpPoint> {
    let mut thetas: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thetas.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    thetas.dedup();

    let mut gen_sorted = genuine.to_vec();
    gen_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut imp_sorted = impostor.to_vec();
    imp_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));

    let ng = gen_sorted.len() as f64;
    let ni = imp_sorted.len() as f64;
    let mut points = Vec::with_capacity(thetas.len() + 2);
    // Virtual accept-everything / reject-everything endpoints.
    points.push(OpPoint { theta: f64::NEG_INFINITY, far: 1.0, frr: 0.0 });
    for theta in thetas {
        let imp_above = imp_sorted.len() - imp_sorted.partition_point(|&s| s <= theta);
        let gen_below = gen_sorted.partition_point(|&s| s < theta);
        points.push(OpPoint { theta, far: imp_above as f64 / ni, frr: gen_below as f64 / ng });
    }
    points.push(OpPoint { theta: f64::INFINITY, far: 0.0, frr: 1.0 });
    points
}

/// Equal error rate: the operating point where the false acceptance rate
/// equals the false rejection rate, interpolated between adjacent candidate
/// thresholds when the two rates do not meet exactly.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(Error::degenerate("EER requires both genuine and impostor scores"));
    }
    if scores.genuine.iter().chain(&scores.impostor).any(|s| !s.is_finite()) {
        return Err(Error::data("scores must be finite"));
    }
    let points = sweep_points(&scores.genuine, &scores.impostor);
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let dp = p.far - p.frr;
        let dq = q.far - q.frr;
        if dp == 0.0 {
            return Ok(EerResult { eer: p.far, threshold: finite_theta(p.theta, q.theta) });
        }
        if dp > 0.0 && dq <= 0.0 {
            if dq == 0.0 {
                return Ok(EerResult { eer: q.far, threshold: finite_theta(q.theta, p.theta) });
            }
            let t = dp / (dp - dq);
            let eer = p.far + t * (q.far - p.far);
            let theta = if p.theta.is_finite() && q.theta.is_finite() {
                p.theta + t * (q.theta - p.theta)
            } else {
                finite_theta(q.theta, p.theta)
            };
            return Ok(EerResult { eer, threshold: theta });
        }
    }
    // FAR starts at 1 >= FRR = 0 and ends at 0 <= FRR = 1, so a sign change
    // always exists; this is unreachable for valid inputs.
    unreachable!("FAR/FRR sweep had no crossing");
}

fn finite_theta(primary: f64, fallback: f64) -> f64 {
    if primary.is_finite() {
        primary
    } else if fallback.is_finite() {
        fallback
    } else {
        0.0
    }
}

/// One point of a precision-recall curve at decision threshold `theta`
/// (accept when score > theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub theta: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall sweep of genuine-vs-attack scores over all candidate
/// thresholds, sorted by threshold. Thresholds where nothing is accepted
/// (undefined precision) are omitted.
pub fn precision_recall(genuine: &[f64], attack: &[f64]) -> Result<Vec<PrPoint>> {
    if genuine.is_empty() {
        return Err(Error::degenerate("precision_recall requires genuine scores"));
    }
    let mut thetas: Vec<f64> = genuine.iter().chain(attack).copied().collect();
    thetas.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    thetas.dedup();
    // Accept-all point below every score.
    let lowest = thetas.first().copied().unwrap_or(0.0);
    thetas.insert(0, lowest - 1.0);

    let mut gen_sorted = genuine.to_vec();
    gen_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut att_sorted = attack.to_vec();
    att_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));

    let ng = gen_sorted.len();
    let mut curve = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let tp = ng - gen_sorted.partition_point(|&s| s <= theta);
        let fp = att_sorted.len() - att_sorted.partition_point(|&s| s <= theta);
        if tp + fp == 0 {
            continue;
        }
        curve.push(PrPoint {
            theta,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / ng as f64,
        });
    }
    Ok(curve)
}

/// Least-squares line fit with the Pearson correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub r: f64,
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch("fit_line: x/y length mismatch".into()));
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::degenerate("fit_line needs at least 2 points"));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate("fit_line: zero variance input"));
    }
    let slope = sxy / sxx;
    Ok(LineFit { r: sxy / (sxx.sqrt() * syy.sqrt()), slope, intercept: my - slope * mx })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    fit_line(&rx, &ry).map(|f| f.r)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}
