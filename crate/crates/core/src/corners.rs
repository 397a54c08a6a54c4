//! Corner counting on the index-finger trajectory, used as the objective
//! gesture-complexity metric.
//!
//! The detector follows the curvature-scale-space recipe: project the
//! trajectory to the x-y plane, resample it uniformly by arc length, smooth
//! with a coarse Gaussian, and take interior curvature maxima above an
//! adaptive threshold (`mean + k * std` of the smoothed curvature). Each
//! candidate must also turn by a minimum angle over its neighborhood, which
//! separates genuine corners from the gentle curvature ridge of arcs and
//! circles. Detections are then localized by tracking the maximum down a
//! ladder of finer scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::RawSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerParams {
    /// Coarse smoothing scale as a fraction of the resampled point count.
    pub sigma_frac: f64,
    /// Number of uniform arc-length resampling points.
    pub resample_points: usize,
    /// Curvature threshold multiplier: `mean + threshold_k * std`.
    pub threshold_k: f64,
    /// Minimum turn angle (degrees) over the candidate's neighborhood.
    pub min_corner_angle_deg: f64,
    /// Finest scale of the localization ladder, in points.
    pub fine_sigma: f64,
}

impl Default for CornerParams {
    fn default() -> Self {
        CornerParams {
            sigma_frac: 0.03,
            resample_points: 256,
            threshold_k: 1.5,
            min_corner_angle_deg: 35.0,
            fine_sigma: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerResult {
    pub count: usize,
    /// Frame indices of the detected corners, strictly increasing, interior
    /// points only.
    pub locations: Vec<usize>,
    /// Coarse smoothing scale that produced the detections.
    pub scale_sigma: f64,
}

/// Number of frames in a sample, the objective gesture-duration metric.
pub fn frame_count(sample: &RawSample) -> usize {
    sample.frames.len()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let x = i as f64 - radius as f64;
        kernel.push((-x * x / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Gaussian smoothing with reflected boundaries (the trajectory is open).
fn smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let n = values.len();
    let reflect = |i: isize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i as usize
    };
    (0..n)
        .map(|c| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[reflect(c as isize + k as isize - radius as isize)])
                .sum()
        })
        .collect()
}

/// Curvature of a smoothed planar curve via central differences:
/// `|x' y'' - y' x''| / (x'^2 + y'^2)^(3/2)`.
fn curvature(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut kappa = vec![0.0; n];
    for i in 1..n - 1 {
        let dx = (xs[i + 1] - xs[i - 1]) / 2.0;
        let dy = (ys[i + 1] - ys[i - 1]) / 2.0;
        let ddx = xs[i + 1] - 2.0 * xs[i] + xs[i - 1];
        let ddy = ys[i + 1] - 2.0 * ys[i] + ys[i - 1];
        let speed_sq = dx * dx + dy * dy;
        if speed_sq > 1e-12 {
            kappa[i] = (dx * ddy - dy * ddx).abs() / speed_sq.powf(1.5);
        }
    }
    kappa
}

/// Resamples a polyline to `n` points uniformly spaced in arc length.
/// Returns the points plus, per resampled point, the source arc fraction.
fn resample(points: &[(f64, f64)], n: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    for w in points.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + d);
    }
    let total = *cumulative.last().unwrap();
    if total <= 1e-9 {
        return None;
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut fractions = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { (target - cumulative[seg]) / span } else { 0.0 };
        let t = t.clamp(0.0, 1.0);
        xs.push(points[seg].0 + t * (points[seg + 1].0 - points[seg].0));
        ys.push(points[seg].1 + t * (points[seg + 1].1 - points[seg].1));
        fractions.push(target / total);
    }
    Some((xs, ys, fractions))
}

/// Turn angle (radians) at point `i` over a support of `d` points.
fn turn_angle(xs: &[f64], ys: &[f64], i: usize, d: usize) -> f64 {
    let n = xs.len();
    let a = i.saturating_sub(d);
    let b = (i + d).min(n - 1);
    let v1 = (xs[i] - xs[a], ys[i] - ys[a]);
    let v2 = (xs[b] - xs[i], ys[b] - ys[i]);
    let n1 = (v1.0 * v1.0 + v1.1 * v1.1).sqrt();
    let n2 = (v2.0 * v2.0 + v2.1 * v2.1).sqrt();
    if n1 <= 1e-12 || n2 <= 1e-12 {
        return 0.0;
    }
    let cross = v1.0 * v2.1 - v1.1 * v2.0;
    let dot = v1.0 * v2.0 + v1.1 * v2.1;
    cross.abs().atan2(dot)
}

/// Detects corners on the index-finger x-y trajectory of a sample.
pub fn detect_corners(sample: &RawSample, params: &CornerParams) -> Result<CornerResult> {
    if sample.frames.len() < 5 {
        return Err(Error::data(format!(
            "corner detection needs at least 5 frames, sample {} has {}",
            sample.sample_id,
            sample.frames.len()
        )));
    }
    let trajectory: Vec<(f64, f64)> =
        sample.index_tip_trajectory().iter().map(|p| (p[0], p[1])).collect();
    // collapse consecutive duplicates so arc-length resampling is well defined
    let mut planar: Vec<(f64, f64)> = Vec::with_capacity(trajectory.len());
    let mut frame_of_point = Vec::with_capacity(trajectory.len());
    for (i, p) in trajectory.iter().enumerate() {
        if planar.last().map_or(true, |q| q != p) {
            planar.push(*p);
            frame_of_point.push(i);
        }
    }
    let coarse_sigma = (params.sigma_frac * params.resample_points as f64).max(2.0);
    if planar.len() < 3 {
        // all points coincident (or nearly): no trajectory, no corners
        return Ok(CornerResult { count: 0, locations: Vec::new(), scale_sigma: coarse_sigma });
    }
    let (rx, ry, fractions) = match resample(&planar, params.resample_points) {
        Some(r) => r,
        None => {
            return Ok(CornerResult { count: 0, locations: Vec::new(), scale_sigma: coarse_sigma })
        }
    };

    // coarse-scale detection
    let sx = smooth(&rx, coarse_sigma);
    let sy = smooth(&ry, coarse_sigma);
    let kappa = curvature(&sx, &sy);
    let n = kappa.len();
    let mean = kappa.iter().sum::<f64>() / n as f64;
    let std = (kappa.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / n as f64).sqrt();
    let threshold = mean + params.threshold_k * std;
    let margin = coarse_sigma.ceil() as usize + 1;
    let support = (2.0 * coarse_sigma).round() as usize;
    let min_angle = params.min_corner_angle_deg.to_radians();

    let mut candidates: Vec<usize> = Vec::new();
    for i in margin..n - margin {
        if kappa[i] > threshold
            && kappa[i] > kappa[i - 1]
            && kappa[i] >= kappa[i + 1]
            && turn_angle(&sx, &sy, i, support) >= min_angle
        {
            candidates.push(i);
        }
    }
    // non-maximum suppression within one smoothing support
    let mut peaks: Vec<usize> = Vec::new();
    for &c in &candidates {
        match peaks.last() {
            Some(&p) if c - p < support.max(1) => {
                if kappa[c] > kappa[p] {
                    *peaks.last_mut().unwrap() = c;
                }
            }
            _ => peaks.push(c),
        }
    }

    // localization: track each peak to finer scales
    let mut sigma = coarse_sigma;
    let mut located = peaks;
    while sigma / std::f64::consts::SQRT_2 >= params.fine_sigma {
        sigma /= std::f64::consts::SQRT_2;
        let fx = smooth(&rx, sigma);
        let fy = smooth(&ry, sigma);
        let fk = curvature(&fx, &fy);
        let window = (2.0 * sigma).ceil() as usize;
        for loc in &mut located {
            let lo = loc.saturating_sub(window).max(1);
            let hi = (*loc + window).min(n - 2);
            let mut best = *loc;
            for i in lo..=hi {
                if fk[i] > fk[best] {
                    best = i;
                }
            }
            *loc = best;
        }
    }

    // map resampled indices back to frame indices
    let arc_fraction_of_frame = |frac: f64| -> usize {
        let target = frac * (planar.len() - 1) as f64;
        let idx = target.round() as usize;
        frame_of_point[idx.min(frame_of_point.len() - 1)]
    };
    let last_frame = sample.frames.len() - 1;
    let mut locations: Vec<usize> = located
        .iter()
        .map(|&i| arc_fraction_of_frame(fractions[i]))
        .filter(|&f| f > 0 && f < last_frame)
        .collect();
    locations.sort_unstable();
    locations.dedup();

    Ok(CornerResult { count: locations.len(), locations, scale_sigma: coarse_sigma })
}
