//! Evaluation: Bézier keyframe-cost estimation, reconstruction error and
//! per-edit reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::error::{Error, Result};
use crate::mask::Segment;
use crate::rig::DistanceRig;

/// Seconds an animator spends per keyframe, low and high estimate.
pub const ARTIST_SECONDS_PER_POINT: (f64, f64) = (12.0, 30.0);

pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BezierFit {
    /// Distinct control points, shared span endpoints counted once.
    pub points: usize,
    pub spans: usize,
    pub max_error: f64,
    pub mean_error: f64,
}

fn bernstein(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    [v * v * v, 3.0 * u * v * v, 3.0 * u * u * v, u * u * u]
}

/// Least-squares inner handles of one span with fixed end values. Time is
/// the abscissa, so the x handles sit at thirds and only y is fitted.
fn fit_span(curve: &[f64]) -> [f64; 4] {
    let n = curve.len() - 1;
    let (y0, y3) = (curve[0], curve[n]);
    let line = [y0, y0 + (y3 - y0) / 3.0, y0 + 2.0 * (y3 - y0) / 3.0, y3];
    // Solve for handle offsets d from the straight-line handles.
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &y) in curve.iter().enumerate().take(n).skip(1) {
        let b = bernstein(i as f64 / n as f64);
        let base: f64 = b.iter().zip(&line).map(|(w, c)| w * c).sum();
        let r = y - base;
        a11 += b[1] * b[1];
        a12 += b[1] * b[2];
        a22 += b[2] * b[2];
        r1 += b[1] * r;
        r2 += b[2] * r;
    }
    let det = a11 * a22 - a12 * a12;
    let (d1, d2) = if det > 1e-12 * (a11 * a22).max(f64::MIN_POSITIVE) {
        ((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det)
    } else if a11 + a22 > 0.0 {
        // One interior sample: smallest handle change that interpolates it.
        (r1 / (a11 + a22), r2 / (a11 + a22))
    } else {
        (0.0, 0.0)
    };
    [y0, line[1] + d1, line[2] + d2, y3]
}

fn span_errors(curve: &[f64], ctrl: &[f64; 4]) -> Vec<f64> {
    let n = curve.len() - 1;
    curve
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let b = bernstein(i as f64 / n as f64);
            let fit: f64 = b.iter().zip(ctrl).map(|(w, c)| w * c).sum();
            (fit - y).abs()
        })
        .collect()
}

fn is_straight(curve: &[f64]) -> bool {
    let n = curve.len() - 1;
    let (a, b) = (curve[0], curve[n]);
    let scale = a.abs().max(b.abs()).max(1.0);
    curve
        .iter()
        .enumerate()
        .all(|(i, &y)| (a + (b - a) * i as f64 / n as f64 - y).abs() <= 1e-12 * scale)
}

/// Recursive split-at-worst-sample fit; fills per-sample errors and returns
/// the span count.
fn fit_recursive(curve: &[f64], tol: f64, errors: &mut [f64]) -> usize {
    let ctrl = fit_span(curve);
    let errs = span_errors(curve, &ctrl);
    let (worst, &max) = errs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("span has samples");
    if max <= tol {
        errors.copy_from_slice(&errs);
        return 1;
    }
    let split = worst.clamp(1, curve.len() - 2);
    let left = fit_recursive(&curve[..=split], tol, &mut errors[..=split]);
    let right = fit_recursive(&curve[split..], tol, &mut errors[split..]);
    left + right
}

/// Number of cubic Bézier control points needed to follow `curve` within
/// `tol` (max absolute error per sample).
///
/// A curve that is a straight line costs 2 points; otherwise each span costs
/// 3 points plus one shared start point.
pub fn bezier_keypoint_estimate(curve: &[f64], tol: f64) -> Result<BezierFit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidAnimation("curve has non-finite samples".into()));
    }
    match curve.len() {
        0 => return Err(Error::InvalidAnimation("empty curve".into())),
        1 => {
            return Ok(BezierFit {
                points: 1,
                spans: 0,
                max_error: 0.0,
                mean_error: 0.0,
            })
        }
        _ => {}
    }
    if is_straight(curve) {
        return Ok(BezierFit {
            points: 2,
            spans: 1,
            max_error: span_errors(curve, &fit_span(curve)).into_iter().fold(0.0, f64::max),
            mean_error: 0.0,
        });
    }
    let mut errors = vec![0.0; curve.len()];
    let spans = fit_recursive(curve, tol, &mut errors);
    Ok(BezierFit {
        points: 3 * spans + 1,
        spans,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: String,
    pub points: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierFitReport {
    pub tolerance: f64,
    pub channels: Vec<ChannelFit>,
    pub total_points: usize,
}

impl BezierFitReport {
    pub fn to_text(&self) -> String {
        let w = self.channels.iter().map(|c| c.channel.len()).max().unwrap_or(7).max(7);
        let mut out = format!("{:<w$}  {:>6}  {:>10}\n", "channel", "points", "max_error");
        for c in &self.channels {
            let _ = writeln!(out, "{:<w$}  {:>6}  {:>10.3e}", c.channel, c.points, c.max_error);
        }
        let _ = writeln!(out, "{:<w$}  {:>6}  (tolerance {})", "total", self.total_points, self.tolerance);
        out
    }
}

/// Fit every channel of `anim` over frames `range`.
pub fn bezier_report(anim: &Animation, range: Option<Segment>, tol: f64) -> Result<BezierFitReport> {
    let seg = range.unwrap_or(Segment::new(0, anim.len()));
    if seg.is_empty() || seg.end > anim.len() {
        return Err(Error::InvalidSegment(format!("[{}, {}) is not inside the animation", seg.start, seg.end)));
    }
    let mut channels = Vec::with_capacity(anim.n_channels());
    for (c, name) in anim.names().iter().enumerate() {
        let col: Vec<f64> = anim.frames().column(c).iter().skip(seg.start).take(seg.len()).copied().collect();
        let fit = bezier_keypoint_estimate(&col, tol)?;
        channels.push(ChannelFit {
            channel: name.clone(),
            points: fit.points,
            max_error: fit.max_error,
        });
    }
    Ok(BezierFitReport {
        tolerance: tol,
        total_points: channels.iter().map(|c| c.points).sum(),
        channels,
    })
}

/// Mean squared difference over all `L x N` entries.
pub fn mse(a: &Animation, b: &Animation) -> Result<f64> {
    if a.frames().dim() != b.frames().dim() {
        return Err(Error::Dimension(format!(
            "{:?} vs {:?}",
            a.frames().dim(),
            b.frames().dim()
        )));
    }
    let d = a.frames() - b.frames();
    Ok(d.mapv(|v| v * v).mean().unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRow {
    pub start: usize,
    pub end: usize,
    pub frames: usize,
    /// Bézier points summed over all channels.
    pub bezier_points_sum: usize,
    pub bezier_points_max: usize,
    /// Channel with the largest motion range inside the segment.
    pub dominant_channel: String,
    pub bezier_points_dominant: usize,
    /// Mean over channels of the per-channel mean fit error.
    pub avg_fit_error: f64,
    pub max_fit_error: f64,
    /// Mean absolute change from the original, per parameter.
    pub mean_abs_change: f64,
    pub distance_mean_abs_change: f64,
    /// Projected manual keying time for `bezier_points_sum` points.
    pub artist_seconds_low: f64,
    pub artist_seconds_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub tolerance: f64,
    pub inference_seconds: Option<f64>,
    pub rows: Vec<EditRow>,
}

/// One row per segment of `segments`, in the given order.
pub fn edit_report(
    original: &Animation,
    edited: &Animation,
    segments: &[Segment],
    rig: &DistanceRig,
    tol: f64,
    inference_seconds: Option<f64>,
) -> Result<EditReport> {
    if original.frames().dim() != edited.frames().dim() {
        return Err(Error::Dimension("original and edited animations differ in shape".into()));
    }
    let d_orig = rig.apply_rows(original.frames().view());
    let d_edit = rig.apply_rows(edited.frames().view());
    let mut rows = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.is_empty() || seg.end > edited.len() {
            return Err(Error::InvalidSegment(format!("[{}, {}) is not inside the animation", seg.start, seg.end)));
        }
        let (mut sum, mut max_pts) = (0usize, 0usize);
        let (mut fit_err_sum, mut max_fit) = (0.0, 0.0f64);
        let (mut dominant, mut dom_range, mut dom_pts) = (0usize, f64::NEG_INFINITY, 0usize);
        for c in 0..edited.n_channels() {
            let col: Vec<f64> = (seg.start..seg.end).map(|t| edited.frames()[[t, c]]).collect();
            let fit = bezier_keypoint_estimate(&col, tol)?;
            sum += fit.points;
            max_pts = max_pts.max(fit.points);
            fit_err_sum += fit.mean_error;
            max_fit = max_fit.max(fit.max_error);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > dom_range {
                (dominant, dom_range, dom_pts) = (c, hi - lo, fit.points);
            }
        }
        let span = seg.start..seg.end;
        let diff = edited.frames().slice(ndarray::s![span.clone(), ..]).to_owned()
            - original.frames().slice(ndarray::s![span.clone(), ..]);
        let ddiff = d_edit.slice(ndarray::s![span.clone(), ..]).to_owned() - d_orig.slice(ndarray::s![span, ..]);
        rows.push(EditRow {
            start: seg.start,
            end: seg.end,
            frames: seg.len(),
            bezier_points_sum: sum,
            bezier_points_max: max_pts,
            dominant_channel: edited.names()[dominant].clone(),
            bezier_points_dominant: dom_pts,
            avg_fit_error: fit_err_sum / edited.n_channels() as f64,
            max_fit_error: max_fit,
            mean_abs_change: diff.mapv(f64::abs).mean().unwrap_or(0.0),
            distance_mean_abs_change: ddiff.mapv(f64::abs).mean().unwrap_or(0.0),
            artist_seconds_low: sum as f64 * ARTIST_SECONDS_PER_POINT.0,
            artist_seconds_high: sum as f64 * ARTIST_SECONDS_PER_POINT.1,
        });
    }
    Ok(EditReport {
        tolerance: tol,
        inference_seconds,
        rows,
    })
}

impl EditReport {
    /// Aligned text table; artist times are projections.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>11}  {:>6}  {:>7}  {:>7}  {:<20}  {:>7}  {:>9}  {:>9}  {:>15}",
            "segment", "frames", "pts_sum", "pts_max", "dominant", "pts_dom", "avg_err", "mean_chg", "artist_s (proj)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>11}  {:>6}  {:>7}  {:>7}  {:<20}  {:>7}  {:>9.2e}  {:>9.4}  {:>15}",
                format!("[{},{})", r.start, r.end),
                r.frames,
                r.bezier_points_sum,
                r.bezier_points_max,
                r.dominant_channel,
                r.bezier_points_dominant,
                r.avg_fit_error,
                r.mean_abs_change,
                format!("{:.0}-{:.0}", r.artist_seconds_low, r.artist_seconds_high)
            );
        }
        if let Some(s) = self.inference_seconds {
            let _ = writeln!(out, "inference time: {s:.3} s");
        }
        let _ = writeln!(out, "tolerance: {}", self.tolerance);
        out
    }
}
