//! Per-frame culling/LOD/batching simulation along a camera path, an affine
//! frame-time model and VR budget checks.
//!
//! Frame times here are model estimates. Nothing is rendered.

use crate::geometry::{frustum_from_camera, CameraIntrinsics, CameraPose};
use crate::math::{Quat, Vec3};
use crate::reduction::{batch_drawset, build_drawset, BatchConfig};
use crate::scene::Scene;
use crate::visibility::{frustum_cull, OcclusionBake, VisibilityError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameSimError {
    #[error("cost model fit needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {0}: frame time must be positive and finite and counts non-negative")]
    BadSample(usize),
    #[error("camera path is empty")]
    EmptyPath,
    #[error("waypoint times must be strictly increasing (waypoint {0})")]
    UnorderedPath(usize),
    #[error("frame rate must be positive, got {0}")]
    BadFrameRate(f64),
    #[error("invalid camera intrinsics")]
    BadIntrinsics,
    #[error("invalid budget: {0}")]
    BadBudget(&'static str),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error("malformed path file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// `frame_time = fixed + per_drawcall * drawcalls + per_triangle * triangles`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub fixed_secs: f64,
    pub secs_per_drawcall: f64,
    pub secs_per_triangle: f64,
}

impl CostModel {
    pub fn is_valid(&self) -> bool {
        [self.fixed_secs, self.secs_per_drawcall, self.secs_per_triangle]
            .iter()
            .all(|c| c.is_finite() && *c >= 0.0)
    }
}

pub fn estimate_frame_time(cm: &CostModel, drawcalls: usize, triangles: usize) -> f64 {
    cm.fixed_secs + cm.secs_per_drawcall * drawcalls as f64 + cm.secs_per_triangle * triangles as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub drawcalls: f64,
    pub triangles: f64,
    pub frame_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostFit {
    pub model: CostModel,
    /// Observed minus predicted, per sample.
    pub residuals: Vec<f64>,
    pub residual_sum_squares: f64,
    pub warnings: Vec<String>,
}

/// Drawcalls, triangles and measured fps of one large city model at three
/// reduction stages. Used as the calibration when no other is supplied.
pub const REFERENCE_MEASUREMENTS: [(f64, f64, f64); 3] =
    [(342_324.0, 53.1e6, 1.8), (16_676.0, 7.8e6, 40.2), (4_335.0, 1.3e6, 116.5)];

pub fn reference_samples() -> Vec<CostSample> {
    REFERENCE_MEASUREMENTS
        .iter()
        .map(|&(drawcalls, triangles, fps)| CostSample { drawcalls, triangles, frame_time_secs: 1.0 / fps })
        .collect()
}

/// Non-negative least squares over (fixed, per-drawcall, per-triangle).
///
/// With three unknowns every active-set pattern can be tried: each of the
/// 8 subsets of free coefficients is solved unconstrained (minimum-norm when
/// rank-deficient) and the feasible solution with the lowest residual wins.
pub fn fit_cost_model(samples: &[CostSample]) -> Result<CostFit, FrameSimError> {
    if samples.len() < 3 {
        return Err(FrameSimError::TooFewSamples(samples.len()));
    }
    for (i, s) in samples.iter().enumerate() {
        let ok = s.frame_time_secs.is_finite()
            && s.frame_time_secs > 0.0
            && s.drawcalls.is_finite()
            && s.drawcalls >= 0.0
            && s.triangles.is_finite()
            && s.triangles >= 0.0;
        if !ok {
            return Err(FrameSimError::BadSample(i));
        }
    }

    let n = samples.len();
    let columns: [Vec<f64>; 3] = [
        vec![1.0; n],
        samples.iter().map(|s| s.drawcalls).collect(),
        samples.iter().map(|s| s.triangles).collect(),
    ];
    // equilibrate columns; drawcalls and triangles differ by orders of magnitude
    let scales: [f64; 3] = std::array::from_fn(|j| {
        let norm = columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 { norm } else { 1.0 }
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.frame_time_secs));
    let design = |active: &[usize]| {
        DMatrix::from_fn(n, active.len(), |r, c| columns[active[c]][r] / scales[active[c]])
    };

    let mut warnings = Vec::new();
    let full_rank = numeric_rank(&design(&[0, 1, 2]));
    if full_rank < 3 {
        warnings.push(format!(
            "design matrix is rank-deficient (rank {full_rank} of 3); using minimum-norm solution"
        ));
    }

    let mut masks: Vec<u8> = (0..8).collect();
    masks.sort_by_key(|m| m.count_ones());
    let mut best: Option<([f64; 3], f64)> = None;
    for mask in masks {
        let active: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
        let mut scaled = [0.0; 3];
        if !active.is_empty() {
            let a = design(&active);
            let svd = a.svd(true, true);
            let max_sv = svd.singular_values.max();
            let Ok(sol) = svd.solve(&y, max_sv * 1e-12) else {
                continue;
            };
            let magnitude = sol.amax().max(f64::MIN_POSITIVE);
            if sol.iter().any(|&v| v < -1e-12 * magnitude) {
                continue;
            }
            for (k, &j) in active.iter().enumerate() {
                scaled[j] = sol[k].max(0.0);
            }
        }
        let rss = residuals(&columns, &scales, &scaled, &y).iter().map(|r| r * r).sum::<f64>();
        let better = match best {
            None => true,
            Some((_, b)) => rss < b - 1e-12 * b.max(f64::MIN_POSITIVE),
        };
        if better {
            best = Some((scaled, rss));
        }
    }
    let (scaled, rss) = best.expect("the empty pattern is always feasible");
    let model = CostModel {
        fixed_secs: scaled[0] / scales[0],
        secs_per_drawcall: scaled[1] / scales[1],
        secs_per_triangle: scaled[2] / scales[2],
    };
    Ok(CostFit {
        model,
        residuals: residuals(&columns, &scales, &scaled, &y),
        residual_sum_squares: rss,
        warnings,
    })
}

fn numeric_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > max * 1e-12).count()
}

fn residuals(columns: &[Vec<f64>; 3], scales: &[f64; 3], x: &[f64; 3], y: &DVector<f64>) -> Vec<f64> {
    (0..y.len())
        .map(|r| y[r] - (0..3).map(|j| columns[j][r] / scales[j] * x[j]).sum::<f64>())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pose: CameraPose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraPath {
    pub waypoints: Vec<Waypoint>,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_hz: Option<f64>,
    intrinsics: CameraIntrinsics,
    waypoints: Vec<WaypointRecord>,
}

#[derive(Serialize, Deserialize)]
struct WaypointRecord {
    t: f64,
    position: Vec3,
    rotation: Quat,
}

impl CameraPath {
    pub fn validate(&self) -> Result<(), FrameSimError> {
        if self.waypoints.is_empty() {
            return Err(FrameSimError::EmptyPath);
        }
        if !self.intrinsics.is_valid() {
            return Err(FrameSimError::BadIntrinsics);
        }
        for i in 1..self.waypoints.len() {
            if !(self.waypoints[i].t > self.waypoints[i - 1].t) {
                return Err(FrameSimError::UnorderedPath(i));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Linear position and spherical orientation interpolation, clamped to
    /// the first and last waypoints.
    pub fn pose_at(&self, t: f64) -> CameraPose {
        let w = &self.waypoints;
        let k = w.partition_point(|wp| wp.t <= t);
        if k == 0 {
            return w[0].pose;
        }
        if k == w.len() {
            return w[k - 1].pose;
        }
        let (a, b) = (&w[k - 1], &w[k]);
        let alpha = (t - a.t) / (b.t - a.t);
        CameraPose {
            position: a.pose.position.lerp(b.pose.position, alpha),
            orientation: a.pose.orientation.slerp(b.pose.orientation, alpha),
        }
    }

    /// Number of frames sampled at `hz`: `ceil(duration * hz) + 1`.
    pub fn frame_count(&self, hz: f64) -> usize {
        let steps = self.duration() * hz;
        (steps - 1e-9 * steps.max(1.0)).ceil().max(0.0) as usize + 1
    }

    /// Parses a `.path.json` document; returns the path and its optional rate.
    pub fn from_json(bytes: &[u8]) -> Result<(CameraPath, Option<f64>), FrameSimError> {
        let file: PathFile = serde_json::from_slice(bytes)?;
        let path = CameraPath {
            waypoints: file
                .waypoints
                .into_iter()
                .map(|w| Waypoint { t: w.t, pose: CameraPose { position: w.position, orientation: w.rotation } })
                .collect(),
            intrinsics: file.intrinsics,
        };
        path.validate()?;
        Ok((path, file.frame_hz))
    }

    pub fn to_json(&self, frame_hz: Option<f64>) -> Vec<u8> {
        let file = PathFile {
            frame_hz,
            intrinsics: self.intrinsics,
            waypoints: self
                .waypoints
                .iter()
                .map(|w| WaypointRecord { t: w.t, position: w.pose.position, rotation: w.pose.orientation })
                .collect(),
        };
        let mut out = serde_json::to_vec_pretty(&file).expect("path serialization is infallible");
        out.push(b'\n');
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BudgetViolation {
    LowFps,
    TooManyDrawcalls,
    TooManyPolygons,
}

impl fmt::Display for BudgetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetViolation::LowFps => "fps",
            BudgetViolation::TooManyDrawcalls => "drawcalls",
            BudgetViolation::TooManyPolygons => "polygons",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub time_secs: f64,
    pub pose: CameraPose,
    pub visible_nodes: usize,
    pub triangles: usize,
    pub drawcalls: usize,
    pub frame_time_secs: f64,
    pub fps: f64,
    pub budget_violations: Vec<BudgetViolation>,
}

/// Runs frustum, occlusion (when baked), LOD and batching for every frame.
pub fn simulate_path(
    scene: &Scene,
    bake: Option<&OcclusionBake>,
    path: &CameraPath,
    cm: &CostModel,
    frame_hz: f64,
) -> Result<Vec<FrameMetrics>, FrameSimError> {
    simulate_path_with(scene, bake, path, cm, frame_hz, &BatchConfig::default())
}

pub fn simulate_path_with(
    scene: &Scene,
    bake: Option<&OcclusionBake>,
    path: &CameraPath,
    cm: &CostModel,
    frame_hz: f64,
    batch: &BatchConfig,
) -> Result<Vec<FrameMetrics>, FrameSimError> {
    path.validate()?;
    if !(frame_hz > 0.0 && frame_hz.is_finite()) {
        return Err(FrameSimError::BadFrameRate(frame_hz));
    }
    if let Some(b) = bake {
        b.check_scene(scene)?;
    }
    let end = path.start() + path.duration();
    let frames = (0..path.frame_count(frame_hz))
        .into_par_iter()
        .map(|k| {
            let t = (path.start() + k as f64 / frame_hz).min(end);
            let pose = path.pose_at(t);
            let frustum = frustum_from_camera(&pose, &path.intrinsics);
            let mut visible = frustum_cull(scene, &frustum, &pose);
            if let Some(b) = bake {
                visible = b.cull(&visible);
            }
            let items = build_drawset(&visible, scene, &pose, &path.intrinsics);
            let stats = batch_drawset(&items, batch);
            let frame_time = estimate_frame_time(cm, stats.drawcalls, stats.triangles);
            FrameMetrics {
                frame_index: k,
                time_secs: t,
                pose,
                visible_nodes: visible.len(),
                triangles: stats.triangles,
                drawcalls: stats.drawcalls,
                frame_time_secs: frame_time,
                fps: 1.0 / frame_time,
                budget_violations: Vec::new(),
            }
        })
        .collect();
    Ok(frames)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub min_fps: f64,
    pub max_cycle_ms: f64,
    pub drawcall_range: (usize, usize),
    pub polygon_range: (usize, usize),
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            min_fps: 90.0,
            max_cycle_ms: 100.0,
            drawcall_range: (150, 175),
            polygon_range: (300_000, 1_000_000),
        }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<(), FrameSimError> {
        if self.drawcall_range.0 > self.drawcall_range.1 {
            return Err(FrameSimError::BadBudget("drawcall range min > max"));
        }
        if self.polygon_range.0 > self.polygon_range.1 {
            return Err(FrameSimError::BadBudget("polygon range min > max"));
        }
        if !(self.min_fps >= 0.0) || !(self.max_cycle_ms >= 0.0) {
            return Err(FrameSimError::BadBudget("negative fps or cycle limit"));
        }
        Ok(())
    }

    pub fn violations(&self, fps: f64, drawcalls: usize, triangles: usize) -> Vec<BudgetViolation> {
        let mut v = Vec::new();
        if !(fps >= self.min_fps) {
            v.push(BudgetViolation::LowFps);
        }
        if drawcalls > self.drawcall_range.1 {
            v.push(BudgetViolation::TooManyDrawcalls);
        }
        if triangles > self.polygon_range.1 {
            v.push(BudgetViolation::TooManyPolygons);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetReport {
    /// Violations per frame, in frame order.
    pub verdicts: Vec<Vec<BudgetViolation>>,
    /// Index of the slowest frame.
    pub worst_frame: Option<usize>,
    pub pass: bool,
    pub warnings: Vec<String>,
}

pub fn check_budgets(frames: &[FrameMetrics], b: &Budget) -> BudgetReport {
    let verdicts: Vec<_> =
        frames.iter().map(|f| b.violations(f.fps, f.drawcalls, f.triangles)).collect();
    let worst_frame = frames
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, c)| a.fps.total_cmp(&c.fps))
        .map(|(i, _)| i);
    let mut warnings = Vec::new();
    if frames.is_empty() {
        warnings.push("no frames to check; budget passes vacuously".to_string());
    }
    BudgetReport {
        pass: verdicts.iter().all(Vec::is_empty),
        verdicts,
        worst_frame,
        warnings,
    }
}

/// Copies the verdicts of `report` into the frames' violation lists.
pub fn apply_verdicts(frames: &mut [FrameMetrics], report: &BudgetReport) {
    for (f, v) in frames.iter_mut().zip(&report.verdicts) {
        f.budget_violations = v.clone();
    }
}

pub fn metrics_csv(frames: &[FrameMetrics]) -> Vec<u8> {
    let mut out = String::from("frame,t,visible,triangles,drawcalls,frame_time_ms,fps,violations\n");
    for f in frames {
        let violations: Vec<String> = f.budget_violations.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{:.6},{:.3},{}",
            f.frame_index,
            f.time_secs,
            f.visible_nodes,
            f.triangles,
            f.drawcalls,
            f.frame_time_secs * 1e3,
            f.fps,
            violations.join(";")
        );
    }
    out.into_bytes()
}
