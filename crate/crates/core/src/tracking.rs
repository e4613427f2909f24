//! Per-part pose canonicalization and the frame-to-frame tracking loop.
//!
//! Each frame, the incoming cloud is mapped through the inverse of every
//! part's previous similarity estimate, so that what remains to be predicted
//! is a small delta around identity. A rotation predictor supplies per-point
//! delta rotations (averaged over the part's mask), a coordinate predictor
//! supplies segmentation and normalized coordinates, and scale/translation
//! follow in closed form.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{
    fit_scale_translation_with, fit_symmetric, ransac_fit, residuals, Correspondences, RansacMode, RansacParams, ScaleFormula,
};
use crate::geometry::{euclidean_mean, Pose9, Rot3, Sim3, Vec3};
use crate::rng::derive_seed;
use crate::sim::model::{JointKind, JointSpec};
use crate::sim::perturb::{perturb_sim, PerturbSpec};
use crate::rng::SimRng;

pub type PointCloud = Vec<Vec3>;

/// Current estimate for one rigid part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartEstimate {
    pub sim: Sim3,
    /// Unit aspect `d̂`; the size is `sim.s · aspect`.
    pub aspect: Vec3,
    /// Set when this frame's update failed and the previous estimate was carried forward.
    pub lost: bool,
}

impl PartEstimate {
    pub fn new(sim: Sim3, aspect: Vec3) -> Self {
        Self {
            sim,
            aspect,
            lost: false,
        }
    }

    pub fn from_pose(pose: &Pose9) -> Self {
        Self::new(pose.sim(), pose.aspect())
    }

    pub fn pose(&self) -> Pose9 {
        Pose9::from_sim(&self.sim, &self.aspect)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub parts: Vec<PartEstimate>,
    pub frame_index: usize,
}

impl TrackerState {
    pub fn new(parts: Vec<PartEstimate>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("tracker needs at least one part"));
        }
        Ok(Self { parts, frame_index: 0 })
    }

    pub fn poses(&self) -> Vec<Pose9> {
        self.parts.iter().map(PartEstimate::pose).collect()
    }
}

/// Simulator-only annotations, aligned with `Observation::points`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub nocs: Vec<Vec3>,
    pub poses: Vec<Pose9>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Camera frame, meters.
    pub points: PointCloud,
    pub gt: Option<GroundTruth>,
}

impl Observation {
    pub fn new(points: PointCloud) -> Self {
        Self { points, gt: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keep the given point indices, carrying annotations along.
    pub fn select(&self, idx: &[usize]) -> Observation {
        Observation {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            gt: self.gt.as_ref().map(|g| GroundTruth {
                labels: idx.iter().map(|&i| g.labels[i]).collect(),
                nocs: idx.iter().map(|&i| g.nocs[i]).collect(),
                poses: g.poses.clone(),
            }),
        }
    }
}

/// Segmentation and normalized coordinates for every point of the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinatePrediction {
    /// Part index per point, `None` for background.
    pub labels: Vec<Option<usize>>,
    pub nocs: Vec<Vec3>,
}

impl CoordinatePrediction {
    pub fn mask(&self, part: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| (*l == Some(part)).then_some(i))
            .collect()
    }
}

/// Per-point delta rotation predictions for one part.
#[derive(Clone, Debug, PartialEq)]
pub enum RotationPrediction {
    PerPoint(Vec<Rot3>),
    /// End points of the rotated symmetry axis, for symmetric parts.
    AxisEndpoints(Vec<Vec3>),
}

/// What a predictor may look at besides the canonicalized cloud.
pub struct PredictContext<'a> {
    pub frame_index: usize,
    /// The cropped observation the canonical clouds were computed from.
    pub observation: &'a Observation,
    pub parts: &'a [PartEstimate],
}

/// Stand-in for the rotation and coordinate networks.
pub trait Predictor: Sync {
    /// Segmentation and normalized coordinates from the cloud canonicalized
    /// by the anchor part's previous estimate.
    fn predict_coordinates(&self, canonical: &[Vec3], ctx: &PredictContext<'_>) -> Result<CoordinatePrediction>;

    /// Per-point delta rotations for `part`, from the cloud canonicalized by that part.
    fn predict_rotations(&self, canonical: &[Vec3], part: usize, ctx: &PredictContext<'_>) -> Result<RotationPrediction>;
}

/// `Z = s⁻¹ Rᵀ (X − T)` for every point.
pub fn canonicalize(x: &[Vec3], prev: &Sim3) -> PointCloud {
    let inv = prev.inverse();
    x.iter().map(|p| inv.apply(p)).collect()
}

/// `s' = s·ŝ`, `R' = R·R̂`, `T' = s·R·T̂ + T`.
pub fn recover_pose(prev: &Sim3, delta: &Sim3) -> Sim3 {
    Sim3 {
        s: prev.s * delta.s,
        r: (prev.r * delta.r).renormalize(),
        t: prev.r.matrix() * delta.t * prev.s + prev.t,
    }
}

/// The delta that `recover_pose(prev, ·)` maps onto `current`.
pub fn delta_of(prev: &Sim3, current: &Sim3) -> Sim3 {
    prev.inverse().compose(current)
}

/// Unit aspect from the axis ranges of normalized coordinates.
pub fn estimate_aspect_ratio(y: &[Vec3]) -> Result<Vec3> {
    estimate_aspect_ratio_noisy(y, 0.0)
}

/// Like [`estimate_aspect_ratio`], for coordinates carrying Gaussian noise of
/// per-axis standard deviation `sigma`. The extremes of `n` noisy samples
/// overshoot by about `sigma * sqrt(2 ln n)`, which is taken off each axis.
pub fn estimate_aspect_ratio_noisy(y: &[Vec3], sigma: f64) -> Result<Vec3> {
    if y.is_empty() {
        return Err(Error::invalid("aspect estimate needs at least one point"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("noise level must be >= 0"));
    }
    let half = y.iter().fold(Vec3::zeros(), |m, p| m.sup(&p.abs()));
    if half.amax() == 0.0 {
        return Err(Error::degenerate("all normalized coordinates are zero"));
    }
    let overshoot = if sigma > 0.0 { sigma * (2.0 * (y.len() as f64).ln()).sqrt() } else { 0.0 };
    let full = ((half.add_scalar(-overshoot)) * 2.0).map(|v| v.max(1e-6));
    Ok(full.normalize())
}

/// Indices of points within `radius` of `center`.
pub fn crop_ball_indices(scene: &[Vec3], center: &Vec3, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::invalid("crop radius must be > 0"));
    }
    let r2 = radius * radius;
    let idx: Vec<usize> = scene
        .iter()
        .enumerate()
        .filter_map(|(i, p)| ((p - center).norm_squared() <= r2).then_some(i))
        .collect();
    if idx.is_empty() {
        return Err(Error::LostTrack(format!(
            "no points within {radius} m of {:?}",
            center.as_slice()
        )));
    }
    Ok(idx)
}

pub fn crop_ball(scene: &[Vec3], center: &Vec3, radius: f64) -> Result<PointCloud> {
    Ok(crop_ball_indices(scene, center, radius)?
        .into_iter()
        .map(|i| scene[i])
        .collect())
}

/// One ball enclosing every part: centered at the mean part center, with
/// radius `factor` times the largest center offset plus half-diagonal.
pub fn object_ball(parts: &[PartEstimate], factor: f64) -> (Vec3, f64) {
    let center = parts.iter().fold(Vec3::zeros(), |a, p| a + p.sim.t) / parts.len() as f64;
    let reach = parts
        .iter()
        .map(|p| (p.sim.t - center).norm() + p.sim.s / 2.0)
        .fold(0.0, f64::max);
    (center, factor * reach)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AspectPolicy {
    HoldInitial,
    PerFrame,
    /// `d̂ ← normalize(d̂ + factor·(d̂_frame − d̂))`.
    Blend { factor: f64 },
}

impl Default for AspectPolicy {
    fn default() -> Self {
        AspectPolicy::Blend { factor: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerOptions {
    pub aspect_policy: AspectPolicy,
    pub ransac: Option<RansacParams>,
    /// Symmetry axis in NPCS; applies to every part when set.
    pub symmetric_axis: Option<Vec3>,
    pub scale_formula: ScaleFormula,
    pub crop_radius_factor: f64,
    /// Part whose canonical frame is fed to the coordinate predictor.
    pub anchor_part: usize,
    /// Parts with fewer masked points are marked lost.
    pub min_part_points: usize,
    /// Re-project sibling rotations onto shared revolute axes after each step.
    pub rotation_projection: bool,
    pub joints: Vec<JointSpec>,
    /// Seed for RANSAC sampling, mixed with frame and part indices.
    pub seed: u64,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        Self {
            aspect_policy: AspectPolicy::default(),
            ransac: None,
            symmetric_axis: None,
            scale_formula: ScaleFormula::Centered,
            crop_radius_factor: 1.2,
            anchor_part: 0,
            min_part_points: 3,
            rotation_projection: false,
            joints: Vec::new(),
            seed: 0,
        }
    }
}

fn lost(parts: &[PartEstimate]) -> Vec<PartEstimate> {
    parts.iter().map(|p| PartEstimate { lost: true, ..*p }).collect()
}

fn mean_direction(points: &[Vec3], idx: &[usize]) -> Result<Vec3> {
    let sum = idx.iter().fold(Vec3::zeros(), |a, &i| a + points[i]);
    let n = sum.norm();
    if n < 1e-12 {
        return Err(Error::degenerate("axis end points cancel out"));
    }
    Ok(sum / n)
}

/// Median of the norm of a standard 3D Gaussian.
const CHI3_MEDIAN: f64 = 1.538_172_254_455_84;

/// Aspect from the normalized coordinates whose residual under `sim` is
/// within a few median residuals, so stray predictions do not inflate the box
/// extents. The coordinate noise level is read off the median residual.
fn frame_aspect(corr: &Correspondences, sim: &Sim3) -> Result<Vec3> {
    let res = residuals(corr, sim);
    let mut sorted = res.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let gate = 3.0 * median + 1e-9 * sim.s;
    let kept: Vec<Vec3> = corr
        .normalized
        .iter()
        .zip(&res)
        .filter_map(|(y, r)| (*r <= gate).then_some(*y))
        .collect();
    estimate_aspect_ratio_noisy(&kept, median / (sim.s * CHI3_MEDIAN))
}

fn update_part(
    j: usize,
    est: &PartEstimate,
    obs: &Observation,
    coords: &CoordinatePrediction,
    predictor: &dyn Predictor,
    ctx: &PredictContext<'_>,
    options: &TrackerOptions,
) -> Result<PartEstimate> {
    let mask = coords.mask(j);
    if mask.len() < options.min_part_points {
        return Err(Error::LostTrack(format!("part {j}: {} masked points", mask.len())));
    }
    let canonical = canonicalize(&obs.points, &est.sim);
    let delta_r = match predictor.predict_rotations(&canonical, j, ctx)? {
        RotationPrediction::PerPoint(rs) => {
            let masked: Vec<Rot3> = mask.iter().map(|&i| rs[i]).collect();
            euclidean_mean(&masked, None)?
        }
        RotationPrediction::AxisEndpoints(ps) => {
            let axis = options
                .symmetric_axis
                .ok_or_else(|| Error::invalid("axis end points predicted for a part with no symmetry axis"))?;
            Rot3::aligning(&axis, &mean_direction(&ps, &mask)?)
        }
    };
    let mut rotation = (est.sim.r * delta_r).renormalize();

    let corr = Correspondences::new(
        mask.iter().map(|&i| obs.points[i]).collect(),
        mask.iter().map(|&i| coords.nocs[i]).collect(),
    )?;
    let (s, t) = if let Some(axis) = options.symmetric_axis {
        let fit = fit_symmetric(&corr, &rotation, &axis, options.scale_formula)?;
        rotation = fit.rotation.renormalize();
        (fit.s, fit.t)
    } else {
        fit_scale_translation_with(&corr, &rotation, options.scale_formula)?
    };
    let (s, t) = match &options.ransac {
        Some(params) => {
            let params = params.with_seed(derive_seed(options.seed, &[ctx.frame_index as u64, j as u64]));
            let fit = ransac_fit(&corr, RansacMode::ScaleTranslation(rotation), &params)?;
            (fit.estimate.s, fit.estimate.t)
        }
        None => (s, t),
    };

    let sim = Sim3::new(s, rotation, t)?;
    let aspect = match options.aspect_policy {
        AspectPolicy::HoldInitial => est.aspect,
        AspectPolicy::PerFrame => frame_aspect(&corr, &sim)?,
        AspectPolicy::Blend { factor } => {
            let frame = frame_aspect(&corr, &sim)?;
            let blended = est.aspect + (frame - est.aspect) * factor;
            blended.map(|v| v.max(1e-6)).normalize()
        }
    };
    Ok(PartEstimate {
        sim,
        aspect,
        lost: false,
    })
}

/// Advance the tracker by one observation.
///
/// Never mutates `state`. Parts whose update fails (empty mask, degenerate
/// fit, non-positive scale) keep their previous estimate with `lost` set; an
/// empty crop marks every part lost.
pub fn track_step(
    state: &TrackerState,
    obs: &Observation,
    predictor: &dyn Predictor,
    options: &TrackerOptions,
) -> Result<TrackerState> {
    if obs.is_empty() {
        return Err(Error::invalid("empty observation"));
    }
    if options.anchor_part >= state.parts.len() {
        return Err(Error::Config("anchor part out of range".into()));
    }
    let frame_index = state.frame_index + 1;
    let (center, radius) = object_ball(&state.parts, options.crop_radius_factor);
    let idx = match crop_ball_indices(&obs.points, &center, radius) {
        Ok(idx) => idx,
        Err(e) => {
            warn!("frame {frame_index}: {e}");
            return Ok(TrackerState {
                parts: lost(&state.parts),
                frame_index,
            });
        }
    };
    let cropped = obs.select(&idx);
    let ctx = PredictContext {
        frame_index,
        observation: &cropped,
        parts: &state.parts,
    };
    let anchor = canonicalize(&cropped.points, &state.parts[options.anchor_part].sim);
    let coords = match predictor.predict_coordinates(&anchor, &ctx) {
        Ok(c) => c,
        Err(e) => {
            warn!("frame {frame_index}: coordinate prediction failed: {e}");
            return Ok(TrackerState {
                parts: lost(&state.parts),
                frame_index,
            });
        }
    };
    if coords.labels.len() != cropped.len() || coords.nocs.len() != cropped.len() {
        return Err(Error::invalid("coordinate prediction does not cover the cloud"));
    }

    let mut parts: Vec<PartEstimate> = state
        .parts
        .iter()
        .enumerate()
        .map(|(j, est)| match update_part(j, est, &cropped, &coords, predictor, &ctx, options) {
            Ok(p) => p,
            Err(e) => {
                warn!("frame {frame_index}: part {j} lost: {e}");
                PartEstimate { lost: true, ..*est }
            }
        })
        .collect();

    if options.rotation_projection {
        project_joint_axes(&mut parts, &options.joints);
    }
    debug!("frame {frame_index}: tracked {} parts", parts.len());
    Ok(TrackerState { parts, frame_index })
}

/// Rotate the two parts of every revolute joint minimally so that both agree
/// on the joint axis direction in the camera frame.
pub fn project_joint_axes(parts: &mut [PartEstimate], joints: &[JointSpec]) {
    for j in joints.iter().filter(|j| j.kind == JointKind::Revolute) {
        let (Some(p), Some(c)) = (parts.get(j.parent).copied(), parts.get(j.child).copied()) else {
            continue;
        };
        if p.lost || c.lost {
            continue;
        }
        let child_axis = j.rest.r.transpose() * j.axis;
        let up = p.sim.r * j.axis;
        let uc = c.sim.r * child_axis;
        let mid = up + uc;
        if mid.norm() < 1e-9 {
            continue;
        }
        let target = mid.normalize();
        parts[j.parent].sim.r = (Rot3::aligning(&up, &target) * p.sim.r).renormalize();
        parts[j.child].sim.r = (Rot3::aligning(&uc, &target) * c.sim.r).renormalize();
    }
}

/// Initial state: every ground-truth part pose perturbed independently.
pub fn init_tracker(gt: &[Pose9], perturb: &PerturbSpec, seed: u64) -> Result<TrackerState> {
    let parts = gt
        .iter()
        .enumerate()
        .map(|(j, pose)| {
            let mut rng = SimRng::derived(seed, &[j as u64]);
            Ok(PartEstimate::new(perturb_sim(&pose.sim(), perturb, &mut rng)?, pose.aspect()))
        })
        .collect::<Result<Vec<_>>>()?;
    TrackerState::new(parts)
}
