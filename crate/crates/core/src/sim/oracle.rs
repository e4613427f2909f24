//! Synthetic stand-ins for the rotation and coordinate networks.
//!
//! Both read the ground truth carried by the observation and corrupt it with
//! configurable noise. Every random stream is derived from
//! `(noise.seed, frame, part, stream)` so predictions are reproducible and
//! independent of evaluation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rot3, Vec3};
use crate::rng::SimRng;
use crate::tracking::{
    delta_of, CoordinatePrediction, Observation, PartEstimate, PredictContext, Predictor, RotationPrediction,
};

const STREAM_ROTATION: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_COORDS: u64 = 3;
const STREAM_OUTLIERS: u64 = 4;
const ALL_PARTS: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Isotropic Gaussian noise on normalized coordinates (NOCS units).
    #[serde(default)]
    pub coord_sigma: f64,
    /// Per-point rotation noise angle, degrees.
    #[serde(default)]
    pub rot_sigma: f64,
    /// Fraction of points whose coordinates are replaced by uniform samples.
    #[serde(default)]
    pub outlier_fraction: f64,
    /// Probability of a point being labeled as a wrong part.
    #[serde(default)]
    pub seg_error_rate: f64,
    /// Fraction of the true delta rotation the rotation oracle fails to
    /// predict. 0 is a perfect delta; 1 predicts identity.
    #[serde(default)]
    pub rot_residual: f64,
    /// Spin applied to predicted coordinates about the symmetry axis, degrees.
    #[serde(default)]
    pub symmetric_spin_deg: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::zero(0)
    }
}

impl NoiseSpec {
    pub fn zero(seed: u64) -> Self {
        Self {
            coord_sigma: 0.0,
            rot_sigma: 0.0,
            outlier_fraction: 0.0,
            seg_error_rate: 0.0,
            rot_residual: 0.0,
            symmetric_spin_deg: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.coord_sigma, self.rot_sigma, self.symmetric_spin_deg.abs()]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        let unit = [self.outlier_fraction, self.seg_error_rate, self.rot_residual]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !(nonneg && unit) {
            return Err(Error::Config(format!("invalid noise spec: {self:?}")));
        }
        Ok(())
    }
}

fn gt_of(obs: &Observation) -> Result<&crate::tracking::GroundTruth> {
    obs.gt
        .as_ref()
        .ok_or_else(|| Error::invalid("oracle predictors need an observation with ground truth"))
}

/// Per-point delta rotations for `part`: the exact delta from the current
/// estimate to the ground truth (shrunk by `rot_residual`), each composed
/// with an independent noise rotation. For symmetric parts, the rotated
/// symmetry axis is returned per point instead.
pub fn oracle_rotation_predictor(
    obs: &Observation,
    parts: &[PartEstimate],
    part: usize,
    noise: &NoiseSpec,
    frame: usize,
    symmetric_axis: Option<&Vec3>,
) -> Result<RotationPrediction> {
    let gt = gt_of(obs)?;
    let (Some(est), Some(truth)) = (parts.get(part), gt.poses.get(part)) else {
        return Err(Error::invalid(format!("part {part} out of range")));
    };
    let mut delta = delta_of(&est.sim, &truth.sim()).r;
    if noise.rot_residual > 0.0 {
        delta = Rot3::from_scaled_axis(&(delta.log() * (1.0 - noise.rot_residual)));
    }
    let mut rng = SimRng::derived(noise.seed, &[frame as u64, part as u64, STREAM_ROTATION]);
    let mut perturbed = || {
        if noise.rot_sigma > 0.0 {
            (delta * rng.gaussian_rotation(noise.rot_sigma)).renormalize()
        } else {
            delta
        }
    };
    Ok(match symmetric_axis {
        Some(axis) => RotationPrediction::AxisEndpoints((0..obs.len()).map(|_| perturbed() * *axis).collect()),
        None => RotationPrediction::PerPoint((0..obs.len()).map(|_| perturbed()).collect()),
    })
}

/// Ground-truth labels and normalized coordinates with segmentation flips,
/// Gaussian coordinate noise, an optional spin about the symmetry axis and
/// uniform outliers.
pub fn oracle_coordinate_predictor(
    obs: &Observation,
    n_parts: usize,
    noise: &NoiseSpec,
    frame: usize,
    symmetric_axis: Option<&Vec3>,
) -> Result<CoordinatePrediction> {
    let gt = gt_of(obs)?;
    let n = obs.len();
    let stream = |s| SimRng::derived(noise.seed, &[frame as u64, ALL_PARTS, s]);

    let mut labels: Vec<Option<usize>> = gt.labels.iter().map(|&l| Some(l)).collect();
    if noise.seg_error_rate > 0.0 && n_parts > 1 {
        let mut rng = stream(STREAM_LABELS);
        for l in labels.iter_mut() {
            if rng.uniform() < noise.seg_error_rate {
                let cur = l.unwrap_or(0);
                let wrong = (cur + 1 + rng.index(n_parts - 1)) % n_parts;
                *l = Some(wrong);
            }
        }
    }

    let spin = match symmetric_axis {
        Some(axis) if noise.symmetric_spin_deg != 0.0 => {
            Some(Rot3::from_axis_angle(axis, noise.symmetric_spin_deg.to_radians()))
        }
        _ => None,
    };
    let mut rng = stream(STREAM_COORDS);
    let mut nocs: Vec<Vec3> = gt
        .nocs
        .iter()
        .map(|y| {
            let y = spin.as_ref().map_or(*y, |r| r * y);
            if noise.coord_sigma > 0.0 {
                y + Vec3::new(
                    rng.normal(noise.coord_sigma),
                    rng.normal(noise.coord_sigma),
                    rng.normal(noise.coord_sigma),
                )
            } else {
                y
            }
        })
        .collect();

    let k = (noise.outlier_fraction * n as f64).round() as usize;
    if k > 0 {
        let mut rng = stream(STREAM_OUTLIERS);
        for i in rng.sample_indices(n, k.min(n)) {
            nocs[i] = rng.uniform_in_box(0.5);
        }
    }
    Ok(CoordinatePrediction { labels, nocs })
}

/// Both oracles behind the tracker's predictor interface.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePredictor {
    pub noise: NoiseSpec,
    pub symmetric_axis: Option<Vec3>,
}

impl OraclePredictor {
    pub fn new(noise: NoiseSpec, symmetric_axis: Option<Vec3>) -> Self {
        Self { noise, symmetric_axis }
    }
}

impl Predictor for OraclePredictor {
    fn predict_coordinates(&self, _canonical: &[Vec3], ctx: &PredictContext<'_>) -> Result<CoordinatePrediction> {
        oracle_coordinate_predictor(
            ctx.observation,
            ctx.parts.len(),
            &self.noise,
            ctx.frame_index,
            self.symmetric_axis.as_ref(),
        )
    }

    fn predict_rotations(&self, _canonical: &[Vec3], part: usize, ctx: &PredictContext<'_>) -> Result<RotationPrediction> {
        oracle_rotation_predictor(
            ctx.observation,
            ctx.parts,
            part,
            &self.noise,
            ctx.frame_index,
            self.symmetric_axis.as_ref(),
        )
    }
}
