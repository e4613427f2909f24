//! Smooth, seeded motion sequences for a model's root pose and joints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rot3, Sim3, Vec3};
use crate::rng::SimRng;
use crate::sim::model::{Category, ObjectModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Root part scale (box diagonal, meters).
    pub root_scale: f64,
    /// Distance of the object from the camera along +z, meters.
    pub distance: f64,
    /// Upper bound on the frame-to-frame root rotation, degrees.
    pub max_rot_per_frame: f64,
    /// Upper bound on the frame-to-frame root translation, meters.
    pub max_trans_per_frame: f64,
    /// Total joint-state change per 100 frames, one entry per joint
    /// (radians or meters). `None` uses the category default.
    pub joint_change_per_100: Option<Vec<f64>>,
}

impl MotionSpec {
    pub fn for_category(category: Category) -> Self {
        Self {
            root_scale: category.root_scale(),
            distance: 1.0,
            max_rot_per_frame: 1.0,
            max_trans_per_frame: 0.004,
            joint_change_per_100: None,
        }
    }

    /// Nothing moves.
    pub fn still(category: Category, joints: usize) -> Self {
        Self {
            max_rot_per_frame: 0.0,
            max_trans_per_frame: 0.0,
            joint_change_per_100: Some(vec![0.0; joints]),
            ..Self::for_category(category)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameState {
    pub root: Sim3,
    pub joints: Vec<f64>,
}

/// Smooth speed profile in [0, 1].
fn speed(phase: f64, t: usize, period: f64) -> f64 {
    0.5 + 0.5 * (phase + std::f64::consts::TAU * t as f64 / period).sin()
}

/// Generate `length` frames of root pose and joint states.
///
/// The root turns about a fixed random axis and drifts along a fixed random
/// direction with smoothly varying speed, never exceeding the per-frame caps.
/// Each joint moves monotonically (reflecting off its limits if the range is
/// exhausted) so that its total change over 100 frames equals the configured
/// magnitude.
pub fn sample_trajectory(model: &ObjectModel, length: usize, motion: &MotionSpec, seed: u64) -> Result<Vec<FrameState>> {
    if length == 0 {
        return Err(Error::invalid("trajectory length must be >= 1"));
    }
    if !(motion.root_scale > 0.0) {
        return Err(Error::Config("root_scale must be > 0".into()));
    }
    let changes = match &motion.joint_change_per_100 {
        Some(c) if c.len() != model.joints.len() => {
            return Err(Error::Config(format!(
                "{} joint change rates for {} joints",
                c.len(),
                model.joints.len()
            )))
        }
        Some(c) => c.clone(),
        None => vec![model.category.joint_change_per_100_frames(); model.joints.len()],
    };
    let mut rng = SimRng::new(seed);

    let mut root = Sim3 {
        s: motion.root_scale,
        r: rng.uniform_rotation(),
        t: Vec3::new(0.0, 0.0, motion.distance) + rng.uniform_in_box(0.05),
    };
    let rot_axis = rng.unit_vector();
    let trans_dir = rng.unit_vector();
    let (rot_phase, trans_phase) = (rng.uniform_range(0.0, 6.3), rng.uniform_range(0.0, 6.3));

    // Joint schedules: per-step increments with a smooth profile normalized
    // so they sum to the 100-frame magnitude over 99 steps.
    let steps = length - 1;
    let mut joint_state = Vec::with_capacity(model.joints.len());
    let mut joint_dir = Vec::with_capacity(model.joints.len());
    let mut joint_profile = Vec::with_capacity(model.joints.len());
    for (j, &change) in model.joints.iter().zip(&changes) {
        let (lo, hi) = j.limits;
        let total = change * steps as f64 / 99.0;
        let dir = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
        let room = (hi - lo - total).max(0.0);
        let offset = rng.uniform() * room;
        let start = if dir > 0.0 { lo + offset } else { hi - offset };
        joint_state.push(start.clamp(lo, hi));
        joint_dir.push(dir);
        let phase = rng.uniform_range(0.0, 6.3);
        let weights: Vec<f64> = (0..steps).map(|t| 0.5 + speed(phase, t, 37.0)).collect();
        let sum: f64 = weights.iter().sum();
        joint_profile.push(
            weights
                .into_iter()
                .map(|w| if sum > 0.0 { total * w / sum } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
    }

    let mut frames = Vec::with_capacity(length);
    frames.push(FrameState {
        root,
        joints: joint_state.clone(),
    });
    for t in 0..steps {
        let angle = motion.max_rot_per_frame * speed(rot_phase, t, 50.0);
        let step = motion.max_trans_per_frame * speed(trans_phase, t, 60.0);
        if angle > 0.0 {
            root.r = (Rot3::from_axis_angle(&rot_axis, angle.to_radians()) * root.r).renormalize();
        }
        if step > 0.0 {
            root.t += trans_dir * step;
        }
        for (k, j) in model.joints.iter().enumerate() {
            let (lo, hi) = j.limits;
            let mut q = joint_state[k] + joint_dir[k] * joint_profile[k][t];
            // reflect off the limits
            for _ in 0..4 {
                if q > hi {
                    q = 2.0 * hi - q;
                    joint_dir[k] = -joint_dir[k];
                } else if q < lo {
                    q = 2.0 * lo - q;
                    joint_dir[k] = -joint_dir[k];
                }
            }
            joint_state[k] = q.clamp(lo, hi);
        }
        frames.push(FrameState {
            root,
            joints: joint_state.clone(),
        });
    }
    Ok(frames)
}
