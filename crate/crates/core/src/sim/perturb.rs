//! Pose perturbation: `s' = s(1 + n_s)`, `R' = R·R_rand`, `T' = T + n_T`.
//!
//! `n_s ~ N(0, σ_scale)`; `R_rand` turns about a uniformly random axis by an
//! angle `~ N(0, σ_rot)`; `n_T` points in a uniformly random direction with a
//! length `~ N(0, σ_trans)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose9, Rot3, Sim3, Vec3};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Relative.
    pub sigma_scale: f64,
    /// Degrees.
    pub sigma_rot: f64,
    /// Meters.
    pub sigma_trans: f64,
}

impl PerturbSpec {
    pub fn new(sigma_scale: f64, sigma_rot: f64, sigma_trans: f64) -> Self {
        Self {
            sigma_scale,
            sigma_rot,
            sigma_trans,
        }
    }

    /// Rigid-object preset: 0.02, 5°, 3 cm.
    pub fn rigid() -> Self {
        Self::new(0.02, 5.0, 0.03)
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn scaled(&self, m: f64) -> Self {
        Self::new(self.sigma_scale * m, self.sigma_rot * m, self.sigma_trans * m)
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_scale == 0.0 && self.sigma_rot == 0.0 && self.sigma_trans == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma_scale, self.sigma_rot, self.sigma_trans]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::Config(format!("perturbation sigmas must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// One raw draw from the perturbation distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbDraw {
    pub n_scale: f64,
    pub rot_axis: Vec3,
    /// Signed angle, degrees.
    pub rot_angle: f64,
    pub trans_dir: Vec3,
    /// Signed length, meters.
    pub trans_len: f64,
}

impl PerturbDraw {
    pub fn sample(spec: &PerturbSpec, rng: &mut SimRng) -> Self {
        let n_scale = rng.normal(spec.sigma_scale);
        let rot_axis = rng.unit_vector();
        let rot_angle = rng.normal(spec.sigma_rot);
        let trans_dir = rng.unit_vector();
        let trans_len = rng.normal(spec.sigma_trans);
        Self {
            n_scale,
            rot_axis,
            rot_angle,
            trans_dir,
            trans_len,
        }
    }

    pub fn rotation(&self) -> Rot3 {
        Rot3::from_axis_angle(&self.rot_axis, self.rot_angle.to_radians())
    }

    pub fn translation(&self) -> Vec3 {
        self.trans_dir * self.trans_len
    }

    pub fn apply(&self, sim: &Sim3) -> Sim3 {
        Sim3 {
            s: sim.s * (1.0 + self.n_scale),
            r: sim.r * self.rotation(),
            t: sim.t + self.translation(),
        }
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Perturb a similarity transform, redrawing when the scale would be non-positive.
pub fn perturb_sim(sim: &Sim3, spec: &PerturbSpec, rng: &mut SimRng) -> Result<Sim3> {
    spec.validate()?;
    if spec.is_zero() {
        return Ok(*sim);
    }
    for _ in 0..MAX_ATTEMPTS {
        let out = PerturbDraw::sample(spec, rng).apply(sim);
        if out.s > 0.0 {
            return Ok(out);
        }
    }
    Err(Error::NonPositiveScale(0.0))
}

/// Perturb a 9DoF pose; the aspect `d/‖d‖` is left unchanged.
pub fn perturb_pose(pose: &Pose9, spec: &PerturbSpec, seed: u64) -> Result<Pose9> {
    if spec.is_zero() {
        spec.validate()?;
        return Ok(*pose);
    }
    let mut rng = SimRng::new(seed);
    let sim = perturb_sim(&pose.sim(), spec, &mut rng)?;
    Ok(Pose9::from_sim(&sim, &pose.aspect()))
}
