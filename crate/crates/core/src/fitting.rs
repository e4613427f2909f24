//! Similarity-transform estimation from 3D–3D correspondences.
//!
//! Camera-frame points `C` are related to normalized (NOCS/NPCS) coordinates
//! `Y` by `C = s·R·Y + T`. When `R` is already known (from rotation
//! averaging) only `s` and `T` remain; otherwise the full Umeyama closed form
//! is used. RANSAC wraps either estimator.

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{basis_to_y, Rot3, Sim3, Vec3};
use crate::rng::SimRng;

/// Smallest scale accepted from any estimator; downstream canonicalization divides by it.
pub const MIN_SCALE: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Correspondences {
    /// Observed points, meters.
    pub camera: Vec<Vec3>,
    /// Predicted normalized coordinates, unitless.
    pub normalized: Vec<Vec3>,
}

impl Correspondences {
    pub fn new(camera: Vec<Vec3>, normalized: Vec<Vec3>) -> Result<Self> {
        if camera.len() != normalized.len() {
            return Err(Error::invalid(format!(
                "{} camera points but {} normalized points",
                camera.len(),
                normalized.len()
            )));
        }
        Ok(Self { camera, normalized })
    }

    pub fn len(&self) -> usize {
        self.camera.len()
    }

    pub fn is_empty(&self) -> bool {
        self.camera.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Correspondences {
        Correspondences {
            camera: idx.iter().map(|&i| self.camera[i]).collect(),
            normalized: idx.iter().map(|&i| self.normalized[i]).collect(),
        }
    }

    fn require(&self, n: usize, what: &str) -> Result<()> {
        if self.len() < n {
            return Err(Error::invalid(format!(
                "{what} needs at least {n} correspondences, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Per-point residuals `‖C − model(Y)‖`.
pub fn residuals(corr: &Correspondences, model: &Sim3) -> Vec<f64> {
    corr.camera
        .iter()
        .zip(&corr.normalized)
        .map(|(c, y)| (c - model.apply(y)).norm())
        .collect()
}

fn mean(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64
}

/// How the scale is computed once the rotation is fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFormula {
    /// `s = Σ Wᵢ·Cᵢ / Σ Wᵢ·Wᵢ` on raw points. Exact only when the rotated
    /// normalized points are zero-mean or the translation is zero.
    Uncentered,
    /// Joint least squares in `(s, T)`: the same ratio on centroid-subtracted
    /// points. Exact on noise-free data for any point distribution.
    #[default]
    Centered,
}

/// Scale and translation given a rotation, using the uncentered ratio
/// `s = Σ Wᵀ C / Σ Wᵀ W` with `W = R·Y`, then `T = mean(C − s·W)`.
pub fn fit_scale_translation(corr: &Correspondences, r: &Rot3) -> Result<(f64, Vec3)> {
    fit_scale_translation_with(corr, r, ScaleFormula::Uncentered)
}

/// Joint least-squares scale and translation given a rotation.
pub fn fit_scale_translation_centered(corr: &Correspondences, r: &Rot3) -> Result<(f64, Vec3)> {
    fit_scale_translation_with(corr, r, ScaleFormula::Centered)
}

pub fn fit_scale_translation_with(
    corr: &Correspondences,
    r: &Rot3,
    formula: ScaleFormula,
) -> Result<(f64, Vec3)> {
    corr.require(1, "scale/translation fit")?;
    let w: Vec<Vec3> = corr.normalized.iter().map(|y| r * y).collect();
    let (w_ref, c_ref) = match formula {
        ScaleFormula::Uncentered => (Vec3::zeros(), Vec3::zeros()),
        ScaleFormula::Centered => (mean(&w), mean(&corr.camera)),
    };
    let (num, den) = w
        .iter()
        .zip(&corr.camera)
        .fold((0.0, 0.0), |(num, den), (wi, ci)| {
            let wc = wi - w_ref;
            (num + wc.dot(&(ci - c_ref)), den + wc.norm_squared())
        });
    if den < 1e-12 {
        return Err(Error::degenerate(format!(
            "normalized points carry no spread (Σ W·W = {den:e})"
        )));
    }
    let s = num / den;
    if !(s > MIN_SCALE) {
        return Err(Error::NonPositiveScale(s));
    }
    let t = corr
        .camera
        .iter()
        .zip(&w)
        .fold(Vec3::zeros(), |acc, (ci, wi)| acc + (ci - wi * s))
        / corr.len() as f64;
    Ok((s, t))
}

/// Least-squares similarity `C ≈ s·R·Y + T` (Umeyama's closed form).
pub fn umeyama_sim3(corr: &Correspondences) -> Result<Sim3> {
    corr.require(3, "Umeyama")?;
    let n = corr.len() as f64;
    let mu_c = mean(&corr.camera);
    let mu_y = mean(&corr.normalized);
    let mut cov = Matrix3::zeros();
    let mut var_y = 0.0;
    for (c, y) in corr.camera.iter().zip(&corr.normalized) {
        let yc = y - mu_y;
        cov += (c - mu_c) * yc.transpose();
        var_y += yc.norm_squared();
    }
    cov /= n;
    var_y /= n;
    if var_y < 1e-24 {
        return Err(Error::degenerate("normalized points are coincident"));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::degenerate("SVD of cross-covariance failed")),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    if sv[order[1]] <= 1e-12 * sv[order[0]].max(1e-300) {
        return Err(Error::degenerate("cross-covariance has rank < 2 (collinear points)"));
    }
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        d[order[2]] = -1.0;
    }
    let r = Rot3::from_matrix_unchecked(u * Matrix3::from_diagonal(&d) * v_t);
    let s = sv.dot(&d) / var_y;
    if !(s > MIN_SCALE) {
        return Err(Error::NonPositiveScale(s));
    }
    let t = mu_c - r.matrix() * mu_y * s;
    Ok(Sim3 { s, r, t })
}

/// 2D similarity `dst ≈ s·R(θ)·src + t`, or a rigid fit when `fixed_scale` is given.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity2 {
    /// Counter-clockwise angle, radians.
    pub theta: f64,
    pub s: f64,
    pub t: Vector2<f64>,
}

pub fn umeyama_2d(
    src: &[Vector2<f64>],
    dst: &[Vector2<f64>],
    fixed_scale: Option<f64>,
) -> Result<Similarity2> {
    if src.len() != dst.len() {
        return Err(Error::invalid("2D point lists differ in length"));
    }
    if src.len() < 2 {
        return Err(Error::invalid("2D Umeyama needs at least 2 points"));
    }
    if let Some(s) = fixed_scale {
        if !(s > 0.0) {
            return Err(Error::NonPositiveScale(s));
        }
    }
    let n = src.len() as f64;
    let mu_s = src.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mu_d = dst.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let (mut dot, mut cross, mut var) = (0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let a = p - mu_s;
        let b = q - mu_d;
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
        var += a.norm_squared();
    }
    if var < 1e-24 {
        return Err(Error::degenerate("2D source points are coincident"));
    }
    let theta = cross.atan2(dot);
    let s = fixed_scale.unwrap_or_else(|| dot.hypot(cross) / var);
    if !(s > MIN_SCALE) {
        return Err(Error::NonPositiveScale(s));
    }
    let (sin, cos) = theta.sin_cos();
    let rot = Matrix2::new(cos, -sin, sin, cos);
    let t = mu_d - rot * mu_s * s;
    Ok(Similarity2 { theta, s, t })
}

/// Result of fitting a rotationally symmetric part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricFit {
    pub s: f64,
    pub t: Vec3,
    /// Spin about the symmetry axis resolving the prediction ambiguity, radians.
    pub theta: f64,
    /// `r · R(axis, θ)`: the input rotation with the spin folded in.
    pub rotation: Rot3,
}

/// Scale/translation for a symmetric part whose normalized coordinates are
/// only determined up to a spin about `axis` (given in the normalized frame).
///
/// The spin is found with a 2D Umeyama fit on the plane orthogonal to the
/// axis. Axes other than `+y` are handled by a basis change onto `+y`.
pub fn fit_symmetric(
    corr: &Correspondences,
    r: &Rot3,
    axis: &Vec3,
    formula: ScaleFormula,
) -> Result<SymmetricFit> {
    corr.require(2, "symmetric fit")?;
    let q = basis_to_y(axis)?;
    // In the y-aligned basis: Y' = Q·Y and U = (R·Qᵀ)ᵀ·C = Q·Rᵀ·C.
    let qrt = q * r.transpose();
    // (z, x) ordering makes a right-handed spin about +y a counter-clockwise 2D rotation.
    let plane = |v: &Vec3| Vector2::new(v.z, v.x);
    let src: Vec<Vector2<f64>> = corr.normalized.iter().map(|y| plane(&(q * *y))).collect();
    let dst: Vec<Vector2<f64>> = corr.camera.iter().map(|c| plane(&(qrt * *c))).collect();
    let theta = umeyama_2d(&src, &dst, None)
        .map_err(|e| match e {
            Error::Degenerate(_) => {
                Error::degenerate("all points lie on the symmetry axis; spin is unobservable")
            }
            other => other,
        })?
        .theta;
    let spin = Rot3::from_axis_angle(axis, theta);
    let rotation = *r * spin;
    let (s, t) = fit_scale_translation_with(corr, &rotation, formula)?;
    Ok(SymmetricFit {
        s,
        t,
        theta,
        rotation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Meters, camera frame.
    pub inlier_threshold: f64,
    pub min_sample: usize,
    pub seed: u64,
}

impl RansacParams {
    pub fn full_sim3() -> Self {
        Self {
            iterations: 256,
            inlier_threshold: 0.01,
            min_sample: 4,
            seed: 0,
        }
    }

    pub fn scale_translation() -> Self {
        Self {
            min_sample: 3,
            ..Self::full_sim3()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("RANSAC iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Config("RANSAC inlier threshold must be > 0".into()));
        }
        if self.min_sample < 3 {
            return Err(Error::Config("RANSAC min_sample must be >= 3".into()));
        }
        Ok(())
    }
}

impl Default for RansacParams {
    fn default() -> Self {
        Self::full_sim3()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RansacMode {
    FullSim3,
    /// Rotation fixed; only scale and translation are hypothesized.
    ScaleTranslation(Rot3),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacFit {
    pub estimate: Sim3,
    pub inliers: Vec<bool>,
    pub iterations_run: usize,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn fit_mode(corr: &Correspondences, mode: &RansacMode) -> Result<Sim3> {
    match mode {
        RansacMode::FullSim3 => umeyama_sim3(corr),
        RansacMode::ScaleTranslation(r) => {
            let (s, t) = fit_scale_translation_centered(corr, r)?;
            Ok(Sim3 { s, r: *r, t })
        }
    }
}

fn inlier_mask(corr: &Correspondences, model: &Sim3, threshold: f64) -> Vec<bool> {
    residuals(corr, model).into_iter().map(|r| r <= threshold).collect()
}

/// Hypothesize-and-verify over minimal samples, then refit on the best consensus set.
pub fn ransac_fit(corr: &Correspondences, mode: RansacMode, params: &RansacParams) -> Result<RansacFit> {
    params.validate()?;
    corr.require(params.min_sample, "RANSAC")?;
    let mut rng = SimRng::new(params.seed);
    let mut best: Option<(usize, Vec<bool>)> = None;
    for _ in 0..params.iterations {
        let sample = rng.sample_indices(corr.len(), params.min_sample);
        let Ok(model) = fit_mode(&corr.subset(&sample), &mode) else {
            continue;
        };
        let mask = inlier_mask(corr, &model, params.inlier_threshold);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, mask));
        }
    }
    let (count, mask) = best.unwrap_or((0, vec![false; corr.len()]));
    if count < params.min_sample {
        return Err(Error::NoConsensus {
            best: count,
            required: params.min_sample,
        });
    }
    let idx: Vec<usize> = (0..corr.len()).filter(|&i| mask[i]).collect();
    let estimate = fit_mode(&corr.subset(&idx), &mode)?;
    let inliers = inlier_mask(corr, &estimate, params.inlier_threshold);
    Ok(RansacFit {
        estimate,
        inliers,
        iterations_run: params.iterations,
    })
}
