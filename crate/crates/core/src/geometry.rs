//! Rotations, similarity transforms, 9DoF poses and rotation averaging.
//!
//! Rotations are stored as 3×3 matrices throughout; averaging and the 6D
//! representation both operate on matrices directly.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on `mᵀm = I` and `det m = 1` for a valid rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation has non-finite entries"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if ortho > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "not a rotation: |mᵀm - I| = {ortho:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rodrigues' formula. `axis` need not be normalized; a zero axis yields identity.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let kx = k.cross_matrix();
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Rotation `exp([w]×)` for a rotation vector `w` (radians).
    pub fn from_scaled_axis(w: &Vec3) -> Self {
        Self::from_axis_angle(w, w.norm())
    }

    pub fn from_unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Self(q.to_rotation_matrix().into_inner())
    }

    /// Shortest-arc rotation taking unit direction `from` onto unit direction `to`.
    pub fn aligning(from: &Vec3, to: &Vec3) -> Self {
        let a = from.normalize();
        let b = to.normalize();
        let axis = a.cross(&b);
        let sin = axis.norm();
        let cos = a.dot(&b);
        if sin < 1e-15 {
            if cos > 0.0 {
                return Self::identity();
            }
            // Antiparallel: half turn about any axis orthogonal to `a`.
            let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let perp = a.cross(&helper).normalize();
            return Self::from_axis_angle(&perp, std::f64::consts::PI);
        }
        Self::from_axis_angle(&axis, sin.atan2(cos))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    /// Snap back onto SO(3); used after long composition chains.
    pub fn renormalize(&self) -> Self {
        project_to_so3(&self.0).unwrap_or(*self)
    }

    /// Rotation vector (axis · angle in radians, angle in [0, π]).
    pub fn log(&self) -> Vec3 {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        let (w, v) = (q.w, q.imag());
        let (w, v) = if w < 0.0 { (-w, -v) } else { (w, v) };
        let vn = v.norm();
        if vn < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * vn.atan2(w);
        v * (angle / vn)
    }

    /// Rotation angle in degrees.
    pub fn angle_deg(&self) -> f64 {
        rotation_angle(&Rot3::identity(), self)
    }

    pub fn is_valid(&self) -> bool {
        Rot3::new(self.0).is_ok()
    }
}

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl Mul<&Rot3> for &Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: &Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// First two columns of a rotation, before orthonormalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot6D {
    pub a: Vec3,
    pub b: Vec3,
}

impl Rot6D {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Self { a, b }
    }
}

/// Gram–Schmidt on the two 6D columns.
pub fn rot_from_6d(v: &Rot6D) -> Result<Rot3> {
    let na = v.a.norm();
    let nb = v.b.norm();
    if !(na.is_finite() && nb.is_finite()) || na < 1e-9 || nb < 1e-9 {
        return Err(Error::degenerate("6D rotation has a (near) zero column"));
    }
    let c1 = v.a / na;
    let b_perp = v.b - c1 * v.b.dot(&c1);
    if b_perp.norm() < 1e-9 * nb {
        return Err(Error::degenerate("6D rotation columns are parallel"));
    }
    let c2 = b_perp.normalize();
    let c3 = c1.cross(&c2);
    Ok(Rot3(Matrix3::from_columns(&[c1, c2, c3])))
}

pub fn rot_to_6d(r: &Rot3) -> Rot6D {
    Rot6D::new(r.column(0), r.column(1))
}

/// Nearest rotation in Frobenius norm.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rot3> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::degenerate("matrix has non-finite entries"));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::degenerate("SVD failed")),
    };
    let sv = svd.singular_values;
    let (min_idx, min_sv) = sv
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    if min_sv < 1e-12 {
        return Err(Error::degenerate(format!(
            "rank-deficient matrix (smallest singular value {min_sv:e})"
        )));
    }
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    d[min_idx] = (u * v_t).determinant().signum();
    Ok(Rot3(u * Matrix3::from_diagonal(&d) * v_t))
}

/// Projected (optionally weighted) arithmetic mean of rotation matrices.
pub fn euclidean_mean(rs: &[Rot3], weights: Option<&[f64]>) -> Result<Rot3> {
    if rs.is_empty() {
        return Err(Error::invalid("euclidean mean of an empty set"));
    }
    let sum = match weights {
        None => rs.iter().fold(Matrix3::zeros(), |acc, r| acc + r.0),
        Some(w) => {
            if w.len() != rs.len() {
                return Err(Error::invalid(format!(
                    "{} weights for {} rotations",
                    w.len(),
                    rs.len()
                )));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::invalid("weights must be finite and nonnegative"));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid("weights sum to zero"));
            }
            rs.iter()
                .zip(w)
                .fold(Matrix3::zeros(), |acc, (r, &wi)| acc + r.0 * wi)
        }
    };
    // Uniform scaling of the sum leaves the projection unchanged, but
    // normalizing keeps the rank test meaningful.
    let scale = sum.abs().max();
    if scale == 0.0 {
        return Err(Error::degenerate("mean rotation matrix is zero"));
    }
    project_to_so3(&(sum / scale))
}

/// Geodesic angle between two rotations, in degrees within [0, 180].
///
/// Uses `atan2(sin, cos)` rather than `acos` of the clamped trace term; both
/// agree mathematically but `acos` loses about half the digits near zero.
pub fn rotation_angle(ra: &Rot3, rb: &Rot3) -> f64 {
    let m = ra.0.transpose() * rb.0;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (vee.norm() / 2.0).min(1.0);
    sin.atan2(cos).to_degrees()
}

fn check_unit(axis: &Vec3) -> Result<()> {
    if (axis.norm() - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::invalid(format!(
            "axis must be unit length, got norm {}",
            axis.norm()
        )));
    }
    Ok(())
}

/// Where the rotation sends the end point of a unit axis.
pub fn axis_endpoint(r: &Rot3, axis: &Vec3) -> Result<Vec3> {
    check_unit(axis)?;
    Ok(r.0 * axis)
}

/// Angle in degrees between two unit vectors.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Rotation error that ignores spin about a symmetry axis.
pub fn symmetric_rotation_angle(ra: &Rot3, rb: &Rot3, axis: &Vec3) -> Result<f64> {
    let pa = axis_endpoint(ra, axis)?;
    let pb = axis_endpoint(rb, axis)?;
    Ok(angle_between(&pa, &pb))
}

/// Rotation `q` with `q · axis = +y`, for moving a symmetry axis onto the y-axis.
pub fn basis_to_y(axis: &Vec3) -> Result<Rot3> {
    check_unit(axis)?;
    Ok(Rot3::aligning(axis, &Vec3::y()))
}

/// 7DoF similarity transform `p ↦ s·R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub s: f64,
    pub r: Rot3,
    pub t: Vec3,
}

impl Sim3 {
    pub fn new(s: f64, r: Rot3, t: Vec3) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonPositiveScale(s));
        }
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation has non-finite entries"));
        }
        Ok(Self { s, r, t })
    }

    pub fn identity() -> Self {
        Self {
            s: 1.0,
            r: Rot3::identity(),
            t: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            t,
            ..Self::identity()
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.r.0 * p * self.s + self.t
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        Sim3 {
            s: self.s * other.s,
            r: self.r * other.r,
            t: self.r.0 * other.t * self.s + self.t,
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let rt = self.r.transpose();
        let inv_s = 1.0 / self.s;
        Sim3 {
            s: inv_s,
            r: rt,
            t: -(rt.0 * self.t) * inv_s,
        }
    }

    pub fn renormalized(&self) -> Sim3 {
        Sim3 {
            r: self.r.renormalize(),
            ..*self
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.r.0 * self.s));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    /// Largest componentwise difference over (s, R, t).
    pub fn max_abs_diff(&self, other: &Sim3) -> f64 {
        let ds = (self.s - other.s).abs();
        let dr = (self.r.0 - other.r.0).amax();
        let dt = (self.t - other.t).amax();
        ds.max(dr).max(dt)
    }
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn apply_sim(a: &Sim3, p: &Vec3) -> Vec3 {
    a.apply(p)
}

pub fn compose_sim(a: &Sim3, b: &Sim3) -> Sim3 {
    a.compose(b)
}

pub fn inverse_sim(a: &Sim3) -> Sim3 {
    a.inverse()
}

/// Category-level 9DoF pose: per-axis size `d`, rotation and translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose9 {
    pub d: Vec3,
    pub r: Rot3,
    pub t: Vec3,
}

impl Pose9 {
    pub fn new(d: Vec3, r: Rot3, t: Vec3) -> Result<Self> {
        if !d.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("size components must be positive, got {d:?}")));
        }
        Ok(Self { d, r, t })
    }

    /// `s = ‖d‖`, the length of the box diagonal.
    pub fn scale(&self) -> f64 {
        self.d.norm()
    }

    /// Unit aspect `d / ‖d‖`.
    pub fn aspect(&self) -> Vec3 {
        self.d / self.scale()
    }

    pub fn sim(&self) -> Sim3 {
        Sim3 {
            s: self.scale(),
            r: self.r,
            t: self.t,
        }
    }

    pub fn from_sim(sim: &Sim3, aspect: &Vec3) -> Pose9 {
        Pose9 {
            d: aspect.normalize() * sim.s,
            r: sim.r,
            t: sim.t,
        }
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use crate::rng::SimRng;

    pub fn random_sim(rng: &mut SimRng) -> Sim3 {
        Sim3 {
            s: rng.uniform_range(0.2, 3.0),
            r: rng.uniform_rotation(),
            t: rng.uniform_in_box(2.0),
        }
    }

    /// Rotation angle via quaternion, independent of the trace formula.
    pub fn quaternion_angle_deg(ra: &Rot3, rb: &Rot3) -> f64 {
        let m = ra.matrix().transpose() * rb.matrix();
        let q = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
        (2.0 * q.imag().norm().atan2(q.w.abs())).to_degrees()
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use crate::rng::SimRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rz(deg: f64) -> Rot3 {
        Rot3::from_axis_angle(&Vec3::z(), deg.to_radians())
    }

    #[test]
    fn apply_sim_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Sim3::identity().apply(&p), p);
        let a = Sim3::new(2.0, Rot3::identity(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(a.apply(&Vec3::x()), Vec3::new(2.0, 0.0, 1.0));
    }

    #[test]
    fn apply_sim_matches_homogeneous_product() {
        let mut rng = SimRng::new(1);
        for _ in 0..100 {
            let a = random_sim(&mut rng);
            let p = rng.uniform_in_box(1.0);
            let h = a.to_homogeneous() * p.push(1.0);
            let q = a.apply(&p);
            for i in 0..3 {
                assert_abs_diff_eq!(q[i], h[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn compose_and_inverse() {
        let mut rng = SimRng::new(2);
        let b = random_sim(&mut rng);
        assert_eq!(Sim3::identity().compose(&b), b);
        assert_eq!(Sim3::identity().inverse(), Sim3::identity());
        let half = Sim3::new(2.0, Rot3::identity(), Vec3::zeros()).unwrap().inverse();
        assert_eq!(half.s, 0.5);
        assert_eq!(half.t, Vec3::zeros());
        for _ in 0..100 {
            let a = random_sim(&mut rng);
            let b = random_sim(&mut rng);
            assert!(a.compose(&a.inverse()).max_abs_diff(&Sim3::identity()) < 1e-12);
            assert!(a.inverse().compose(&a).max_abs_diff(&Sim3::identity()) < 1e-12);
            let ab = a.compose(&b);
            assert_eq!(ab.s, a.s * b.s);
            for _ in 0..20 {
                let p = rng.uniform_in_box(1.0);
                let seq = a.apply(&b.apply(&p));
                assert!((ab.apply(&p) - seq).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn rot6d_examples() {
        let id = rot_from_6d(&Rot6D::new(Vec3::x(), Vec3::y())).unwrap();
        assert_eq!(id, Rot3::identity());
        let id2 = rot_from_6d(&Rot6D::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0))).unwrap();
        assert!((id2.matrix() - Matrix3::identity()).amax() < 1e-15);

        let six = rot_to_6d(&Rot3::identity());
        assert_eq!((six.a, six.b), (Vec3::x(), Vec3::y()));
        let six = rot_to_6d(&rz(90.0));
        assert!((six.a - Vec3::y()).amax() < 1e-15);
        assert!((six.b - Vec3::new(-1.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn rot6d_degenerate_inputs() {
        assert!(matches!(
            rot_from_6d(&Rot6D::new(Vec3::zeros(), Vec3::y())),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            rot_from_6d(&Rot6D::new(Vec3::x(), Vec3::x() * 3.0)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn project_examples() {
        assert_eq!(project_to_so3(&(Matrix3::identity() * 2.0)).unwrap(), Rot3::identity());
        let mut rng = SimRng::new(4);
        let r = rng.uniform_rotation();
        assert!((project_to_so3(r.matrix()).unwrap().matrix() - r.matrix()).amax() < 1e-12);
        assert!(matches!(
            project_to_so3(&Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0))),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn project_matches_grid_search() {
        // Brute-force oracle: search an angle-axis neighborhood of R for the
        // rotation minimizing ‖m - Q‖_F.
        let mut rng = SimRng::new(5);
        for _ in 0..3 {
            let r = rng.uniform_rotation();
            let noise = Matrix3::from_fn(|_, _| rng.gaussian());
            let m = r.matrix() + noise * 1e-3;
            let fro = |q: &Rot3| (m - q.matrix()).norm();

            let mut best = r;
            let mut step = 2e-3;
            for _ in 0..12 {
                let center = best;
                for i in -4..=4 {
                    for j in -4..=4 {
                        for k in -4..=4 {
                            let w = Vec3::new(i as f64, j as f64, k as f64) * (step / 4.0);
                            let q = center * Rot3::from_scaled_axis(&w);
                            if fro(&q) < fro(&best) {
                                best = q;
                            }
                        }
                    }
                }
                step /= 3.0;
            }
            let projected = project_to_so3(&m).unwrap();
            assert!(rotation_angle(&projected, &best) < 1e-5);
            assert!(rotation_angle(&projected, &r) < 0.5);
        }
    }

    #[test]
    fn euclidean_mean_examples() {
        let mut rng = SimRng::new(6);
        let r = rng.uniform_rotation();
        let m = euclidean_mean(&[r; 7], None).unwrap();
        assert!((m.matrix() - r.matrix()).amax() < 1e-12);

        let m = euclidean_mean(&[rz(10.0), rz(-10.0)], None).unwrap();
        assert!((m.matrix() - Matrix3::identity()).amax() < 1e-9);

        assert!(euclidean_mean(&[], None).is_err());
        assert!(euclidean_mean(&[r], Some(&[0.0])).is_err());
        // opposite half-turns cancel into a rank-deficient mean
        let flip = Rot3::from_axis_angle(&Vec3::z(), std::f64::consts::PI);
        assert!(matches!(
            euclidean_mean(&[Rot3::identity(), flip], None),
            Err(Error::Degenerate(_))
        ));
    }

    /// Iterative Karcher (geodesic) mean.
    fn geodesic_mean(rs: &[Rot3]) -> Rot3 {
        let mut mean = rs[0];
        for _ in 0..100 {
            let delta = rs
                .iter()
                .map(|r| (mean.transpose() * *r).log())
                .fold(Vec3::zeros(), |a, b| a + b)
                / rs.len() as f64;
            mean = mean * Rot3::from_scaled_axis(&delta);
            if delta.norm() < 1e-15 {
                break;
            }
        }
        mean
    }

    #[test]
    fn euclidean_mean_close_to_geodesic_mean_on_shared_axis() {
        let mut rng = SimRng::new(8);
        let axis = rng.unit_vector();
        let angles: Vec<f64> = (0..100).map(|_| rng.uniform_range(0.0, 5.0)).collect();
        let rs: Vec<Rot3> = angles
            .iter()
            .map(|a| Rot3::from_axis_angle(&axis, a.to_radians()))
            .collect();
        let em = euclidean_mean(&rs, None).unwrap();
        let gm = geodesic_mean(&rs);
        assert!(rotation_angle(&em, &gm) < 1e-3);
        let mean_angle = angles.iter().sum::<f64>() / angles.len() as f64;
        let expect = Rot3::from_axis_angle(&axis, mean_angle.to_radians());
        assert!(rotation_angle(&em, &expect) < 1e-2);
    }

    #[test]
    fn rotation_angle_examples() {
        let mut rng = SimRng::new(9);
        let r = rng.uniform_rotation();
        assert!(rotation_angle(&r, &r) < 1e-12);
        assert_abs_diff_eq!(rotation_angle(&Rot3::identity(), &rz(90.0)), 90.0, epsilon = 1e-12);
        for _ in 0..1000 {
            let a = rng.uniform_rotation();
            let b = rng.uniform_rotation();
            assert_abs_diff_eq!(rotation_angle(&a, &b), quaternion_angle_deg(&a, &b), epsilon = 1e-9);
        }
    }

    #[test]
    fn axis_endpoint_examples() {
        assert_eq!(axis_endpoint(&Rot3::identity(), &Vec3::y()).unwrap(), Vec3::y());
        let ry = Rot3::from_axis_angle(&Vec3::y(), std::f64::consts::FRAC_PI_2);
        assert!((axis_endpoint(&ry, &Vec3::y()).unwrap() - Vec3::y()).amax() < 1e-15);
        let mut rng = SimRng::new(10);
        let r = rng.uniform_rotation();
        assert_eq!(axis_endpoint(&r, &Vec3::y()).unwrap(), r.column(1));
        assert!(axis_endpoint(&r, &Vec3::new(0.0, 2.0, 0.0)).is_err());
    }

    #[test]
    fn symmetric_angle_examples() {
        let mut rng = SimRng::new(12);
        let axis = Vec3::y();
        let rb = rng.uniform_rotation();
        let ra = rb * Rot3::from_axis_angle(&axis, 37f64.to_radians());
        assert!(symmetric_rotation_angle(&ra, &rb, &axis).unwrap() < 1e-9);
        let rx = Rot3::from_axis_angle(&Vec3::x(), std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(
            symmetric_rotation_angle(&Rot3::identity(), &rx, &axis).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        for _ in 0..100 {
            let a = rng.uniform_rotation();
            let b = rng.uniform_rotation();
            let dot = (a.matrix() * axis).dot(&(b.matrix() * axis)).clamp(-1.0, 1.0);
            assert_abs_diff_eq!(
                symmetric_rotation_angle(&a, &b, &axis).unwrap(),
                dot.acos().to_degrees(),
                epsilon = 1e-6
            );
        }
        assert!(symmetric_rotation_angle(&ra, &rb, &(axis * 0.5)).is_err());
    }

    #[test]
    fn basis_to_y_maps_axis() {
        let mut rng = SimRng::new(13);
        for _ in 0..50 {
            let a = rng.unit_vector();
            let q = basis_to_y(&a).unwrap();
            assert!((q * a - Vec3::y()).amax() < 1e-12);
        }
        let q = basis_to_y(&-Vec3::y()).unwrap();
        assert!((q * -Vec3::y() - Vec3::y()).amax() < 1e-12);
    }

    #[test]
    fn log_round_trip() {
        let mut rng = SimRng::new(14);
        for _ in 0..100 {
            let w = rng.unit_vector() * rng.uniform_range(0.0, 3.0);
            let r = Rot3::from_scaled_axis(&w);
            assert!((r.log() - w).amax() < 1e-12);
        }
    }

    #[test]
    fn pose9_factorization() {
        let p = Pose9::new(Vec3::new(0.3, 0.4, 1.2), Rot3::identity(), Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(p.scale(), 1.3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.aspect().norm(), 1.0, epsilon = 1e-15);
        let back = Pose9::from_sim(&p.sim(), &p.aspect());
        assert!((back.d - p.d).amax() < 1e-15);
        assert!(Pose9::new(Vec3::new(0.0, 1.0, 1.0), Rot3::identity(), Vec3::zeros()).is_err());
    }

    fn arb_rot() -> impl Strategy<Value = Rot3> {
        any::<u64>().prop_map(|s| SimRng::new(s).uniform_rotation())
    }

    fn arb_sim() -> impl Strategy<Value = Sim3> {
        any::<u64>().prop_map(|s| random_sim(&mut SimRng::new(s)))
    }

    proptest! {
        #[test]
        fn sim_inverse_law(a in arb_sim()) {
            prop_assert!(a.compose(&a.inverse()).max_abs_diff(&Sim3::identity()) < 1e-12);
        }

        #[test]
        fn rot6d_round_trip(r in arb_rot()) {
            let back = rot_from_6d(&rot_to_6d(&r)).unwrap();
            prop_assert!((back.matrix() - r.matrix()).amax() < 1e-12);
        }

        #[test]
        fn rot6d_noisy_is_valid(r in arb_rot(), seed in any::<u64>()) {
            let mut rng = SimRng::new(seed);
            let six = rot_to_6d(&r);
            let noisy = Rot6D::new(six.a + rng.uniform_in_box(0.3), six.b + rng.uniform_in_box(0.3));
            let out = rot_from_6d(&noisy).unwrap();
            prop_assert!(out.is_valid());
        }

        #[test]
        fn projection_ignores_positive_scaling(r in arb_rot(), c in 1e-3f64..1e3) {
            let p = project_to_so3(&(r.matrix() * c)).unwrap();
            prop_assert!((p.matrix() - r.matrix()).amax() < 1e-12);
        }

        #[test]
        fn mean_is_order_and_weight_scale_invariant(seed in any::<u64>(), k in 0.01f64..100.0) {
            let mut rng = SimRng::new(seed);
            let base = rng.uniform_rotation();
            let rs: Vec<Rot3> = (0..20).map(|_| base * rng.gaussian_rotation(10.0)).collect();
            let w: Vec<f64> = (0..20).map(|_| rng.uniform()).collect();
            let m1 = euclidean_mean(&rs, Some(&w)).unwrap();
            let mut idx: Vec<usize> = (0..20).collect();
            idx.reverse();
            idx.swap(3, 11);
            let rs2: Vec<Rot3> = idx.iter().map(|&i| rs[i]).collect();
            let w2: Vec<f64> = idx.iter().map(|&i| w[i] * k).collect();
            let m2 = euclidean_mean(&rs2, Some(&w2)).unwrap();
            prop_assert!((m1.matrix() - m2.matrix()).amax() < 1e-12);
        }

        #[test]
        fn rotation_angle_is_a_metric(a in arb_rot(), b in arb_rot(), c in arb_rot()) {
            let ab = rotation_angle(&a, &b);
            prop_assert!((ab - rotation_angle(&b, &a)).abs() < 1e-9);
            prop_assert!(rotation_angle(&a, &a) < 1e-9);
            prop_assert!(ab <= rotation_angle(&a, &c) + rotation_angle(&c, &b) + 1e-9);
            prop_assert!((0.0..=180.0).contains(&ab));
        }

        #[test]
        fn symmetric_angle_ignores_spin(a in arb_rot(), b in arb_rot(), spin in -3.14f64..3.14, seed in any::<u64>()) {
            let axis = SimRng::new(seed).unit_vector();
            let q = Rot3::from_axis_angle(&axis, spin);
            let lhs = symmetric_rotation_angle(&(a * q), &b, &axis).unwrap();
            let rhs = symmetric_rotation_angle(&a, &b, &axis).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
