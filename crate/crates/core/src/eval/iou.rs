//! Exact IoU of oriented boxes by convex polytope clipping.

use crate::error::{Error, Result};
use crate::geometry::{Pose9, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    /// Center `t`, rotation `r`, full extents `d`.
    pub pose: Pose9,
}

impl OrientedBox {
    pub fn new(pose: Pose9) -> Result<Self> {
        if !pose.d.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid(format!("box extents must be > 0: {:?}", pose.d.as_slice())));
        }
        Ok(Self { pose })
    }

    pub fn volume(&self) -> f64 {
        self.pose.d.product()
    }

    /// World-frame point from box-frame coordinates.
    fn to_world(&self, local: &Vec3) -> Vec3 {
        self.pose.r * *local + self.pose.t
    }

    /// Outward face planes `n·x ≤ h`.
    fn planes(&self) -> [(Vec3, f64); 6] {
        let half = self.pose.d / 2.0;
        let mut out = [(Vec3::zeros(), 0.0); 6];
        for k in 0..3 {
            let n = self.pose.r.column(k);
            let c = n.dot(&self.pose.t);
            out[2 * k] = (n, c + half[k]);
            out[2 * k + 1] = (-n, -c + half[k]);
        }
        out
    }

    /// Six faces, each counter-clockwise seen from outside.
    fn faces(&self) -> Vec<Vec<Vec3>> {
        let h = self.pose.d / 2.0;
        let corner = |sx: f64, sy: f64, sz: f64| self.to_world(&Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        let quads = [
            [(1., -1., -1.), (1., 1., -1.), (1., 1., 1.), (1., -1., 1.)],
            [(-1., -1., -1.), (-1., -1., 1.), (-1., 1., 1.), (-1., 1., -1.)],
            [(-1., 1., -1.), (-1., 1., 1.), (1., 1., 1.), (1., 1., -1.)],
            [(-1., -1., -1.), (1., -1., -1.), (1., -1., 1.), (-1., -1., 1.)],
            [(-1., -1., 1.), (1., -1., 1.), (1., 1., 1.), (-1., 1., 1.)],
            [(-1., -1., -1.), (-1., 1., -1.), (1., 1., -1.), (1., -1., -1.)],
        ];
        quads
            .iter()
            .map(|q| q.iter().map(|&(x, y, z)| corner(x, y, z)).collect())
            .collect()
    }
}

/// Convex polytope as a list of outward-oriented polygons.
struct Polytope {
    faces: Vec<Vec<Vec3>>,
}

impl Polytope {
    /// Keep the part with `n·x ≤ h`. Returns false when the plane does not cut.
    fn clip(&mut self, n: &Vec3, h: f64, eps: f64) -> bool {
        let dist = |p: &Vec3| n.dot(p) - h;
        if self.faces.iter().flatten().all(|p| dist(p) <= eps) {
            return false;
        }
        let mut cap: Vec<Vec3> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in &self.faces {
            let mut out = Vec::with_capacity(face.len() + 1);
            for (i, p) in face.iter().enumerate() {
                let q = &face[(i + 1) % face.len()];
                let (dp, dq) = (dist(p), dist(q));
                if dp <= eps {
                    out.push(*p);
                    if dp.abs() <= eps {
                        cap.push(*p);
                    }
                }
                if (dp < -eps && dq > eps) || (dp > eps && dq < -eps) {
                    let x = p + (q - p) * (dp / (dp - dq));
                    out.push(x);
                    cap.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if let Some(poly) = cap_polygon(cap, n, eps) {
            faces.push(poly);
        }
        self.faces = faces;
        true
    }

    /// Divergence-theorem volume, relative to `origin` for precision.
    fn volume(&self, origin: &Vec3) -> f64 {
        let mut v = 0.0;
        for face in &self.faces {
            let a = face[0] - origin;
            for w in face[1..].windows(2) {
                v += a.dot(&(w[0] - origin).cross(&(w[1] - origin)));
            }
        }
        (v / 6.0).max(0.0)
    }
}

/// Deduplicated points on the cutting plane, ordered counter-clockwise about `n`.
fn cap_polygon(points: Vec<Vec3>, n: &Vec3, eps: f64) -> Option<Vec<Vec3>> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !uniq.iter().any(|u| (u - p).norm() <= 10.0 * eps) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let c = uniq.iter().sum::<Vec3>() / uniq.len() as f64;
    let u = (uniq[0] - c).normalize();
    let v = n.cross(&u);
    let mut keyed: Vec<(f64, Vec3)> = uniq
        .into_iter()
        .map(|p| {
            let d = p - c;
            (d.dot(&v).atan2(d.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Volume of `a ∩ b`.
pub fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let scale = a.pose.d.amax().max(b.pose.d.amax());
    let eps = 1e-12 * scale.max((a.pose.t - b.pose.t).amax());
    let mut poly = Polytope { faces: a.faces() };
    let mut cut = false;
    for (n, h) in b.planes() {
        cut |= poly.clip(&n, h, eps);
        if poly.faces.len() < 4 {
            return 0.0;
        }
    }
    if !cut {
        return a.volume();
    }
    // b inside a
    if b.faces().iter().flatten().all(|p| a.planes().iter().all(|(n, h)| n.dot(p) - h <= eps)) {
        return b.volume();
    }
    poly.volume(&a.pose.t).min(a.volume()).min(b.volume())
}

/// Intersection over union of two oriented boxes, in [0, 1].
pub fn oriented_iou3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = intersection_volume(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Rot3;
    use crate::rng::SimRng;
    use approx::assert_abs_diff_eq;

    fn aabb(center: Vec3, d: Vec3) -> OrientedBox {
        OrientedBox::new(Pose9::new(d, Rot3::identity(), center).unwrap()).unwrap()
    }

    pub(crate) fn random_pair(rng: &mut SimRng) -> (OrientedBox, OrientedBox) {
        let d = Vec3::new(rng.uniform_range(0.2, 1.0), rng.uniform_range(0.2, 1.0), rng.uniform_range(0.2, 1.0));
        let a = OrientedBox::new(Pose9::new(d, rng.uniform_rotation(), rng.uniform_in_box(0.5)).unwrap()).unwrap();
        let d = Vec3::new(rng.uniform_range(0.2, 1.0), rng.uniform_range(0.2, 1.0), rng.uniform_range(0.2, 1.0));
        let t = a.pose.t + rng.uniform_in_box(0.3);
        let b = OrientedBox::new(Pose9::new(d, rng.uniform_rotation(), t).unwrap()).unwrap();
        (a, b)
    }

    /// Midpoint grid over `a` counting cells whose center lies in `b`.
    pub(crate) fn grid_iou(a: &OrientedBox, b: &OrientedBox, per_axis: usize) -> f64 {
        let binv = b.pose.r.transpose();
        let hb = b.pose.d / 2.0;
        let mut inside = 0usize;
        for i in 0..per_axis {
            for j in 0..per_axis {
                for k in 0..per_axis {
                    let f = |n: usize, e: f64| ((n as f64 + 0.5) / per_axis as f64 - 0.5) * e;
                    let local = Vec3::new(f(i, a.pose.d.x), f(j, a.pose.d.y), f(k, a.pose.d.z));
                    let q = binv * (a.to_world(&local) - b.pose.t);
                    if q.x.abs() <= hb.x && q.y.abs() <= hb.y && q.z.abs() <= hb.z {
                        inside += 1;
                    }
                }
            }
        }
        let inter = a.volume() * inside as f64 / (per_axis * per_axis * per_axis) as f64;
        inter / (a.volume() + b.volume() - inter)
    }

    #[test]
    fn analytic_cases() {
        let a = aabb(Vec3::zeros(), Vec3::repeat(1.0));
        assert_eq!(oriented_iou3d(&a, &a), 1.0);
        let b = aabb(Vec3::new(0.5, 0.0, 0.0), Vec3::repeat(1.0));
        assert_abs_diff_eq!(oriented_iou3d(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
        let far = aabb(Vec3::new(1.5, 0.0, 0.0), Vec3::repeat(1.0));
        assert_eq!(oriented_iou3d(&a, &far), 0.0);
        let touching = aabb(Vec3::new(1.0, 0.0, 0.0), Vec3::repeat(1.0));
        assert_abs_diff_eq!(oriented_iou3d(&a, &touching), 0.0, epsilon = 1e-12);

        let mut rng = SimRng::new(1);
        for _ in 0..200 {
            let (ca, cb) = (rng.uniform_in_box(0.5), rng.uniform_in_box(0.5));
            let da = Vec3::new(rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0));
            let db = Vec3::new(rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0));
            let overlap: f64 = (0..3)
                .map(|k| ((ca[k] + da[k] / 2.0).min(cb[k] + db[k] / 2.0) - (ca[k] - da[k] / 2.0).max(cb[k] - db[k] / 2.0)).max(0.0))
                .product();
            let expect = overlap / (da.product() + db.product() - overlap);
            let got = oriented_iou3d(&aabb(ca, da), &aabb(cb, db));
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn nested_boxes() {
        let a = aabb(Vec3::zeros(), Vec3::repeat(1.0));
        let rot = Rot3::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0).normalize(), 0.5);
        let b = OrientedBox::new(Pose9::new(Vec3::repeat(0.3), rot, Vec3::new(0.1, 0.0, 0.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(oriented_iou3d(&a, &b), 0.027, epsilon = 1e-15);
        assert_abs_diff_eq!(oriented_iou3d(&b, &a), 0.027, epsilon = 1e-15);
    }

    #[test]
    fn matches_grid_oracle() {
        let mut rng = SimRng::new(2);
        for _ in 0..20 {
            let (a, b) = random_pair(&mut rng);
            let exact = oriented_iou3d(&a, &b);
            let grid = grid_iou(&a, &b, 100);
            assert!((exact - grid).abs() < 5e-3, "{exact} vs {grid}");
        }
    }

    #[test]
    fn symmetric_and_rigid_invariant() {
        let mut rng = SimRng::new(3);
        for _ in 0..200 {
            let (a, b) = random_pair(&mut rng);
            let ab = oriented_iou3d(&a, &b);
            assert!((ab - oriented_iou3d(&b, &a)).abs() <= 1e-12);
            let g = rng.uniform_rotation();
            let shift = rng.uniform_in_box(2.0);
            let move_box = |x: &OrientedBox| {
                OrientedBox::new(Pose9::new(x.pose.d, g * x.pose.r, g * x.pose.t + shift).unwrap()).unwrap()
            };
            assert!((ab - oriented_iou3d(&move_box(&a), &move_box(&b))).abs() <= 1e-9);
        }
    }

    #[test]
    fn rejects_flat_boxes() {
        assert!(OrientedBox::new(Pose9 { d: Vec3::new(1.0, 0.0, 1.0), r: Rot3::identity(), t: Vec3::zeros() }).is_err());
    }
}
