use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, symmetric_rotation_angle, Pose9, Rot3, Sim3, Vec3};
use crate::sim::model::{JointReading, JointSpec};

pub const ACC_ROT_DEG: f64 = 5.0;
pub const ACC_TRANS_M: f64 = 0.05;
pub const JOINT_AXIS_TOLERANCE_DEG: f64 = 15.0;

/// Rotation error in degrees; spin about `symmetric_axis` is ignored when given.
pub fn rotation_error_metric(pred: &Rot3, gt: &Rot3, symmetric_axis: Option<&Vec3>) -> Result<f64> {
    match symmetric_axis {
        Some(axis) => symmetric_rotation_angle(pred, gt, axis),
        None => Ok(rotation_angle(pred, gt)),
    }
}

/// Strictly below 5° and 5 cm.
pub fn within_5deg5cm(r_err_deg: f64, t_err_m: f64) -> bool {
    r_err_deg < ACC_ROT_DEG && t_err_m < ACC_TRANS_M
}

/// Fraction of (prediction, ground truth) pairs within 5°5cm.
pub fn accuracy_5deg5cm(preds: &[Pose9], gts: &[Pose9], symmetric_axis: Option<&Vec3>) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth poses",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("accuracy needs at least one pose"));
    }
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        let r = rotation_error_metric(&p.r, &g.r, symmetric_axis)?;
        if within_5deg5cm(r, (p.t - g.t).norm()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / preds.len() as f64)
}

/// Joint state (radians or meters) read from a parent and child pose, with
/// the default axis-deviation tolerance.
pub fn joint_state(parent: &Sim3, child: &Sim3, joint: &JointSpec) -> JointReading {
    joint.read_state(parent, child, JOINT_AXIS_TOLERANCE_DEG)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use crate::sim::model::{forward_kinematics, make_primitive_model, Category};
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_error_examples() {
        let r = SimRng::new(1).uniform_rotation();
        assert_eq!(rotation_error_metric(&r, &r, None).unwrap(), 0.0);
        let x90 = Rot3::from_axis_angle(&Vec3::x(), std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(rotation_error_metric(&Rot3::identity(), &x90, None).unwrap(), 90.0, epsilon = 1e-12);
        let axis = Vec3::y();
        let spun = r * Rot3::from_axis_angle(&axis, 60f64.to_radians());
        assert!(rotation_error_metric(&spun, &r, Some(&axis)).unwrap() < 1e-9);
        assert!(rotation_error_metric(&spun, &r, None).unwrap() > 59.0);
    }

    fn pose_with_error(r_deg: f64, t_m: f64) -> (Pose9, Pose9) {
        let gt = Pose9::new(Vec3::repeat(0.2), Rot3::identity(), Vec3::zeros()).unwrap();
        let pred = Pose9::new(
            gt.d,
            Rot3::from_axis_angle(&Vec3::z(), r_deg.to_radians()),
            Vec3::new(t_m, 0.0, 0.0),
        )
        .unwrap();
        (pred, gt)
    }

    #[test]
    fn accuracy_threshold_boundary() {
        let (p, g) = pose_with_error(4.9, 0.049);
        assert_eq!(accuracy_5deg5cm(&[p], &[g], None).unwrap(), 1.0);
        let (p, g) = pose_with_error(5.1, 0.049);
        assert_eq!(accuracy_5deg5cm(&[p], &[g], None).unwrap(), 0.0);
        let (p, g) = pose_with_error(4.9, 0.051);
        assert_eq!(accuracy_5deg5cm(&[p], &[g], None).unwrap(), 0.0);
        assert!(!within_5deg5cm(5.0, 0.0));
        assert!(!within_5deg5cm(0.0, 0.05));
        assert!(accuracy_5deg5cm(&[p], &[], None).is_err());
        assert!(accuracy_5deg5cm(&[], &[], None).is_err());
    }

    #[test]
    fn accuracy_matches_recount() {
        let mut rng = SimRng::new(2);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        let mut count = 0;
        for _ in 0..500 {
            let (r, t) = (rng.uniform_range(0.0, 10.0), rng.uniform_range(0.0, 0.1));
            let (p, g) = pose_with_error(r, t);
            if r < 5.0 && t < 0.05 {
                count += 1;
            }
            preds.push(p);
            gts.push(g);
        }
        let acc = accuracy_5deg5cm(&preds, &gts, None).unwrap();
        assert_eq!(acc, count as f64 / 500.0);
    }

    #[test]
    fn joint_state_round_trip() {
        let m = make_primitive_model(Category::Laptop, 0, 16).unwrap();
        let root = Sim3::new(0.4, SimRng::new(3).uniform_rotation(), Vec3::new(0.1, 0.0, 1.0)).unwrap();
        let poses = forward_kinematics(&m, &root, &[0.7]).unwrap();
        let read = joint_state(&poses[0], &poses[1], &m.joints[0]);
        assert_abs_diff_eq!(read.value, 0.7, epsilon = 1e-12);
        assert!(!read.flagged);
        let poses = forward_kinematics(&m, &root, &[0.0]).unwrap();
        assert_abs_diff_eq!(joint_state(&poses[0], &poses[1], &m.joints[0]).value, 0.0, epsilon = 1e-12);

        let d = make_primitive_model(Category::Drawers, 0, 16).unwrap();
        let poses = forward_kinematics(&d, &root, &[0.05, 0.0, 0.0]).unwrap();
        let j = &d.joints[0];
        assert_abs_diff_eq!(joint_state(&poses[j.parent], &poses[j.child], j).value, 0.05, epsilon = 1e-12);
    }
}
