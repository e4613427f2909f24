//! Partial-view point clouds from posed models.
//!
//! Hidden-point removal is approximated per part: a point is kept when its
//! offset from the part centroid points toward the viewpoint. This is not a
//! physical visibility test (parts never occlude each other) but it is cheap,
//! deterministic and yields realistic one-sided partiality.

use crate::error::{Error, Result};
use crate::geometry::{Pose9, Sim3, Vec3};
use crate::sim::model::ObjectModel;
use crate::tracking::{GroundTruth, Observation};

/// Deterministic farthest-point sampling starting from index 0.
pub fn farthest_point_sample(points: &[Vec3], k: usize) -> Vec<usize> {
    if k >= points.len() {
        return (0..points.len()).collect();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..k {
        chosen.push(next);
        let p = points[next];
        let mut best = (0, -1.0);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((points[i] - p).norm_squared());
            if *d > best.1 {
                best = (i, *d);
            }
        }
        next = best.0;
    }
    chosen.sort_unstable();
    chosen
}

/// Camera-frame observation of the model posed by `part_poses`, seen from
/// `viewpoint`, downsampled to at most `n_points`. Carries ground-truth labels,
/// normalized coordinates and per-part 9DoF poses.
pub fn render_observation(model: &ObjectModel, part_poses: &[Sim3], viewpoint: &Vec3, n_points: usize) -> Result<Observation> {
    if n_points == 0 {
        return Err(Error::invalid("n_points must be >= 1"));
    }
    if part_poses.len() != model.parts.len() {
        return Err(Error::invalid(format!(
            "{} poses for {} parts",
            part_poses.len(),
            model.parts.len()
        )));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut nocs = Vec::new();
    for (j, (part, pose)) in model.parts.iter().zip(part_poses).enumerate() {
        let centroid_npcs = part.canonical_points.iter().sum::<Vec3>() / part.canonical_points.len() as f64;
        let centroid = pose.apply(&centroid_npcs);
        let toward_view = viewpoint - centroid;
        for y in &part.canonical_points {
            let x = pose.apply(y);
            if (x - centroid).dot(&toward_view) > 0.0 {
                points.push(x);
                labels.push(j);
                nocs.push(*y);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::degenerate("every point was culled"));
    }
    let keep = farthest_point_sample(&points, n_points);
    let poses = model
        .parts
        .iter()
        .zip(part_poses)
        .map(|(p, s)| Pose9::from_sim(s, &p.aspect))
        .collect();
    Ok(Observation {
        points: keep.iter().map(|&i| points[i]).collect(),
        gt: Some(GroundTruth {
            labels: keep.iter().map(|&i| labels[i]).collect(),
            nocs: keep.iter().map(|&i| nocs[i]).collect(),
            poses,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{test_util::random_sim, Rot3};
    use crate::rng::SimRng;
    use crate::sim::model::{forward_kinematics, make_primitive_model, Category};

    #[test]
    fn far_viewpoint_keeps_facing_half() {
        let m = make_primitive_model(Category::Box, 0, 2000).unwrap();
        let pose = Sim3::identity();
        let obs = render_observation(&m, &[pose], &Vec3::new(0.0, 0.0, 1e9), 10_000).unwrap();
        let gt = obs.gt.unwrap();
        assert!(gt.nocs.iter().all(|y| y.z > 0.0));
        let facing = m.parts[0].canonical_points.iter().filter(|y| y.z > 0.0).count();
        assert_eq!(obs.points.len(), facing);
        // antipodal sampling: exactly half, give or take points on the z = 0 plane
        assert!((facing as i64 - 1000).abs() <= 20);
    }

    #[test]
    fn no_downsampling_when_budget_covers_everything() {
        let m = make_primitive_model(Category::Laptop, 1, 200).unwrap();
        let poses = forward_kinematics(&m, &Sim3::new(0.4, Rot3::identity(), Vec3::new(0.0, 0.0, 1.0)).unwrap(), &[0.3]).unwrap();
        let all = render_observation(&m, &poses, &Vec3::zeros(), 1_000_000).unwrap();
        let exact = render_observation(&m, &poses, &Vec3::zeros(), all.len()).unwrap();
        assert_eq!(all, exact);
        let fewer = render_observation(&m, &poses, &Vec3::zeros(), 50).unwrap();
        assert_eq!(fewer.len(), 50);
    }

    #[test]
    fn gt_round_trip_is_exact() {
        let mut rng = SimRng::new(2);
        for cat in Category::ALL {
            let m = make_primitive_model(cat, 3, 300).unwrap();
            let root = Sim3 { t: Vec3::new(0.0, 0.0, 1.0), ..random_sim(&mut rng) };
            let qs: Vec<f64> = m.joints.iter().map(|j| rng.uniform_range(j.limits.0, j.limits.1)).collect();
            let poses = forward_kinematics(&m, &root, &qs).unwrap();
            let obs = render_observation(&m, &poses, &Vec3::zeros(), 512).unwrap();
            let gt = obs.gt.as_ref().unwrap();
            for ((x, y), &l) in obs.points.iter().zip(&gt.nocs).zip(&gt.labels) {
                assert!((gt.poses[l].sim().apply(y) - x).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn fps_is_deterministic_and_spread() {
        let mut rng = SimRng::new(3);
        let pts: Vec<Vec3> = (0..500).map(|_| rng.uniform_in_box(1.0)).collect();
        let a = farthest_point_sample(&pts, 40);
        assert_eq!(a, farthest_point_sample(&pts, 40));
        assert_eq!(a.len(), 40);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 40);
    }
}
