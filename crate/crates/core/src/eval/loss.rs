//! Deterministic pose and coordinate losses.

use crate::error::{Error, Result};
use crate::geometry::{Sim3, Vec3};

/// The 8 corners of the box with unit diagonal and extents along `aspect`.
pub fn box_corners(aspect: &Vec3) -> [Vec3; 8] {
    let h = aspect / 2.0;
    std::array::from_fn(|i| {
        Vec3::new(
            if i & 1 == 0 { -h.x } else { h.x },
            if i & 2 == 0 { -h.y } else { h.y },
            if i & 4 == 0 { -h.z } else { h.z },
        )
    })
}

/// Where the line through the origin along `axis` leaves the box.
pub fn axis_surface_points(aspect: &Vec3, axis: &Vec3) -> [Vec3; 2] {
    let h = aspect / 2.0;
    let reach = (0..3)
        .filter(|&k| axis[k].abs() > 1e-15)
        .map(|k| h[k] / axis[k].abs())
        .fold(f64::INFINITY, f64::min);
    [axis * reach, -axis * reach]
}

/// Mean distance between box points mapped by the predicted and the true
/// similarity. Uses the 8 corners, or the 2 axis-surface points when a
/// symmetry axis is given.
pub fn corner_loss(pred: &Sim3, gt: &Sim3, gt_aspect: &Vec3, symmetric_axis: Option<&Vec3>) -> f64 {
    let mean = |pts: &[Vec3]| pts.iter().map(|c| (gt.apply(c) - pred.apply(c)).norm()).sum::<f64>() / pts.len() as f64;
    match symmetric_axis {
        Some(axis) => mean(&axis_surface_points(gt_aspect, axis)),
        None => mean(&box_corners(gt_aspect)),
    }
}

/// Pairwise-distance MSE plus the mean spin-invariant coordinate distance
/// `√(|x²+z²−x̂²−ẑ²| + (y−ŷ)²)`, for coordinates symmetric about y.
pub fn symmetric_coord_loss(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!("{} predicted vs {} true coordinates", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("coordinate loss needs at least one point"));
    }
    let n = pred.len();
    let mut pair = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = (pred[i] - pred[j]).norm() - (gt[i] - gt[j]).norm();
            pair += e * e;
        }
    }
    let coord: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let (rg, rp) = (g.x * g.x + g.z * g.z, p.x * p.x + p.z * p.z);
            // below rounding noise the difference is indistinguishable from zero,
            // and the square root would blow it up to ~1e-9
            let mut radial = (rg - rp).abs();
            if radial <= 8.0 * f64::EPSILON * (rg + rp) {
                radial = 0.0;
            }
            (radial + (g.y - p.y).powi(2)).sqrt()
        })
        .sum();
    Ok(pair / (n * n) as f64 + coord / n as f64)
}
