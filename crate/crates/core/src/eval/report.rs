//! Per-run metric reports and their aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::iou::{oriented_iou3d, OrientedBox};
use crate::eval::metrics::{rotation_error_metric, within_5deg5cm, JOINT_AXIS_TOLERANCE_DEG};
use crate::geometry::{Pose9, Rot3, Vec3};
use crate::sim::model::{JointKind, JointSpec};
use crate::tracking::PartEstimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Leading frames left out of the means (frame 0 is the initialization).
    pub skip_frames: usize,
    /// Build predicted boxes with ground-truth extents.
    pub gt_extents: bool,
    pub joint_tolerance_deg: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            skip_frames: 1,
            gt_extents: false,
            joint_tolerance_deg: JOINT_AXIS_TOLERANCE_DEG,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartMetrics {
    pub r_err_deg: f64,
    pub t_err_cm: f64,
    pub iou: f64,
    pub correct: bool,
    pub lost: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMetrics {
    pub kind: JointKind,
    pub predicted: f64,
    pub truth: f64,
    /// Degrees for revolute joints, centimeters for prismatic ones.
    pub err: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub lost: bool,
    pub acc: f64,
    pub iou: f64,
    pub r_err_deg: f64,
    pub t_err_cm: f64,
    pub theta_err_deg: Option<f64>,
    pub d_err_cm: Option<f64>,
    pub parts: Vec<PartMetrics>,
    pub joints: Vec<JointMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc_5deg5cm: f64,
    pub mean_iou: f64,
    pub r_err_deg: f64,
    pub t_err_cm: f64,
    pub theta_err_deg: Option<f64>,
    pub d_err_cm: Option<f64>,
    pub lost_frames: usize,
    pub evaluated_frames: usize,
    pub frames: Vec<FrameMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Spin about `axis` that best aligns `pred` with `gt`.
fn align_spin(pred: &Rot3, gt: &Rot3, axis: &Vec3) -> Rot3 {
    let m = pred.transpose().matrix() * gt.matrix();
    let w = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let phi = axis.dot(&w).atan2(m.trace() - axis.dot(&(m * axis)));
    (*pred * Rot3::from_axis_angle(axis, phi)).renormalize()
}

fn part_metrics(pred: &PartEstimate, gt: &Pose9, axis: Option<&Vec3>, opts: &EvalOptions) -> Result<PartMetrics> {
    let r_err = rotation_error_metric(&pred.sim.r, &gt.r, axis)?;
    let t_err = (pred.sim.t - gt.t).norm();
    let r_box = match axis {
        Some(a) => align_spin(&pred.sim.r, &gt.r, a),
        None => pred.sim.r,
    };
    let d = if opts.gt_extents { gt.d } else { pred.aspect * pred.sim.s };
    let pred_box = OrientedBox::new(Pose9 { d, r: r_box, t: pred.sim.t })?;
    let iou = oriented_iou3d(&pred_box, &OrientedBox::new(*gt)?);
    Ok(PartMetrics {
        r_err_deg: r_err,
        t_err_cm: t_err * 100.0,
        iou,
        correct: within_5deg5cm(r_err, t_err),
        lost: pred.lost,
    })
}

fn joint_metrics(pred: &[PartEstimate], gt: &[Pose9], joint: &JointSpec, tol: f64) -> JointMetrics {
    let p = joint.read_state(&pred[joint.parent].sim, &pred[joint.child].sim, tol);
    let g = joint.read_state(&gt[joint.parent].sim(), &gt[joint.child].sim(), tol);
    let diff = (p.value - g.value).abs();
    JointMetrics {
        kind: joint.kind,
        predicted: p.value,
        truth: g.value,
        err: match joint.kind {
            JointKind::Revolute => diff.to_degrees(),
            JointKind::Prismatic => diff * 100.0,
        },
        flagged: p.flagged,
    }
}

/// Metrics for one tracked trajectory.
///
/// Per frame, part metrics are averaged over parts. Run means average the
/// frame values over evaluated frames, which excludes the first
/// `skip_frames` frames and every frame with a lost part. Lost frames are
/// counted and their per-frame metrics still reported.
pub fn evaluate_run(
    preds: &[Vec<PartEstimate>],
    gts: &[Vec<Pose9>],
    symmetric_axis: Option<&Vec3>,
    joints: &[JointSpec],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if preds.len() != gts.len() {
        return Err(Error::invalid(format!("{} predicted frames for {} ground-truth frames", preds.len(), gts.len())));
    }
    let mut frames = Vec::with_capacity(preds.len());
    for (f, (pred, gt)) in preds.iter().zip(gts).enumerate() {
        if pred.len() != gt.len() || gt.is_empty() {
            return Err(Error::invalid(format!("frame {f}: {} predicted parts for {} true parts", pred.len(), gt.len())));
        }
        if let Some(j) = joints.iter().find(|j| j.parent >= gt.len() || j.child >= gt.len()) {
            return Err(Error::invalid(format!("joint {}→{} references a missing part", j.parent, j.child)));
        }
        let parts = pred
            .iter()
            .zip(gt)
            .map(|(p, g)| part_metrics(p, g, symmetric_axis, opts))
            .collect::<Result<Vec<_>>>()?;
        let joint_rows: Vec<JointMetrics> = joints
            .iter()
            .map(|j| joint_metrics(pred, gt, j, opts.joint_tolerance_deg))
            .collect();
        let of_kind = |k| mean(joint_rows.iter().filter(|j| j.kind == k).map(|j| j.err));
        frames.push(FrameMetrics {
            frame: f,
            lost: parts.iter().any(|p| p.lost),
            acc: mean(parts.iter().map(|p| if p.correct { 1.0 } else { 0.0 })).unwrap_or(0.0),
            iou: mean(parts.iter().map(|p| p.iou)).unwrap_or(0.0),
            r_err_deg: mean(parts.iter().map(|p| p.r_err_deg)).unwrap_or(0.0),
            t_err_cm: mean(parts.iter().map(|p| p.t_err_cm)).unwrap_or(0.0),
            theta_err_deg: of_kind(JointKind::Revolute),
            d_err_cm: of_kind(JointKind::Prismatic),
            parts,
            joints: joint_rows,
        });
    }
    let scored: Vec<&FrameMetrics> = frames.iter().skip(opts.skip_frames).filter(|f| !f.lost).collect();
    let avg = |g: fn(&FrameMetrics) -> f64| mean(scored.iter().map(|f| g(f))).unwrap_or(0.0);
    Ok(MetricsReport {
        acc_5deg5cm: avg(|f| f.acc),
        mean_iou: avg(|f| f.iou),
        r_err_deg: avg(|f| f.r_err_deg),
        t_err_cm: avg(|f| f.t_err_cm),
        theta_err_deg: mean(scored.iter().filter_map(|f| f.theta_err_deg)),
        d_err_cm: mean(scored.iter().filter_map(|f| f.d_err_cm)),
        lost_frames: frames.iter().filter(|f| f.lost).count(),
        evaluated_frames: scored.len(),
        frames,
    })
}

/// One summary row: means over trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub acc_5deg5cm: f64,
    pub mean_iou: f64,
    pub r_err_deg: f64,
    pub t_err_cm: f64,
    pub theta_err_deg: Option<f64>,
    pub d_err_cm: Option<f64>,
    pub lost_frames: usize,
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str = "setting,5deg5cm,mIoU,R_err,T_err,theta_err,d_err,lost";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.setting,
            self.acc_5deg5cm,
            self.mean_iou,
            self.r_err_deg,
            self.t_err_cm,
            opt(self.theta_err_deg),
            opt(self.d_err_cm),
            self.lost_frames
        )
    }
}

/// Average run reports over trajectories. Runs with no evaluated frames
/// contribute only their lost-frame count.
pub fn aggregate(setting: &str, reports: &[MetricsReport]) -> SummaryRow {
    let scored: Vec<&MetricsReport> = reports.iter().filter(|r| r.evaluated_frames > 0).collect();
    let avg = |g: fn(&MetricsReport) -> f64| mean(scored.iter().map(|r| g(r))).unwrap_or(0.0);
    SummaryRow {
        setting: setting.to_string(),
        acc_5deg5cm: avg(|r| r.acc_5deg5cm),
        mean_iou: avg(|r| r.mean_iou),
        r_err_deg: avg(|r| r.r_err_deg),
        t_err_cm: avg(|r| r.t_err_cm),
        theta_err_deg: mean(scored.iter().filter_map(|r| r.theta_err_deg)),
        d_err_cm: mean(scored.iter().filter_map(|r| r.d_err_cm)),
        lost_frames: reports.iter().map(|r| r.lost_frames).sum(),
    }
}
