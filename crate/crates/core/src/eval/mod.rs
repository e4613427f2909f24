//! Tracking metrics, oriented 3D IoU and the deterministic training losses.

pub mod iou;
pub mod loss;
pub mod metrics;
pub mod report;

pub use iou::{oriented_iou3d, OrientedBox};
pub use loss::{corner_loss, symmetric_coord_loss};
pub use metrics::{accuracy_5deg5cm, joint_state, rotation_error_metric, within_5deg5cm};
pub use report::{aggregate, evaluate_run, EvalOptions, FrameMetrics, MetricsReport, PartMetrics, SummaryRow};
