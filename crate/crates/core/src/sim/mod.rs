//! Synthetic articulated objects, motion, partial-view rendering, pose
//! perturbation and oracle predictors.

pub mod model;
pub mod oracle;
pub mod perturb;
pub mod render;
pub mod trajectory;

pub use model::{forward_kinematics, make_primitive_model, Category, JointKind, JointSpec, ObjectModel, Part};
pub use oracle::{oracle_coordinate_predictor, oracle_rotation_predictor, NoiseSpec, OraclePredictor};
pub use perturb::{perturb_pose, perturb_sim, PerturbDraw, PerturbSpec};
pub use render::render_observation;
pub use trajectory::{sample_trajectory, FrameState, MotionSpec};
