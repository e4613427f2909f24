//! Procedural articulated object models and forward kinematics.
//!
//! Every part lives in its own normalized part coordinate space (NPCS): the
//! part's tight bounding box is centered at the origin and has a diagonal of
//! length 1. A part's pose is the similarity transform taking NPCS points to
//! the camera frame, so its scale is the physical length of the box diagonal.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, Rot3, Sim3, Vec3};
use crate::rng::SimRng;
use crate::sim::perturb::PerturbSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Laptop,
    Glasses,
    Scissors,
    Drawers,
    Box,
    Cylinder,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Laptop,
        Category::Glasses,
        Category::Scissors,
        Category::Drawers,
        Category::Box,
        Category::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Laptop => "laptop",
            Category::Glasses => "glasses",
            Category::Scissors => "scissors",
            Category::Drawers => "drawers",
            Category::Box => "box",
            Category::Cylinder => "cylinder",
        }
    }

    pub fn is_articulated(self) -> bool {
        !matches!(self, Category::Box | Category::Cylinder)
    }

    /// Initialization / training-time perturbation sigmas. Articulated
    /// categories use their per-category values; rigid ones share
    /// `σ_scale = 0.02, σ_rot = 5°, σ_trans = 3 cm`.
    pub fn perturbation(self) -> PerturbSpec {
        match self {
            Category::Glasses => PerturbSpec::new(0.02, 5.0, 0.02),
            Category::Scissors => PerturbSpec::new(0.01, 3.0, 0.01),
            Category::Laptop => PerturbSpec::new(0.015, 3.0, 0.02),
            Category::Drawers => PerturbSpec::new(0.02, 3.0, 0.02),
            Category::Box | Category::Cylinder => PerturbSpec::rigid(),
        }
    }

    /// Average joint-state change over a 100-frame sequence: radians for
    /// revolute joints, meters for prismatic ones.
    pub fn joint_change_per_100_frames(self) -> f64 {
        match self {
            Category::Glasses => 19.19f64.to_radians(),
            Category::Scissors => 34.32f64.to_radians(),
            Category::Laptop => 26.13f64.to_radians(),
            Category::Drawers => 0.0372,
            Category::Box | Category::Cylinder => 0.0,
        }
    }

    /// Default scale (diagonal length, meters) of the root part.
    pub fn root_scale(self) -> f64 {
        match self {
            Category::Laptop => 0.45,
            Category::Glasses => 0.16,
            Category::Scissors => 0.2,
            Category::Drawers => 0.7,
            Category::Box => 0.3,
            Category::Cylinder => 0.25,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One-degree-of-freedom articulation between two parts.
///
/// `axis` and `pivot` are expressed in the parent's NPCS. `rest` maps child
/// NPCS to parent NPCS at joint state zero. Revolute states are radians
/// (right-handed about `axis`); prismatic states are meters along `axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub kind: JointKind,
    pub axis: Vec3,
    pub pivot: Vec3,
    pub parent: usize,
    pub child: usize,
    pub limits: (f64, f64),
    pub rest: Sim3,
}

/// Joint state read back from a relative transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointReading {
    pub value: f64,
    /// Angle between the relative rotation's axis and the joint axis (revolute only).
    pub axis_deviation_deg: f64,
    pub flagged: bool,
}

impl JointSpec {
    /// Joint motion in the parent NPCS. `parent_scale` converts metric
    /// prismatic displacements into parent NPCS units.
    pub fn motion(&self, state: f64, parent_scale: f64) -> Sim3 {
        match self.kind {
            JointKind::Revolute => {
                let r = Rot3::from_axis_angle(&self.axis, state);
                Sim3 {
                    s: 1.0,
                    r,
                    t: self.pivot - r * self.pivot,
                }
            }
            JointKind::Prismatic => Sim3::from_translation(self.axis * (state / parent_scale)),
        }
    }

    /// Child pose given the parent pose and the joint state.
    pub fn child_pose(&self, parent_pose: &Sim3, state: f64) -> Sim3 {
        parent_pose
            .compose(&self.motion(state, parent_pose.s))
            .compose(&self.rest)
    }

    /// Decompose `parent⁻¹ ∘ child` against this joint.
    ///
    /// Revolute: the relative rotation's log projected onto the joint axis.
    /// Prismatic: the displacement along the axis, in meters. Readings whose
    /// rotation axis strays more than `tolerance_deg` from the joint axis are
    /// flagged as best-effort.
    pub fn read_state(&self, parent_pose: &Sim3, child_pose: &Sim3, tolerance_deg: f64) -> JointReading {
        let relative = parent_pose.inverse().compose(child_pose);
        let motion = relative.compose(&self.rest.inverse());
        match self.kind {
            JointKind::Revolute => {
                let w = motion.r.log();
                let value = w.dot(&self.axis);
                let deviation = if w.norm() < 1e-12 {
                    0.0
                } else {
                    let d = angle_between(&w, &self.axis);
                    d.min(180.0 - d)
                };
                JointReading {
                    value,
                    axis_deviation_deg: deviation,
                    flagged: deviation > tolerance_deg,
                }
            }
            JointKind::Prismatic => {
                let value = motion.t.dot(&self.axis) * parent_pose.s;
                let deviation = motion.r.angle_deg();
                JointReading {
                    value,
                    axis_deviation_deg: deviation,
                    flagged: deviation > tolerance_deg,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub name: String,
    /// Surface samples in NPCS, inside [-0.5, 0.5]³.
    pub canonical_points: Vec<Vec3>,
    /// Unit-norm bounding-box extents; equals the full extents because the diagonal is 1.
    pub aspect: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel {
    pub category: Category,
    pub parts: Vec<Part>,
    pub joints: Vec<JointSpec>,
    pub root: usize,
    /// Symmetry axis in NPCS, for rigid rotationally symmetric categories.
    pub symmetric_axis: Option<Vec3>,
}

impl ObjectModel {
    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn aspects(&self) -> Vec<Vec3> {
        self.parts.iter().map(|p| p.aspect).collect()
    }

    /// Joints in breadth-first order from the root, validating the tree.
    pub fn joint_order(&self) -> Result<Vec<usize>> {
        let m = self.parts.len();
        if m == 0 {
            return Err(Error::invalid("model has no parts"));
        }
        if self.root >= m {
            return Err(Error::invalid("root index out of range"));
        }
        let mut seen = vec![false; m];
        seen[self.root] = true;
        let mut order = Vec::with_capacity(self.joints.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(p) = queue.pop_front() {
            for (k, j) in self.joints.iter().enumerate() {
                if j.parent == p {
                    if j.child >= m || seen[j.child] {
                        return Err(Error::invalid(format!("joint {k} makes the part graph cyclic")));
                    }
                    seen[j.child] = true;
                    order.push(k);
                    queue.push_back(j.child);
                }
            }
        }
        if order.len() != self.joints.len() || seen.iter().any(|s| !s) {
            return Err(Error::invalid("joints do not form a tree rooted at the root part"));
        }
        Ok(order)
    }
}

/// Per-part poses from the root pose and one state per joint.
pub fn forward_kinematics(model: &ObjectModel, root_pose: &Sim3, joint_states: &[f64]) -> Result<Vec<Sim3>> {
    if joint_states.len() != model.joints.len() {
        return Err(Error::invalid(format!(
            "{} joint states for {} joints",
            joint_states.len(),
            model.joints.len()
        )));
    }
    for (k, (j, &q)) in model.joints.iter().zip(joint_states).enumerate() {
        let (lo, hi) = j.limits;
        if !(q >= lo && q <= hi) {
            return Err(Error::OutOfLimits {
                joint: k,
                value: q,
                lo,
                hi,
            });
        }
    }
    let mut poses: Vec<Option<Sim3>> = vec![None; model.parts.len()];
    poses[model.root] = Some(*root_pose);
    for k in model.joint_order()? {
        let j = &model.joints[k];
        let parent = poses[j.parent].expect("parent placed before child");
        poses[j.child] = Some(j.child_pose(&parent, joint_states[k]));
    }
    Ok(poses.into_iter().map(|p| p.expect("tree covers every part")).collect())
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Cuboid(Vec3),
    /// Radius and full height, axis along y.
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    fn extents(&self) -> Vec3 {
        match *self {
            Shape::Cuboid(e) => e,
            Shape::Cylinder { radius, height } => Vec3::new(2.0 * radius, height, 2.0 * radius),
        }
    }

    /// Points that pin every bounding-box extreme, closed under negation.
    fn extreme_points(&self) -> Vec<Vec3> {
        match *self {
            Shape::Cuboid(e) => {
                let h = e / 2.0;
                (0..8)
                    .map(|i| {
                        Vec3::new(
                            if i & 1 == 0 { h.x } else { -h.x },
                            if i & 2 == 0 { h.y } else { -h.y },
                            if i & 4 == 0 { h.z } else { -h.z },
                        )
                    })
                    .collect()
            }
            Shape::Cylinder { radius, height } => {
                let h = height / 2.0;
                [(radius, 0.0), (0.0, radius), (-radius, 0.0), (0.0, -radius)]
                    .iter()
                    .flat_map(|&(x, z)| [Vec3::new(x, h, z), Vec3::new(-x, -h, -z)])
                    .collect()
            }
        }
    }

    /// Area-uniform surface sample.
    fn sample_surface(&self, rng: &mut SimRng) -> Vec3 {
        match *self {
            Shape::Cuboid(e) => {
                let areas = [e.y * e.z, e.x * e.z, e.x * e.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.uniform() * total;
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = i;
                        break;
                    }
                    pick -= a;
                }
                let mut p = Vec3::new(
                    rng.uniform_range(-e.x / 2.0, e.x / 2.0),
                    rng.uniform_range(-e.y / 2.0, e.y / 2.0),
                    rng.uniform_range(-e.z / 2.0, e.z / 2.0),
                );
                p[axis] = if rng.uniform() < 0.5 { e[axis] / 2.0 } else { -e[axis] / 2.0 };
                p
            }
            Shape::Cylinder { radius, height } => {
                let side = std::f64::consts::TAU * radius * height;
                let caps = 2.0 * std::f64::consts::PI * radius * radius;
                let a = rng.uniform_range(0.0, std::f64::consts::TAU);
                if rng.uniform() * (side + caps) < side {
                    Vec3::new(radius * a.cos(), rng.uniform_range(-height / 2.0, height / 2.0), radius * a.sin())
                } else {
                    let r = radius * rng.uniform().sqrt();
                    let y = if rng.uniform() < 0.5 { height / 2.0 } else { -height / 2.0 };
                    Vec3::new(r * a.cos(), y, r * a.sin())
                }
            }
        }
    }
}

struct PartTemplate {
    name: &'static str,
    shape: Shape,
    /// Box center in the template's object frame.
    center: Vec3,
}

struct JointTemplate {
    kind: JointKind,
    parent: usize,
    child: usize,
    /// Object frame.
    axis: Vec3,
    pivot: Vec3,
    limits: (f64, f64),
}

fn cuboid(name: &'static str, extents: [f64; 3], center: [f64; 3]) -> PartTemplate {
    PartTemplate {
        name,
        shape: Shape::Cuboid(Vec3::from(extents)),
        center: Vec3::from(center),
    }
}

fn revolute(parent: usize, child: usize, axis: [f64; 3], pivot: [f64; 3], limits_deg: (f64, f64)) -> JointTemplate {
    JointTemplate {
        kind: JointKind::Revolute,
        parent,
        child,
        axis: Vec3::from(axis).normalize(),
        pivot: Vec3::from(pivot),
        limits: (limits_deg.0.to_radians(), limits_deg.1.to_radians()),
    }
}

fn prismatic(parent: usize, child: usize, axis: [f64; 3], limits_m: (f64, f64)) -> JointTemplate {
    JointTemplate {
        kind: JointKind::Prismatic,
        parent,
        child,
        axis: Vec3::from(axis).normalize(),
        pivot: Vec3::zeros(),
        limits: limits_m,
    }
}

/// Part layouts in an object frame (arbitrary units; NPCS normalization
/// removes them). Rest rotations are identity, so object-frame axes are also
/// NPCS axes.
fn template(category: Category) -> (Vec<PartTemplate>, Vec<JointTemplate>, usize) {
    match category {
        Category::Laptop => (
            vec![
                cuboid("base", [1.0, 0.06, 0.7], [0.0, 0.0, 0.0]),
                cuboid("display", [1.0, 0.7, 0.04], [0.0, 0.38, -0.33]),
            ],
            vec![revolute(0, 1, [1.0, 0.0, 0.0], [0.0, 0.03, -0.35], (-60.0, 60.0))],
            0,
        ),
        Category::Glasses => (
            vec![
                cuboid("right temple", [0.04, 0.08, 0.9], [0.48, 0.05, -0.475]),
                cuboid("left temple", [0.04, 0.08, 0.9], [-0.48, 0.05, -0.475]),
                cuboid("base", [1.0, 0.3, 0.05], [0.0, 0.0, 0.0]),
            ],
            vec![
                revolute(2, 0, [0.0, 1.0, 0.0], [0.48, 0.05, -0.025], (-10.0, 90.0)),
                revolute(2, 1, [0.0, -1.0, 0.0], [-0.48, 0.05, -0.025], (-10.0, 90.0)),
            ],
            2,
        ),
        Category::Scissors => (
            vec![
                cuboid("right half", [0.14, 0.02, 1.0], [0.02, 0.01, 0.0]),
                cuboid("left half", [0.12, 0.02, 0.9], [-0.02, -0.01, 0.05]),
            ],
            vec![revolute(0, 1, [0.0, 1.0, 0.0], [0.0, 0.0, 0.1], (-20.0, 60.0))],
            0,
        ),
        Category::Drawers => (
            vec![
                cuboid("lowest", [0.9, 0.28, 0.75], [0.0, -0.32, 0.03]),
                cuboid("middle", [0.9, 0.28, 0.75], [0.0, 0.0, 0.03]),
                cuboid("top", [0.9, 0.28, 0.75], [0.0, 0.32, 0.03]),
                cuboid("base", [1.0, 1.0, 0.8], [0.0, 0.0, 0.0]),
            ],
            vec![
                prismatic(3, 0, [0.0, 0.0, 1.0], (0.0, 0.25)),
                prismatic(3, 1, [0.0, 0.0, 1.0], (0.0, 0.25)),
                prismatic(3, 2, [0.0, 0.0, 1.0], (0.0, 0.25)),
            ],
            3,
        ),
        Category::Box => (vec![cuboid("body", [0.6, 0.4, 1.0], [0.0, 0.0, 0.0])], vec![], 0),
        Category::Cylinder => (
            vec![PartTemplate {
                name: "body",
                shape: Shape::Cylinder {
                    radius: 0.25,
                    height: 0.8,
                },
                center: Vec3::zeros(),
            }],
            vec![],
            0,
        ),
    }
}

/// Sample a procedural model for a category.
///
/// Each part gets `points_per_part` surface samples (rounded down to an even
/// count), drawn in antipodal pairs so the NPCS centroid is exactly the box
/// center, and always including the points that pin the box extremes.
pub fn make_primitive_model(category: Category, seed: u64, points_per_part: usize) -> Result<ObjectModel> {
    if points_per_part < 8 {
        return Err(Error::invalid("points_per_part must be at least 8"));
    }
    let (parts_t, joints_t, root) = template(category);
    let mut rng = SimRng::derived(seed, &[category as u64]);

    let diag: Vec<f64> = parts_t.iter().map(|p| p.shape.extents().norm()).collect();
    let parts = parts_t
        .iter()
        .zip(&diag)
        .map(|(p, &d)| {
            let mut pts = p.shape.extreme_points();
            while pts.len() + 2 <= points_per_part {
                let q = p.shape.sample_surface(&mut rng);
                pts.push(q);
                pts.push(-q);
            }
            Part {
                name: p.name.to_string(),
                canonical_points: pts.into_iter().map(|q| q / d).collect(),
                aspect: p.shape.extents() / d,
            }
        })
        .collect();

    let joints = joints_t
        .iter()
        .map(|j| {
            let (pc, cc) = (&parts_t[j.parent], &parts_t[j.child]);
            let (sp, sc) = (diag[j.parent], diag[j.child]);
            JointSpec {
                kind: j.kind,
                axis: j.axis,
                pivot: (j.pivot - pc.center) / sp,
                parent: j.parent,
                child: j.child,
                limits: j.limits,
                rest: Sim3 {
                    s: sc / sp,
                    r: Rot3::identity(),
                    t: (cc.center - pc.center) / sp,
                },
            }
        })
        .collect();

    let model = ObjectModel {
        category,
        parts,
        joints,
        root,
        symmetric_axis: (category == Category::Cylinder).then(Vec3::y),
    };
    model.joint_order()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_angle, test_util::random_sim};
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;

    #[test]
    fn part_and_joint_structure() {
        let expect = [
            (Category::Laptop, 2, 1, JointKind::Revolute),
            (Category::Glasses, 3, 2, JointKind::Revolute),
            (Category::Scissors, 2, 1, JointKind::Revolute),
            (Category::Drawers, 4, 3, JointKind::Prismatic),
        ];
        for (cat, parts, joints, kind) in expect {
            let m = make_primitive_model(cat, 1, 64).unwrap();
            assert_eq!(m.part_count(), parts, "{cat}");
            assert_eq!(m.joints.len(), joints, "{cat}");
            assert!(m.joints.iter().all(|j| j.kind == kind));
        }
        let names: Vec<_> = make_primitive_model(Category::Glasses, 1, 8).unwrap().parts.into_iter().map(|p| p.name).collect();
        assert_eq!(names, ["right temple", "left temple", "base"]);
        assert!(make_primitive_model(Category::Cylinder, 0, 8).unwrap().symmetric_axis.is_some());
        assert_eq!("Drawers".parse::<Category>().unwrap(), Category::Drawers);
        assert!(matches!("teapot".parse::<Category>(), Err(Error::UnknownTemplate(_))));
        assert!(make_primitive_model(Category::Box, 0, 7).is_err());
    }

    #[test]
    fn npcs_normalization_contract() {
        for cat in Category::ALL {
            let m = make_primitive_model(cat, 5, 300).unwrap();
            for part in &m.parts {
                let pts = &part.canonical_points;
                assert_eq!(pts.len(), 300);
                assert!(pts.iter().all(|p| p.iter().all(|c| c.abs() <= 0.5 + 1e-12)));
                let mut lo = Vec3::repeat(f64::INFINITY);
                let mut hi = Vec3::repeat(f64::NEG_INFINITY);
                for p in pts {
                    lo = lo.inf(p);
                    hi = hi.sup(p);
                }
                assert_abs_diff_eq!((hi - lo).norm(), 1.0, epsilon = 1e-9);
                assert!(((hi - lo) - part.aspect).amax() < 1e-12);
                let centroid = pts.iter().sum::<Vec3>() / pts.len() as f64;
                assert!(centroid.amax() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_states_place_parts_at_rest() {
        let mut rng = SimRng::new(3);
        for cat in Category::ALL {
            let m = make_primitive_model(cat, 2, 16).unwrap();
            let root = random_sim(&mut rng);
            let poses = forward_kinematics(&m, &root, &vec![0.0; m.joints.len()]).unwrap();
            assert_eq!(poses[m.root], root);
            for j in &m.joints {
                let expect = poses[j.parent].compose(&j.rest);
                assert!(poses[j.child].max_abs_diff(&expect) < 1e-12);
                // undoing the rest offset recovers the parent pose
                assert!(poses[j.child].compose(&j.rest.inverse()).max_abs_diff(&poses[j.parent]) < 1e-12);
            }
        }
    }

    #[test]
    fn laptop_hinge_rotates_display() {
        let m = make_primitive_model(Category::Laptop, 0, 16).unwrap();
        let root = Sim3::new(0.4, Rot3::identity(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let q = 60f64.to_radians();
        let poses = forward_kinematics(&m, &root, &[q]).unwrap();
        let relative = poses[0].r.transpose() * poses[1].r;
        assert_abs_diff_eq!(relative.angle_deg(), 60.0, epsilon = 1e-12);
        let expect = Rot3::from_axis_angle(&m.joints[0].axis, q);
        assert!(rotation_angle(&relative, &expect) < 1e-12);
    }

    fn joint_homogeneous(j: &JointSpec, q: f64, parent_scale: f64) -> Matrix4<f64> {
        // Built from translations and rotations directly, without Sim3 composition.
        let mut m = Matrix4::identity();
        match j.kind {
            JointKind::Revolute => {
                let r = Rot3::from_axis_angle(&j.axis, q);
                let mut to = Matrix4::identity();
                to.fixed_view_mut::<3, 1>(0, 3).copy_from(&j.pivot);
                let mut back = Matrix4::identity();
                back.fixed_view_mut::<3, 1>(0, 3).copy_from(&-j.pivot);
                let mut rot = Matrix4::identity();
                rot.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
                m = to * rot * back;
            }
            JointKind::Prismatic => {
                m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(j.axis * q / parent_scale));
            }
        }
        m
    }

    #[test]
    fn forward_kinematics_matches_matrix_chain() {
        let mut rng = SimRng::new(4);
        // A three-joint chain: glasses has depth 1, so chain the laptop's
        // joint spec three times.
        let base = make_primitive_model(Category::Laptop, 0, 16).unwrap();
        let mut m = base.clone();
        let j = base.joints[0].clone();
        m.parts = vec![base.parts[0].clone(), base.parts[1].clone(), base.parts[1].clone(), base.parts[1].clone()];
        m.joints = (0..3).map(|k| JointSpec { parent: k, child: k + 1, ..j.clone() }).collect();
        for _ in 0..20 {
            let root = random_sim(&mut rng);
            let qs: Vec<f64> = (0..3).map(|_| rng.uniform_range(j.limits.0, j.limits.1)).collect();
            let poses = forward_kinematics(&m, &root, &qs).unwrap();
            let mut h = root.to_homogeneous();
            let mut scale = root.s;
            for k in 0..3 {
                h = h * joint_homogeneous(&m.joints[k], qs[k], scale) * m.joints[k].rest.to_homogeneous();
                scale *= m.joints[k].rest.s;
                assert!((poses[k + 1].to_homogeneous() - h).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_limit_state_is_rejected() {
        let m = make_primitive_model(Category::Drawers, 0, 16).unwrap();
        let err = forward_kinematics(&m, &Sim3::identity(), &[0.0, 0.3, 0.0]).unwrap_err();
        assert!(matches!(err, Error::OutOfLimits { joint: 1, .. }));
        assert!(forward_kinematics(&m, &Sim3::identity(), &[0.0]).is_err());
    }

    #[test]
    fn read_state_round_trip() {
        let mut rng = SimRng::new(5);
        for cat in [Category::Laptop, Category::Glasses, Category::Scissors, Category::Drawers] {
            let m = make_primitive_model(cat, 1, 16).unwrap();
            for _ in 0..50 {
                let root = random_sim(&mut rng);
                let qs: Vec<f64> = m.joints.iter().map(|j| rng.uniform_range(j.limits.0, j.limits.1)).collect();
                let poses = forward_kinematics(&m, &root, &qs).unwrap();
                for (j, &q) in m.joints.iter().zip(&qs) {
                    let r = j.read_state(&poses[j.parent], &poses[j.child], 15.0);
                    assert_abs_diff_eq!(r.value, q, epsilon = 1e-12);
                    assert!(!r.flagged);
                }
            }
        }
    }

    #[test]
    fn read_state_flags_off_axis_rotation() {
        let m = make_primitive_model(Category::Laptop, 0, 16).unwrap();
        let j = &m.joints[0];
        let parent = Sim3::identity();
        let tilt = Rot3::from_axis_angle(&Vec3::z(), 0.5);
        let child = Sim3 { r: tilt, ..parent }.compose(&j.rest);
        assert!(j.read_state(&parent, &child, 15.0).flagged);
    }
}
