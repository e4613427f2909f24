//! File formats: trajectory and prediction JSON lines, run manifests and
//! correspondence files.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! every value round-trips bit-exactly and output bytes do not depend on the
//! shortest-representation algorithm of the writer.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::fitting::Correspondences;
use crate::geometry::{Pose9, Rot3, Sim3, Vec3};
use crate::sim::model::{Category, JointKind, JointSpec};
use crate::sim::oracle::NoiseSpec;
use crate::sim::perturb::PerturbSpec;
use crate::tracking::{GroundTruth, Observation, PartEstimate};

fn write_float<W: ?Sized + io::Write>(w: &mut W, v: f64) -> io::Result<()> {
    if v.is_finite() {
        write!(w, "{v:.16e}")
    } else {
        w.write_all(b"null")
    }
}

/// Compact JSON with fixed-precision floats.
#[derive(Default)]
pub struct FixedFloatFormatter;

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_float(w, v)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write_float(w, v as f64)
    }
}

/// Indented JSON with fixed-precision floats.
pub struct PrettyFixedFormatter<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for PrettyFixedFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_float(w, v)
    }
    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = PrettyFixedFormatter(PrettyFormatter::with_indent(b"  "));
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_pretty(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", to_json_line(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One record per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn rows(r: &Rot3) -> [[f64; 3]; 3] {
    let m = r.matrix();
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn rot(rows: &[[f64; 3]; 3]) -> Result<Rot3> {
    Rot3::new(Matrix3::from_fn(|i, j| rows[i][j]))
}

/// Rotation matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub d: [f64; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(p: &Pose9) -> Self {
        Self {
            d: arr(&p.d),
            r: rows(&p.r),
            t: arr(&p.t),
        }
    }

    pub fn to_pose(&self) -> Result<Pose9> {
        Pose9::new(vec3(&self.d), rot(&self.r)?, vec3(&self.t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: usize,
    pub points: Vec<[f64; 3]>,
    pub gt: Vec<PoseRecord>,
    pub labels: Vec<usize>,
    pub nocs: Vec<[f64; 3]>,
}

impl TrajectoryRecord {
    pub fn from_observation(frame: usize, obs: &Observation) -> Result<Self> {
        let gt = obs
            .gt
            .as_ref()
            .ok_or_else(|| Error::invalid("trajectory records need ground truth"))?;
        Ok(Self {
            frame,
            points: obs.points.iter().map(arr).collect(),
            gt: gt.poses.iter().map(PoseRecord::from_pose).collect(),
            labels: gt.labels.clone(),
            nocs: gt.nocs.iter().map(arr).collect(),
        })
    }

    pub fn to_observation(&self) -> Result<Observation> {
        let n = self.points.len();
        if self.labels.len() != n || self.nocs.len() != n {
            return Err(Error::invalid(format!(
                "frame {}: {} points, {} labels, {} coordinates",
                self.frame,
                n,
                self.labels.len(),
                self.nocs.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.gt.len()) {
            return Err(Error::invalid(format!("frame {}: label {l} without a pose", self.frame)));
        }
        Ok(Observation {
            points: self.points.iter().map(vec3).collect(),
            gt: Some(GroundTruth {
                labels: self.labels.clone(),
                nocs: self.nocs.iter().map(vec3).collect(),
                poses: self.gt.iter().map(PoseRecord::to_pose).collect::<Result<_>>()?,
            }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedPart {
    pub d: [f64; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
    pub lost: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame: usize,
    pub parts: Vec<PredictedPart>,
}

impl PredictionRecord {
    pub fn from_parts(frame: usize, parts: &[PartEstimate]) -> Self {
        Self {
            frame,
            parts: parts
                .iter()
                .map(|p| {
                    let pose = p.pose();
                    PredictedPart {
                        d: arr(&pose.d),
                        r: rows(&pose.r),
                        t: arr(&pose.t),
                        lost: p.lost,
                    }
                })
                .collect(),
        }
    }

    pub fn to_parts(&self) -> Result<Vec<PartEstimate>> {
        self.parts
            .iter()
            .map(|p| {
                let pose = Pose9::new(vec3(&p.d), rot(&p.r)?, vec3(&p.t))?;
                Ok(PartEstimate {
                    lost: p.lost,
                    ..PartEstimate::from_pose(&pose)
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub s: f64,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub pivot: [f64; 3],
    pub parent: usize,
    pub child: usize,
    pub limits: [f64; 2],
    pub rest: SimRecord,
}

impl JointRecord {
    pub fn from_spec(j: &JointSpec) -> Self {
        Self {
            kind: j.kind,
            axis: arr(&j.axis),
            pivot: arr(&j.pivot),
            parent: j.parent,
            child: j.child,
            limits: [j.limits.0, j.limits.1],
            rest: SimRecord {
                s: j.rest.s,
                r: rows(&j.rest.r),
                t: arr(&j.rest.t),
            },
        }
    }

    pub fn to_spec(&self) -> Result<JointSpec> {
        let axis = vec3(&self.axis);
        if (axis.norm() - 1.0).abs() > 1e-9 || self.limits[0] > self.limits[1] {
            return Err(Error::Config(format!("invalid joint {}→{}", self.parent, self.child)));
        }
        Ok(JointSpec {
            kind: self.kind,
            axis,
            pivot: vec3(&self.pivot),
            parent: self.parent,
            child: self.child,
            limits: (self.limits[0], self.limits[1]),
            rest: Sim3::new(self.rest.s, rot(&self.rest.r)?, vec3(&self.rest.t))?,
        })
    }
}

/// One generated trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub file: String,
    pub model_seed: u64,
    pub motion_seed: u64,
}

/// Sidecar description of a generated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub category: Category,
    pub seed: u64,
    /// Points per frame.
    #[serde(rename = "M")]
    pub points_per_frame: usize,
    pub frames: usize,
    pub part_names: Vec<String>,
    pub root: usize,
    pub aspects: Vec<[f64; 3]>,
    pub joints: Vec<JointRecord>,
    pub symmetric_axis: Option<[f64; 3]>,
    /// Initialization perturbation used by `track`.
    pub sigmas: PerturbSpec,
    pub noise: NoiseSpec,
    pub trajectories: Vec<TrajectoryEntry>,
}

impl Manifest {
    pub fn joint_specs(&self) -> Result<Vec<JointSpec>> {
        self.joints.iter().map(JointRecord::to_spec).collect()
    }

    pub fn symmetric_axis(&self) -> Option<Vec3> {
        self.symmetric_axis.as_ref().map(vec3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    pub camera: [f64; 3],
    pub normalized: [f64; 3],
}

pub fn read_correspondences(path: &Path) -> Result<Correspondences> {
    let records: Vec<CorrespondenceRecord> = read_json(path)?;
    Correspondences::new(
        records.iter().map(|r| vec3(&r.camera)).collect(),
        records.iter().map(|r| vec3(&r.normalized)).collect(),
    )
}

pub fn write_correspondences(path: &Path, corr: &Correspondences) -> Result<()> {
    let records: Vec<CorrespondenceRecord> = corr
        .camera
        .iter()
        .zip(&corr.normalized)
        .map(|(c, n)| CorrespondenceRecord {
            camera: arr(c),
            normalized: arr(n),
        })
        .collect();
    write_json(path, &records)
}

pub fn vec_to_array(v: &Vec3) -> [f64; 3] {
    arr(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use crate::sim::model::{forward_kinematics, make_primitive_model};
    use crate::sim::render::render_observation;

    #[test]
    fn floats_round_trip_bit_exactly() {
        let mut rng = SimRng::new(1);
        let vals: Vec<f64> = (0..2000)
            .map(|i| rng.gaussian() * 10f64.powi((i % 40) - 20))
            .chain([0.0, -0.0, 1.0, f64::MIN_POSITIVE, f64::MAX, 5e-324, 0.1])
            .collect();
        let line = to_json_line(&vals).unwrap();
        let back: Vec<f64> = serde_json::from_str(&line).unwrap();
        assert!(vals.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(to_json_line(&1.0f64).unwrap(), "1.0000000000000000e0");
    }

    #[test]
    fn trajectory_record_round_trip() {
        let m = make_primitive_model(Category::Glasses, 0, 64).unwrap();
        let root = Sim3::new(0.2, SimRng::new(2).uniform_rotation(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let poses = forward_kinematics(&m, &root, &[0.3, 0.2]).unwrap();
        let obs = render_observation(&m, &poses, &Vec3::zeros(), 100).unwrap();
        let rec = TrajectoryRecord::from_observation(7, &obs).unwrap();
        let back: TrajectoryRecord = serde_json::from_str(&to_json_line(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_observation().unwrap(), obs);
    }

    #[test]
    fn jsonl_parse_errors_name_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, "{\"frame\":0,\"parts\":[]}\n\n{\"frame\":oops}\n").unwrap();
        match read_jsonl::<PredictionRecord>(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match read_jsonl::<PredictionRecord>(&dir.path().join("missing.jsonl")) {
            Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("missing.jsonl")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn joint_and_prediction_round_trip() {
        let m = make_primitive_model(Category::Drawers, 0, 16).unwrap();
        for j in &m.joints {
            let rec = JointRecord::from_spec(j);
            let back: JointRecord = serde_json::from_str(&to_json_line(&rec).unwrap()).unwrap();
            assert_eq!(&back.to_spec().unwrap(), j);
        }
        let est = PartEstimate {
            lost: true,
            ..PartEstimate::new(Sim3::new(0.3, SimRng::new(3).uniform_rotation(), Vec3::x()).unwrap(), m.parts[0].aspect)
        };
        let rec = PredictionRecord::from_parts(4, &[est]);
        let back: PredictionRecord = serde_json::from_str(&to_json_line(&rec).unwrap()).unwrap();
        let parts = back.to_parts().unwrap();
        assert!(parts[0].lost);
        assert!(parts[0].sim.max_abs_diff(&est.sim) < 1e-15);
    }
}
