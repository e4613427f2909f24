//! Experiment configuration and the subcommands behind the `captrack` binary.
//!
//! Every subcommand is a pure function of its configuration, input files and
//! seed. Trajectories fan out over a worker pool; results are collected in
//! input order so the worker count never changes output bytes.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate_run, EvalOptions, MetricsReport, SummaryRow};
use crate::fitting::{
    fit_scale_translation_with, fit_symmetric, ransac_fit, residuals, umeyama_sim3, Correspondences, RansacMode,
    RansacParams, ScaleFormula,
};
use crate::geometry::{Pose9, Rot3, Sim3, Vec3};
use crate::io::{
    read_correspondences, read_json, read_jsonl, to_json_pretty, vec_to_array, write_json, write_jsonl, JointRecord,
    Manifest, PredictionRecord, TrajectoryEntry, TrajectoryRecord,
};
use crate::rng::{derive_seed, SimRng};
use crate::sim::model::{forward_kinematics, make_primitive_model, Category, JointSpec};
use crate::sim::oracle::{NoiseSpec, OraclePredictor};
use crate::sim::perturb::{perturb_sim, PerturbSpec};
use crate::sim::render::render_observation;
use crate::sim::trajectory::{sample_trajectory, MotionSpec};
use crate::tracking::{init_tracker, track_step, AspectPolicy, Observation, PartEstimate, TrackerOptions, TrackerState};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub aspect_policy: AspectPolicy,
    pub ransac: bool,
    pub ransac_params: RansacParams,
    /// Overrides the template's symmetry axis.
    pub symmetric_axis: Option<[f64; 3]>,
    pub rotation_projection: bool,
    pub scale_formula: ScaleFormula,
    pub crop_radius_factor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let d = TrackerOptions::default();
        Self {
            aspect_policy: d.aspect_policy,
            ransac: false,
            ransac_params: RansacParams::scale_translation(),
            symmetric_axis: None,
            rotation_projection: false,
            scale_formula: d.scale_formula,
            crop_radius_factor: d.crop_radius_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub category: Category,
    pub trajectories: usize,
    pub frames: usize,
    pub points_per_frame: usize,
    pub points_per_part: usize,
    /// Initialization perturbation; the category's training preset when absent.
    pub init: Option<PerturbSpec>,
    pub noise: NoiseSpec,
    pub motion: Option<MotionSpec>,
    pub tracker: TrackerConfig,
    pub eval: EvalOptions,
    pub seed: u64,
    pub out: PathBuf,
    /// 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            category: Category::Laptop,
            trajectories: 10,
            frames: 100,
            points_per_frame: 1024,
            points_per_part: 2048,
            init: None,
            noise: NoiseSpec::default(),
            motion: None,
            tracker: TrackerConfig::default(),
            eval: EvalOptions::default(),
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path).map_err(|e| match e {
            Error::Parse { path, line, message } => Error::Config(format!("{}:{line}: {message}", path.display())),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories < 1 || self.frames < 1 || self.points_per_frame < 1 {
            return Err(Error::Config("trajectories, frames and points_per_frame must be >= 1".into()));
        }
        if self.points_per_part < 8 {
            return Err(Error::Config("points_per_part must be >= 8".into()));
        }
        self.init_perturbation().validate()?;
        self.noise.validate()?;
        if self.tracker.ransac {
            self.tracker.ransac_params.validate()?;
        }
        if !(self.tracker.crop_radius_factor > 0.0) {
            return Err(Error::Config("crop_radius_factor must be > 0".into()));
        }
        if let Some(a) = self.tracker.symmetric_axis {
            if (Vec3::from(a).norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("symmetric_axis must be a unit vector".into()));
            }
        }
        Ok(())
    }

    pub fn init_perturbation(&self) -> PerturbSpec {
        self.init.unwrap_or_else(|| self.category.perturbation())
    }

    pub fn motion_spec(&self) -> MotionSpec {
        self.motion.clone().unwrap_or_else(|| MotionSpec::for_category(self.category))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Everything the tracker and evaluator need to know about the object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInfo {
    pub category: Category,
    pub joints: Vec<JointSpec>,
    pub symmetric_axis: Option<Vec3>,
}

impl ObjectInfo {
    pub fn from_category(category: Category) -> Result<Self> {
        let m = make_primitive_model(category, 0, 8)?;
        Ok(Self {
            category,
            joints: m.joints,
            symmetric_axis: m.symmetric_axis,
        })
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        Ok(Self {
            category: m.category,
            joints: m.joint_specs()?,
            symmetric_axis: m.symmetric_axis(),
        })
    }

    /// Manifest next to `file`, or the configured category's template.
    fn locate(file: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let path = file.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
        if path.exists() {
            Self::from_manifest(&read_json(&path)?)
        } else {
            Self::from_category(cfg.category)
        }
    }

    fn with_overrides(mut self, tracker: &TrackerConfig) -> Self {
        if let Some(a) = tracker.symmetric_axis {
            self.symmetric_axis = Some(Vec3::from(a));
        }
        self
    }
}

/// One simulated trajectory: ground-truth observations for every frame.
pub fn simulate_trajectory(cfg: &ExperimentConfig, index: usize) -> Result<(TrajectoryEntry, Vec<Observation>)> {
    let entry = TrajectoryEntry {
        file: format!("traj_{index:04}.jsonl"),
        model_seed: derive_seed(cfg.seed, &[index as u64, 0]),
        motion_seed: derive_seed(cfg.seed, &[index as u64, 1]),
    };
    let model = make_primitive_model(cfg.category, entry.model_seed, cfg.points_per_part)?;
    let states = sample_trajectory(&model, cfg.frames, &cfg.motion_spec(), entry.motion_seed)?;
    let viewpoint = Vec3::zeros();
    let obs = states
        .iter()
        .map(|f| {
            let poses = forward_kinematics(&model, &f.root, &f.joints)?;
            render_observation(&model, &poses, &viewpoint, cfg.points_per_frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((entry, obs))
}

fn manifest(cfg: &ExperimentConfig, trajectories: Vec<TrajectoryEntry>) -> Result<Manifest> {
    let model = make_primitive_model(cfg.category, 0, 8)?;
    Ok(Manifest {
        category: cfg.category,
        seed: cfg.seed,
        points_per_frame: cfg.points_per_frame,
        frames: cfg.frames,
        part_names: model.parts.iter().map(|p| p.name.clone()).collect(),
        root: model.root,
        aspects: model.parts.iter().map(|p| vec_to_array(&p.aspect)).collect(),
        joints: model.joints.iter().map(JointRecord::from_spec).collect(),
        symmetric_axis: model.symmetric_axis.as_ref().map(vec_to_array),
        sigmas: cfg.init_perturbation(),
        noise: cfg.noise,
        trajectories,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write `cfg.trajectories` trajectory files and a manifest into `cfg.out`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let entries = cfg.pool()?.install(|| {
        (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| {
                let (entry, obs) = simulate_trajectory(cfg, i)?;
                let records = obs
                    .iter()
                    .enumerate()
                    .map(|(f, o)| TrajectoryRecord::from_observation(f, o))
                    .collect::<Result<Vec<_>>>()?;
                write_jsonl(&cfg.out.join(&entry.file), &records)?;
                Ok(entry)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let m = manifest(cfg, entries)?;
    write_json(&cfg.out.join(MANIFEST_FILE), &m)?;
    info!("generated {} trajectories in {}", cfg.trajectories, cfg.out.display());
    Ok(m)
}

/// Extra noise injected by the robustness sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Injection {
    /// Extra training-perturbation draws applied to the initial estimate.
    pub init_draws: usize,
    /// Draws applied to every carried-forward estimate before each step.
    pub all_draws: usize,
    pub spec: Option<PerturbSpec>,
}

fn tracker_options(cfg: &ExperimentConfig, info: &ObjectInfo, seed: u64) -> TrackerOptions {
    TrackerOptions {
        aspect_policy: cfg.tracker.aspect_policy,
        ransac: cfg.tracker.ransac.then_some(cfg.tracker.ransac_params),
        symmetric_axis: info.symmetric_axis,
        scale_formula: cfg.tracker.scale_formula,
        crop_radius_factor: cfg.tracker.crop_radius_factor,
        rotation_projection: cfg.tracker.rotation_projection,
        joints: info.joints.clone(),
        seed,
        ..TrackerOptions::default()
    }
}

fn inject(parts: &[PartEstimate], spec: &PerturbSpec, draws: usize, rng: &mut SimRng) -> Result<Vec<PartEstimate>> {
    parts
        .iter()
        .map(|p| {
            let mut sim = p.sim;
            for _ in 0..draws {
                sim = perturb_sim(&sim, spec, rng)?;
            }
            Ok(PartEstimate { sim, ..*p })
        })
        .collect()
}

/// Track one trajectory from a perturbed ground-truth initialization.
/// Returns one estimate per part for every frame, frame 0 being the initialization.
pub fn track_trajectory(
    obs: &[Observation],
    info: &ObjectInfo,
    cfg: &ExperimentConfig,
    index: usize,
    injection: &Injection,
) -> Result<Vec<Vec<PartEstimate>>> {
    let first = obs.first().ok_or_else(|| Error::invalid("trajectory has no frames"))?;
    let gt0 = &first
        .gt
        .as_ref()
        .ok_or_else(|| Error::invalid("trajectory frames need ground truth"))?
        .poses;
    let seed = derive_seed(cfg.seed, &[index as u64, 2]);
    let mut state = init_tracker(gt0, &cfg.init_perturbation(), seed)?;
    let extra = injection.spec.unwrap_or_else(|| info.category.perturbation());
    let mut rng = SimRng::derived(seed, &[3]);
    if injection.init_draws > 0 {
        state = TrackerState::new(inject(&state.parts, &extra, injection.init_draws, &mut rng)?)?;
    }
    let options = tracker_options(cfg, info, derive_seed(seed, &[4]));
    let predictor = OraclePredictor::new(
        NoiseSpec {
            seed: derive_seed(cfg.noise.seed, &[index as u64]),
            ..cfg.noise
        },
        info.symmetric_axis,
    );
    let mut out = Vec::with_capacity(obs.len());
    out.push(state.parts.clone());
    for o in &obs[1..] {
        if injection.all_draws > 0 {
            state = TrackerState {
                parts: inject(&state.parts, &extra, injection.all_draws, &mut rng)?,
                ..state
            };
        }
        state = track_step(&state, o, &predictor, &options)?;
        out.push(state.parts.clone());
    }
    Ok(out)
}

fn load_observations(path: &Path) -> Result<Vec<Observation>> {
    let records: Vec<TrajectoryRecord> = read_jsonl(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_observation().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("trajectory");
    name.trim_end_matches(".jsonl").trim_end_matches(".pred").to_string()
}

/// Expand directories into their sorted `.jsonl` files (skipping predictions).
pub fn expand_inputs(inputs: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
                .collect();
            files.sort();
            if suffix == ".jsonl" {
                files.retain(|f| !f.to_string_lossy().ends_with(".pred.jsonl"));
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no input files".into()));
    }
    Ok(out)
}

/// Track every trajectory file and write `<stem>.pred.jsonl` files into `cfg.out`.
pub fn cmd_track(cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let info = ObjectInfo::locate(&files[0], cfg)?.with_overrides(&cfg.tracker);
    cfg.pool()?.install(|| {
        files
            .par_iter()
            .enumerate()
            .map(|(i, file)| {
                let obs = load_observations(file)?;
                let preds = track_trajectory(&obs, &info, cfg, i, &Injection::default())?;
                let lost = preds.iter().flatten().filter(|p| p.lost).count();
                if lost > 0 {
                    warn!("{}: {lost} lost part-frames", file.display());
                }
                let records: Vec<PredictionRecord> = preds
                    .iter()
                    .enumerate()
                    .map(|(f, p)| PredictionRecord::from_parts(f, p))
                    .collect();
                let out = cfg.out.join(format!("{}.pred.jsonl", stem(file)));
                write_jsonl(&out, &records)?;
                Ok(out)
            })
            .collect()
    })
}

fn gt_poses(obs: &[Observation]) -> Result<Vec<Vec<Pose9>>> {
    obs.iter()
        .map(|o| {
            o.gt.as_ref()
                .map(|g| g.poses.clone())
                .ok_or_else(|| Error::invalid("trajectory frames need ground truth"))
        })
        .collect()
}

/// Evaluate prediction files against trajectory files (paired in order).
/// Writes `<stem>.eval.json` per pair plus `summary.csv` and `summary.json`.
pub fn cmd_eval(cfg: &ExperimentConfig, pred_files: &[PathBuf], gt_files: &[PathBuf]) -> Result<SummaryRow> {
    if pred_files.len() != gt_files.len() {
        return Err(Error::invalid(format!(
            "{} prediction files for {} trajectory files",
            pred_files.len(),
            gt_files.len()
        )));
    }
    create_dir(&cfg.out)?;
    let info = ObjectInfo::locate(&gt_files[0], cfg)?.with_overrides(&cfg.tracker);
    let reports = cfg.pool()?.install(|| {
        pred_files
            .par_iter()
            .zip(gt_files)
            .map(|(pf, gf)| {
                let preds = read_jsonl::<PredictionRecord>(pf)?
                    .iter()
                    .map(PredictionRecord::to_parts)
                    .collect::<Result<Vec<_>>>()?;
                let gts = gt_poses(&load_observations(gf)?)?;
                let report = evaluate_run(&preds, &gts, info.symmetric_axis.as_ref(), &info.joints, &cfg.eval)
                    .map_err(|e| Error::invalid(format!("{} vs {}: {e}", pf.display(), gf.display())))?;
                write_json(&cfg.out.join(format!("{}.eval.json", stem(gf))), &report)?;
                Ok(report)
            })
            .collect::<Result<Vec<MetricsReport>>>()
    })?;
    let row = aggregate(info.category.name(), &reports);
    write_summary(&cfg.out.join("summary.csv"), std::slice::from_ref(&row))?;
    write_json(&cfg.out.join("summary.json"), &row)?;
    Ok(row)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut text = String::from(SummaryRow::CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const ROBUSTNESS_SETTINGS: [(&str, usize, usize); 5] =
    [("Orig", 0, 0), ("Init×1", 1, 0), ("Init×2", 2, 0), ("All×1", 0, 1), ("All×2", 0, 2)];

/// Run the five robustness settings on freshly simulated trajectories and
/// write `robustness.csv` and `robustness.json` into `cfg.out`.
pub fn cmd_robustness(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let info = ObjectInfo::from_category(cfg.category)?.with_overrides(&cfg.tracker);
    let pool = cfg.pool()?;
    let data = pool.install(|| {
        (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| simulate_trajectory(cfg, i).map(|(_, obs)| obs))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::with_capacity(ROBUSTNESS_SETTINGS.len());
    for (name, init_draws, all_draws) in ROBUSTNESS_SETTINGS {
        let injection = Injection {
            init_draws,
            all_draws,
            spec: None,
        };
        let reports = pool.install(|| {
            data.par_iter()
                .enumerate()
                .map(|(i, obs)| {
                    let preds = track_trajectory(obs, &info, cfg, i, &injection)?;
                    evaluate_run(&preds, &gt_poses(obs)?, info.symmetric_axis.as_ref(), &info.joints, &cfg.eval)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let row = aggregate(name, &reports);
        info!("{}", row.csv_line());
        rows.push(row);
    }
    write_summary(&cfg.out.join("robustness.csv"), &rows)?;
    write_json(&cfg.out.join("robustness.json"), &rows)?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Umeyama,
    GivenRot,
    Symmetric,
    Ransac,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Umeyama => "umeyama",
            Estimator::GivenRot => "given-rot",
            Estimator::Symmetric => "symmetric",
            Estimator::Ransac => "ransac",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitRequest {
    pub estimator: Estimator,
    /// Known rotation for `given-rot` and `symmetric`; fixes the rotation for `ransac` when set.
    pub rotation: Option<Rot3>,
    pub axis: Vec3,
    pub ransac: RansacParams,
    pub scale_formula: ScaleFormula,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub estimator: Estimator,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
    /// Spin about the symmetry axis, radians (symmetric estimator only).
    pub theta: Option<f64>,
    pub inliers: Option<usize>,
    pub points: usize,
    pub residuals: ResidualStats,
}

pub fn parse_rotation(text: &str) -> Result<Rot3> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("rotation: {e}")))?;
    if v.len() != 9 {
        return Err(Error::Config("rotation needs 9 comma-separated row-major entries".into()));
    }
    Rot3::new(Matrix3::from_row_slice(&v)).map_err(|e| Error::Config(format!("rotation: {e}")))
}

pub fn parse_vec3(text: &str) -> Result<Vec3> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("vector: {e}")))?;
    if v.len() != 3 {
        return Err(Error::Config("vector needs 3 comma-separated entries".into()));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

/// Run one estimator on correspondences.
pub fn fit_correspondences(corr: &Correspondences, req: &FitRequest) -> Result<FitOutput> {
    let with_name = |e: Error| match e {
        Error::Degenerate(m) => Error::Degenerate(format!("{}: {m}", req.estimator.name())),
        other => other,
    };
    let rotation = req.rotation.unwrap_or_else(Rot3::identity);
    let (sim, theta, inliers) = match req.estimator {
        Estimator::Umeyama => (umeyama_sim3(corr).map_err(with_name)?, None, None),
        Estimator::GivenRot => {
            let (s, t) = fit_scale_translation_with(corr, &rotation, req.scale_formula).map_err(with_name)?;
            (Sim3::new(s, rotation, t)?, None, None)
        }
        Estimator::Symmetric => {
            let f = fit_symmetric(corr, &rotation, &req.axis, req.scale_formula).map_err(with_name)?;
            (Sim3::new(f.s, f.rotation, f.t)?, Some(f.theta), None)
        }
        Estimator::Ransac => {
            let mode = match req.rotation {
                Some(r) => RansacMode::ScaleTranslation(r),
                None => RansacMode::FullSim3,
            };
            let fit = ransac_fit(corr, mode, &req.ransac).map_err(with_name)?;
            let n = fit.inlier_count();
            (fit.estimate, None, Some(n))
        }
    };
    let res = residuals(corr, &sim);
    let n = res.len() as f64;
    Ok(FitOutput {
        estimator: req.estimator,
        s: sim.s,
        r: std::array::from_fn(|i| std::array::from_fn(|j| sim.r.matrix()[(i, j)])),
        t: vec_to_array(&sim.t),
        theta,
        inliers,
        points: corr.len(),
        residuals: ResidualStats {
            mean: res.iter().sum::<f64>() / n,
            rms: (res.iter().map(|r| r * r).sum::<f64>() / n).sqrt(),
            max: res.iter().copied().fold(0.0, f64::max),
        },
    })
}

/// Fit a correspondence file; writes `fit.json` into `out` when given.
pub fn cmd_fit(file: &Path, req: &FitRequest, out: Option<&Path>) -> Result<FitOutput> {
    if req.estimator == Estimator::Ransac {
        req.ransac.validate()?;
    }
    let corr = read_correspondences(file)?;
    let result = fit_correspondences(&corr, req)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("fit.json"), &result)?;
    }
    Ok(result)
}

pub fn fit_output_json(result: &FitOutput) -> Result<String> {
    to_json_pretty(result)
}
