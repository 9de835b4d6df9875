//! TOML scenario files and the runner behind `gcbf sim`.
//!
//! A quadrotor scenario trains one model offline on the object and flies a
//! single reference past it. A manipulator scenario hands the object cloud to
//! the arm's proximal sensor and learns local models online.

use std::path::{Path, PathBuf};

use gcbf_core::cbf::{AnyModel, SurfaceModel};
use gcbf_core::gp_full::{initial_spec, optimize_hyperparams};
use gcbf_core::gp_sparse::optimize_sparse;
use gcbf_core::pointcloud::make_safety_samples;
use gcbf_core::shapes::{bunny, chair, sphere_cloud, Shape};
use gcbf_core::sim::{
    run_manipulator, run_quadrotor, Boresight, ChainModel, Clock, DhRow, EventKind,
    ManipulatorConfig, ManipulatorReference, ModelKind, QuadrotorConfig, SensorConfig, SimRun,
};
use gcbf_core::{
    CbfConfig, GpModel, KernelFamily, KernelSpec, Observations, PointCloud, SparseGpModel, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::cloud_io::load_cloud;
use crate::error::{IoError, Result};
use crate::fsutil::read_text;
use crate::model_file::load_model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vehicle {
    Quadrotor,
    Manipulator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectSource {
    /// No obstacle; the nominal controller runs unfiltered.
    None,
    Chair,
    Bunny,
    Sphere,
    /// A cloud file (CSV, OBJ or PLY) with normals.
    Cloud,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectSpec {
    pub source: ObjectSource,
    /// Surface samples drawn from procedural objects.
    pub points: usize,
    pub path: Option<PathBuf>,
    pub center: [f64; 3],
    pub radius: f64,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            source: ObjectSource::Chair,
            points: 1101,
            path: None,
            center: [0.0; 3],
            radius: 0.5,
        }
    }
}

/// Offline safety samples for quadrotor scenarios. Unset counts default to
/// the whole cloud on the surface and half of it on each side.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplesSpec {
    pub n0: Option<usize>,
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub offset: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Full,
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelChoice,
    pub family: String,
    /// Starting hyperparameters; any unset value comes from the data.
    pub lengthscale: Option<f64>,
    pub signal_var: Option<f64>,
    pub noise_var: Option<f64>,
    /// Optimizer iterations; 0 keeps the starting hyperparameters.
    pub iters: usize,
    /// Pseudo-inputs for offline sparse models (default N/3).
    pub pseudo: Option<usize>,
    /// Use a saved model instead of training one (quadrotor only).
    pub file: Option<PathBuf>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelChoice::Full,
            family: "matern32".into(),
            lengthscale: None,
            signal_var: None,
            noise_var: None,
            iters: 15,
            pseudo: None,
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbfSpec {
    pub margin: f64,
    pub alpha: f64,
    pub poles: [f64; 2],
}

impl Default for CbfSpec {
    fn default() -> Self {
        Self {
            margin: 4.0,
            alpha: 5.0,
            poles: [2.0, 2.0],
        }
    }
}

impl From<&CbfSpec> for CbfConfig {
    fn from(c: &CbfSpec) -> Self {
        CbfConfig {
            margin_coeff: c.margin,
            alpha_gain: c.alpha,
            ecbf_poles: (c.poles[0], c.poles[1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorSpec {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub kp: f64,
    pub kd: f64,
    pub control_rate: f64,
    pub physics_rate: f64,
    /// Per-axis bound on the nominal acceleration; `0` disables it.
    pub nominal_limit: f64,
}

impl Default for QuadrotorSpec {
    fn default() -> Self {
        Self {
            start: [-0.5, -0.5, 0.2],
            goal: [0.5, 0.5, 0.2],
            kp: 0.5,
            kd: 1.2,
            control_rate: 50.0,
            physics_rate: 500.0,
            nominal_limit: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManipulatorSpec {
    pub q0: Vec<f64>,
    pub target: [f64; 3],
    /// DH rows; empty selects the generic 7-joint arm.
    pub chain: Vec<DhSpec>,
    pub dt: f64,
    pub ik_gain: f64,
    pub ik_damping: f64,
    pub trigger_points: usize,
    pub max_local_points: usize,
    pub offset: f64,
    pub filter: bool,
}

impl Default for ManipulatorSpec {
    fn default() -> Self {
        let m = ManipulatorConfig::default();
        Self {
            q0: vec![-0.094, 1.789, 0.705, -1.697, -0.161, 0.768, 0.0],
            target: [0.5, 0.35, 0.5],
            chain: Vec::new(),
            dt: m.dt,
            ik_gain: m.ik_gain,
            ik_damping: m.ik_damping,
            trigger_points: m.trigger_points,
            max_local_points: m.max_local_points,
            offset: m.offset,
            filter: m.filter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhSpec {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoresightSpec {
    Named(String),
    Fixed([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    /// Full field of view in degrees.
    pub fov_deg: f64,
    pub range: f64,
    /// `"motion"` or a fixed world direction.
    pub boresight: BoresightSpec,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            fov_deg: 110.0,
            range: 0.8,
            boresight: BoresightSpec::Named("motion".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub vehicle: Vehicle,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub object: ObjectSpec,
    #[serde(default)]
    pub samples: SamplesSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub cbf: CbfSpec,
    #[serde(default)]
    pub quadrotor: QuadrotorSpec,
    #[serde(default)]
    pub manipulator: ManipulatorSpec,
    #[serde(default)]
    pub sensor: SensorSpec,
}

fn default_seed() -> u64 {
    11
}

fn default_duration() -> f64 {
    20.0
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            IoError::parse(path, line, e.message().to_owned())
        })
    }

    /// Reads a scenario; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::parse(&read_text(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut s.object.path, &mut s.model.file]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Result of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub run: SimRun,
    pub goal_error: f64,
    /// Models trained during (manipulator) or before (quadrotor) the run.
    pub datasets: usize,
    pub fallbacks: usize,
    /// Logged positions inside the true object, when its shape is known.
    pub penetrations: Option<usize>,
    pub aborted: bool,
}

impl Outcome {
    pub fn summary(&self) -> String {
        let pen = self
            .penetrations
            .map_or_else(|| "n/a".to_owned(), |n| n.to_string());
        format!(
            "min_h {:.6e}  goal_error {:.4}  datasets {}  fallbacks {}  penetrations {}",
            self.run.min_h(),
            self.goal_error,
            self.datasets,
            self.fallbacks,
            pen
        )
    }
}

enum Truth {
    Shape(Shape),
    Sphere(Vec3, f64),
}

impl Truth {
    fn inside(&self, p: &Vec3) -> bool {
        match self {
            Truth::Shape(s) => s.contains(p),
            Truth::Sphere(c, r) => (p - c).norm() < *r,
        }
    }
}

fn object_cloud(obj: &ObjectSpec, seed: u64) -> Result<(PointCloud, Option<Truth>)> {
    let center = Vec3::from(obj.center);
    Ok(match obj.source {
        ObjectSource::None => unreachable!("callers handle the empty scene"),
        ObjectSource::Chair => (
            chair().sample_surface(obj.points, seed)?,
            Some(Truth::Shape(chair())),
        ),
        ObjectSource::Bunny => (
            bunny().sample_surface(obj.points, seed)?,
            Some(Truth::Shape(bunny())),
        ),
        ObjectSource::Sphere => (
            sphere_cloud(center, obj.radius, obj.points),
            Some(Truth::Sphere(center, obj.radius)),
        ),
        ObjectSource::Cloud => {
            let path = obj.path.as_deref().ok_or_else(|| {
                IoError::format(
                    Path::new("<scenario>"),
                    "object.source = \"cloud\" needs object.path",
                )
            })?;
            (load_cloud(path, None)?, None)
        }
    })
}

/// Starting kernel: explicit values where given, data-scaled otherwise.
/// Without data the fallback is a 5 cm lengthscale, unit signal variance
/// and 1e-6 noise.
pub fn starting_spec(
    family: &str,
    lengthscale: Option<f64>,
    signal_var: Option<f64>,
    noise_var: Option<f64>,
    data: Option<Observations<'_>>,
) -> Result<KernelSpec> {
    let fam = KernelFamily::from_name(family).ok_or_else(|| {
        IoError::format(
            Path::new("<config>"),
            format!("unknown kernel family `{family}`"),
        )
    })?;
    let base = match data {
        Some(d) => initial_spec(fam, d),
        None => KernelSpec::isotropic(fam, 0.05, 1.0, 1e-6),
    };
    let mut spec = base.clone();
    if let Some(l) = lengthscale {
        spec.params.lengthscales.iter_mut().for_each(|v| *v = l);
    }
    spec.params.signal_var = signal_var.unwrap_or(base.signal_var());
    spec.params.noise_var = noise_var.unwrap_or(base.noise_var());
    Ok(spec)
}

impl ModelSpec {
    fn start(&self, data: Option<Observations<'_>>) -> Result<KernelSpec> {
        starting_spec(
            &self.family,
            self.lengthscale,
            self.signal_var,
            self.noise_var,
            data,
        )
    }
}

fn train_offline(scn: &Scenario, cloud: &PointCloud) -> Result<AnyModel> {
    let s = &scn.samples;
    let n0 = s.n0.unwrap_or(cloud.len());
    let np = s.n_plus.unwrap_or(n0 / 2);
    let nm = s.n_minus.unwrap_or(np);
    let offset = s.offset.unwrap_or(0.02);
    let data = make_safety_samples(cloud, n0, np, nm, offset, scn.seed)?;
    let obs = Observations::from(&data);
    let init = scn.model.start(Some(obs))?;
    let iters = scn.model.iters;
    Ok(match scn.model.kind {
        ModelChoice::Full => {
            let spec = if iters > 0 {
                optimize_hyperparams(&init, obs, iters)?.0
            } else {
                init
            };
            AnyModel::Full(GpModel::fit(spec, obs)?)
        }
        ModelChoice::Sparse => {
            let m = scn.model.pseudo.unwrap_or(data.len() / 3);
            if iters > 0 {
                AnyModel::Sparse(optimize_sparse(&init, obs, m, iters, scn.seed)?.0)
            } else {
                AnyModel::Sparse(SparseGpModel::fit(init, obs, m, scn.seed)?)
            }
        }
    })
}

pub fn quadrotor_config(scn: &Scenario) -> QuadrotorConfig {
    let q = &scn.quadrotor;
    QuadrotorConfig {
        cbf: (&scn.cbf).into(),
        kp: q.kp,
        kd: q.kd,
        control_rate: q.control_rate,
        physics_rate: q.physics_rate,
        duration: scn.duration,
        nominal_limit: (q.nominal_limit > 0.0).then_some(q.nominal_limit),
    }
}

fn sensor_config(s: &SensorSpec) -> Result<SensorConfig> {
    let boresight = match &s.boresight {
        BoresightSpec::Named(n) if n == "motion" => Boresight::Motion,
        BoresightSpec::Named(n) => {
            return Err(IoError::format(
                Path::new("<scenario>"),
                format!("unknown boresight `{n}` (expected \"motion\" or [x, y, z])"),
            ))
        }
        BoresightSpec::Fixed(d) => Boresight::Fixed(Vec3::from(*d)),
    };
    Ok(SensorConfig {
        fov_half_angle: (s.fov_deg / 2.0).to_radians(),
        range: s.range,
        boresight,
    })
}

fn run_quad<C: Clock + ?Sized>(scn: &Scenario, clock: &C) -> Result<Outcome> {
    let cfg = quadrotor_config(scn);
    let (start, goal) = (
        Vec3::from(scn.quadrotor.start),
        Vec3::from(scn.quadrotor.goal),
    );
    let (model, truth) = match (&scn.model.file, scn.object.source) {
        (_, ObjectSource::None) => (None, None),
        (Some(file), _) => {
            let truth = match scn.object.source {
                ObjectSource::Cloud => None,
                _ => object_cloud(&scn.object, scn.seed)?.1,
            };
            (Some(load_model(file)?), truth)
        }
        (None, _) => {
            let (cloud, truth) = object_cloud(&scn.object, scn.seed)?;
            (Some(train_offline(scn, &cloud)?), truth)
        }
    };
    let run = run_quadrotor(
        model.as_ref().map(|m| m as &dyn SurfaceModel),
        start,
        goal,
        &cfg,
        clock,
    )?;
    Ok(outcome(
        run,
        goal,
        usize::from(model.is_some()),
        truth.as_ref(),
    ))
}

pub fn manipulator_config(scn: &Scenario) -> Result<ManipulatorConfig> {
    let m = &scn.manipulator;
    Ok(ManipulatorConfig {
        cbf: (&scn.cbf).into(),
        kernel: scn.model.start(None)?,
        model: match scn.model.kind {
            ModelChoice::Full => ModelKind::Full,
            ModelChoice::Sparse => ModelKind::Sparse,
        },
        dt: m.dt,
        duration: scn.duration,
        ik_gain: m.ik_gain,
        ik_damping: m.ik_damping,
        trigger_points: m.trigger_points,
        max_local_points: m.max_local_points,
        offset: m.offset,
        train_iters: scn.model.iters,
        filter: m.filter,
    })
}

pub fn chain(scn: &Scenario) -> ChainModel {
    if scn.manipulator.chain.is_empty() {
        ChainModel::generic_7dof()
    } else {
        ChainModel::new(
            scn.manipulator
                .chain
                .iter()
                .map(|r| DhRow {
                    a: r.a,
                    alpha: r.alpha,
                    d: r.d,
                    theta_offset: r.theta_offset,
                })
                .collect(),
        )
    }
}

fn run_arm<C: Clock + ?Sized>(scn: &Scenario, clock: &C) -> Result<Outcome> {
    if scn.object.source == ObjectSource::None {
        return Err(IoError::format(
            Path::new("<scenario>"),
            "manipulator scenarios need an object",
        ));
    }
    let cfg = manipulator_config(scn)?;
    let sensor = sensor_config(&scn.sensor)?;
    let chain = chain(scn);
    let (cloud, truth) = object_cloud(&scn.object, scn.seed)?;
    let reference = ManipulatorReference {
        q0: scn.manipulator.q0.clone(),
        target: Vec3::from(scn.manipulator.target),
    };
    let run = run_manipulator(&chain, &cloud, &sensor, &reference, &cfg, scn.seed, clock)?;
    let datasets = run.count(EventKind::Trained);
    Ok(outcome(run, reference.target, datasets, truth.as_ref()))
}

fn outcome(run: SimRun, goal: Vec3, datasets: usize, truth: Option<&Truth>) -> Outcome {
    Outcome {
        goal_error: run
            .final_position()
            .map_or(f64::INFINITY, |p| (p - goal).norm()),
        datasets,
        fallbacks: run.count(EventKind::Fallback),
        penetrations: truth.map(|t| run.positions.iter().filter(|p| t.inside(p)).count()),
        aborted: run.count(EventKind::Abort) > 0,
        run,
    }
}

pub fn run_scenario<C: Clock + ?Sized>(scn: &Scenario, clock: &C) -> Result<Outcome> {
    match scn.vehicle {
        Vehicle::Quadrotor => run_quad(scn, clock),
        Vehicle::Manipulator => run_arm(scn, clock),
    }
}

/// Column names for [`crate::export::trajectory_csv`].
pub fn column_names(scn: &Scenario) -> (Vec<String>, Vec<String>) {
    match scn.vehicle {
        Vehicle::Quadrotor => (
            ["x", "y", "z", "vx", "vy", "vz"]
                .map(str::to_owned)
                .to_vec(),
            ["ax", "ay", "az"].map(str::to_owned).to_vec(),
        ),
        Vehicle::Manipulator => {
            let n = chain(scn).joints();
            (
                (0..n).map(|i| format!("q{i}")).collect(),
                (0..n).map(|i| format!("dq{i}")).collect(),
            )
        }
    }
}
