//! `gcbf` subcommands.
//!
//! Each subcommand resolves its settings from three layers: built-in
//! defaults, the matching `[train]`/`[field]`/`[chamfer]`/`[bench]`/`[sim]`
//! table of the `--config` file, and explicit flags. The merged settings are
//! written to `config.toml` in the output directory, in a form `--config`
//! accepts again.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcbf_core::cbf::{AnyModel, SurfaceModel};
use gcbf_core::eval::{bench, chamfer, chamfer_normalized, extract_isosurface, sample_field};
use gcbf_core::gp_full::{log_marginal_likelihood, optimize_hyperparams};
use gcbf_core::gp_sparse::{optimize_sparse, sparse_lml};
use gcbf_core::pointcloud::{default_offset, make_safety_samples};
use gcbf_core::{CbfConfig, GpModel, Observations, SparseGpModel, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cloud_io::{
    load_cloud, read_points_csv, write_dataset_csv, write_points_csv, CloudFormat,
};
use crate::error::{IoError, Result};
use crate::export::{bench_csv, write_run};
use crate::field_file::write_field;
use crate::fsutil::{read_text, write_atomic};
use crate::model_file::{load_model, save_model, TrainingDoc};
use crate::scenario::{column_names, run_scenario, starting_spec, ModelChoice, Scenario};
use crate::timing::{timed, InstantClock};

#[derive(Debug, Parser)]
#[command(
    name = "gcbf",
    version,
    about = "Learn implicit safety surfaces from point clouds and use them as barrier functions"
)]
pub struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, env = "GCBF_OUT_DIR", default_value = "gcbf-out")]
    pub out_dir: PathBuf,
    /// TOML file with a table per subcommand; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build safety samples from a cloud and fit a full or sparse model.
    Train(TrainArgs),
    /// Sample the barrier on a grid and extract a level set.
    Field(FieldArgs),
    /// Chamfer distance between two point sets (raw and size-normalized).
    Chamfer(ChamferArgs),
    /// Time barrier queries on a full and a sparse model.
    Bench(BenchArgs),
    /// Run a scenario file and export the trajectory.
    Sim(SimArgs),
}

#[derive(Debug, Default, Args, Serialize)]
pub struct TrainArgs {
    /// Input cloud with normals (.csv, .obj or .ply).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    /// Cloud format when the extension is ambiguous: csv, obj or ply.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Randomly thin the cloud to this many points first.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub downsample: Option<usize>,
    /// Rescale the cloud to fit this box, as `x,y,z` in meters.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale: Option<Vec<f64>>,
    /// On-surface samples (default: every cloud point).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    /// Exterior samples (default: n0/2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nplus: Option<usize>,
    /// Interior samples (default: nplus).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nminus: Option<usize>,
    /// Normal offset of off-surface samples in meters (default: 5% of the cloud diagonal).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    /// Fit a sparse model with this many pseudo-inputs instead of a full one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_m: Option<usize>,
    /// Optimizer iterations; 0 keeps the starting hyperparameters.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Seed for sampling and pseudo-input initialization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Kernel family: se or matern32.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// Starting lengthscale (default: 0.2 × data diagonal).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
    /// Starting signal variance (default: target variance).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_var: Option<f64>,
    /// Starting noise variance (default: 1% of the signal variance).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub cloud: Option<PathBuf>,
    pub format: Option<String>,
    pub downsample: Option<usize>,
    pub rescale: Option<Vec<f64>>,
    pub n0: Option<usize>,
    pub nplus: Option<usize>,
    pub nminus: Option<usize>,
    pub offset: Option<f64>,
    pub sparse_m: Option<usize>,
    pub iters: usize,
    pub seed: u64,
    pub family: String,
    pub lengthscale: Option<f64>,
    pub signal_var: Option<f64>,
    pub noise_var: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            cloud: None,
            format: None,
            downsample: None,
            rescale: None,
            n0: None,
            nplus: None,
            nminus: None,
            offset: None,
            sparse_m: None,
            iters: 15,
            seed: 0,
            family: "se".into(),
            lengthscale: None,
            signal_var: None,
            noise_var: None,
        }
    }
}

#[derive(Debug, Default, Args, Serialize)]
pub struct FieldArgs {
    /// Model file written by `train`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Margin coefficient c in h = mean + c·variance.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Grid nodes per axis: one value or `nx,ny,nz`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Lower grid corner `x,y,z` (default: padded bounding box of the training inputs).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    /// Upper grid corner `x,y,z`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    /// Padding of the default box as a fraction of its extent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pad: Option<f64>,
    /// Level of the extracted isosurface.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSettings {
    pub model: Option<PathBuf>,
    pub margin: f64,
    pub dims: Vec<usize>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub pad: f64,
    pub level: f64,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self {
            model: None,
            margin: 0.0,
            dims: vec![48],
            lo: None,
            hi: None,
            pad: 0.1,
            level: 0.0,
        }
    }
}

#[derive(Debug, Default, Args, Serialize)]
pub struct ChamferArgs {
    /// First point set (.csv with x,y,z leading columns, .obj or .ply).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<PathBuf>,
    /// Second point set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChamferSettings {
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct BenchArgs {
    /// Full model file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<PathBuf>,
    /// Sparse model file trained on the same data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse: Option<PathBuf>,
    /// Random query points drawn in the padded bounding box of the data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    /// Timed passes over the query set.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// Seed for the query points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Margin coefficient c in h = mean + c·variance.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSettings {
    pub full: Option<PathBuf>,
    pub sparse: Option<PathBuf>,
    pub queries: usize,
    pub repeats: usize,
    pub seed: u64,
    pub margin: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            full: None,
            sparse: None,
            queries: 500,
            repeats: 5,
            seed: 0,
            margin: 1.0,
        }
    }
}

#[derive(Debug, Default, Args, Serialize)]
pub struct SimArgs {
    /// Scenario file (TOML).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Override the scenario duration in seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Override the margin coefficient.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Override the model kind: full or sparse.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Run the manipulator reference without the safety filter.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_filter: bool,
    /// Record zero for every wall-clock time so all outputs are byte-reproducible.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub frozen_clock: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub margin: Option<f64>,
    pub model: Option<String>,
    pub no_filter: bool,
    pub frozen_clock: bool,
}

fn usage(msg: impl Into<String>) -> IoError {
    IoError::format(Path::new("<arguments>"), msg)
}

/// Overlays the explicit flags on the config-file table and deserializes the
/// result.
fn resolve<A: Serialize, S: DeserializeOwned>(
    args: &A,
    config: Option<&Path>,
    section: &str,
) -> Result<S> {
    let mut merged = serde_json::Map::new();
    if let Some(path) = config {
        let text = read_text(path)?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| IoError::parse(path, 0, e.message().to_owned()))?;
        if let Some(v) = table.get(section) {
            match serde_json::to_value(v).expect("toml converts to json") {
                serde_json::Value::Object(m) => merged = m,
                _ => {
                    return Err(IoError::format(
                        path,
                        format!("`{section}` must be a table"),
                    ))
                }
            }
        }
    }
    if let serde_json::Value::Object(m) = serde_json::to_value(args).expect("flags serialize") {
        merged.extend(m);
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| usage(format!("invalid `{section}` settings: {e}")))
}

fn echo_config<S: Serialize>(out: &Path, section: &str, settings: &S) -> Result<()> {
    let doc = BTreeMap::from([(section, settings)]);
    let text = toml::to_string_pretty(&doc).map_err(|e| usage(e.to_string()))?;
    write_atomic(&out.join("config.toml"), text.as_bytes())
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| usage(format!("missing required setting `{name}`")))
}

fn vec3(v: &[f64], name: &str) -> Result<Vec3> {
    match v {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(usage(format!("`{name}` needs three values"))),
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.config.as_deref();
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Train(a) => train(resolve(a, cfg, "train")?, out),
        Command::Field(a) => field(resolve(a, cfg, "field")?, out),
        Command::Chamfer(a) => chamfer_cmd(resolve(a, cfg, "chamfer")?, out),
        Command::Bench(a) => bench_cmd(resolve(a, cfg, "bench")?, out),
        Command::Sim(a) => sim(resolve(a, cfg, "sim")?, out),
    }
}

fn train(s: TrainSettings, out: &Path) -> Result<ExitCode> {
    let path = required(&s.cloud, "cloud")?;
    let format = s
        .format
        .as_deref()
        .map(str::parse::<CloudFormat>)
        .transpose()
        .map_err(usage)?;
    let mut cloud = load_cloud(path, format)?;
    if let Some(n) = s.downsample {
        cloud = cloud.downsample(n, s.seed);
    }
    if let Some(b) = &s.rescale {
        cloud = cloud.rescale_to_box(vec3(b, "rescale")?)?;
    }
    let n0 = s.n0.unwrap_or(cloud.len());
    let nplus = s.nplus.unwrap_or(n0 / 2);
    let nminus = s.nminus.unwrap_or(nplus);
    let offset = s.offset.unwrap_or_else(|| default_offset(&cloud));
    let data = make_safety_samples(&cloud, n0, nplus, nminus, offset, s.seed)?;
    let obs = Observations::from(&data);
    let init = starting_spec(
        &s.family,
        s.lengthscale,
        s.signal_var,
        s.noise_var,
        Some(obs),
    )?;

    let (fitted, secs) = timed(|| -> Result<(AnyModel, Option<TrainingDoc>)> {
        Ok(match (s.sparse_m, s.iters) {
            (None, 0) => (AnyModel::Full(GpModel::fit(init, obs)?), None),
            (None, it) => {
                let (spec, r) = optimize_hyperparams(&init, obs, it)?;
                (
                    AnyModel::Full(GpModel::fit(spec, obs)?),
                    Some(TrainingDoc::new(&r)),
                )
            }
            (Some(m), 0) => (
                AnyModel::Sparse(SparseGpModel::fit(init, obs, m, s.seed)?),
                None,
            ),
            (Some(m), it) => {
                let (model, r) = optimize_sparse(&init, obs, m, it, s.seed)?;
                (AnyModel::Sparse(model), Some(TrainingDoc::new(&r)))
            }
        })
    });
    let (model, report) = fitted?;
    let lml = match (&report, &model) {
        (Some(r), _) => r.final_lml,
        (None, AnyModel::Full(m)) => log_marginal_likelihood(m.spec(), obs)?.0,
        (None, AnyModel::Sparse(m)) => sparse_lml(m.spec(), obs, m.pseudo_inputs())?.0,
    };
    let iterations = report.as_ref().map_or(0, |r| r.iterations);
    save_model(&out.join("model.json"), &model, report)?;
    write_dataset_csv(&out.join("samples.csv"), &data)?;
    echo_config(out, "train", &s)?;
    println!(
        "N {}  M {}  iterations {}  final_lml {:.6}  wall_time {:.3}s",
        data.len(),
        model.centers().len(),
        iterations,
        lml,
        secs
    );
    Ok(ExitCode::SUCCESS)
}

fn data_box(model: &AnyModel, pad: f64) -> Option<(Vec3, Vec3)> {
    let x = model.centers();
    let first = *x.first()?;
    let (lo, hi) = x
        .iter()
        .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let d = (hi - lo) * pad;
    Some((lo - d, hi + d))
}

fn field(s: FieldSettings, out: &Path) -> Result<ExitCode> {
    let model = load_model(required(&s.model, "model")?)?;
    let dims = match s.dims.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => return Err(usage("`dims` takes one or three values")),
    };
    let (lo, hi) = match (&s.lo, &s.hi) {
        (Some(lo), Some(hi)) => (vec3(lo, "lo")?, vec3(hi, "hi")?),
        (None, None) => {
            data_box(&model, s.pad).ok_or_else(|| usage("model has no data; pass --lo and --hi"))?
        }
        _ => return Err(usage("pass both --lo and --hi or neither")),
    };
    let cfg = CbfConfig {
        margin_coeff: s.margin,
        ..CbfConfig::default()
    };
    let f = sample_field(&model, &cfg, lo, hi, dims)?;
    let iso = extract_isosurface(&f, s.level);
    write_field(&out.join("field.txt"), &f)?;
    write_points_csv(&out.join("isosurface.csv"), &iso)?;
    echo_config(out, "field", &s)?;
    println!("nodes {}  isosurface_points {}", f.values.len(), iso.len());
    Ok(ExitCode::SUCCESS)
}

fn read_point_set(path: &Path) -> Result<Vec<Vec3>> {
    match CloudFormat::from_path(path) {
        Some(CloudFormat::Obj) | Some(CloudFormat::Ply) => {
            Ok(load_cloud(path, None)?.points().to_vec())
        }
        _ => read_points_csv(path),
    }
}

fn chamfer_cmd(s: ChamferSettings, out: &Path) -> Result<ExitCode> {
    let a = read_point_set(required(&s.a, "a")?)?;
    let b = read_point_set(required(&s.b, "b")?)?;
    let raw = chamfer(&a, &b)?;
    let norm = chamfer_normalized(&a, &b)?;
    let text = format!(
        "metric,value\nchamfer_raw,{raw}\nchamfer_normalized,{norm}\npoints_a,{}\npoints_b,{}\n",
        a.len(),
        b.len()
    );
    write_atomic(&out.join("chamfer.csv"), text.as_bytes())?;
    echo_config(out, "chamfer", &s)?;
    println!("chamfer_raw {raw:.6}  chamfer_normalized {norm:.6}");
    Ok(ExitCode::SUCCESS)
}

fn bench_cmd(s: BenchSettings, out: &Path) -> Result<ExitCode> {
    let full = load_model(required(&s.full, "full")?)?;
    let sparse = load_model(required(&s.sparse, "sparse")?)?;
    let (lo, hi) = data_box(&full, 0.1).ok_or_else(|| usage("full model has no data"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let queries: Vec<Vec3> = (0..s.queries)
        .map(|_| {
            Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            )
        })
        .collect();
    let cfg = CbfConfig {
        margin_coeff: s.margin,
        ..CbfConfig::default()
    };
    let r = bench(
        &full,
        &sparse,
        &cfg,
        &queries,
        s.repeats,
        &InstantClock::new(),
    )?;
    write_atomic(&out.join("bench.csv"), &bench_csv(&r))?;
    echo_config(out, "bench", &s)?;
    println!(
        "N {}  M {}  eval_mean full {:.3e}s sparse {:.3e}s  speedup {:.2}  grad_speedup {:.2}",
        r.n,
        r.m,
        r.full.eval_mean,
        r.sparse.eval_mean,
        r.eval_speedup(),
        r.grad_speedup()
    );
    if 2 * r.m < r.n && r.eval_speedup() < 1.0 {
        eprintln!("warning: sparse queries were not faster than full ones");
    }
    Ok(ExitCode::SUCCESS)
}

fn sim(s: SimSettings, out: &Path) -> Result<ExitCode> {
    let mut scn = Scenario::load(required(&s.scenario, "scenario")?)?;
    if let Some(seed) = s.seed {
        scn.seed = seed;
    }
    if let Some(d) = s.duration {
        scn.duration = d;
    }
    if let Some(c) = s.margin {
        scn.cbf.margin = c;
    }
    if let Some(m) = &s.model {
        scn.model.kind = match m.as_str() {
            "full" => ModelChoice::Full,
            "sparse" => ModelChoice::Sparse,
            _ => {
                return Err(usage(format!(
                    "unknown model kind `{m}` (expected full or sparse)"
                )))
            }
        };
    }
    if s.no_filter {
        scn.manipulator.filter = false;
    }
    let outcome = if s.frozen_clock {
        run_scenario(&scn, &gcbf_core::sim::FrozenClock)?
    } else {
        run_scenario(&scn, &InstantClock::new())?
    };
    let (states, inputs) = column_names(&scn);
    let states: Vec<&str> = states.iter().map(String::as_str).collect();
    let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    write_run(out, &outcome.run, &states, &inputs)?;
    write_atomic(&out.join("scenario.toml"), scn.to_toml().as_bytes())?;
    let summary = outcome.summary();
    write_atomic(&out.join("summary.txt"), format!("{summary}\n").as_bytes())?;
    echo_config(out, "sim", &s)?;
    println!("{summary}");
    if outcome.aborted {
        eprintln!("error: simulation aborted on a non-finite state");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}
