use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gcbf::cloud_io::write_cloud_csv;
use gcbf::field_file::read_field;
use gcbf_core::shapes::sphere_cloud;
use gcbf_core::Vec3;

fn gcbf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcbf"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("GCBF_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sphere_csv(dir: &Path) -> PathBuf {
    let path = dir.join("sphere.csv");
    write_cloud_csv(&path, &sphere_cloud(Vec3::zeros(), 0.5, 120)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_documents_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        (
            "train",
            &[
                "--cloud",
                "--format",
                "--downsample",
                "--rescale",
                "--n0",
                "--nplus",
                "--nminus",
                "--offset",
                "--sparse-m",
                "--iters",
                "--seed",
                "--family",
                "--lengthscale",
                "--signal-var",
                "--noise-var",
                "--out-dir",
                "--config",
            ],
        ),
        (
            "field",
            &[
                "--model", "--margin", "--dims", "--lo", "--hi", "--pad", "--level",
            ],
        ),
        ("chamfer", &["[A]", "[B]"]),
        (
            "bench",
            &[
                "--full",
                "--sparse",
                "--queries",
                "--repeats",
                "--seed",
                "--margin",
            ],
        ),
        (
            "sim",
            &[
                "[SCENARIO]",
                "--seed",
                "--duration",
                "--margin",
                "--model",
                "--no-filter",
                "--frozen-clock",
            ],
        ),
    ];
    for (cmd, flags) in cases {
        let o = Command::new(env!("CARGO_BIN_EXE_gcbf"))
            .args([cmd, "--help"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{cmd} --help");
        let text = stdout(&o);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert!(Command::new(env!("CARGO_BIN_EXE_gcbf"))
        .arg("--help")
        .status()
        .unwrap()
        .success());
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cloud = sphere_csv(dir.path());
    let missing = gcbf(&out, &["train", "--cloud", "/nonexistent/cloud.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_m = gcbf(
        &out,
        &[
            "train",
            "--cloud",
            s(&cloud),
            "--sparse-m",
            "0",
            "--iters",
            "0",
        ],
    );
    assert_eq!(
        bad_m.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&bad_m.stderr)
    );
    let bad_flag = gcbf(&out, &["train", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let no_cloud = gcbf(&out, &["train"]);
    assert_eq!(no_cloud.status.code(), Some(2));
}

#[test]
fn train_field_chamfer_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sphere_csv(dir.path());
    let (full_dir, sparse_dir) = (dir.path().join("full"), dir.path().join("sparse"));
    let common = [
        "train",
        "--cloud",
        s(&cloud),
        "--n0",
        "120",
        "--nplus",
        "60",
        "--nminus",
        "60",
        "--seed",
        "7",
    ];
    let o = gcbf(&full_dir, &[&common[..], &["--iters", "5"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    for key in ["N 240", "M 240", "iterations", "final_lml", "wall_time"] {
        assert!(line.contains(key), "{line}");
    }
    let o = gcbf(
        &sparse_dir,
        &[&common[..], &["--iters", "0", "--sparse-m", "48"]].concat(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("M 48"));
    for f in ["model.json", "samples.csv", "config.toml"] {
        assert!(full_dir.join(f).exists(), "{f}");
    }

    let field_dir = dir.path().join("field");
    let model = full_dir.join("model.json");
    let o = gcbf(&field_dir, &["field", "--model", s(&model), "--dims", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_field(&field_dir.join("field.txt")).unwrap();
    assert_eq!(f.dims, [20, 20, 20]);
    let iso = field_dir.join("isosurface.csv");
    let o = gcbf(&dir.path().join("ch"), &["chamfer", s(&iso), s(&cloud)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("chamfer_raw") && text.contains("chamfer_normalized"));

    let o = gcbf(&dir.path().join("self"), &["chamfer", s(&cloud), s(&cloud)]);
    assert!(
        stdout(&o).contains("chamfer_raw 0.000000  chamfer_normalized 0.000000"),
        "{}",
        stdout(&o)
    );

    let bench_dir = dir.path().join("bench");
    let sparse = sparse_dir.join("model.json");
    let o = gcbf(
        &bench_dir,
        &[
            "bench",
            "--full",
            s(&model),
            "--sparse",
            s(&sparse),
            "--queries",
            "50",
            "--repeats",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report =
        gcbf::export::parse_bench_csv(&std::fs::read(bench_dir.join("bench.csv")).unwrap())
            .unwrap();
    assert_eq!((report.n, report.m, report.queries), (240, 48, 50));
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sphere_csv(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = gcbf(
            &out,
            &[
                "train",
                "--cloud",
                s(&cloud),
                "--iters",
                "3",
                "--sparse-m",
                "30",
                "--seed",
                "3",
            ],
        );
        assert!(o.status.success());
        (
            std::fs::read(out.join("model.json")).unwrap(),
            std::fs::read(out.join("samples.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn prior_model_field_is_the_signal_variance() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("prior.json");
    std::fs::write(
        &model,
        r#"{"format_version": 1, "kind": "full",
            "kernel": {"family": "se", "lengthscales": [0.3, 0.3, 0.3], "signal_var": 1.7, "noise_var": 0.01},
            "inputs": [], "targets": []}"#,
    )
    .unwrap();
    let out = dir.path().join("f");
    let o = gcbf(
        &out,
        &[
            "field",
            "--model",
            s(&model),
            "--margin",
            "1",
            "--lo",
            "-1,-1,-1",
            "--hi",
            "1,1,1",
            "--dims",
            "4",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_field(&out.join("field.txt")).unwrap();
    assert!(f.values.iter().all(|v| *v == 1.7));
}

#[test]
fn flags_override_the_config_file_and_the_result_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sphere_csv(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[train]\ncloud = {:?}\nn0 = 100\nnplus = 20\nnminus = 20\niters = 0\nseed = 5\n",
            s(&cloud)
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = gcbf(
        &out,
        &[
            "--config",
            s(&cfg),
            "train",
            "--nplus",
            "30",
            "--nminus",
            "10",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("N 140"), "{}", stdout(&o));
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let t: toml::Table = toml::from_str(&echoed).unwrap();
    let train = t["train"].as_table().unwrap();
    assert_eq!(train["nplus"].as_integer(), Some(30));
    assert_eq!(train["n0"].as_integer(), Some(100));
    assert_eq!(train["seed"].as_integer(), Some(5));

    // The echoed file reproduces the run on its own.
    let again = dir.path().join("again");
    let o = gcbf(&again, &["--config", s(&out.join("config.toml")), "train"]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("model.json")).unwrap(),
        std::fs::read(again.join("model.json")).unwrap()
    );

    std::fs::write(&cfg, "[train]\nbogus = 1\n").unwrap();
    let o = gcbf(&out, &["--config", s(&cfg), "train"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sphere_csv(dir.path());
    let env_out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_gcbf"))
        .args(["train", "--cloud", s(&cloud), "--iters", "0"])
        .env("GCBF_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("model.json").exists());
}

fn sim_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("arm.toml");
    std::fs::write(
        &path,
        "vehicle = \"manipulator\"\nseed = 2\nduration = 2.5\n\
         [object]\nsource = \"sphere\"\ncenter = [0.5, 0.0, 0.5]\nradius = 0.1\npoints = 600\n\
         [model]\nkind = \"sparse\"\nfamily = \"se\"\nlengthscale = 0.05\nsignal_var = 1.0\nnoise_var = 1e-6\niters = 0\n",
    )
    .unwrap();
    path
}

#[test]
fn sim_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scn = sim_scenario(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = gcbf(&out, &["sim", s(&scn), "--frozen-clock"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary = stdout(&o);
        for key in [
            "min_h",
            "goal_error",
            "datasets",
            "fallbacks",
            "penetrations 0",
        ] {
            assert!(summary.contains(key), "{summary}");
        }
        [
            "trajectory.csv",
            "events.csv",
            "timing.csv",
            "summary.txt",
            "scenario.toml",
        ]
        .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn sim_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let scn = sim_scenario(dir.path());
    let out = dir.path().join("o");
    let o = gcbf(
        &out,
        &[
            "sim",
            s(&scn),
            "--frozen-clock",
            "--duration",
            "1",
            "--seed",
            "9",
            "--model",
            "full",
        ],
    );
    assert!(o.status.success());
    let echoed = std::fs::read_to_string(out.join("scenario.toml")).unwrap();
    let scn: gcbf::scenario::Scenario = toml::from_str(&echoed).unwrap();
    assert_eq!((scn.seed, scn.duration), (9, 1.0));
    assert_eq!(scn.model.kind, gcbf::scenario::ModelChoice::Full);
    let rows = std::fs::read_to_string(out.join("trajectory.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 101);
    let o = gcbf(&out, &["sim", s(&dir.path().join("nope.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsafe_start_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("q.toml");
    std::fs::write(
        &scn,
        "vehicle = \"quadrotor\"\nduration = 1.0\n[object]\nsource = \"sphere\"\nradius = 0.5\npoints = 200\n\
         [model]\nfamily = \"se\"\niters = 0\n[quadrotor]\nstart = [0.0, 0.0, 0.0]\ngoal = [1.0, 1.0, 1.0]\n",
    )
    .unwrap();
    let o = gcbf(&dir.path().join("o"), &["sim", s(&scn)]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
