//! CSV exports of simulation runs and benchmark reports.

use std::path::Path;

use gcbf_core::eval::BenchReport;
use gcbf_core::sim::SimRun;

use crate::error::Result;
use crate::fsutil::{num, write_atomic};

fn to_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `t, <state>..., <input>..., h, px, py, pz, active`. Column names for the
/// state and input come from `state_names` / `input_names`; missing names
/// fall back to `x{i}` / `u{i}`.
pub fn trajectory_csv(run: &SimRun, state_names: &[&str], input_names: &[&str]) -> Vec<u8> {
    let ns = run.states.first().map_or(0, Vec::len);
    let nu = run.controls.first().map_or(0, Vec::len);
    let name = |names: &[&str], prefix: &str, i: usize| {
        names
            .get(i)
            .map_or_else(|| format!("{prefix}{i}"), |s| (*s).to_owned())
    };
    let mut header = vec!["t".to_owned()];
    header.extend((0..ns).map(|i| name(state_names, "x", i)));
    header.extend((0..nu).map(|i| name(input_names, "u", i)));
    header.extend(["h", "px", "py", "pz", "active"].map(str::to_owned));
    let rows = (0..run.times.len()).map(|k| {
        let mut r = vec![num(run.times[k])];
        r.extend(run.states[k].iter().map(|v| num(*v)));
        r.extend(run.controls[k].iter().map(|v| num(*v)));
        r.push(num(run.h[k]));
        let p = run.positions[k];
        r.extend([p.x, p.y, p.z].map(num));
        r.push(u8::from(run.active[k]).to_string());
        r
    });
    to_bytes(&header, rows)
}

pub fn events_csv(run: &SimRun) -> Vec<u8> {
    let header = ["t", "kind", "detail"].map(str::to_owned);
    let rows = run
        .events
        .iter()
        .map(|e| vec![num(e.t), e.kind.name().to_owned(), e.detail.clone()]);
    to_bytes(&header, rows)
}

/// One `training` row per local fit and one `inference` row per barrier
/// query, all in seconds.
pub fn timing_csv(run: &SimRun) -> Vec<u8> {
    let header = ["kind", "t", "seconds", "n", "m"].map(str::to_owned);
    let training = run.training.iter().map(|r| {
        vec![
            "training".to_owned(),
            num(r.t),
            num(r.seconds),
            r.n.to_string(),
            r.m.to_string(),
        ]
    });
    let inference = run.inference_times.iter().map(|s| {
        vec![
            "inference".to_owned(),
            String::new(),
            num(*s),
            String::new(),
            String::new(),
        ]
    });
    to_bytes(&header, training.chain(inference))
}

pub fn write_run(
    dir: &Path,
    run: &SimRun,
    state_names: &[&str],
    input_names: &[&str],
) -> Result<()> {
    write_atomic(
        &dir.join("trajectory.csv"),
        &trajectory_csv(run, state_names, input_names),
    )?;
    write_atomic(&dir.join("events.csv"), &events_csv(run))?;
    write_atomic(&dir.join("timing.csv"), &timing_csv(run))
}

pub fn bench_csv(r: &BenchReport) -> Vec<u8> {
    let header = [
        "model",
        "centers",
        "queries",
        "repeats",
        "eval_mean",
        "eval_median",
        "grad_mean",
        "grad_median",
    ]
    .map(str::to_owned);
    let row = |name: &str, centers: usize, t: &gcbf_core::eval::QueryTiming| {
        vec![
            name.to_owned(),
            centers.to_string(),
            r.queries.to_string(),
            r.repeats.to_string(),
            num(t.eval_mean),
            num(t.eval_median),
            num(t.grad_mean),
            num(t.grad_median),
        ]
    };
    to_bytes(
        &header,
        [row("full", r.n, &r.full), row("sparse", r.m, &r.sparse)],
    )
}

/// Inverse of [`bench_csv`].
pub fn parse_bench_csv(bytes: &[u8]) -> Option<BenchReport> {
    let mut rd = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec.ok()?);
    }
    let [full, sparse] = rows.as_slice() else {
        return None;
    };
    let f = |r: &csv::StringRecord, i: usize| r.get(i)?.parse::<f64>().ok();
    let u = |r: &csv::StringRecord, i: usize| r.get(i)?.parse::<usize>().ok();
    let timing = |r: &csv::StringRecord| {
        Some(gcbf_core::eval::QueryTiming {
            eval_mean: f(r, 4)?,
            eval_median: f(r, 5)?,
            grad_mean: f(r, 6)?,
            grad_median: f(r, 7)?,
        })
    };
    Some(BenchReport {
        n: u(full, 1)?,
        m: u(sparse, 1)?,
        queries: u(full, 2)?,
        repeats: u(full, 3)?,
        full: timing(full)?,
        sparse: timing(sparse)?,
    })
}
