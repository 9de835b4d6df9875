//! Point-cloud readers (CSV, OBJ, ASCII PLY) and CSV writers for clouds,
//! point sets and labelled safety samples.
//!
//! Readers keep only vertex positions and normals; faces are consulted only
//! to pair OBJ normals with vertices.

use std::path::Path;
use std::str::FromStr;

use gcbf_core::{PointCloud, SafetyDataset, Vec3};

use crate::error::{IoError, Result};
use crate::fsutil::{num, read_text, write_atomic};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    Obj,
    Ply,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        ext.parse().ok()
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" | "txt" => Ok(CloudFormat::Csv),
            "obj" => Ok(CloudFormat::Obj),
            "ply" => Ok(CloudFormat::Ply),
            _ => Err(format!(
                "unknown cloud format `{s}` (expected csv, obj or ply)"
            )),
        }
    }
}

/// Loads a cloud, inferring the format from the extension when `format` is
/// `None`.
pub fn load_cloud(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    let format = format
        .or_else(|| CloudFormat::from_path(path))
        .ok_or_else(|| IoError::format(path, "cannot infer cloud format from extension"))?;
    let text = read_text(path)?;
    match format {
        CloudFormat::Csv => parse_csv_cloud(&text, path),
        CloudFormat::Obj => parse_obj(&text, path),
        CloudFormat::Ply => parse_ply(&text, path),
    }
}

fn numbers(fields: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| IoError::parse(path, line, format!("not a number: `{}`", f.trim())))
        })
        .collect()
}

fn csv_records(text: &str, path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            IoError::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

/// Rows of `width` numbers; a first row that does not parse is taken as a
/// header.
fn numeric_rows(text: &str, path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let records = csv_records(text, path)?;
    let mut rows = Vec::with_capacity(records.len());
    for (k, (line, rec)) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(IoError::parse(
                path,
                *line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let fields: Vec<&str> = rec.iter().map(String::as_str).collect();
        match numbers(&fields, path, *line) {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(IoError::parse(path, 1, "no data rows"));
    }
    Ok(rows)
}

pub fn parse_csv_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let records = csv_records(text, path)?;
    if let Some((_, first)) = records.iter().find(|_| true) {
        if first.len() == 3 {
            return Err(IoError::MissingNormals {
                path: path.to_path_buf(),
                missing: records.len(),
                total: records.len(),
            });
        }
    }
    let rows = numeric_rows(text, path, 6)?;
    let pts = rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    let nrm = rows.iter().map(|r| Vec3::new(r[3], r[4], r[5])).collect();
    Ok(PointCloud::new(pts, nrm)?)
}

fn obj_index(token: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let i: i64 = token
        .parse()
        .map_err(|_| IoError::parse(path, line, format!("bad index `{token}`")))?;
    let idx = if i < 0 { count as i64 + i } else { i - 1 };
    if idx < 0 || idx as usize >= count {
        return Err(IoError::parse(
            path,
            line,
            format!("index {i} out of range"),
        ));
    }
    Ok(idx as usize)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<PointCloud> {
    let mut verts = Vec::new();
    let mut norms = Vec::new();
    let mut paired: Vec<Option<usize>> = Vec::new();
    let mut face_pairs = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("v") => {
                let f: Vec<&str> = tok.collect();
                if f.len() < 3 {
                    return Err(IoError::parse(path, line, "vertex needs three coordinates"));
                }
                let v = numbers(&f[..3], path, line)?;
                verts.push(Vec3::new(v[0], v[1], v[2]));
                paired.push(None);
            }
            Some("vn") => {
                let f: Vec<&str> = tok.collect();
                if f.len() != 3 {
                    return Err(IoError::parse(path, line, "normal needs three components"));
                }
                let v = numbers(&f, path, line)?;
                norms.push(Vec3::new(v[0], v[1], v[2]));
            }
            Some("f") => {
                for corner in tok {
                    let parts: Vec<&str> = corner.split('/').collect();
                    let vi = obj_index(parts[0], verts.len(), path, line)?;
                    if let Some(ni) = parts.get(2).filter(|s| !s.is_empty()) {
                        let ni = obj_index(ni, norms.len(), path, line)?;
                        face_pairs = true;
                        paired[vi].get_or_insert(ni);
                    }
                }
            }
            _ => {}
        }
    }
    if verts.is_empty() {
        return Err(IoError::parse(path, 1, "no vertices"));
    }
    if norms.is_empty() {
        return Err(IoError::MissingNormals {
            path: path.to_path_buf(),
            missing: verts.len(),
            total: verts.len(),
        });
    }
    let normals: Vec<Option<Vec3>> = if face_pairs {
        paired.iter().map(|p| p.map(|i| norms[i])).collect()
    } else if norms.len() == verts.len() {
        norms.iter().copied().map(Some).collect()
    } else {
        return Err(IoError::format(
            path,
            format!(
                "{} vertices but {} normals and no face pairing",
                verts.len(),
                norms.len()
            ),
        ));
    };
    let missing = normals.iter().filter(|n| n.is_none()).count();
    if missing > 0 {
        return Err(IoError::MissingNormals {
            path: path.to_path_buf(),
            missing,
            total: verts.len(),
        });
    }
    Ok(PointCloud::new(
        verts,
        normals.into_iter().flatten().collect(),
    )?)
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(IoError::parse(path, 1, "missing `ply` magic")),
    }
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut elements_before = 0usize;
    let mut header_end = None;
    for (k, raw) in lines.by_ref() {
        let f: Vec<&str> = raw.split_whitespace().collect();
        match f.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(IoError::format(
                    path,
                    format!("only ascii PLY is supported, found `{fmt}`"),
                ));
            }
            ["element", name, n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| IoError::parse(path, k + 1, "bad element count"))?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(n);
                } else if vertex_count.is_none() {
                    elements_before += n;
                }
            }
            ["property", "list", ..] => {}
            ["property", _, name] if in_vertex => props.push((*name).to_owned()),
            ["end_header"] => {
                header_end = Some(k + 1);
                break;
            }
            _ => {}
        }
    }
    let header_end = header_end.ok_or_else(|| IoError::parse(path, 1, "missing end_header"))?;
    let n = vertex_count.ok_or_else(|| IoError::parse(path, header_end, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
        return Err(IoError::parse(
            path,
            header_end,
            "vertex element lacks x, y or z",
        ));
    };
    let (Some(nx), Some(ny), Some(nz)) = (col("nx"), col("ny"), col("nz")) else {
        return Err(IoError::MissingNormals {
            path: path.to_path_buf(),
            missing: n,
            total: n,
        });
    };
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    let body = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .skip(elements_before);
    for (k, raw) in body.take(n) {
        let f: Vec<&str> = raw.split_whitespace().collect();
        if f.len() < props.len() {
            return Err(IoError::parse(path, k + 1, "short vertex record"));
        }
        let v = numbers(&f[..props.len()], path, k + 1)?;
        pts.push(Vec3::new(v[x], v[y], v[z]));
        nrm.push(Vec3::new(v[nx], v[ny], v[nz]));
    }
    if pts.len() != n {
        return Err(IoError::parse(
            path,
            header_end,
            format!("expected {n} vertices, found {}", pts.len()),
        ));
    }
    if n == 0 {
        return Err(IoError::parse(path, header_end, "no vertices"));
    }
    Ok(PointCloud::new(pts, nrm)?)
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_cloud_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let rows = cloud
        .points()
        .iter()
        .zip(cloud.normals())
        .map(|(p, n)| [p.x, p.y, p.z, n.x, n.y, n.z].map(num));
    write_atomic(
        path,
        &csv_bytes(&["px", "py", "pz", "nx", "ny", "nz"], rows),
    )
}

pub fn write_points_csv(path: &Path, points: &[Vec3]) -> Result<()> {
    let rows = points.iter().map(|p| [p.x, p.y, p.z].map(num));
    write_atomic(path, &csv_bytes(&["x", "y", "z"], rows))
}

/// Reads `x,y,z` rows (header optional). Extra columns are ignored.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec3>> {
    let text = read_text(path)?;
    let records = csv_records(&text, path)?;
    let mut out = Vec::with_capacity(records.len());
    for (k, (line, rec)) in records.iter().enumerate() {
        if rec.len() < 3 {
            return Err(IoError::parse(path, *line, "expected at least 3 columns"));
        }
        let f: Vec<&str> = rec[..3].iter().map(String::as_str).collect();
        match numbers(&f, path, *line) {
            Ok(v) => out.push(Vec3::new(v[0], v[1], v[2])),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(IoError::parse(path, 1, "no points"));
    }
    Ok(out)
}

pub fn write_dataset_csv(path: &Path, data: &SafetyDataset) -> Result<()> {
    let rows = data
        .inputs()
        .iter()
        .zip(data.targets())
        .map(|(p, y)| [p.x, p.y, p.z, *y].map(num));
    write_atomic(path, &csv_bytes(&["x", "y", "z", "label"], rows))
}

pub fn read_dataset_csv(path: &Path) -> Result<SafetyDataset> {
    let text = read_text(path)?;
    let rows = numeric_rows(&text, path, 4)?;
    let (mut on, mut ext, mut int) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        let p = Vec3::new(r[0], r[1], r[2]);
        match r[3] {
            0.0 => on.push(p),
            1.0 => ext.push(p),
            -1.0 => int.push(p),
            l => {
                return Err(IoError::format(
                    path,
                    format!("label {l} is not -1, 0 or 1"),
                ))
            }
        }
    }
    Ok(SafetyDataset::from_groups(on, ext, int)?)
}
