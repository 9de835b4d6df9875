//! Scalar-field text format: a short `key value...` header followed by one
//! value per line, x index fastest.
//!
//! ```text
//! format_version 1
//! origin -1.0 -1.0 -1.0
//! spacing 0.1 0.1 0.1
//! dims 21 21 21
//! values
//! 0.25
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use gcbf_core::eval::ScalarField;
use gcbf_core::Vec3;

use crate::error::{IoError, Result};
use crate::fsutil::{read_text, write_atomic};

pub const FORMAT_VERSION: u32 = 1;

pub fn field_to_string(f: &ScalarField) -> String {
    let mut s = String::with_capacity(f.values.len() * 24 + 128);
    let _ = writeln!(s, "format_version {FORMAT_VERSION}");
    let _ = writeln!(
        s,
        "origin {:?} {:?} {:?}",
        f.origin.x, f.origin.y, f.origin.z
    );
    let _ = writeln!(
        s,
        "spacing {:?} {:?} {:?}",
        f.spacing.x, f.spacing.y, f.spacing.z
    );
    let _ = writeln!(s, "dims {} {} {}", f.dims[0], f.dims[1], f.dims[2]);
    s.push_str("values\n");
    for v in &f.values {
        let _ = writeln!(s, "{v:?}");
    }
    s
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, field_to_string(f).as_bytes())
}

fn triple<T: std::str::FromStr>(rest: &[&str], path: &Path, line: usize) -> Result<[T; 3]> {
    if rest.len() != 3 {
        return Err(IoError::parse(path, line, "expected three values"));
    }
    let p = |s: &str| {
        s.parse::<T>()
            .map_err(|_| IoError::parse(path, line, format!("bad value `{s}`")))
    };
    Ok([p(rest[0])?, p(rest[1])?, p(rest[2])?])
}

pub fn parse_field(text: &str, path: &Path) -> Result<ScalarField> {
    let mut lines = text.lines().enumerate();
    let (mut version, mut origin, mut spacing, mut dims) = (None, None, None, None);
    for (k, raw) in lines.by_ref() {
        let line = k + 1;
        let f: Vec<&str> = raw.split_whitespace().collect();
        match f.split_first() {
            None => continue,
            Some((&"values", _)) => break,
            Some((&"format_version", [v])) => {
                version = Some(
                    v.parse::<u32>()
                        .map_err(|_| IoError::parse(path, line, "bad format_version"))?,
                )
            }
            Some((&"origin", rest)) => origin = Some(triple::<f64>(rest, path, line)?),
            Some((&"spacing", rest)) => spacing = Some(triple::<f64>(rest, path, line)?),
            Some((&"dims", rest)) => dims = Some(triple::<usize>(rest, path, line)?),
            Some((key, _)) => {
                return Err(IoError::parse(
                    path,
                    line,
                    format!("unknown header key `{key}`"),
                ))
            }
        }
    }
    match version {
        Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(IoError::format(
                path,
                format!("unsupported format_version {v}"),
            ))
        }
        None => return Err(IoError::parse(path, 1, "missing format_version")),
    }
    let (Some(o), Some(s), Some(d)) = (origin, spacing, dims) else {
        return Err(IoError::parse(
            path,
            1,
            "header needs origin, spacing and dims",
        ));
    };
    let mut values = Vec::with_capacity(d[0] * d[1] * d[2]);
    for (k, raw) in lines {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| IoError::parse(path, k + 1, format!("bad value `{t}`")))?,
        );
    }
    Ok(ScalarField::new(Vec3::from(o), Vec3::from(s), d, values)?)
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    parse_field(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        let f = ScalarField::from_fn(
            Vec3::new(-1.0, 0.5, 0.0),
            Vec3::new(0.1, 0.3, 1.0 / 3.0),
            [3, 4, 2],
            |p| p.x * p.y - p.z.exp(),
        )
        .unwrap();
        let back = parse_field(&field_to_string(&f), Path::new("f")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn short_value_block_is_rejected() {
        let text = "format_version 1\norigin 0 0 0\nspacing 1 1 1\ndims 2 2 2\nvalues\n1\n2\n";
        assert!(matches!(
            parse_field(text, Path::new("f")),
            Err(IoError::Core(_))
        ));
    }
}
