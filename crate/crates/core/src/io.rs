//! CSV and JSON helpers. Floats are written in shortest round-trip form.

use crate::error::{Error, Result};
use crate::sampler::ParticlePath;
use serde::Serialize;
use std::path::Path;

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn coord_header(dim: usize) -> impl Iterator<Item = String> {
    (0..dim).map(|i| format!("x{i}"))
}

/// Writes points with an `x0..x{d-1}` header.
pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let dim = points.first().map(Vec::len).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(coord_header(dim))?;
    for p in points {
        w.write_record(p.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a point set. With an `x0, x1, ...` header only those columns are
/// used and rows whose `status` column is `diverged` are skipped; otherwise
/// every column must be numeric and a non-numeric first row is treated as a
/// header.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = r.records();
    let first = match rows.next() {
        Some(rec) => rec?,
        None => return Ok(Vec::new()),
    };
    let numeric = |rec: &csv::StringRecord| rec.iter().all(|f| f.trim().parse::<f64>().is_ok());
    let mut columns: Vec<usize> = (0..first.len()).collect();
    let mut status = None;
    let mut out = Vec::new();
    if numeric(&first) {
        out.push(parse_row(&first, &columns)?);
    } else {
        let coords: Vec<usize> = first
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                h.strip_prefix('x').is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            })
            .map(|(i, _)| i)
            .collect();
        if !coords.is_empty() {
            columns = coords;
        }
        status = first.iter().position(|h| h == "status");
    }
    for rec in rows {
        let rec = rec?;
        if status.is_some_and(|i| rec.get(i) == Some("diverged")) {
            continue;
        }
        out.push(parse_row(&rec, &columns)?);
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, columns: &[usize]) -> Result<Vec<f64>> {
    columns
        .iter()
        .map(|&i| {
            let field = rec.get(i).unwrap_or("");
            field.trim().parse::<f64>().map_err(|_| Error::Config(format!("non-numeric CSV field {field:?}")))
        })
        .collect()
}

/// `particle_id, level, step, x0..` for every recorded point.
pub fn write_paths_csv(path: &Path, paths: &[ParticlePath]) -> Result<()> {
    let dim = paths.first().map(|p| p.final_position.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["particle_id", "level", "step"].into_iter().map(String::from).chain(coord_header(dim)))?;
    for p in paths {
        for pt in &p.points {
            w.write_record(
                [p.id.to_string(), pt.level.to_string(), pt.step.to_string()]
                    .into_iter()
                    .chain(pt.position.iter().map(|v| fmt_f64(*v))),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `particle_id, status, x0..` with one row per particle.
pub fn write_endpoints_csv(path: &Path, paths: &[ParticlePath]) -> Result<()> {
    let dim = paths.first().map(|p| p.final_position.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["particle_id", "status"].into_iter().map(String::from).chain(coord_header(dim)))?;
    for p in paths {
        w.write_record(
            [p.id.to_string(), p.status.as_str().to_string()]
                .into_iter()
                .chain(p.final_position.iter().map(|v| fmt_f64(*v))),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One value per line under a single header.
pub fn write_column_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([header])?;
    for v in values {
        w.write_record([fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(2.0), "2.0");
    }

    #[test]
    fn points_round_trip_and_header_detection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        let pts = vec![vec![0.1, -2.0], vec![1.0 / 3.0, 4e-8]];
        write_points_csv(&p, &pts).unwrap();
        assert_eq!(read_points_csv(&p).unwrap(), pts);
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        assert_eq!(read_points_csv(&p).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        std::fs::write(&p, "particle_id,status,x0,x1\n0,converged,1,2\n1,diverged,1e9,0\n").unwrap();
        assert_eq!(read_points_csv(&p).unwrap(), vec![vec![1.0, 2.0]]);
        std::fs::write(&p, "a,b\n1,zz\n").unwrap();
        assert!(read_points_csv(&p).is_err());
    }
}
