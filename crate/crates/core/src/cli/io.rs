//! CSV fields and tables, JSON reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::DecayAudit;
use crate::fields::{differentiate, gauss_curvature, FieldError, ScalarField};
use crate::grid::AnnulusGrid;
use crate::radial::RadialProfile;

/// Version of the JSON report envelope and of the CSV column layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("report schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Optional columns appended after `r,theta,x,y,u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldColumns {
    /// `ux,uy,uxx,uxy,uyy`.
    #[serde(default)]
    pub derivatives: bool,
    /// `K`, the discrete Gauss curvature (zero on boundary rows).
    #[serde(default)]
    pub curvature: bool,
}

pub fn field_header(cols: FieldColumns) -> Vec<&'static str> {
    let mut h = vec!["r", "theta", "x", "y", "u"];
    if cols.derivatives {
        h.extend(["ux", "uy", "uxx", "uxy", "uyy"]);
    }
    if cols.curvature {
        h.push("K");
    }
    h
}

/// One row per node in storage order, with a header row.
pub fn write_field<W: Write>(out: W, u: &ScalarField, cols: FieldColumns) -> Result<(), IoError> {
    let g = u.grid();
    let jets = cols.derivatives.then(|| differentiate(u));
    let curv = cols.curvature.then(|| gauss_curvature(u));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(field_header(cols))?;
    let mut row: Vec<String> = Vec::with_capacity(11);
    for k in 0..g.len() {
        row.clear();
        let p = g.point(k);
        let (_, j) = g.row_col(k);
        for v in [g.radius(k), g.theta(j), p[0], p[1], u.values()[k]] {
            row.push(v.to_string());
        }
        if let Some(d) = &jets {
            let jet = &d.jets[k];
            for v in [jet.grad[0], jet.grad[1], jet.hess.xx, jet.hess.xy, jet.hess.yy] {
                row.push(v.to_string());
            }
        }
        if let Some(c) = &curv {
            row.push(c.values()[k].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_file(path: &Path, u: &ScalarField, cols: FieldColumns) -> Result<(), IoError> {
    write_field(create(path)?, u, cols)
}

/// Raw `r,theta,x,y,u` columns of a field file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldTable {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl FieldTable {
    pub fn outer_radius(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }
}

pub fn read_field_table<R: Read>(input: R) -> Result<FieldTable, IoError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| IoError::Format {
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let idx = [col("r")?, col("theta")?, col("x")?, col("y")?, col("u")?];
    let mut t = FieldTable::default();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let mut vals = [0.0; 5];
        for (slot, &c) in vals.iter_mut().zip(&idx) {
            let s = rec.get(c).ok_or_else(|| IoError::Format {
                line,
                msg: "short row".into(),
            })?;
            *slot = s.trim().parse().map_err(|_| IoError::Format {
                line,
                msg: format!("not a number: `{s}`"),
            })?;
        }
        t.r.push(vals[0]);
        t.theta.push(vals[1]);
        t.x.push(vals[2]);
        t.y.push(vals[3]);
        t.u.push(vals[4]);
    }
    Ok(t)
}

/// Reads a field written for `grid`; node positions must agree with the grid.
pub fn read_field<R: Read>(input: R, grid: Arc<AnnulusGrid>) -> Result<ScalarField, IoError> {
    let t = read_field_table(input)?;
    if t.u.len() != grid.len() {
        return Err(FieldError::Length {
            expected: grid.len(),
            got: t.u.len(),
        }
        .into());
    }
    for k in 0..grid.len() {
        let (_, j) = grid.row_col(k);
        let r = grid.radius(k);
        if (t.r[k] - r).abs() > 1e-12 * r.max(1.0) || (t.theta[k] - grid.theta(j)).abs() > 1e-12 {
            return Err(FieldError::GridMismatch.into());
        }
    }
    Ok(ScalarField::new(grid, t.u)?)
}

pub fn read_field_file(path: &Path, grid: Arc<AnnulusGrid>) -> Result<ScalarField, IoError> {
    read_field(open(path)?, grid)
}

/// `r,theta,x,y,u` rows for a subset of the nodes of `grid`.
pub fn write_window(path: &Path, grid: &AnnulusGrid, nodes: &[usize], values: &[f64]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(field_header(FieldColumns::default()))?;
    for (&k, v) in nodes.iter().zip(values) {
        let p = grid.point(k);
        let (_, j) = grid.row_col(k);
        w.write_record([grid.radius(k), grid.theta(j), p[0], p[1], *v].map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `r,u,p,mass` per radial node.
pub fn write_profile<W: Write>(out: W, profile: &RadialProfile) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "u", "p", "mass"])?;
    for (i, r) in profile.grid.nodes().iter().enumerate() {
        w.write_record([r, &profile.u[i], &profile.p[i], &profile.mass[i]].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `estimate,R,value,scaled,slope,target,slack,pass`; one row per audit and radius.
pub fn write_decay_table<W: Write>(out: W, audits: &[DecayAudit]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimate", "R", "value", "scaled", "slope", "target", "slack", "pass"])?;
    for a in audits {
        let name = serde_json::to_value(a.estimate)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let slope = a.fit.map_or_else(String::new, |f| f.slope.to_string());
        for (i, r) in a.radii.iter().enumerate() {
            w.write_record([
                name.clone(),
                r.to_string(),
                a.values[i].to_string(),
                a.scaled[i].to_string(),
                slope.clone(),
                a.target.to_string(),
                a.slack.to_string(),
                a.passes.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// JSON envelope around every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub kind: String,
    pub report: T,
}

pub fn write_report<T: Serialize>(path: &Path, kind: &str, report: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    let env = Report {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        report,
    };
    serde_json::to_writer_pretty(&mut w, &env)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<Report<T>, IoError> {
    let env: Report<T> = serde_json::from_reader(std::io::BufReader::new(open(path)?))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(IoError::Schema {
            found: env.schema_version,
        });
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{InnerBoundary, Stretching};

    fn field() -> ScalarField {
        let g = Arc::new(
            AnnulusGrid::new(
                InnerBoundary::Cosine {
                    radius: 1.0,
                    amplitude: 0.1,
                    mode: 3,
                },
                6.0,
                7,
                12,
                Stretching::Geometric,
            )
            .unwrap(),
        );
        ScalarField::from_fn(g, |p| (1.0 + p[0] * p[0] + 0.3 * p[1] * p[1]).sqrt() / 3.0).unwrap()
    }

    #[test]
    fn field_round_trip_is_exact() {
        let u = field();
        let mut buf = Vec::new();
        write_field(&mut buf, &u, FieldColumns { derivatives: true, curvature: true }).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("r,theta,x,y,u,ux,uy,uxx,uxy,uyy,K\n"));
        assert_eq!(text.lines().count(), u.grid().len() + 1);
        let back = read_field(buf.as_slice(), u.grid().clone()).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn rejects_wrong_grid_and_bad_numbers() {
        let u = field();
        let mut buf = Vec::new();
        write_field(&mut buf, &u, FieldColumns::default()).unwrap();
        let other = Arc::new(u.grid().refine());
        assert!(read_field(buf.as_slice(), other).is_err());
        let bad = "r,theta,x,y,u\n1,0,1,0,abc\n";
        match read_field_table(bad.as_bytes()) {
            Err(IoError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_field_table("r,x\n1,2\n".as_bytes()),
            Err(IoError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn report_envelope_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&path, "test", &vec![1.5, 2.0]).unwrap();
        let back: Report<Vec<f64>> = read_report(&path).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.report, vec![1.5, 2.0]);
        std::fs::write(&path, r#"{"schema_version": 99, "kind": "x", "report": []}"#).unwrap();
        assert!(matches!(read_report::<Vec<f64>>(&path), Err(IoError::Schema { found: 99 })));
    }
}
