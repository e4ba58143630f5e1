//! File formats: profile and grid CSV, alpha traces, convergence logs, and
//! byte-deterministic JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use holostrip::decay::AlphaTrace;
use holostrip::geometry::SurfaceProfile;
use holostrip::grid::FieldGrid;
use holostrip::solver::LogEntry;
use nalgebra::Vector4;
use serde_json::Value;

use crate::CliError;

/// Fixed float format: 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn parse_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = reader(path)?;
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(bad(format!(
            "expected header {}, found {}",
            header.join(","),
            found.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(format!("row {}: `{f}` is not a number", k + 1)))
            })
            .collect::<Result<_, _>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("row {}: non-finite value", k + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `theta,a,b` on a uniform grid over `[0, 1)`.
pub fn read_profile_csv(path: &Path) -> Result<SurfaceProfile, CliError> {
    let rows = parse_rows(path, &["theta", "a", "b"])?;
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    SurfaceProfile::from_samples(&col(0), &col(1), &col(2))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_profile_csv(path: &Path, profile: &SurfaceProfile, n: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "a", "b"])?;
    for k in 0..n {
        let t = k as f64 / n as f64;
        w.write_record([fmt_f64(t), fmt_f64(profile.a(t)), fmt_f64(profile.b(t))])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `s,t,tau,theta,x,y`, row-major in `s` then `t`.
pub fn read_grid_csv(path: &Path) -> Result<FieldGrid, CliError> {
    let rows = parse_rows(path, &["s", "t", "tau", "theta", "x", "y"])?;
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    if rows.is_empty() {
        return Err(bad("no rows"));
    }
    let n_t = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
    if n_t < 3 || rows.len() % n_t != 0 {
        return Err(bad("rows do not form a rectangular grid"));
    }
    let n_s = rows.len() / n_t;
    let (s0, s1) = (rows[0][0], rows[rows.len() - 1][0]);
    let (t0, t1) = (rows[0][1], rows[n_t - 1][1]);
    let values: Vec<Vector4<f64>> = rows
        .iter()
        .map(|r| Vector4::new(r[2], r[3], r[4], r[5]))
        .collect();
    let grid = FieldGrid::with_t_range((s0, s1), (t0, t1), n_s, n_t, values)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let tol = 1e-9 * (1.0 + s0.abs().max(s1.abs()));
    for (k, r) in rows.iter().enumerate() {
        let (i, j) = (k / n_t, k % n_t);
        if (r[0] - grid.s(i)).abs() > tol || (r[1] - grid.t(j)).abs() > tol {
            return Err(bad(&format!("row {} is off the uniform grid", k + 1)));
        }
    }
    Ok(grid)
}

pub fn write_grid_csv(path: &Path, grid: &FieldGrid) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "t", "tau", "theta", "x", "y"])?;
    for i in 0..grid.n_s {
        for j in 0..grid.n_t {
            let v = grid.at(i, j);
            w.write_record([grid.s(i), grid.t(j), v[0], v[1], v[2], v[3]].map(fmt_f64))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_alpha_csv(path: &Path, trace: &AlphaTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "alpha_logderiv", "alpha_formula"])?;
    for k in 0..trace.s.len() {
        w.write_record([trace.s[k], trace.alpha_logderiv[k], trace.alpha_formula[k]].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_csv(path: &Path, log: &[LogEntry]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "residual", "step_norm"])?;
    for e in log {
        w.write_record([
            e.iter.to_string(),
            fmt_f64(e.residual),
            fmt_f64(e.step_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with sorted keys and fixed float formatting.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_json(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_json(out: &mut String, value: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) => write!(out, "{i}").unwrap(),
            (_, Some(u), _) => write!(out, "{u}").unwrap(),
            (_, _, Some(f)) => out.push_str(&fmt_f64(f)),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_json(out, item, depth + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(key).expect("strings serialize"));
                out.push_str(": ");
                write_json(out, &map[*key], depth + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                flatten(&key(k), &map[k], out);
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), item, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => {
            let mut s = String::new();
            write_json(&mut s, other, 0);
            out.push((prefix.to_string(), s));
        }
    }
}

/// Writes a report as JSON, or as `key,value` rows with dotted keys.
pub fn write_report(report: &Value, format: Format, path: &Path) -> Result<(), CliError> {
    match format {
        Format::Json => fs::write(path, to_json_string(report))?,
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
