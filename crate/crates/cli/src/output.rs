//! Artifact formatting and atomic writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// File name plus full contents, produced before anything touches the disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// `#`-prefixed header carrying the command and the resolved spec.
pub fn header(command: &str, spec: &ExperimentSpec) -> String {
    let mut out = format!("# jumpsense {command}\n# seed = {}\n", spec.seed);
    for line in recorded(spec).to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

pub fn csv(command: &str, spec: &ExperimentSpec, columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header(command, spec);
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// The spec as recorded in artifacts. The thread count never changes results, so it is
/// blanked to keep outputs identical across machines.
fn recorded(spec: &ExperimentSpec) -> ExperimentSpec {
    ExperimentSpec { threads: 0, ..spec.clone() }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    spec: &'a ExperimentSpec,
    result: &'a T,
}

pub fn json<T: Serialize>(command: &str, spec: &ExperimentSpec, result: &T) -> Result<String, CliError> {
    let spec = &recorded(spec);
    let env = Envelope { schema_version: SCHEMA_VERSION, command, spec, result };
    serde_json::to_string_pretty(&env).map(|s| s + "\n").map_err(|e| CliError::Numerical(format!("json: {e}")))
}

/// Writes every artifact through a temporary file and a rename.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = vec![];
    for a in artifacts {
        let path = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        fs::write(&tmp, &a.contents).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// Minimal line plot: one polyline per series over shared axes.
pub fn svg_plot(title: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 48.0;
    let colors = ["#1f5fbf", "#c0392b", "#2e8b57", "#8e44ad", "#d35400"];
    let finite = |v: &&f64| v.is_finite();
    let (x0, x1) = x.iter().filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let (y0, y1) = series
        .iter()
        .flat_map(|s| s.1.iter().filter(finite))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let sx = |v: f64| M + (v - x0) / (x1 - x0).max(1e-300) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - y0) / (y1 - y0).max(1e-300) * (H - 2.0 * M);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{M}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        out,
        "<text x=\"{M}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">x: {x0:.3} to {x1:.3}, y: {y0:.3} to {y1:.3}</text>",
        H - 16.0
    );
    for (k, (label, ys)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
            .collect();
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{label}</text>",
            W - M - 150.0,
            M + 16.0 * (k + 1) as f64
        );
    }
    out.push_str("</svg>\n");
    out
}
