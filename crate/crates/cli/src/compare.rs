use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcm_forge_core::objective::{ObjectiveBreakdown, ObjectiveReport};
use serde::Serialize;

use crate::commands::OBJECTIVES_FILE;
use crate::error::CliError;

pub const COMPARISON_FILE: &str = "comparison.json";

pub const COLUMNS: [&str; 9] = [
    "J_ie", "J_ce", "J_cv_d", "J_cv_pcm", "J_m", "J_nom", "J_d", "J_s", "J_tot",
];

fn values(b: &ObjectiveBreakdown) -> [f64; 9] {
    [
        b.j_ie, b.j_ce, b.j_cv_d, b.j_cv_pcm, b.j_m, b.j_nom, b.j_d, b.j_s, b.j_tot,
    ]
}

/// `a / b`, with `0 / 0` read as "no difference".
pub fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

/// Three significant figures, switching to scientific notation outside
/// `[1e-2, 1e4)`.
pub fn format_ratio(r: f64) -> String {
    if !r.is_finite() {
        return format!("{r}");
    }
    let a = r.abs();
    if a == 0.0 {
        "0.00".into()
    } else if (1e-2..1e4).contains(&a) {
        let decimals = (2 - a.log10().floor() as i32).max(0) as usize;
        format!("{r:.decimals$}")
    } else {
        format!("{r:.2e}")
    }
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub label: String,
    pub dir: String,
    pub objectives: ObjectiveReport,
}

#[derive(Debug, Serialize)]
pub struct RatioRow {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub runs: Vec<RunEntry>,
    /// First run over each run, column by column.
    pub ratios: Vec<RatioRow>,
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn load(dirs: &[PathBuf]) -> Result<Comparison, CliError> {
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let path = dir.join(OBJECTIVES_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::MissingInput { path })
            }
            Err(e) => return Err(CliError::io(&path, e)),
        };
        let objectives: ObjectiveReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        runs.push(RunEntry {
            label: label(dir),
            dir: dir.display().to_string(),
            objectives,
        });
    }
    let first = values(&runs[0].objectives.breakdown);
    let ratios = runs
        .iter()
        .map(|r| RatioRow {
            label: format!("{}/{}", runs[0].label, r.label),
            values: first
                .iter()
                .zip(values(&r.objectives.breakdown))
                .map(|(a, b)| ratio(*a, b))
                .collect(),
        })
        .collect();
    Ok(Comparison {
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        runs,
        ratios,
    })
}

impl Comparison {
    pub fn table(&self) -> String {
        let width = self
            .runs
            .iter()
            .map(|r| r.label.len())
            .chain(self.ratios.iter().map(|r| r.label.len()))
            .max()
            .unwrap_or(0)
            .max(3);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "run");
        for c in COLUMNS {
            let head = if c == "J_ce" { "J_ce*" } else { c };
            let _ = write!(out, " {head:>11}");
        }
        out.push('\n');
        for r in &self.runs {
            let _ = write!(out, "{:<width$}", r.label);
            for v in values(&r.objectives.breakdown).map(|v| v + 0.0) {
                let _ = write!(out, " {v:>11.3e}");
            }
            out.push('\n');
        }
        for r in &self.ratios {
            let _ = write!(out, "{:<width$}", r.label);
            for v in &r.values {
                let _ = write!(out, " {:>11}", format_ratio(*v));
            }
            out.push('\n');
        }
        out.push_str(
            "* J_ce is negative (energy credited to the device), so its ratio is benefit-inverted: \
             values under 1 favour the run in the denominator; every other column favours the \
             denominator above 1.\n",
        );
        out
    }
}

pub fn compare(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let comparison = load(dirs)?;
    print!("{}", comparison.table());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(COMPARISON_FILE);
        let text = serde_json::to_string_pretty(&comparison).expect("comparison serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
