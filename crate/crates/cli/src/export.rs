//! Result files: residual traces as CSV, the equilibrium as JSON, and two
//! SVG plots.

use std::fs;
use std::path::{Path, PathBuf};

use rgne::solver::Mode;

use crate::experiment::{RunRecord, RunReport};
use crate::svg::{self, Plot, Reference, Series};

pub const RESIDUALS: &str = "residuals.csv";
pub const EQUILIBRIUM: &str = "equilibrium.json";
pub const CONVERGENCE: &str = "convergence.svg";
pub const TRAJECTORIES: &str = "trajectories.svg";

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub residuals: PathBuf,
    pub equilibrium: PathBuf,
    pub convergence: PathBuf,
    pub trajectories: PathBuf,
}

impl OutputFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            residuals: dir.join(RESIDUALS),
            equilibrium: dir.join(EQUILIBRIUM),
            convergence: dir.join(CONVERGENCE),
            trajectories: dir.join(TRAJECTORIES),
        }
    }
}

/// Writes all four files into `dir`. On failure every file written so far is
/// removed again.
pub fn export_results(report: &RunReport, dir: &Path) -> Result<OutputFiles, ExportError> {
    let files = OutputFiles::in_dir(dir);
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_all(report, dir, &files, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result.map(|()| files)
}

fn write_all(
    report: &RunReport,
    dir: &Path,
    files: &OutputFiles,
    written: &mut Vec<PathBuf>,
) -> Result<(), ExportError> {
    fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let contents = [
        (&files.residuals, residuals_csv(report, &files.residuals)?),
        (&files.equilibrium, equilibrium_json(report, &files.equilibrium)?),
        (&files.convergence, convergence_plot(report).render()),
        (&files.trajectories, trajectory_plot(report).render()),
    ];
    for (path, text) in contents {
        // registered first so a partially written file is cleaned up as well
        written.push(path.clone());
        fs::write(path, text).map_err(|source| ExportError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

pub fn residuals_csv(report: &RunReport, path: &Path) -> Result<String, ExportError> {
    let encode = |e: csv::Error| ExportError::Encode {
        path: path.to_owned(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "mode", "topology", "residual", "lyapunov", "wall_ms"])
        .map_err(encode)?;
    for run in &report.runs {
        for (k, r) in run.residuals.iter().enumerate() {
            let lyapunov = run.lyapunov.get(k).map_or(String::new(), |h| h.to_string());
            let wall = run.wall_ms.get(k).copied().unwrap_or(0.0);
            w.write_record([
                (k + 1).to_string(),
                run.mode.name().to_owned(),
                run.topology.clone(),
                r.to_string(),
                lyapunov,
                wall.to_string(),
            ])
            .map_err(encode)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Encode {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn equilibrium_json(report: &RunReport, path: &Path) -> Result<String, ExportError> {
    serde_json::to_string_pretty(report)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| ExportError::Encode {
            path: path.to_owned(),
            message: e.to_string(),
        })
}

pub fn convergence_plot(report: &RunReport) -> Plot {
    let series = report
        .runs
        .iter()
        .enumerate()
        .map(|(k, run)| Series {
            name: format!("{} / {}", run.mode.name(), run.topology),
            color: svg::color(k).to_owned(),
            points: svg::thin(
                run.residuals
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| **r > 0.0)
                    .map(|(i, r)| ((i + 1) as f64, r.log10()))
                    .collect(),
            ),
        })
        .collect();
    Plot {
        title: "Natural residual".into(),
        x_label: "iteration".into(),
        y_label: "log10 residual".into(),
        series,
        references: Vec::new(),
    }
}

/// The run shown in the trajectory plot: ripfbf on the configured graph if
/// present, otherwise the first run.
pub fn trajectory_run(report: &RunReport) -> Option<&RunRecord> {
    let graph = report.config.graph.topology.name();
    report
        .runs
        .iter()
        .find(|r| r.topology == graph && r.mode == Mode::Ripfbf)
        .or_else(|| report.runs.iter().find(|r| r.topology == graph))
        .or_else(|| report.runs.first())
}

pub fn trajectory_plot(report: &RunReport) -> Plot {
    let mut plot = Plot {
        title: "Strategies per iteration".into(),
        x_label: "iteration".into(),
        y_label: "x".into(),
        ..Plot::default()
    };
    let Some(run) = trajectory_run(report) else {
        return plot;
    };
    plot.title = format!("Strategies per iteration ({} / {})", run.mode.name(), run.topology);
    let dims: Vec<usize> = report.config.game.agents.iter().map(|a| a.dim).collect();
    let central = report.centralized_for(&run.topology);
    let mut offset = 0;
    for (i, &d) in dims.iter().enumerate() {
        for c in 0..d {
            let col = offset + c;
            let color = svg::color(i).to_owned();
            plot.series.push(Series {
                name: format!("agent {} x{}", i + 1, c + 1),
                color: color.clone(),
                points: svg::thin(
                    run.x_trace
                        .iter()
                        .enumerate()
                        .map(|(k, x)| ((k + 1) as f64, x[col]))
                        .collect(),
                ),
            });
            if let Some(cr) = central {
                plot.references.push(Reference { y: cr.x[col], color });
            }
        }
        offset += d;
    }
    plot
}
