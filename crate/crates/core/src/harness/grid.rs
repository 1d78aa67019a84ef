use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::report::{aggregate, collect_reports, RunReport, TableRow};
use super::train::run_experiment;
use super::{ExperimentConfig, HarnessError};

/// How each grid cell is run.
#[derive(Clone, Debug)]
pub enum Executor {
    /// In the calling process.
    InProcess,
    /// One child process per cell: `<exe> train --config <cell.toml>`.
    Subprocess { exe: PathBuf },
}

fn run_cell(cfg: &ExperimentConfig, config_path: &Path, executor: &Executor) -> Result<(), HarnessError> {
    match executor {
        Executor::InProcess => run_experiment(cfg, None).map(|_| ()),
        Executor::Subprocess { exe } => {
            let out = Command::new(exe)
                .arg("train")
                .arg("--config")
                .arg(config_path)
                .output()
                .map_err(|e| HarnessError::io(exe, e))?;
            if out.status.success() {
                Ok(())
            } else {
                Err(HarnessError::Run {
                    name: cfg.name.clone(),
                    msg: String::from_utf8_lossy(&out.stderr).trim().to_string(),
                })
            }
        }
    }
}

/// Runs every config in its own directory under `out_dir` and aggregates
/// the reports found there. A failing cell is recorded and the grid goes
/// on.
pub fn run_experiment_grid(
    configs: &[ExperimentConfig],
    out_dir: &Path,
    executor: &Executor,
) -> Result<Vec<TableRow>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    for (i, cfg) in configs.iter().enumerate() {
        let dir = out_dir.join(format!("run_{i:03}"));
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let mut cell = cfg.clone();
        cell.output_dir = dir.clone();
        let path = dir.join("config.toml");
        fs::write(&path, cell.to_toml()?).map_err(|e| HarnessError::io(&path, e))?;
        if let Err(e) = run_cell(&cell, &path, executor) {
            RunReport::failed(&cell, e.to_string()).write(&dir.join("report.json"))?;
        }
    }
    Ok(aggregate(&collect_reports(out_dir)?))
}
