//! Executes an [`ExperimentConfig`] and writes its tables.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use hypercircle::adapt::{afem_run_with_mesh, uniform_energy_study, uniform_goal_study, ConvergenceHistory, Driver, FluxMode};
use hypercircle::cases::{load_or_compute_reference, ReferenceValues, TestCase};
use hypercircle::mesh::Mesh;

use crate::config::{ConfigError, ExperimentConfig, Refinement};
use crate::table::{self, GoalTableRow, TableError};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(String),
    Io(std::io::Error),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<hypercircle::Error> for RunError {
    fn from(e: hypercircle::Error) -> Self {
        match e {
            hypercircle::Error::Cache(io) => RunError::Io(io),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<TableError> for RunError {
    fn from(e: TableError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Active cells as axis-aligned boxes.
pub fn mesh_csv(mesh: &Mesh) -> String {
    let mut out = String::from("cell,level,x_min,y_min,x_max,y_max\n");
    for &c in &mesh.active {
        let cell = &mesh.cells[c];
        let lo = mesh.vertices[cell.vertices[0]];
        let hi = mesh.vertices[cell.vertices[3]];
        out.push_str(&format!("{c},{},{:e},{:e},{:e},{:e}\n", cell.level, lo[0], lo[1], hi[0], hi[1]));
    }
    out
}

fn reference(cfg: &ExperimentConfig, case: &TestCase, out: &Path) -> Result<Option<ReferenceValues>, RunError> {
    if case.exact.is_some() || cfg.steps == 0 {
        return Ok(None);
    }
    let dir = cfg.reference.cache.clone().unwrap_or_else(|| out.join("reference-cache"));
    log::info!("loading or computing the {} reference in {}", case.name, dir.display());
    Ok(Some(load_or_compute_reference(case, &case.reference, &dir)?))
}

/// Runs the experiment, writing into `out` (created if needed). Returns the written files.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, RunError> {
    let case = cfg.test_case()?;
    std::fs::create_dir_all(out)?;
    let refv = reference(cfg, &case, out)?;
    let refv = refv.as_ref();
    let p = cfg.degree;
    // Tables are formatted completely before anything is written, so a non-finite value
    // leaves no partial output behind.
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    match (cfg.refinement, cfg.is_goal()) {
        (Refinement::Uniform, false) => {
            let rows = uniform_energy_study(&case, p, cfg.steps, cfg.flux, refv)?;
            files.push((out.join("energy.csv"), table::format_energy(&rows)?));
        }
        (Refinement::Uniform, true) => {
            let rows = uniform_goal_study(&case, p, cfg.steps, refv)?;
            let rows: Vec<GoalTableRow> = rows.iter().map(|r| GoalTableRow::from_row(r, &cfg.estimators)).collect();
            files.push((out.join("goal.csv"), table::format_goal(&cfg.estimators, &rows)?));
        }
        (Refinement::Adaptive, false) => {
            let modes: Vec<FluxMode> = [FluxMode::Local, FluxMode::GlobalMixed]
                .into_iter()
                .filter(|&m| cfg.flux == FluxMode::Both || cfg.flux == m)
                .collect();
            for mode in modes {
                let name = if mode == FluxMode::Local { "local" } else { "global_mixed" };
                let (h, mesh) = afem_run_with_mesh(&case, p, Driver::Energy(mode), cfg.steps, cfg.fraction, refv)?;
                files.push((out.join(format!("history_energy_{name}.csv")), table::format_history(&h)?));
                if cfg.export_mesh && cfg.steps > 0 {
                    files.push((out.join(format!("mesh_energy_{name}.csv")), mesh_csv(&mesh)));
                }
            }
        }
        (Refinement::Adaptive, true) => {
            let mut runs: Vec<(hypercircle::estimate::EstimatorKind, ConvergenceHistory)> = Vec::new();
            for &kind in &cfg.estimators {
                let (h, mesh) = afem_run_with_mesh(&case, p, Driver::Goal(kind), cfg.steps, cfg.fraction, refv)?;
                files.push((out.join(format!("history_{}.csv", kind.name())), table::format_history(&h)?));
                if cfg.export_mesh && cfg.steps > 0 {
                    files.push((out.join(format!("mesh_{}.csv", kind.name())), mesh_csv(&mesh)));
                }
                runs.push((kind, h));
            }
            let refs: Vec<_> = runs.iter().map(|(k, h)| (*k, h)).collect();
            files.push((out.join("performance.csv"), table::format_performance(&refs)?));
        }
    }
    for (path, text) in &files {
        write_atomic(path, text)?;
        log::info!("wrote {}", path.display());
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let nan = RunError::from(TableError::NonFinite { row: 0, column: "eta".into() });
        assert_eq!(nan.exit_code(), 3);
        assert_eq!(RunError::from(hypercircle::Error::ZeroDenominator("test")).exit_code(), 3);
        assert_eq!(RunError::Config(ConfigError("x".into())).exit_code(), 2);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_atomic(&path, "a\n").unwrap();
        write_atomic(&path, "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
