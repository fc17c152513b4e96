//! The `run` command: time integration with energy CSV and VTK snapshots.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chns_core::assembly::{interpolate, interpolate_vector};
use chns_core::mesh::build_rect_mesh;
use chns_core::scheme::{BodyForce, Forcing, SchemeError, SourceLoads};
use chns_core::verification::ExactSolution;
use chns_core::{EnergyReport, Field, Scheme, State};
use thiserror::Error;

use crate::config::{InitialCondition, PhiExpression, Preset, RunConfig};
use crate::vtk::write_vtk;

pub const CSV_HEADER: &str = "step,time,E_modified,E_theorem,dissipation_bound,mass,rho,sav_ratio";
pub const CSV_NAME: &str = "energy.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step {step}: {source}")]
    Scheme { step: usize, source: SchemeError },
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub csv: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub last: EnergyReport,
}

/// `φ⁰` and `u⁰` of a configuration at the nodes of the scheme's spaces.
pub fn initial_fields(cfg: &RunConfig, scheme: &Scheme) -> Result<(Field, Field), RunError> {
    let zero_u = Field::zeros(scheme.spaces.vector.clone());
    let phi = match &cfg.initial {
        InitialCondition::Preset(Preset::Manufactured) => {
            let ex = ExactSolution::new(&cfg.params);
            let phi = interpolate(&scheme.spaces.scalar, |x| ex.phi(0.0, x));
            let u = interpolate_vector(&scheme.spaces.vector, |x| ex.u(0.0, x));
            return Ok((phi, u));
        }
        InitialCondition::Preset(Preset::Ellipse) => interpolate(&scheme.spaces.scalar, |[x, y]| {
            (x * x / 0.01 + y * y / 0.0225 - 1.0).tanh()
        }),
        InitialCondition::Preset(Preset::Square) => interpolate(&scheme.spaces.scalar, |[x, y]| {
            if (0.25..=0.75).contains(&x) && (0.25..=0.75).contains(&y) {
                1.0
            } else {
                -1.0
            }
        }),
        InitialCondition::Expression(text) => {
            let expr = PhiExpression::compile(text).map_err(RunError::Config)?;
            let coords = &scheme.spaces.scalar.dof_coords;
            let values = coords
                .iter()
                .map(|x| expr.eval(*x))
                .collect::<Result<Vec<f64>, String>>()
                .map_err(RunError::Config)?;
            Field::new(scheme.spaces.scalar.clone(), values).map_err(|e| RunError::Config(e.to_string()))?
        }
    };
    Ok((phi, zero_u))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn csv_row(step: usize, t: f64, r: &EnergyReport) -> String {
    format!(
        "{step},{t:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        r.e_modified, r.e_theorem, r.dissipation_bound, r.mass, r.rho, r.sav_ratio
    )
}

/// Step at which each snapshot time is written.
pub fn snapshot_steps(cfg: &RunConfig) -> Vec<usize> {
    let n = cfg.n_steps();
    cfg.output
        .snapshots
        .iter()
        .map(|s| ((s / cfg.params.tau).round() as usize).min(n))
        .collect()
}

struct CsvSink {
    path: PathBuf,
    tmp: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: PathBuf) -> Result<Self, RunError> {
        let tmp = temp_path(&path);
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CSV_HEADER}").map_err(io_err(&tmp))?;
        Ok(CsvSink { path, tmp, out })
    }

    fn row(&mut self, line: &str) -> Result<(), RunError> {
        writeln!(self.out, "{line}").map_err(io_err(&self.tmp))
    }

    fn finish(mut self) -> Result<PathBuf, RunError> {
        self.out.flush().map_err(io_err(&self.tmp))?;
        drop(self.out);
        fs::rename(&self.tmp, &self.path).map_err(io_err(&self.path))?;
        Ok(self.path)
    }
}

/// Runs a configuration to completion.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    run_with(cfg, |_, _, _| {})
}

/// [`cmd_run`] calling `observe(scheme, state, report)` on the initial state
/// and after every step.
pub fn run_with(
    cfg: &RunConfig,
    mut observe: impl FnMut(&Scheme, &State, &EnergyReport),
) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mesh = build_rect_mesh(cfg.domain, cfg.nx, cfg.ny).map_err(|e| RunError::Config(e.to_string()))?;
    let scheme = Scheme::new(mesh, cfg.params.clone()).map_err(|source| RunError::Scheme { step: 0, source })?;
    let (phi0, u0) = initial_fields(cfg, &scheme)?;
    let mut state = scheme
        .initial_state(phi0, u0, 0.0)
        .map_err(|source| RunError::Scheme { step: 0, source })?;
    let mut report = scheme
        .energy_report(&state)
        .map_err(|source| RunError::Scheme { step: 0, source })?;

    let exact = ExactSolution::new(&cfg.params);
    let body = cfg.body_force.map(BodyForce);
    let forcing: Option<&dyn Forcing<f64>> = match (&cfg.initial, &body) {
        (InitialCondition::Preset(Preset::Manufactured), _) => Some(&exact),
        (_, Some(b)) => Some(b),
        _ => None,
    };
    let steady_loads = match forcing {
        Some(f) if f.is_steady() => Some(
            scheme
                .source_loads(f, 0.0)
                .map_err(|source| RunError::Scheme { step: 0, source })?,
        ),
        None => Some(SourceLoads::default()),
        _ => None,
    };

    let n_steps = cfg.n_steps();
    let stride = cfg.output.csv_stride;
    let snap_steps = snapshot_steps(cfg);
    let mut snapshots = Vec::new();
    let mut write_snapshots = |state: &State| -> Result<(), RunError> {
        for (k, _) in snap_steps.iter().enumerate().filter(|(_, s)| **s == state.step) {
            let path = dir.join(format!("snapshot_{k:02}.vtk"));
            let title = format!("chns step {} t {:e}", state.step, state.t);
            let fields = [("phi", &state.phi), ("mu", &state.mu), ("p", &state.p), ("u", &state.u)];
            write_vtk(&scheme.mesh, &fields, &title, &path).map_err(io_err(&path))?;
            snapshots.push(path);
        }
        Ok(())
    };

    let mut csv = CsvSink::create(dir.join(CSV_NAME))?;
    csv.row(&csv_row(0, state.t, &report))?;
    observe(&scheme, &state, &report);
    write_snapshots(&state)?;

    let mut failure = None;
    for _ in 0..n_steps {
        let result = match &steady_loads {
            Some(loads) => scheme.advance_with_loads(&state, loads),
            None => scheme.advance(&state, forcing),
        };
        match result {
            Ok((next, rep, _)) => {
                state = next;
                report = rep;
            }
            Err(source) => {
                failure = Some(RunError::Scheme {
                    step: state.step + 1,
                    source,
                });
                break;
            }
        }
        observe(&scheme, &state, &report);
        if state.step % stride == 0 || state.step == n_steps {
            csv.row(&csv_row(state.step, state.t, &report))?;
        }
        write_snapshots(&state)?;
    }
    let csv_path = csv.finish()?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunSummary {
        steps: state.step,
        csv: csv_path,
        snapshots,
        last: report,
    })
}
