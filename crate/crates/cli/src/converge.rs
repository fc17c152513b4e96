//! The `converge` command: manufactured-solution rate tables.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use chns_core::verification::{convergence_study_with, StudyError, TrackedNorm};
use chns_core::RateTable;
use thiserror::Error;

use crate::config::{InitialCondition, Preset, RunConfig};
use crate::write_atomic;

pub const DEFAULT_RESOLUTIONS: [usize; 4] = [4, 8, 16, 32];
pub const RATE_CSV_NAME: &str = "rates.csv";

#[derive(Debug, Error)]
pub enum ConvergeError {
    #[error("converge needs preset = manufactured")]
    NotManufactured,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Study(#[from] StudyError<f64>),
}

/// Parses `4,8,16,32` into cells per side.
pub fn parse_h_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .map(|v| {
            let v = v.strip_prefix("1/").unwrap_or(v);
            v.parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| format!("expected cells per side such as 8 or 1/8, got '{v}'"))
        })
        .collect()
}

/// Aligned text table, one block per norm.
pub fn render_table(table: &RateTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>6} {:>14} {:>8}", "norm", "h", "error", "rate");
    for norm in TrackedNorm::ALL {
        for (k, n) in table.resolutions.iter().enumerate() {
            let rate = table
                .rate(norm, k)
                .map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>14.6e} {:>8}",
                norm.label(),
                format!("1/{n}"),
                table.error(norm, k),
                rate
            );
        }
    }
    s
}

/// `h,norm,error,rate` with an empty rate on the coarsest level.
pub fn render_csv(table: &RateTable) -> String {
    let mut s = String::from("h,norm,error,rate\n");
    for norm in TrackedNorm::ALL {
        for k in 0..table.resolutions.len() {
            let rate = table.rate(norm, k).map_or_else(String::new, |r| format!("{r:e}"));
            let _ = writeln!(
                s,
                "{:e},{},{:e},{}",
                table.h(k),
                norm.label(),
                table.error(norm, k),
                rate
            );
        }
    }
    s
}

/// Runs the study, printing progress and the final table to `out` and
/// writing the CSV into the configured output directory. A failed level
/// still leaves the finished rows on disk.
pub fn cmd_converge(cfg: &RunConfig, resolutions: &[usize], out: &mut impl Write) -> Result<RateTable, ConvergeError> {
    if cfg.initial != InitialCondition::Preset(Preset::Manufactured) {
        return Err(ConvergeError::NotManufactured);
    }
    let dir = &cfg.output.dir;
    let io_err = |path: &PathBuf| {
        let path = path.clone();
        move |source| ConvergeError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join(RATE_CSV_NAME);
    let result = convergence_study_with(resolutions, &cfg.params, cfg.t_final, |n, run| {
        let _ = writeln!(out, "h = 1/{n}: {} steps, tau = {:e}", run.steps, run.tau);
    });
    let table = match &result {
        Ok(t) => t,
        Err(e) => &e.partial,
    };
    write_atomic(&csv, render_csv(table).as_bytes()).map_err(io_err(&csv))?;
    let table = result?;
    write!(out, "{}", render_table(&table)).map_err(io_err(&csv))?;
    Ok(table)
}
