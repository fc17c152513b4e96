//! Configuration, output writers and commands behind the `chns` binary.

pub mod config;
pub mod converge;
pub mod run;
pub mod vtk;

pub use config::{parse_config, ConfigError, InitialCondition, Preset, RunConfig};
pub use converge::{cmd_converge, ConvergeError};
pub use run::{cmd_run, run_with, write_atomic, RunError, RunSummary};
pub use vtk::{render_vtk, write_vtk};

/// Key reference with the defaults of every preset, for `--help`.
pub fn keys_help() -> String {
    use std::collections::HashMap;
    use std::fmt::Write as _;

    let presets = [Preset::Manufactured, Preset::Ellipse, Preset::Square];
    let defaults: Vec<HashMap<String, String>> = presets
        .iter()
        .map(|p| {
            RunConfig::preset(*p)
                .to_config_string()
                .lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .collect();
    let mut s = String::from(
        "CONFIG FILE\n  One `key = value` per line; `#` starts a comment. Omitted keys take the\n  \
         defaults of the chosen preset (manufactured when `preset` is absent). An\n  \
         expression preset such as `math::tanh((x^2 + y^2 - 0.04) / 0.01)` starts from\n  \
         rest with the square preset's other defaults.\n\nKEYS (defaults: manufactured | ellipse | square)\n",
    );
    for (key, meaning) in config::KEYS {
        let d: Vec<&str> = defaults
            .iter()
            .map(|m| m.get(*key).map_or("none", String::as_str))
            .collect();
        let _ = writeln!(s, "  {key:<18} {meaning}");
        let _ = writeln!(s, "  {:<18} [{} | {} | {}]", "", d[0], d[1], d[2]);
    }
    s
}
