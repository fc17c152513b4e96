//! Line-based `key = value` run configuration.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use chns_core::linalg::SolverMethod;
use chns_core::{Rect, SchemeParams};
use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function,
    HashMapContext, Node, Value,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Manufactured solution on the unit square with matching sources.
    Manufactured,
    /// Elliptical bubble in `[-0.4, 0.4]²` pushed by a body force.
    Ellipse,
    /// Square bubble in the unit square.
    Square,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Manufactured => "manufactured",
            Preset::Ellipse => "ellipse",
            Preset::Square => "square",
        }
    }

    pub fn from_name(s: &str) -> Option<Preset> {
        match s {
            "manufactured" => Some(Preset::Manufactured),
            "ellipse" => Some(Preset::Ellipse),
            "square" => Some(Preset::Square),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Preset(Preset),
    /// Expression in `x` and `y` for `φ⁰`; the velocity starts at rest.
    Expression(String),
}

impl InitialCondition {
    fn text(&self) -> &str {
        match self {
            InitialCondition::Preset(p) => p.name(),
            InitialCondition::Expression(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub csv_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub params: SchemeParams,
    pub t_final: f64,
    pub initial: InitialCondition,
    pub body_force: Option<[f64; 2]>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Every accepted key with its meaning, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "manufactured | ellipse | square, or an expression for phi0 in x, y, pi with sin cos tan tanh exp ln sqrt abs sign"),
    ("domain.x0", "left edge of the rectangle"),
    ("domain.x1", "right edge"),
    ("domain.y0", "bottom edge"),
    ("domain.y1", "top edge"),
    ("nx", "cells along x"),
    ("ny", "cells along y"),
    ("M", "mobility"),
    ("lambda", "mixing coefficient"),
    ("nu", "viscosity"),
    ("epsilon", "interface width, at most 1"),
    ("C0", "shift in rho = sqrt(E1 + C0)"),
    ("tau", "time step"),
    ("T", "final time"),
    ("lambda_on_fprime", "true: mu = -lambda lap(phi) + lambda F'(phi); false: no lambda on F'"),
    ("body_force.x", "constant momentum source, x component"),
    ("body_force.y", "constant momentum source, y component"),
    ("output.dir", "directory for energy.csv and VTK snapshots"),
    ("output.snapshots", "comma-separated snapshot times in [0, T]"),
    ("output.csv_stride", "steps between CSV rows"),
    ("solver.method", "cg | bicgstab, for the velocity and mass solves"),
    ("solver.rel_tol", "relative residual target of iterative solves"),
    ("solver.max_iters", "iteration cap, or auto for 10 n"),
];

impl RunConfig {
    /// Defaults for a named preset.
    pub fn preset(preset: Preset) -> RunConfig {
        let base = |m, lambda, nu, eps, tau| SchemeParams::new(m, lambda, nu, eps, tau);
        let output = |snapshots: &[f64], csv_stride| OutputConfig {
            dir: PathBuf::from("output"),
            snapshots: snapshots.to_vec(),
            csv_stride,
        };
        match preset {
            Preset::Manufactured => RunConfig {
                domain: Rect::unit(),
                nx: 16,
                ny: 16,
                params: base(0.1, 0.04, 0.01, 0.2, 1.0 / 4096.0),
                t_final: 0.01,
                initial: InitialCondition::Preset(preset),
                body_force: None,
                output: output(&[0.0, 0.01], 1),
            },
            Preset::Ellipse => RunConfig {
                domain: Rect::centered_square(0.4),
                nx: 52,
                ny: 52,
                params: base(0.1, 0.1, 1.0, 0.01, 1e-7),
                t_final: 1e-3,
                initial: InitialCondition::Preset(preset),
                body_force: Some([1.0, 0.0]),
                output: output(&[0.0, 5e-6, 1e-5, 5e-5, 5e-4, 1e-3], 100),
            },
            Preset::Square => RunConfig {
                domain: Rect::unit(),
                nx: 64,
                ny: 64,
                params: base(0.002, 0.1, 1.0, 0.01, 1e-5),
                t_final: 1.0,
                initial: InitialCondition::Preset(preset),
                body_force: None,
                output: output(&[0.0, 0.001, 0.03, 0.08, 0.3, 1.0], 100),
            },
        }
    }

    /// Number of whole steps of size `tau` that fit in `[0, T]`.
    pub fn n_steps(&self) -> usize {
        let r = self.t_final / self.params.tau;
        (r + 1e-9 * r.max(1.0)).floor() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        self.check().map_err(|(_, m)| m)
    }

    /// Checks the invariants; errors carry the key most responsible.
    fn check(&self) -> Result<(), (&'static str, String)> {
        self.domain.validate().map_err(|e| ("domain.x0", e.to_string()))?;
        if self.nx == 0 || self.ny == 0 {
            let key = if self.nx == 0 { "nx" } else { "ny" };
            return Err((key, "nx and ny must be positive".into()));
        }
        self.params.validate().map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split_whitespace()
                .find_map(|w| {
                    KEYS.iter()
                        .map(|(k, _)| *k)
                        .find(|k| *k == w || k.strip_prefix("solver.") == Some(w))
                })
                .unwrap_or("preset");
            (key, msg)
        })?;
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(("T", format!("T must be positive, got {}", self.t_final)));
        }
        if let Some(s) = self
            .output
            .snapshots
            .iter()
            .find(|s| !(**s >= 0.0 && **s <= self.t_final))
        {
            return Err((
                "output.snapshots",
                format!("snapshot time {s} outside [0, {}]", self.t_final),
            ));
        }
        if self.output.csv_stride == 0 {
            return Err(("output.csv_stride", "output.csv_stride must be at least 1".into()));
        }
        if let Some(f) = self.body_force {
            if !f.iter().all(|v| v.is_finite()) {
                return Err(("body_force.x", "body_force must be finite".into()));
            }
            if self.initial == InitialCondition::Preset(Preset::Manufactured) {
                return Err((
                    "body_force.x",
                    "the manufactured preset supplies its own sources; remove body_force".into(),
                ));
            }
        }
        if let InitialCondition::Expression(e) = &self.initial {
            PhiExpression::compile(e).map_err(|m| ("preset", m))?;
        }
        Ok(())
    }

    /// Writes every key; [`parse_config`] reads the result back unchanged.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("preset", self.initial.text().to_string());
        put("domain.x0", self.domain.x0.to_string());
        put("domain.x1", self.domain.x1.to_string());
        put("domain.y0", self.domain.y0.to_string());
        put("domain.y1", self.domain.y1.to_string());
        put("nx", self.nx.to_string());
        put("ny", self.ny.to_string());
        put("M", p.mobility.to_string());
        put("lambda", p.lambda.to_string());
        put("nu", p.nu.to_string());
        put("epsilon", p.epsilon.to_string());
        put("C0", p.c0.to_string());
        put("tau", p.tau.to_string());
        put("T", self.t_final.to_string());
        put("lambda_on_fprime", p.lambda_on_fprime.to_string());
        if let Some(f) = self.body_force {
            put("body_force.x", f[0].to_string());
            put("body_force.y", f[1].to_string());
        }
        put("output.dir", self.output.dir.display().to_string());
        let snaps: Vec<String> = self.output.snapshots.iter().map(|v| v.to_string()).collect();
        put("output.snapshots", snaps.join(", "));
        put("output.csv_stride", self.output.csv_stride.to_string());
        let method = match p.solver.method {
            SolverMethod::Cg => "cg",
            SolverMethod::BiCgStab => "bicgstab",
        };
        put("solver.method", method.to_string());
        put("solver.rel_tol", p.solver.rel_tol.to_string());
        put(
            "solver.max_iters",
            p.solver.max_iters.map_or_else(|| "auto".to_string(), |n| n.to_string()),
        );
        s
    }
}

/// A compiled `φ⁰(x, y)` expression.
pub struct PhiExpression {
    tree: Node<DefaultNumericTypes>,
}

impl PhiExpression {
    pub fn compile(text: &str) -> Result<Self, String> {
        let tree = build_operator_tree::<DefaultNumericTypes>(text).map_err(|e| format!("bad expression: {e}"))?;
        let expr = PhiExpression { tree };
        expr.eval([0.0, 0.0])?;
        Ok(expr)
    }

    pub fn eval(&self, x: [f64; 2]) -> Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let set = |ctx: &mut HashMapContext<DefaultNumericTypes>, k: &str, v: f64| {
            ctx.set_value(k.into(), Value::Float(v)).map_err(|e| e.to_string())
        };
        set(&mut ctx, "x", x[0])?;
        set(&mut ctx, "y", x[1])?;
        set(&mut ctx, "pi", std::f64::consts::PI)?;
        let unary: [(&str, fn(f64) -> f64); 9] = [
            ("sin", f64::sin),
            ("cos", f64::cos),
            ("tan", f64::tan),
            ("tanh", f64::tanh),
            ("exp", f64::exp),
            ("ln", f64::ln),
            ("sqrt", f64::sqrt),
            ("abs", f64::abs),
            ("sign", f64::signum),
        ];
        for (name, f) in unary {
            let func = Function::new(move |v: &Value<DefaultNumericTypes>| Ok(Value::Float(f(v.as_number()?))));
            ctx.set_function(name.into(), func).map_err(|e| e.to_string())?;
        }
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| format!("expression does not evaluate to a number: {e}"))
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>()
        .map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str) -> Result<(), String> {
    let p = &mut cfg.params;
    match key {
        "preset" => {}
        "domain.x0" => cfg.domain.x0 = parse_f64(v)?,
        "domain.x1" => cfg.domain.x1 = parse_f64(v)?,
        "domain.y0" => cfg.domain.y0 = parse_f64(v)?,
        "domain.y1" => cfg.domain.y1 = parse_f64(v)?,
        "nx" => cfg.nx = parse_usize(v)?,
        "ny" => cfg.ny = parse_usize(v)?,
        "M" => p.mobility = parse_f64(v)?,
        "lambda" => p.lambda = parse_f64(v)?,
        "nu" => p.nu = parse_f64(v)?,
        "epsilon" => p.epsilon = parse_f64(v)?,
        "C0" => p.c0 = parse_f64(v)?,
        "tau" => p.tau = parse_f64(v)?,
        "T" => cfg.t_final = parse_f64(v)?,
        "lambda_on_fprime" => p.lambda_on_fprime = parse_bool(v)?,
        "body_force.x" => cfg.body_force.get_or_insert([0.0; 2])[0] = parse_f64(v)?,
        "body_force.y" => cfg.body_force.get_or_insert([0.0; 2])[1] = parse_f64(v)?,
        "output.dir" => {
            if v.is_empty() {
                return Err("output.dir must not be empty".into());
            }
            cfg.output.dir = PathBuf::from(v)
        }
        "output.snapshots" => {
            cfg.output.snapshots = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_f64)
                .collect::<Result<_, _>>()?
        }
        "output.csv_stride" => cfg.output.csv_stride = parse_usize(v)?,
        "solver.method" => {
            p.solver.method = match v {
                "cg" => SolverMethod::Cg,
                "bicgstab" => SolverMethod::BiCgStab,
                _ => return Err(format!("expected cg or bicgstab, got '{v}'")),
            }
        }
        "solver.rel_tol" => p.solver.rel_tol = parse_f64(v)?,
        "solver.max_iters" => p.solver.max_iters = if v == "auto" { None } else { Some(parse_usize(v)?) },
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Parses a configuration document. Omitted keys take the defaults of the
/// selected preset (`manufactured` when none is given); `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Line {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(ConfigError::Line {
                line,
                message: format!("unknown key '{k}'"),
            });
        }
        if let Some(prev) = seen.insert(k.clone(), line) {
            return Err(ConfigError::Line {
                line,
                message: format!("duplicate key '{k}' (first set on line {prev})"),
            });
        }
        entries.push((line, k, v));
    }

    let initial = match entries.iter().find(|(_, k, _)| k == "preset") {
        None => InitialCondition::Preset(Preset::Manufactured),
        Some((_, _, v)) => match Preset::from_name(v) {
            Some(p) => InitialCondition::Preset(p),
            None => InitialCondition::Expression(v.clone()),
        },
    };
    let base = match &initial {
        InitialCondition::Preset(p) => *p,
        InitialCondition::Expression(_) => Preset::Square,
    };
    let mut cfg = RunConfig::preset(base);
    if let InitialCondition::Expression(_) = initial {
        cfg.output.snapshots = vec![0.0];
    }
    cfg.initial = initial;

    for (line, k, v) in &entries {
        apply(&mut cfg, k, v).map_err(|message| ConfigError::Line { line: *line, message })?;
    }
    if !seen.contains_key("output.snapshots") {
        // Preset snapshot times past a shortened T are dropped; T itself is kept.
        let t = cfg.t_final;
        cfg.output.snapshots.retain(|s| *s <= t);
        if cfg.output.snapshots.last() != Some(&t) {
            cfg.output.snapshots.push(t);
        }
    }
    cfg.check().map_err(|(key, message)| {
        let line = seen
            .get(key)
            .or_else(|| {
                if key == "body_force.x" {
                    seen.get("body_force.y")
                } else {
                    None
                }
            })
            .copied();
        match line {
            Some(line) => ConfigError::Line { line, message },
            None => ConfigError::Invalid(message),
        }
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_manufactured() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::preset(Preset::Manufactured));
        assert_eq!(c.params.mobility, 0.1);
        assert_eq!(c.params.lambda, 0.04);
        assert_eq!(c.params.epsilon, 0.2);
        assert_eq!(c.params.nu, 0.01);
        assert_eq!(c.params.c0, 1.0);
        assert_eq!(c.params.solver.rel_tol, 1e-10);
        assert!(c.params.lambda_on_fprime);
    }

    #[test]
    fn negative_tau_names_line() {
        let err = parse_config("preset = square\n# comment\ntau = -1\n").unwrap_err();
        assert_eq!(err.to_string().split(':').next().unwrap(), "line 3");
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let e = parse_config("foo = 1").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 1, .. }));
        let e = parse_config("\nnx = two").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }));
        let e = parse_config("nx = 4\nnx = 8").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }));
    }

    #[test]
    fn square_preset_round_trips() {
        let c = parse_config("preset = square").unwrap();
        assert_eq!(
            (c.params.mobility, c.params.lambda, c.params.epsilon, c.params.nu),
            (0.002, 0.1, 0.01, 1.0)
        );
        assert_eq!(c.params.tau, 1e-5);
        assert_eq!(c.nx, 64);
        let again = parse_config(&c.to_config_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn expression_preset() {
        let c = parse_config("preset = math::tanh(x^2/0.01 + y^2/0.0225 - 1)\nT = 0.001").unwrap();
        let InitialCondition::Expression(e) = &c.initial else {
            panic!()
        };
        let f = PhiExpression::compile(e).unwrap();
        let v = f.eval([0.05, 0.1]).unwrap();
        assert!((v - (0.25f64 + 0.01 / 0.0225 - 1.0).tanh()).abs() < 1e-15);
        assert!(parse_config("preset = x +* 2").is_err());
    }

    #[test]
    fn snapshot_outside_interval() {
        let e = parse_config("preset = ellipse\noutput.snapshots = 0, 0.5").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }));
    }
}
