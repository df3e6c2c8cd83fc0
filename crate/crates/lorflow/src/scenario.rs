//! Scenario configuration (sectioned key-value files with an expression
//! mini-language) and all file formats: LORGRID v1 field dumps, trace CSVs,
//! solve reports, and heatmap rendering.

use crate::ambient::{PsiField, SpacetimeSpec};
use crate::continuation::{BarrierPair, ContinuationConfig, SolveError, SolveReport};
use crate::expr::{parse_expression, EvalEnv, Expr, ParseError, Var};
use crate::flow::{CutoffSpec, FlowConfig, FlowError, FlowTrace, PrescribedF};
use crate::graphgeo::{GraphError, GraphState, TorusGrid};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("expression error in key '{key}': {source}")]
    Expr {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ambient(#[from] crate::ambient::AmbientError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Raw parsed scenario: typed fields, expressions still as source text where
/// they are user-provided.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    // spacetime
    pub family: Family,
    pub sigma_diag: Vec<f64>,
    pub time_interval: (f64, f64),
    // grid
    pub n: usize,
    pub points: usize,
    pub period: f64,
    // problem
    pub f_expr: Expr,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub cutoff_k: f64,
    // barriers
    pub lower_expr: Expr,
    pub upper_expr: Expr,
    // solver
    pub eps0: f64,
    pub rho: f64,
    pub eps_min: f64,
    pub tol_flow: f64,
    pub dt_init: f64,
    pub dt_safety: f64,
    pub dt_growth: f64,
    pub dt_min: f64,
    pub max_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Family {
    PowerLaw { beta: f64 },
    PerturbedPowerLaw { beta: f64, amplitude: f64 },
    Expression(Expr),
}

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "spacetime" => &["family", "beta", "amplitude", "psi", "sigma_diag", "time_interval"],
        "grid" => &["n", "points", "period"],
        "problem" => &["f", "c1", "c2", "c3", "cutoff_k"],
        "barriers" => &["lower", "upper"],
        "solver" => &[
            "eps0", "rho", "eps_min", "tol_flow", "dt_init", "dt_safety", "dt_growth", "dt_min",
            "max_steps", "seed",
        ],
        _ => &[],
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, ScenarioError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if known_keys(&name).is_empty() {
                return Err(ScenarioError::Schema(format!(
                    "unknown section '[{name}]' at line {}",
                    lineno + 1
                )));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScenarioError::Schema(format!(
                "expected 'key = value' at line {}: '{line}'",
                lineno + 1
            )));
        };
        let Some(section) = &current else {
            return Err(ScenarioError::Schema(format!(
                "key outside any section at line {}: '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if !known_keys(section).contains(&key.as_str()) {
            return Err(ScenarioError::Schema(format!(
                "unknown key '{key}' in section '[{section}]' at line {}",
                lineno + 1
            )));
        }
        let entry = sections.get_mut(section).unwrap();
        if entry.contains_key(&key) {
            return Err(ScenarioError::Schema(format!(
                "duplicate key '{key}' in section '[{section}]' at line {}",
                lineno + 1
            )));
        }
        entry.insert(key, (lineno + 1, value.trim().to_string()));
    }
    Ok(sections)
}

struct SectionReader<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, (usize, String)>,
}

impl<'a> SectionReader<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&'a str, ScenarioError> {
        self.raw(key).ok_or_else(|| {
            ScenarioError::Schema(format!(
                "missing required key '{key}' in section '[{}]'",
                self.name
            ))
        })
    }

    fn number(&self, key: &str) -> Result<f64, ScenarioError> {
        let text = self.required(key)?;
        text.parse::<f64>().map_err(|_| {
            ScenarioError::Schema(format!(
                "key '{key}' in '[{}]' must be a number, got '{text}'",
                self.name
            ))
        })
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64, ScenarioError> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self.number(key),
        }
    }

    fn integer(&self, key: &str) -> Result<u64, ScenarioError> {
        let text = self.required(key)?;
        text.parse::<u64>().map_err(|_| {
            ScenarioError::Schema(format!(
                "key '{key}' in '[{}]' must be a non-negative integer, got '{text}'",
                self.name
            ))
        })
    }

    fn integer_or(&self, key: &str, default: u64) -> Result<u64, ScenarioError> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self.integer(key),
        }
    }

    fn numbers(&self, key: &str) -> Result<Vec<f64>, ScenarioError> {
        let text = self.required(key)?;
        text.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    ScenarioError::Schema(format!(
                        "key '{key}' in '[{}]' must be a list of numbers, got '{text}'",
                        self.name
                    ))
                })
            })
            .collect()
    }

    fn expression(&self, key: &str) -> Result<Expr, ScenarioError> {
        let text = self.required(key)?;
        parse_expression(text).map_err(|source| ScenarioError::Expr {
            key: format!("{}.{key}", self.name),
            source,
        })
    }
}

/// Parse and schema-validate a scenario from text. Barrier ordering on the
/// grid is checked by `load_scenario`, which also builds the objects.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let sections = parse_sections(text)?;
    for required in ["spacetime", "grid", "problem", "barriers"] {
        if !sections.contains_key(required) {
            return Err(ScenarioError::Schema(format!(
                "missing required section '[{required}]'"
            )));
        }
    }
    let read = |name: &'static str| SectionReader {
        name,
        map: sections.get(name).map(|m| m as _).unwrap_or({
            static EMPTY: std::sync::OnceLock<BTreeMap<String, (usize, String)>> =
                std::sync::OnceLock::new();
            EMPTY.get_or_init(BTreeMap::new)
        }),
    };

    let st = read("spacetime");
    let family = match st.required("family")? {
        "power_law" => Family::PowerLaw {
            beta: st.number("beta")?,
        },
        "perturbed_power_law" => Family::PerturbedPowerLaw {
            beta: st.number("beta")?,
            amplitude: st.number("amplitude")?,
        },
        "expression" => Family::Expression(st.expression("psi")?),
        other => {
            return Err(ScenarioError::Schema(format!(
                "unknown spacetime family '{other}' (expected power_law, perturbed_power_law, or expression)"
            )))
        }
    };
    let interval = st.numbers("time_interval")?;
    if interval.len() != 2 {
        return Err(ScenarioError::Schema(
            "time_interval must hold exactly two numbers".into(),
        ));
    }
    let time_interval = (interval[0], interval[1]);
    if !(time_interval.0 < time_interval.1) {
        return Err(ScenarioError::Range(format!(
            "time_interval must satisfy a < b, got {} {}",
            time_interval.0, time_interval.1
        )));
    }

    let gr = read("grid");
    let n = gr.integer("n")? as usize;
    if n != 2 && n != 3 {
        return Err(ScenarioError::Range(format!("grid n must be 2 or 3, got {n}")));
    }
    let points = gr.integer("points")? as usize;
    if points < 8 {
        return Err(ScenarioError::Range(format!(
            "grid points must be >= 8, got {points}"
        )));
    }
    let period = gr.number("period")?;
    if !(period > 0.0) {
        return Err(ScenarioError::Range(format!("grid period must be > 0, got {period}")));
    }
    let sigma_diag = match st.raw("sigma_diag") {
        None => vec![1.0; n],
        Some(_) => {
            let values = st.numbers("sigma_diag")?;
            if values.len() != n {
                return Err(ScenarioError::Schema(format!(
                    "sigma_diag must hold {n} numbers, got {}",
                    values.len()
                )));
            }
            if values.iter().any(|&v| !(v > 0.0)) {
                return Err(ScenarioError::Range("sigma_diag entries must be > 0".into()));
            }
            values
        }
    };

    let pr = read("problem");
    let f_expr = pr.expression("f")?;
    let c1 = pr.number("c1")?;
    if !(c1 > 0.0) {
        return Err(ScenarioError::Range(format!("c1 must be > 0, got {c1}")));
    }
    let c2 = pr.number_or("c2", 0.0)?;
    let c3 = pr.number_or("c3", 0.0)?;
    let cutoff_k = pr.number_or("cutoff_k", 10.0)?;
    if !(cutoff_k > 1.0) {
        return Err(ScenarioError::Range(format!(
            "cutoff_k must be > 1, got {cutoff_k}"
        )));
    }

    let ba = read("barriers");
    let lower_expr = ba.expression("lower")?;
    let upper_expr = ba.expression("upper")?;
    for (key, expr) in [("lower", &lower_expr), ("upper", &upper_expr)] {
        if expr.uses(Var::X0) || expr.uses(Var::Vt) {
            return Err(ScenarioError::Schema(format!(
                "barrier '{key}' may only depend on the spatial variables x1..x3"
            )));
        }
    }

    let so = read("solver");
    let eps0 = so.number_or("eps0", 0.1)?;
    let rho = so.number_or("rho", 0.3)?;
    let eps_min = so.number_or("eps_min", 1e-3)?;
    if !(eps_min > 0.0 && eps0 >= eps_min) {
        return Err(ScenarioError::Range(format!(
            "need eps0 >= eps_min > 0, got eps0 = {eps0}, eps_min = {eps_min}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ScenarioError::Range(format!("rho must be in (0, 1), got {rho}")));
    }
    let tol_flow = so.number_or("tol_flow", 5e-3)?;
    let dt_init = so.number_or("dt_init", 1e-4)?;
    let dt_safety = so.number_or("dt_safety", 0.2)?;
    let dt_growth = so.number_or("dt_growth", 1.3)?;
    let dt_min = so.number_or("dt_min", 1e-12)?;
    for (name, value) in [
        ("tol_flow", tol_flow),
        ("dt_init", dt_init),
        ("dt_min", dt_min),
    ] {
        if !(value > 0.0) {
            return Err(ScenarioError::Range(format!("{name} must be > 0, got {value}")));
        }
    }
    if !(dt_safety > 0.0 && dt_safety < 1.0) {
        return Err(ScenarioError::Range(format!(
            "dt_safety must be in (0, 1), got {dt_safety}"
        )));
    }
    if !(dt_growth > 1.0) {
        return Err(ScenarioError::Range(format!(
            "dt_growth must be > 1, got {dt_growth}"
        )));
    }
    let max_steps = so.integer_or("max_steps", 400_000)? as usize;
    if max_steps == 0 {
        return Err(ScenarioError::Range("max_steps must be >= 1".into()));
    }
    let seed = so.integer_or("seed", 0)?;

    Ok(ScenarioConfig {
        family,
        sigma_diag,
        time_interval,
        n,
        points,
        period,
        f_expr,
        c1,
        c2,
        c3,
        cutoff_k,
        lower_expr,
        upper_expr,
        eps0,
        rho,
        eps_min,
        tol_flow,
        dt_init,
        dt_safety,
        dt_growth,
        dt_min,
        max_steps,
        seed,
    })
}

impl ScenarioConfig {
    pub fn build_spec(&self) -> Result<SpacetimeSpec, ScenarioError> {
        let psi = match &self.family {
            Family::PowerLaw { beta } => PsiField::PowerLaw { beta: *beta },
            Family::PerturbedPowerLaw { beta, amplitude } => {
                let (a, b) = self.time_interval;
                PsiField::PerturbedPowerLaw {
                    beta: *beta,
                    amplitude: *amplitude,
                    center: 0.5 * (a + b),
                    width: 0.25 * (b - a),
                    period: self.period,
                }
            }
            Family::Expression(e) => PsiField::Expression(e.clone()),
        };
        let mut sigma = [[0.0; 3]; 3];
        for (i, &v) in self.sigma_diag.iter().enumerate() {
            sigma[i][i] = v;
        }
        Ok(SpacetimeSpec::new(psi, self.n, sigma, self.time_interval, self.period)?)
    }

    pub fn build_grid(&self) -> Result<TorusGrid, ScenarioError> {
        Ok(TorusGrid::new(self.n, self.points, self.period)?)
    }

    pub fn build_f(&self) -> Result<PrescribedF, ScenarioError> {
        Ok(PrescribedF::new(self.f_expr.clone(), self.c1, self.c2, self.c3)?)
    }

    pub fn build_cutoff(&self) -> Result<CutoffSpec, ScenarioError> {
        Ok(CutoffSpec::new(self.cutoff_k)?)
    }

    fn eval_barrier(&self, expr: &Expr, grid: TorusGrid) -> Result<GraphState, ScenarioError> {
        let mut u = Vec::with_capacity(grid.len());
        for p in 0..grid.len() {
            let x = grid.position(p);
            let env = EvalEnv { x0: 0.0, x, vt: 1.0 };
            let value = expr.eval(&env).map_err(|e| {
                ScenarioError::Range(format!("barrier evaluation failed at {x:?}: {e}"))
            })?;
            u.push(value);
        }
        Ok(GraphState::new(grid, u)?)
    }

    pub fn build_barriers(&self) -> Result<BarrierPair, ScenarioError> {
        let grid = self.build_grid()?;
        let lower = self.eval_barrier(&self.lower_expr, grid)?;
        let upper = self.eval_barrier(&self.upper_expr, grid)?;
        Ok(BarrierPair::new(lower, upper)?)
    }

    pub fn build_flow_config(&self, eps: f64) -> Result<FlowConfig, ScenarioError> {
        let mut cfg = FlowConfig::new(eps)?;
        cfg.tol_flow = self.tol_flow;
        cfg.dt_init = self.dt_init;
        cfg.dt_safety = self.dt_safety;
        cfg.dt_growth = self.dt_growth;
        cfg.dt_min = self.dt_min;
        cfg.max_steps = self.max_steps;
        cfg.cutoff = self.build_cutoff()?;
        Ok(cfg)
    }

    pub fn build_continuation_config(&self) -> Result<ContinuationConfig, ScenarioError> {
        let mut cfg = ContinuationConfig::new(self.build_flow_config(self.eps0)?);
        cfg.eps0 = self.eps0;
        cfg.rho = self.rho;
        cfg.eps_min = self.eps_min;
        Ok(cfg)
    }
}

/// Golden scenario fixture: exactly solvable umbilic problem used by tests
/// and as a seed corpus entry.
pub const GOLDEN_SCENARIO: &str = include_str!("../fixtures/desitter_umbilic.scn");

/// Load a scenario file, validate the schema, and pre-check barrier ordering
/// on the grid.
pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let config = parse_scenario(&text)?;
    config.build_spec()?;
    config.build_barriers()?;
    config.build_f()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// LORGRID v1
// ---------------------------------------------------------------------------

/// A scalar field dump: grid metadata plus row-major values.
#[derive(Debug, Clone)]
pub struct LorGrid {
    pub n: usize,
    pub points_per_axis: usize,
    pub period: f64,
    pub time_interval: (f64, f64),
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum GridIoError {
    #[error("malformed LORGRID data at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serialize with 17 significant digits so that read-back is bit-exact.
pub fn write_lorgrid(grid: &LorGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "LORGRID v1 n={} dims={} period={:.16e} time={:.16e},{:.16e}",
        grid.n, grid.points_per_axis, grid.period, grid.time_interval.0, grid.time_interval.1
    );
    let per_line = grid.points_per_axis;
    for row in grid.values.chunks(per_line) {
        let mut line = String::new();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v:.16e}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn parse_lorgrid(text: &str) -> Result<LorGrid, GridIoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(GridIoError::Format {
        line: 1,
        message: "empty input".into(),
    })?;
    let fail = |line: usize, message: &str| GridIoError::Format {
        line,
        message: message.into(),
    };
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("LORGRID") || tokens.next() != Some("v1") {
        return Err(fail(1, "expected 'LORGRID v1' header"));
    }
    let mut n = None;
    let mut dims = None;
    let mut period = None;
    let mut time = None;
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| fail(1, "header fields must be key=value"))?;
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| fail(1, "bad n"))?),
            "dims" => dims = Some(value.parse::<usize>().map_err(|_| fail(1, "bad dims"))?),
            "period" => {
                period = Some(value.parse::<f64>().map_err(|_| fail(1, "bad period"))?)
            }
            "time" => {
                let (a, b) = value
                    .split_once(',')
                    .ok_or_else(|| fail(1, "time must be a,b"))?;
                time = Some((
                    a.parse::<f64>().map_err(|_| fail(1, "bad time interval"))?,
                    b.parse::<f64>().map_err(|_| fail(1, "bad time interval"))?,
                ));
            }
            other => return Err(fail(1, &format!("unknown header field '{other}'"))),
        }
    }
    let n = n.ok_or_else(|| fail(1, "missing n"))?;
    let points_per_axis = dims.ok_or_else(|| fail(1, "missing dims"))?;
    let period = period.ok_or_else(|| fail(1, "missing period"))?;
    let time_interval = time.ok_or_else(|| fail(1, "missing time"))?;
    if !(n == 2 || n == 3) {
        return Err(fail(1, "n must be 2 or 3"));
    }
    if !(8..=4096).contains(&points_per_axis) {
        return Err(fail(1, "dims out of range"));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(fail(1, "period must be positive and finite"));
    }
    let expected = points_per_axis
        .checked_pow(n as u32)
        .filter(|&e| e <= 1 << 24)
        .ok_or_else(|| fail(1, "grid too large"))?;
    // growth is driven by actual input size, not the untrusted header
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| fail(idx + 1, &format!("bad value '{token}'")))?;
            if !v.is_finite() {
                return Err(fail(idx + 1, "non-finite value"));
            }
            values.push(v);
            if values.len() > expected {
                return Err(fail(idx + 1, "too many values for the declared dims"));
            }
        }
    }
    if values.len() != expected {
        return Err(GridIoError::Format {
            line: 0,
            message: format!("expected {expected} values, got {}", values.len()),
        });
    }
    Ok(LorGrid {
        n,
        points_per_axis,
        period,
        time_interval,
        values,
    })
}

pub fn state_to_lorgrid(state: &GraphState, time_interval: (f64, f64)) -> LorGrid {
    LorGrid {
        n: state.grid.n(),
        points_per_axis: state.grid.points_per_axis(),
        period: state.grid.period(),
        time_interval,
        values: state.u.clone(),
    }
}

// ---------------------------------------------------------------------------
// Trace CSV and reports
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: &str =
    "step,t,dt,res_sup,res_min,vt_max,u_min,u_max,marginH,marginH2,rejects";

pub fn trace_to_csv(trace: &FlowTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.step,
            r.t,
            r.dt,
            r.res_sup,
            r.res_min,
            r.vt_max,
            r.u_min,
            r.u_max,
            r.margin_h,
            r.margin_h2,
            r.rejects
        );
    }
    out
}

pub fn report_eps_table(report: &SolveReport) -> String {
    let mut out = String::from("eps,converged,steps,res_sup,vt_max,marginH,marginH2\n");
    for r in &report.records {
        let _ = writeln!(
            out,
            "{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.eps, r.converged, r.steps, r.res_sup, r.vt_max, r.margin_h, r.margin_h2
        );
    }
    out
}

pub fn report_summary(report: &SolveReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "status: {:?}", report.status);
    let _ = writeln!(out, "stages: {}", report.records.len());
    let total_steps: usize = report.records.iter().map(|r| r.steps).sum();
    let _ = writeln!(out, "total_steps: {total_steps}");
    let _ = writeln!(out, "final_residual_h2: {:.6e}", report.final_residual);
    let _ = writeln!(
        out,
        "final_u_range: {:.6e} .. {:.6e}",
        report
            .final_state
            .u
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
        report
            .final_state
            .u
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    );
    let _ = writeln!(out, "wall_seconds: {:.2}", report.wall_seconds);
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Per-axis CSV slices of a field through the grid midpoint.
pub fn axis_slices_csv(grid: &LorGrid) -> Vec<(String, String)> {
    let m = grid.points_per_axis;
    let torus = TorusGrid::new(grid.n, m, grid.period).expect("validated on read");
    let mut out = Vec::new();
    for axis in 0..grid.n {
        let mut csv = String::from("coord,value\n");
        let mut coords = [m / 2; 3];
        for i in 0..m {
            coords[axis] = i;
            let idx = torus.index(coords);
            let _ = writeln!(
                csv,
                "{:.16e},{:.16e}",
                i as f64 * grid.period / m as f64,
                grid.values[idx]
            );
        }
        out.push((format!("slice_x{}.csv", axis + 1), csv));
    }
    out
}

/// Binary PPM heatmap of an n = 2 field using a blue–white–red colormap.
pub fn heatmap_ppm(grid: &LorGrid) -> Option<Vec<u8>> {
    if grid.n != 2 {
        return None;
    }
    let m = grid.points_per_axis;
    let lo = grid.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    let mut out = format!("P6\n{m} {m}\n255\n").into_bytes();
    for row in 0..m {
        for col in 0..m {
            // row 0 at the top corresponds to the largest x² value
            let value = grid.values[(m - 1 - row) * m + col];
            let t = ((value - lo) / span).clamp(0.0, 1.0);
            let (r, g, b) = if t < 0.5 {
                let s = t * 2.0;
                (s, s, 1.0)
            } else {
                let s = (t - 0.5) * 2.0;
                (1.0, 1.0 - s, 1.0 - s)
            };
            out.push((r * 255.0).round() as u8);
            out.push((g * 255.0).round() as u8);
            out.push((b * 255.0).round() as u8);
        }
    }
    Some(out)
}
