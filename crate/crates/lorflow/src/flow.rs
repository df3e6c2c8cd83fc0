//! Curvature flow for the regularized prescribed-curvature problem:
//! ∂u/∂t = −e^{−ψ} v (F_ε − f̃), with F_ε = √H₂(κ + εH) and
//! f̃ = √f(x, ν̃), where the tilt entering f is passed through the cutoff
//! ν̃ = θ(ṽ)ṽ⁻¹ν. Explicit Euler steps with rejection-based adaptive dt.

use crate::ambient::SpacetimeSpec;
use crate::expr::{EvalEnv, Expr, Var};
use crate::graphgeo::{admissibility, build_cache, GeometryCache, GraphError, GraphState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("state is not admissible: min H(κ̃) = {margin_h}, min H₂(κ̃) = {margin_h2}")]
    NotAdmissible { margin_h: f64, margin_h2: f64 },
    #[error("right-hand side evaluation failed: {0}")]
    Eval(String),
    #[error("right-hand side non-positive ({value}) at grid index {index}")]
    NonPositiveRhs { index: usize, value: f64 },
    #[error("invalid flow configuration: {0}")]
    Invalid(String),
}

/// Cutoff θ: identity on [0, k], constant 2k on [2k, ∞), C¹ monotone cubic in
/// between with endpoint slopes 1 and 0.
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec {
    k: f64,
}

impl CutoffSpec {
    pub fn new(k: f64) -> Result<Self, FlowError> {
        if !(k > 1.0) && k.is_finite() {
            return Err(FlowError::Invalid(format!("cutoff threshold must be > 1, got {k}")));
        }
        if !k.is_finite() {
            return Err(FlowError::Invalid("cutoff threshold must be finite".into()));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn theta(&self, t: f64) -> f64 {
        let k = self.k;
        if t <= k {
            t
        } else if t >= 2.0 * k {
            2.0 * k
        } else {
            // Hermite cubic with values (k, 2k) and slopes (1, 0) on [k, 2k]
            let s = (t - k) / k;
            k * (-s * s * s + s * s + s + 1.0)
        }
    }

    pub fn theta_prime(&self, t: f64) -> f64 {
        let k = self.k;
        if t <= k {
            1.0
        } else if t >= 2.0 * k {
            0.0
        } else {
            let s = (t - k) / k;
            -3.0 * s * s + 2.0 * s + 1.0
        }
    }
}

/// Prescribed right-hand side f(x, ν) ≥ c₁ > 0; ν enters only through the
/// tilt variable vt = ṽ (after the cutoff). c₂, c₃ are declared growth
/// constants, recorded and spot-sampled only.
#[derive(Debug, Clone)]
pub struct PrescribedF {
    pub expr: Expr,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl PrescribedF {
    pub fn new(expr: Expr, c1: f64, c2: f64, c3: f64) -> Result<Self, FlowError> {
        if !(c1 > 0.0) {
            return Err(FlowError::Invalid(format!("c1 must be > 0, got {c1}")));
        }
        if !(c2 >= 0.0) || !(c3 >= 0.0) {
            return Err(FlowError::Invalid("c2 and c3 must be >= 0".into()));
        }
        Ok(Self { expr, c1, c2, c3 })
    }

    pub fn eval(&self, x0: f64, x: [f64; 3], vt: f64) -> Result<f64, FlowError> {
        let env = EvalEnv { x0, x, vt };
        self.expr
            .eval(&env)
            .map_err(|e| FlowError::Eval(e.to_string()))
    }

    pub fn uses_tilt(&self) -> bool {
        self.expr.uses(Var::Vt)
    }

    /// Spot-check f ≥ c₁ on random domain points and tilt values in [1, 4k].
    pub fn validate_positivity(
        &self,
        spec: &SpacetimeSpec,
        cutoff: &CutoffSpec,
        samples: usize,
        seed: u64,
    ) -> Result<(), FlowError> {
        let (a, b) = spec.time_interval();
        let period = spec.spatial_period();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let x0 = rng.gen_range(a..b);
            let mut x = [0.0; 3];
            for xi in x.iter_mut().take(spec.n()) {
                *xi = rng.gen_range(0.0..period);
            }
            let vt = rng.gen_range(1.0..4.0 * cutoff.k());
            let value = self.eval(x0, x, cutoff.theta(vt))?;
            if !(value >= self.c1) {
                return Err(FlowError::Invalid(format!(
                    "f = {value} < c1 = {} at x0 = {x0}, x = {x:?}, vt = {vt}",
                    self.c1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub eps: f64,
    /// stop when sup|F_ε − f̃| drops below this
    pub tol_flow: f64,
    pub dt_init: f64,
    /// fraction of Δx allowed for max|Δu| in one step
    pub dt_safety: f64,
    pub dt_growth: f64,
    pub dt_min: f64,
    pub max_steps: usize,
    pub cutoff: CutoffSpec,
}

impl FlowConfig {
    pub fn new(eps: f64) -> Result<Self, FlowError> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(FlowError::Invalid(format!("eps must be finite and >= 0, got {eps}")));
        }
        Ok(Self {
            eps,
            tol_flow: 5e-3,
            dt_init: 1e-4,
            dt_safety: 0.2,
            dt_growth: 1.3,
            dt_min: 1e-12,
            max_steps: 400_000,
            cutoff: CutoffSpec::new(10.0)?,
        })
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.tol_flow > 0.0) {
            return Err(FlowError::Invalid("tol_flow must be > 0".into()));
        }
        if !(self.dt_init > 0.0 && self.dt_min > 0.0 && self.dt_growth > 1.0) {
            return Err(FlowError::Invalid(
                "dt_init, dt_min must be > 0 and dt_growth > 1".into(),
            ));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety < 1.0) {
            return Err(FlowError::Invalid("dt_safety must be in (0, 1)".into()));
        }
        if self.max_steps == 0 {
            return Err(FlowError::Invalid("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One accepted step in the trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub res_sup: f64,
    pub res_min: f64,
    pub vt_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub margin_h: f64,
    pub margin_h2: f64,
    /// rejections since the previous accepted step
    pub rejects: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    /// dt fell below the minimum floor; the flow cannot proceed
    StepCollapse,
}

/// Soft invariant monitors, counted over accepted steps.
#[derive(Debug, Clone, Default)]
pub struct MonitorReport {
    /// accepted steps where some point moved up by more than 1e−12
    pub monotone_violations: usize,
    /// accepted steps leaving [u1 − 1e−8, u2 + 1e−8] (when bounds given)
    pub barrier_violations: usize,
    /// accepted steps with min(F_ε − f̃) < −tol_flow
    pub sign_violations: usize,
    pub vt_max_initial: f64,
    pub vt_max_run: f64,
}

#[derive(Debug)]
pub struct FlowResult {
    pub state: GraphState,
    pub trace: FlowTrace,
    pub status: FlowStatus,
    pub monitor: MonitorReport,
    pub final_res_sup: f64,
}

struct FieldEval {
    velocity: Vec<f64>,
    res_sup: f64,
    res_min: f64,
}

fn evaluate_fields(
    cache: &GeometryCache,
    f: &PrescribedF,
    cutoff: &CutoffSpec,
) -> Result<FieldEval, FlowError> {
    let rep = admissibility(cache);
    if !rep.admissible {
        return Err(FlowError::NotAdmissible {
            margin_h: rep.margin_h,
            margin_h2: rep.margin_h2,
        });
    }
    let mut velocity = Vec::with_capacity(cache.points.len());
    let mut res_sup = 0.0f64;
    let mut res_min = f64::INFINITY;
    for (index, q) in cache.points.iter().enumerate() {
        let vt_eff = cutoff.theta(q.vt);
        let fval = f.eval(q.u, q.x, vt_eff)?;
        if !(fval > 0.0) {
            return Err(FlowError::NonPositiveRhs {
                index,
                value: fval,
            });
        }
        let res = q.f_eps - fval.sqrt();
        res_sup = res_sup.max(res.abs());
        res_min = res_min.min(res);
        velocity.push(-(-q.psi).exp() * q.v * res);
    }
    Ok(FieldEval {
        velocity,
        res_sup,
        res_min,
    })
}

/// −e^{−ψ} v (F_ε − f̃) per grid point.
pub fn velocity_field(
    state: &GraphState,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cfg: &FlowConfig,
) -> Result<Vec<f64>, FlowError> {
    let cache = build_cache(state, spec, cfg.eps)?;
    Ok(evaluate_fields(&cache, f, &cfg.cutoff)?.velocity)
}

/// Pointwise bounds used by the barrier-containment monitor.
pub struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

/// Run the flow from `initial` until sup|F_ε − f̃| ≤ tol_flow, max_steps, or
/// step collapse. Step acceptance: new state space-like, admissible, and
/// sup-residual grew by at most 1.5×; rejected steps halve dt; 10 consecutive
/// acceptances grow it; dt is capped so max|Δu| ≤ dt_safety·Δx.
pub fn run_flow(
    initial: &GraphState,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cfg: &FlowConfig,
    bounds: Option<Bounds<'_>>,
) -> Result<FlowResult, FlowError> {
    cfg.validate()?;
    let dx = initial.grid.spacing();
    let mut state = initial.clone();
    let mut cache = build_cache(&state, spec, cfg.eps)?;
    let mut fields = evaluate_fields(&cache, f, &cfg.cutoff)?;
    let vt_max_initial = cache
        .points
        .iter()
        .map(|q| q.vt)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut monitor = MonitorReport {
        vt_max_initial,
        vt_max_run: vt_max_initial,
        ..MonitorReport::default()
    };
    let mut trace = FlowTrace::default();
    let mut t = 0.0;
    let mut dt = cfg.dt_init;
    let mut accept_streak = 0usize;
    let mut rejects_since = 0usize;
    let mut status = FlowStatus::MaxSteps;

    if fields.res_sup <= cfg.tol_flow {
        return Ok(FlowResult {
            state,
            trace,
            status: FlowStatus::Converged,
            monitor,
            final_res_sup: fields.res_sup,
        });
    }

    let mut step = 0usize;
    while step < cfg.max_steps {
        let vmax = fields
            .velocity
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if vmax > 0.0 {
            dt = dt.min(cfg.dt_safety * dx / vmax);
        }
        if dt < cfg.dt_min {
            status = FlowStatus::StepCollapse;
            break;
        }
        let trial_u: Vec<f64> = state
            .u
            .iter()
            .zip(&fields.velocity)
            .map(|(&u, &v)| u + dt * v)
            .collect();
        let trial_state = match GraphState::new(state.grid, trial_u) {
            Ok(s) => s,
            Err(_) => {
                dt *= 0.5;
                rejects_since += 1;
                accept_streak = 0;
                continue;
            }
        };
        let accept = build_cache(&trial_state, spec, cfg.eps)
            .ok()
            .and_then(|c| {
                evaluate_fields(&c, f, &cfg.cutoff)
                    .ok()
                    .map(|fe| (c, fe))
            })
            .filter(|(_, fe)| fe.res_sup <= 1.5 * fields.res_sup + 1e-14);
        match accept {
            None => {
                dt *= 0.5;
                rejects_since += 1;
                accept_streak = 0;
                if dt < cfg.dt_min {
                    status = FlowStatus::StepCollapse;
                    break;
                }
            }
            Some((trial_cache, trial_fields)) => {
                step += 1;
                t += dt;
                // soft monitors
                if state
                    .u
                    .iter()
                    .zip(&trial_state.u)
                    .any(|(&old, &new)| new > old + 1e-12)
                {
                    monitor.monotone_violations += 1;
                }
                if let Some(b) = &bounds {
                    let violated = trial_state.u.iter().enumerate().any(|(i, &u)| {
                        u < b.lower[i] - 1e-8 || u > b.upper[i] + 1e-8
                    });
                    if violated {
                        monitor.barrier_violations += 1;
                    }
                }
                if trial_fields.res_min < -cfg.tol_flow {
                    monitor.sign_violations += 1;
                }
                let vt_max = trial_cache
                    .points
                    .iter()
                    .map(|q| q.vt)
                    .fold(f64::NEG_INFINITY, f64::max);
                monitor.vt_max_run = monitor.vt_max_run.max(vt_max);
                let rep = admissibility(&trial_cache);
                trace.rows.push(TraceRow {
                    step,
                    t,
                    dt,
                    res_sup: trial_fields.res_sup,
                    res_min: trial_fields.res_min,
                    vt_max,
                    u_min: trial_state.u.iter().cloned().fold(f64::INFINITY, f64::min),
                    u_max: trial_state
                        .u
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max),
                    margin_h: rep.margin_h,
                    margin_h2: rep.margin_h2,
                    rejects: rejects_since,
                });
                state = trial_state;
                cache = trial_cache;
                fields = trial_fields;
                rejects_since = 0;
                accept_streak += 1;
                if accept_streak >= 10 {
                    dt *= cfg.dt_growth;
                    accept_streak = 0;
                }
                if fields.res_sup <= cfg.tol_flow {
                    status = FlowStatus::Converged;
                    break;
                }
            }
        }
    }
    let _ = cache;
    Ok(FlowResult {
        state,
        trace,
        status,
        monitor,
        final_res_sup: fields.res_sup,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MetricEvolutionReport {
    /// max over the grid of ‖Δg/dt − 2(F_ε−f̃)h‖_F / (1 + ‖2(F_ε−f̃)h‖_F),
    /// with the right side averaged between the two states
    pub max_rel_mismatch: f64,
}

/// Compares the discrete metric rate (g(t+dt) − g(t))/dt of two consecutive
/// states against 2(F_ε − f̃)h_ij (trapezoid average). Only the
/// normal-velocity contribution is modeled; tangential reparametrization
/// terms vanish for spatially homogeneous states and enter at O(|Du|).
pub fn metric_evolution_diagnostic(
    prev: &GraphState,
    next: &GraphState,
    dt: f64,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cfg: &FlowConfig,
) -> Result<MetricEvolutionReport, FlowError> {
    if !(dt > 0.0) {
        return Err(FlowError::Invalid(format!("dt must be > 0, got {dt}")));
    }
    let n = prev.grid.n();
    let cache_a = build_cache(prev, spec, cfg.eps)?;
    let cache_b = build_cache(next, spec, cfg.eps)?;
    let rhs_field = |cache: &GeometryCache| -> Result<Vec<[[f64; 3]; 3]>, FlowError> {
        cache
            .points
            .iter()
            .map(|q| {
                let fval = f.eval(q.u, q.x, cfg.cutoff.theta(q.vt))?;
                let res = q.f_eps - fval.max(0.0).sqrt();
                let mut out = [[0.0; 3]; 3];
                for i in 0..n {
                    for j in 0..n {
                        out[i][j] = 2.0 * res * q.h[i][j];
                    }
                }
                Ok(out)
            })
            .collect()
    };
    let rhs_a = rhs_field(&cache_a)?;
    let rhs_b = rhs_field(&cache_b)?;
    let mut worst = 0.0f64;
    for p in 0..cache_a.points.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                let lhs = (cache_b.points[p].g[i][j] - cache_a.points[p].g[i][j]) / dt;
                let rhs = 0.5 * (rhs_a[p][i][j] + rhs_b[p][i][j]);
                num += (lhs - rhs) * (lhs - rhs);
                den += rhs * rhs;
            }
        }
        worst = worst.max(num.sqrt() / (1.0 + den.sqrt()));
    }
    Ok(MetricEvolutionReport {
        max_rel_mismatch: worst,
    })
}
