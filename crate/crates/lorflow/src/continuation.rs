//! Continuation in the regularization parameter: validate the barrier pair,
//! solve the ε-regularized problem for a geometrically decreasing ε schedule
//! with warm starts, and report the unregularized residual of H₂ = f.

use crate::ambient::SpacetimeSpec;
use crate::flow::{
    run_flow, Bounds, CutoffSpec, FlowConfig, FlowError, FlowStatus, FlowTrace, PrescribedF,
};
use crate::graphgeo::{admissibility, build_cache, GraphError, GraphState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("barrier pair invalid: {0}")]
    BarrierInvalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid continuation configuration: {0}")]
    Invalid(String),
}

/// Lower and upper barrier graphs u₁ ≤ u₂ on a common grid.
#[derive(Debug, Clone)]
pub struct BarrierPair {
    pub lower: GraphState,
    pub upper: GraphState,
}

impl BarrierPair {
    pub fn new(lower: GraphState, upper: GraphState) -> Result<Self, SolveError> {
        if lower.grid.n() != upper.grid.n()
            || lower.grid.points_per_axis() != upper.grid.points_per_axis()
            || lower.grid.period() != upper.grid.period()
        {
            return Err(SolveError::BarrierInvalid(
                "barriers live on different grids".into(),
            ));
        }
        for (i, (&a, &b)) in lower.u.iter().zip(&upper.u).enumerate() {
            if a > b {
                return Err(SolveError::BarrierInvalid(format!(
                    "u1 > u2 at grid index {i}: {a} > {b}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }
}

#[derive(Debug, Clone)]
pub struct BarrierReport {
    pub pass: bool,
    /// min over the upper barrier of F_ε − f̃ (must be ≥ 0)
    pub upper_margin: f64,
    /// min over the admissible subset Σ of the lower barrier of f̃ − F_ε;
    /// None when Σ is empty (vacuously fine)
    pub lower_margin: Option<f64>,
    pub warnings: Vec<String>,
}

/// Checks that graph u₂ is admissible with F_ε ≥ f̃ everywhere and that
/// F_ε ≤ f̃ on the admissible subset of graph u₁.
pub fn validate_barriers(
    pair: &BarrierPair,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cutoff: &CutoffSpec,
    eps: f64,
) -> Result<BarrierReport, SolveError> {
    let mut warnings = Vec::new();
    let mut pass = true;

    let upper_cache = build_cache(&pair.upper, spec, eps)?;
    let upper_adm = admissibility(&upper_cache);
    if !upper_adm.admissible {
        return Ok(BarrierReport {
            pass: false,
            upper_margin: f64::NEG_INFINITY,
            lower_margin: None,
            warnings: vec![format!(
                "upper barrier not admissible: min H(κ̃) = {}, min H₂(κ̃) = {}",
                upper_adm.margin_h, upper_adm.margin_h2
            )],
        });
    }
    let mut upper_margin = f64::INFINITY;
    for q in &upper_cache.points {
        let fval = f
            .eval(q.u, q.x, cutoff.theta(q.vt))
            .map_err(SolveError::Flow)?;
        if !(fval > 0.0) {
            return Err(SolveError::BarrierInvalid(format!(
                "prescribed f non-positive ({fval}) on the upper barrier"
            )));
        }
        upper_margin = upper_margin.min(q.f_eps - fval.sqrt());
    }
    if upper_margin < 0.0 {
        pass = false;
        warnings.push(format!(
            "upper barrier violates F_ε ≥ f̃ by {upper_margin}"
        ));
    } else if upper_margin < 1e-10 {
        warnings.push(format!(
            "upper barrier margin {upper_margin} is not strictly positive"
        ));
    }

    let lower_cache = build_cache(&pair.lower, spec, eps)?;
    let mut lower_margin: Option<f64> = None;
    for q in &lower_cache.points {
        // Σ: points where the regularized spectrum is admissible
        if !(q.h_reg > 0.0 && q.h2_reg > 0.0) {
            continue;
        }
        let fval = f
            .eval(q.u, q.x, cutoff.theta(q.vt))
            .map_err(SolveError::Flow)?;
        if !(fval > 0.0) {
            return Err(SolveError::BarrierInvalid(format!(
                "prescribed f non-positive ({fval}) on the lower barrier"
            )));
        }
        let m = fval.sqrt() - q.f_eps;
        lower_margin = Some(lower_margin.map_or(m, |acc: f64| acc.min(m)));
    }
    if let Some(m) = lower_margin {
        if m < 0.0 {
            pass = false;
            warnings.push(format!(
                "lower barrier violates F_ε ≤ f̃ on its admissible set by {m}"
            ));
        } else if m < 1e-10 {
            warnings.push(format!(
                "lower barrier margin {m} is not strictly positive"
            ));
        }
    }

    Ok(BarrierReport {
        pass,
        upper_margin,
        lower_margin,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    pub eps0: f64,
    pub rho: f64,
    pub eps_min: f64,
    /// template flow configuration; its eps field is overwritten per stage
    pub flow: FlowConfig,
}

impl ContinuationConfig {
    pub fn new(flow: FlowConfig) -> Self {
        Self {
            eps0: 0.1,
            rho: 0.3,
            eps_min: 1e-3,
            flow,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.eps0 > 0.0 && self.eps_min > 0.0 && self.eps0 >= self.eps_min) {
            return Err(SolveError::Invalid(format!(
                "need eps0 >= eps_min > 0, got eps0 = {}, eps_min = {}",
                self.eps0, self.eps_min
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(SolveError::Invalid(format!(
                "rho must be in (0, 1), got {}",
                self.rho
            )));
        }
        self.flow.validate().map_err(SolveError::Flow)
    }

    /// Strictly decreasing ε values, ending exactly at eps_min.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut e = self.eps0;
        while e > self.eps_min {
            out.push(e);
            e *= self.rho;
        }
        out.push(self.eps_min);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpsRecord {
    pub eps: f64,
    pub converged: bool,
    pub steps: usize,
    /// final sup|F_ε − f̃| of the stage
    pub res_sup: f64,
    pub vt_max: f64,
    pub margin_h: f64,
    pub margin_h2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// a stage ended without reaching tol_flow (max steps or step collapse)
    StageFailed {
        stage: usize,
        flow_status: FlowStatus,
    },
}

#[derive(Debug)]
pub struct SolveReport {
    pub records: Vec<EpsRecord>,
    pub traces: Vec<FlowTrace>,
    pub final_state: GraphState,
    /// sup|H₂(κ) − f| at ε = 0
    pub final_residual: f64,
    pub status: SolveStatus,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

/// Unregularized residual sup|H₂(κ) − f(x, ν̃)| of a state.
pub fn unregularized_residual(
    state: &GraphState,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cutoff: &CutoffSpec,
) -> Result<f64, SolveError> {
    let cache = build_cache(state, spec, 0.0)?;
    let mut sup = 0.0f64;
    for q in &cache.points {
        let fval = f
            .eval(q.u, q.x, cutoff.theta(q.vt))
            .map_err(SolveError::Flow)?;
        sup = sup.max((q.h2_reg - fval).abs());
    }
    Ok(sup)
}

/// Full continuation solve: barriers validated at ε₀, then one flow per ε in
/// the schedule, the first from the upper barrier and the rest warm-started.
pub fn solve(
    barriers: &BarrierPair,
    spec: &SpacetimeSpec,
    f: &PrescribedF,
    cfg: &ContinuationConfig,
) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let barrier_report = validate_barriers(barriers, spec, f, &cfg.flow.cutoff, cfg.eps0)?;
    if !barrier_report.pass {
        return Err(SolveError::BarrierInvalid(
            barrier_report.warnings.join("; "),
        ));
    }
    let mut warnings = barrier_report.warnings;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut state = barriers.upper.clone();
    let mut status = SolveStatus::Converged;
    let mut vt_max_first_stage = f64::NAN;
    for (stage, &eps) in cfg.schedule().iter().enumerate() {
        let mut flow_cfg = cfg.flow.clone();
        flow_cfg.eps = eps;
        let out = run_flow(
            &state,
            spec,
            f,
            &flow_cfg,
            Some(Bounds {
                lower: &barriers.lower.u,
                upper: &barriers.upper.u,
            }),
        )?;
        let final_cache = build_cache(&out.state, spec, eps)?;
        let margins = admissibility(&final_cache);
        let (margin_h, margin_h2) = (margins.margin_h, margins.margin_h2);
        let vt_max = out.monitor.vt_max_run;
        if stage == 0 {
            vt_max_first_stage = vt_max;
        } else if vt_max > 2.0 * vt_max_first_stage {
            warnings.push(format!(
                "tilt grew across stages: max ṽ = {vt_max} at ε = {eps} vs {vt_max_first_stage} at ε₀"
            ));
        }
        records.push(EpsRecord {
            eps,
            converged: out.status == FlowStatus::Converged,
            steps: out.trace.rows.len(),
            res_sup: out.final_res_sup,
            vt_max,
            margin_h,
            margin_h2,
        });
        traces.push(out.trace);
        state = out.state;
        if out.status != FlowStatus::Converged {
            status = SolveStatus::StageFailed {
                stage,
                flow_status: out.status,
            };
            break;
        }
    }

    let final_residual = unregularized_residual(&state, spec, f, &cfg.flow.cutoff)?;
    Ok(SolveReport {
        records,
        traces,
        final_state: state,
        final_residual,
        status,
        wall_seconds: start.elapsed().as_secs_f64(),
        warnings,
    })
}
