//! Discrete geometry of space-like graphs M = {x⁰ = u(x)} over a flat torus:
//! induced metric, past-directed normal, second fundamental form, principal
//! curvatures, and admissibility of the (regularized) curvature spectrum.
//!
//! All derivatives are second-order centered finite differences with periodic
//! wraparound. The second fundamental form comes from the α = 0 component of
//! the Gauss formula in the graph gauge; an independent embedding-based oracle
//! recomputes it from the full Gauss formula for cross-validation.

use crate::ambient::{christoffel_full_fd, christoffel_time_components, AmbientError, SpacetimeSpec};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is not space-like at grid index {index}: |Du|^2 = {slope_sq}")]
    NotSpacelike { index: usize, slope_sq: f64 },
    #[error(transparent)]
    OutOfDomain(#[from] AmbientError),
    #[error("invalid graph state: {0}")]
    Invalid(String),
}

/// Uniform periodic grid over the torus [0, L)ⁿ, n ∈ {2, 3}.
#[derive(Debug, Clone, Copy)]
pub struct TorusGrid {
    n: usize,
    points_per_axis: usize,
    period: f64,
}

impl TorusGrid {
    pub fn new(n: usize, points_per_axis: usize, period: f64) -> Result<Self, GraphError> {
        if n != 2 && n != 3 {
            return Err(GraphError::Invalid(format!(
                "spatial dimension must be 2 or 3, got {n}"
            )));
        }
        if points_per_axis < 8 {
            return Err(GraphError::Invalid(format!(
                "points per axis must be >= 8, got {points_per_axis}"
            )));
        }
        if !(period > 0.0) {
            return Err(GraphError::Invalid(format!("period must be > 0, got {period}")));
        }
        Ok(Self {
            n,
            points_per_axis,
            period,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points_per_axis as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        let mut c = [0usize; 3];
        let mut rest = index;
        for axis in 0..self.n {
            c[axis] = rest % m;
            rest /= m;
        }
        c
    }

    pub fn index(&self, coords: [usize; 3]) -> usize {
        let m = self.points_per_axis;
        let mut idx = 0;
        for axis in (0..self.n).rev() {
            idx = idx * m + coords[axis] % m;
        }
        idx
    }

    /// Flat index of the point shifted by `delta` grid cells along `axis`,
    /// with periodic wraparound.
    pub fn shift(&self, index: usize, axis: usize, delta: isize) -> usize {
        let m = self.points_per_axis as isize;
        let mut c = self.coords(index);
        let shifted = (c[axis] as isize + delta).rem_euclid(m) as usize;
        c[axis] = shifted;
        self.index(c)
    }

    /// Spatial position of a grid point.
    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        let dx = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.n {
            x[axis] = c[axis] as f64 * dx;
        }
        x
    }
}

/// Scalar field u on the grid; the hypersurface is the graph {x⁰ = u(x)}.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub grid: TorusGrid,
    pub u: Vec<f64>,
}

impl GraphState {
    pub fn new(grid: TorusGrid, u: Vec<f64>) -> Result<Self, GraphError> {
        if u.len() != grid.len() {
            return Err(GraphError::Invalid(format!(
                "field length {} does not match grid size {}",
                u.len(),
                grid.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::Invalid("field contains non-finite values".into()));
        }
        Ok(Self { grid, u })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Result<Self, GraphError> {
        let len = grid.len();
        Self::new(grid, vec![c; len])
    }

    /// Evaluate a function of position into a new state on the same grid.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 3]) -> f64) -> Result<Self, GraphError> {
        let u: Vec<f64> = (0..grid.len()).map(|p| f(grid.position(p))).collect();
        Self::new(grid, u)
    }
}

/// Everything the flow needs at one grid point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub x: [f64; 3],
    pub u: f64,
    pub psi: f64,
    /// first differences u_i
    pub du: [f64; 3],
    /// v = (1 − σ^{ij}u_iu_j)^{1/2} ∈ (0, 1]
    pub v: f64,
    /// tilt ṽ = v⁻¹ ≥ 1
    pub vt: f64,
    pub g: [[f64; 3]; 3],
    pub ginv: [[f64; 3]; 3],
    /// induced Christoffels Γ^k_ij from finite differences of the g field
    pub gamma: [[[f64; 3]; 3]; 3],
    pub h: [[f64; 3]; 3],
    /// past-directed contravariant unit normal ν^α
    pub nu: [f64; 4],
    /// principal curvatures, ascending
    pub kappa: [f64; 3],
    /// regularized spectrum κ̃ = κ + εH, ascending
    pub kappa_reg: [f64; 3],
    /// H(κ̃)
    pub h_reg: f64,
    /// H₂(κ̃)
    pub h2_reg: f64,
    /// F_ε = (H₂(κ̃))^{1/2}; NaN when κ̃ ∉ Γ₂
    pub f_eps: f64,
}

#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub grid: TorusGrid,
    pub eps: f64,
    pub points: Vec<PointGeometry>,
    /// grid minimum of H(κ̃)
    pub margin_h: f64,
    /// grid minimum of H₂(κ̃)
    pub margin_h2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub margin_h: f64,
    pub margin_h2: f64,
}

/// Slope beyond which a state is rejected as effectively null (v⁻¹ blow-up).
const SPACELIKE_GUARD: f64 = 1.0 - 1e-6;

struct PointBase {
    x: [f64; 3],
    u: f64,
    psi: f64,
    du: [f64; 3],
    v: f64,
    vt: f64,
    g: [[f64; 3]; 3],
    ginv: [[f64; 3]; 3],
    nu: [f64; 4],
}

fn first_base_pass(
    state: &GraphState,
    spec: &SpacetimeSpec,
) -> Result<Vec<PointBase>, GraphError> {
    let grid = state.grid;
    let n = grid.n();
    let dx = grid.spacing();
    let sigma = *spec.sigma();
    let sigma_inv = *spec.sigma_inv();
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let u0 = state.u[p];
            spec.check_domain(u0)?;
            let x = grid.position(p);
            let mut du = [0.0; 3];
            for axis in 0..n {
                let up = state.u[grid.shift(p, axis, 1)];
                let um = state.u[grid.shift(p, axis, -1)];
                du[axis] = (up - um) / (2.0 * dx);
            }
            let mut slope_sq = 0.0;
            let mut du_up = [0.0; 3];
            for i in 0..n {
                for j in 0..n {
                    slope_sq += sigma_inv[i][j] * du[i] * du[j];
                    du_up[i] += sigma_inv[i][j] * du[j];
                }
            }
            if slope_sq >= SPACELIKE_GUARD {
                return Err(GraphError::NotSpacelike {
                    index: p,
                    slope_sq,
                });
            }
            let v = (1.0 - slope_sq).sqrt();
            let vt = 1.0 / v;
            let psi = spec.psi(u0, x)?;
            let conf = (2.0 * psi).exp();
            let mut g = [[0.0; 3]; 3];
            let mut ginv = [[0.0; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    g[i][j] = conf * (sigma[i][j] - du[i] * du[j]);
                    ginv[i][j] = (sigma_inv[i][j] + du_up[i] * du_up[j] / (v * v)) / conf;
                }
            }
            let amp = -vt * (-psi).exp();
            let mut nu = [amp, 0.0, 0.0, 0.0];
            for i in 0..n {
                nu[i + 1] = amp * du_up[i];
            }
            Ok(PointBase {
                x,
                u: u0,
                psi,
                du,
                v,
                vt,
                g,
                ginv,
                nu,
            })
        })
        .collect()
}

/// Principal curvatures of (g, h): eigenvalues of g^{ik}h_kj, ascending.
/// n = 2 uses the closed-form quadratic; n = 3 reduces via Cholesky of g.
fn principal_curvatures(n: usize, g: &[[f64; 3]; 3], h: &[[f64; 3]; 3]) -> [f64; 3] {
    if n == 2 {
        // reduce to the standard symmetric problem via Cholesky of g, then use
        // the cancellation-free 2×2 formula mid ± √(dif² + off²); the raw
        // characteristic-polynomial discriminant loses √ε accuracy on
        // near-umbilic points
        let l00 = g[0][0].max(1e-300).sqrt();
        let l10 = g[1][0] / l00;
        let l11 = (g[1][1] - l10 * l10).max(1e-300).sqrt();
        // Y = L⁻¹ h
        let y00 = h[0][0] / l00;
        let y01 = h[0][1] / l00;
        let y10 = (h[1][0] - l10 * y00) / l11;
        let y11 = (h[1][1] - l10 * y01) / l11;
        // B = Y L⁻ᵀ
        let b00 = y00 / l00;
        let b01 = (y01 - b00 * l10) / l11;
        let b10 = y10 / l00;
        let b11 = (y11 - b10 * l10) / l11;
        let off = 0.5 * (b01 + b10);
        let mid = 0.5 * (b00 + b11);
        let dif = 0.5 * (b00 - b11);
        let rad = (dif * dif + off * off).sqrt();
        [mid - rad, mid + rad, 0.0]
    } else {
        // Cholesky g = LLᵀ, then eigenvalues of L⁻¹ h L⁻ᵀ
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = g[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][i] = s.max(1e-300).sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        // forward solve L y = h (column-wise), then L z = yᵀ
        let mut y = [[0.0; 3]; 3];
        for col in 0..3 {
            for i in 0..3 {
                let mut s = h[i][col];
                for k in 0..i {
                    s -= l[i][k] * y[k][col];
                }
                y[i][col] = s / l[i][i];
            }
        }
        let mut b = [[0.0; 3]; 3];
        for col in 0..3 {
            for i in 0..3 {
                let mut s = y[col][i];
                for k in 0..i {
                    s -= l[i][k] * b[k][col];
                }
                b[i][col] = s / l[i][i];
            }
        }
        let m = [
            [b[0][0], 0.5 * (b[0][1] + b[1][0]), 0.5 * (b[0][2] + b[2][0])],
            [0.5 * (b[0][1] + b[1][0]), b[1][1], 0.5 * (b[1][2] + b[2][1])],
            [0.5 * (b[0][2] + b[2][0]), 0.5 * (b[1][2] + b[2][1]), b[2][2]],
        ];
        let mut out = jacobi_eigenvalues3(m);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

/// Eigenvalues of a symmetric 3×3 matrix by cyclic Jacobi rotations, accurate
/// to machine precision (the closed-form trigonometric solve loses ~√ε).
fn jacobi_eigenvalues3(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-15 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq.abs() < 1e-300 * scale {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let r = 3 - p - q; // remaining index
            let (app, aqq, apr, aqr) = (a[p][p], a[q][q], a[p][r], a[q][r]);
            a[p][p] = app - t * apq;
            a[q][q] = aqq + t * apq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            a[p][r] = c * apr - s * aqr;
            a[r][p] = a[p][r];
            a[q][r] = s * apr + c * aqr;
            a[r][q] = a[q][r];
        }
    }
    [a[0][0], a[1][1], a[2][2]]
}

/// Build the full geometry cache of a space-like graph, including the
/// regularized spectrum κ̃ = κ + εH and the operator value F_ε = √H₂(κ̃).
pub fn build_cache(
    state: &GraphState,
    spec: &SpacetimeSpec,
    eps: f64,
) -> Result<GeometryCache, GraphError> {
    if state.grid.n() != spec.n() {
        return Err(GraphError::Invalid(format!(
            "grid dimension {} does not match spacetime dimension {}",
            state.grid.n(),
            spec.n()
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(GraphError::Invalid(format!("eps must be finite and >= 0, got {eps}")));
    }
    let grid = state.grid;
    let n = grid.n();
    let dx = grid.spacing();
    let base = first_base_pass(state, spec)?;
    let points: Vec<PointGeometry> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let b = &base[p];
            // ∂_c g_ab by centered differences of the assembled metric field
            let mut dg = [[[0.0; 3]; 3]; 3];
            for c in 0..n {
                let gp = &base[grid.shift(p, c, 1)].g;
                let gm = &base[grid.shift(p, c, -1)].g;
                for a in 0..n {
                    for bb in 0..n {
                        dg[c][a][bb] = (gp[a][bb] - gm[a][bb]) / (2.0 * dx);
                    }
                }
            }
            let mut gamma = [[[0.0; 3]; 3]; 3];
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += b.ginv[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                        }
                        gamma[k][i][j] = 0.5 * s;
                    }
                }
            }
            // plain second partials of u
            let mut upartial = [[0.0; 3]; 3];
            for i in 0..n {
                let upp = state.u[grid.shift(p, i, 1)];
                let umm = state.u[grid.shift(p, i, -1)];
                upartial[i][i] = (upp - 2.0 * state.u[p] + umm) / (dx * dx);
                for j in (i + 1)..n {
                    let pp = state.u[grid.shift(grid.shift(p, i, 1), j, 1)];
                    let pm = state.u[grid.shift(grid.shift(p, i, 1), j, -1)];
                    let mp = state.u[grid.shift(grid.shift(p, i, -1), j, 1)];
                    let mm = state.u[grid.shift(grid.shift(p, i, -1), j, -1)];
                    let val = (pp - pm - mp + mm) / (4.0 * dx * dx);
                    upartial[i][j] = val;
                    upartial[j][i] = val;
                }
            }
            let tc = christoffel_time_components(spec, b.u, b.x).map_err(GraphError::from)?;
            let scale = b.v * b.psi.exp();
            let mut h = [[0.0; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    let mut ucov = upartial[i][j];
                    for k in 0..n {
                        ucov -= gamma[k][i][j] * b.du[k];
                    }
                    let rhs = -ucov
                        - tc.g000 * b.du[i] * b.du[j]
                        - tc.g0i0[j] * b.du[i]
                        - tc.g0i0[i] * b.du[j]
                        - tc.g0ij[i][j];
                    h[i][j] = scale * rhs;
                }
            }
            let kappa = principal_curvatures(n, &b.g, &h);
            let mean: f64 = kappa[..n].iter().sum();
            let mut kappa_reg = [0.0; 3];
            for i in 0..n {
                kappa_reg[i] = kappa[i] + eps * mean;
            }
            let h_reg: f64 = kappa_reg[..n].iter().sum();
            let norm_sq: f64 = kappa_reg[..n].iter().map(|k| k * k).sum();
            let h2_reg = 0.5 * (h_reg * h_reg - norm_sq);
            let f_eps = if h_reg > 0.0 && h2_reg > 0.0 {
                h2_reg.sqrt()
            } else {
                f64::NAN
            };
            Ok(PointGeometry {
                x: b.x,
                u: b.u,
                psi: b.psi,
                du: b.du,
                v: b.v,
                vt: b.vt,
                g: b.g,
                ginv: b.ginv,
                gamma,
                h,
                nu: b.nu,
                kappa,
                kappa_reg,
                h_reg,
                h2_reg,
                f_eps,
            })
        })
        .collect::<Result<_, GraphError>>()?;
    let margin_h = points.iter().map(|q| q.h_reg).fold(f64::INFINITY, f64::min);
    let margin_h2 = points.iter().map(|q| q.h2_reg).fold(f64::INFINITY, f64::min);
    Ok(GeometryCache {
        grid,
        eps,
        points,
        margin_h,
        margin_h2,
    })
}

/// κ̃ ∈ Γ₂ everywhere?
pub fn admissibility(cache: &GeometryCache) -> AdmissibilityReport {
    AdmissibilityReport {
        admissible: cache.margin_h > 0.0 && cache.margin_h2 > 0.0,
        margin_h: cache.margin_h,
        margin_h2: cache.margin_h2,
    }
}

/// Second fundamental form by the full Gauss formula: contract the second
/// covariant derivatives of the embedding x(ξ) = (u(ξ), ξ) against the
/// covariant past-directed normal, with all ambient Christoffels taken from
/// finite differences of ḡ. Independent of the graph-gauge formula used in
/// `build_cache`.
pub fn embedding_oracle_h(
    state: &GraphState,
    spec: &SpacetimeSpec,
) -> Result<Vec<[[f64; 3]; 3]>, GraphError> {
    let grid = state.grid;
    let n = grid.n();
    let dx = grid.spacing();
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let u0 = state.u[p];
            spec.check_domain(u0)?;
            let x = grid.position(p);
            let mut du = [0.0; 3];
            for axis in 0..n {
                du[axis] = (state.u[grid.shift(p, axis, 1)] - state.u[grid.shift(p, axis, -1)])
                    / (2.0 * dx);
            }
            let sigma_inv = spec.sigma_inv();
            let mut slope_sq = 0.0;
            for i in 0..n {
                for j in 0..n {
                    slope_sq += sigma_inv[i][j] * du[i] * du[j];
                }
            }
            if slope_sq >= SPACELIKE_GUARD {
                return Err(GraphError::NotSpacelike {
                    index: p,
                    slope_sq,
                });
            }
            let v = (1.0 - slope_sq).sqrt();
            let psi = spec.psi(u0, x)?;
            // covariant past-directed normal ν_α = v⁻¹e^{ψ}(1, −u_i)
            let amp = psi.exp() / v;
            let mut nu_low = [amp, 0.0, 0.0, 0.0];
            for i in 0..n {
                nu_low[i + 1] = -amp * du[i];
            }
            // tangents x^α_i: time row = u_i, spatial block = identity
            let mut tangent = [[0.0; 4]; 3];
            for i in 0..n {
                tangent[i][0] = du[i];
                tangent[i][i + 1] = 1.0;
            }
            let gam = christoffel_full_fd(spec, u0, x, 1e-5 * (1.0 + u0.abs()))
                .map_err(GraphError::from)?;
            // plain second partials of the embedding: only the time component
            // is nonzero
            let mut upartial = [[0.0; 3]; 3];
            for i in 0..n {
                let upp = state.u[grid.shift(p, i, 1)];
                let umm = state.u[grid.shift(p, i, -1)];
                upartial[i][i] = (upp - 2.0 * state.u[p] + umm) / (dx * dx);
                for j in (i + 1)..n {
                    let pp = state.u[grid.shift(grid.shift(p, i, 1), j, 1)];
                    let pm = state.u[grid.shift(grid.shift(p, i, 1), j, -1)];
                    let mp = state.u[grid.shift(grid.shift(p, i, -1), j, 1)];
                    let mm = state.u[grid.shift(grid.shift(p, i, -1), j, -1)];
                    let val = (pp - pm - mp + mm) / (4.0 * dx * dx);
                    upartial[i][j] = val;
                    upartial[j][i] = val;
                }
            }
            // h_ij = −ν_α (x^α_{,ij} + Γ̄^α_{βγ} x^β_i x^γ_j); the induced
            // Christoffel part of the covariant Hessian is tangential and
            // drops out under the contraction with ν.
            let mut h = [[0.0; 3]; 3];
            let dim = n + 1;
            for i in 0..n {
                for j in 0..n {
                    let mut s = nu_low[0] * upartial[i][j];
                    for alpha in 0..dim {
                        let mut amb = 0.0;
                        for beta in 0..dim {
                            for gamma in 0..dim {
                                amb += gam[alpha][beta][gamma] * tangent[i][beta] * tangent[j][gamma];
                            }
                        }
                        s += nu_low[alpha] * amb;
                    }
                    h[i][j] = -s;
                }
            }
            Ok(h)
        })
        .collect()
}

/// Largest absolute mismatch between finite differences of the normal field
/// and the Weingarten map h_i^k x^α_k, over all grid points and directions.
pub fn weingarten_mismatch(state: &GraphState, spec: &SpacetimeSpec) -> Result<f64, GraphError> {
    let cache = build_cache(state, spec, 0.0)?;
    let grid = state.grid;
    let n = grid.n();
    let dx = grid.spacing();
    let dim = n + 1;
    let mut worst = 0.0f64;
    for p in 0..grid.len() {
        let q = &cache.points[p];
        let gam = christoffel_full_fd(spec, q.u, q.x, 1e-5 * (1.0 + q.u.abs()))?;
        // mixed shape operator h_i^k = h_ij g^{jk}
        let mut hmix = [[0.0; 3]; 3];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    hmix[i][k] += q.h[i][j] * q.ginv[j][k];
                }
            }
        }
        for i in 0..n {
            let nup = &cache.points[grid.shift(p, i, 1)].nu;
            let num = &cache.points[grid.shift(p, i, -1)].nu;
            for alpha in 0..dim {
                let dnu = (nup[alpha] - num[alpha]) / (2.0 * dx);
                // covariant derivative of ν along the tangent direction i
                let mut cov = dnu;
                for beta in 0..dim {
                    let tang_b = if beta == 0 { q.du[i] } else { (beta - 1 == i) as u8 as f64 };
                    for g2 in 0..dim {
                        cov += gam[alpha][beta][g2] * tang_b * q.nu[g2];
                    }
                }
                // Weingarten: ν^α_{;i} = h_i^k x^α_k
                let mut rhs = 0.0;
                for k in 0..n {
                    let tang = if alpha == 0 { q.du[k] } else { (alpha - 1 == k) as u8 as f64 };
                    rhs += hmix[i][k] * tang;
                }
                worst = worst.max((cov - rhs).abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct GaussReport {
    /// max over the grid of |LHS − RHS| / (1 + |RHS|) for the scalar
    /// curvature relation R = −(H² − |A|²) + R̄ + 2R̄_{αβ}ν^αν^β
    pub max_rel_mismatch: f64,
}

/// Ambient Ricci tensor and scalar curvature by nested finite differences of
/// the Christoffel field.
fn ambient_curvature(
    spec: &SpacetimeSpec,
    x0: f64,
    x: [f64; 3],
) -> Result<([[f64; 4]; 4], f64), AmbientError> {
    let dim = spec.n() + 1;
    let inner = 1e-4 * (1.0 + x0.abs());
    let outer = 1e-3 * (1.0 + x0.abs());
    let gamma_at = |axis: usize, offset: f64| -> Result<[[[f64; 4]; 4]; 4], AmbientError> {
        let mut x0s = x0;
        let mut xs = x;
        if axis == 0 {
            x0s += offset;
        } else {
            xs[axis - 1] += offset;
        }
        christoffel_full_fd(spec, x0s, xs, inner)
    };
    let gamma = christoffel_full_fd(spec, x0, x, inner)?;
    let mut dgamma = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..dim {
        let gp = gamma_at(a, outer)?;
        let gm = gamma_at(a, -outer)?;
        for c in 0..dim {
            for d in 0..dim {
                for e in 0..dim {
                    dgamma[a][c][d][e] = (gp[c][d][e] - gm[c][d][e]) / (2.0 * outer);
                }
            }
        }
    }
    // R^c_{d a b} = ∂_a Γ^c_{bd} − ∂_b Γ^c_{ad} + Γ^c_{am}Γ^m_{bd} − Γ^c_{bm}Γ^m_{ad}
    // Ricci: R_{db} = R^a_{d a b}
    let mut ricci = [[0.0; 4]; 4];
    for d in 0..dim {
        for b in 0..dim {
            let mut s = 0.0;
            for a in 0..dim {
                s += dgamma[a][a][b][d] - dgamma[b][a][a][d];
                for m in 0..dim {
                    s += gamma[a][a][m] * gamma[m][b][d] - gamma[a][b][m] * gamma[m][a][d];
                }
            }
            ricci[d][b] = s;
        }
    }
    let g = spec.metric(x0, x)?;
    let conf = -g[0][0];
    let mut ginv = [[0.0; 4]; 4];
    ginv[0][0] = -1.0 / conf;
    for i in 0..spec.n() {
        for j in 0..spec.n() {
            ginv[i + 1][j + 1] = spec.sigma_inv()[i][j] / conf;
        }
    }
    let mut scalar = 0.0;
    for d in 0..dim {
        for b in 0..dim {
            scalar += ginv[d][b] * ricci[d][b];
        }
    }
    Ok((ricci, scalar))
}

/// Checks the scalar curvature relation (contracted Gauss equation) on the
/// graph: intrinsic R of (M, g) by finite differences vs
/// −(H² − |A|²) + R̄ + 2R̄_{αβ}ν^αν^β with ambient terms from nested finite
/// differences of ḡ. Report only; n = 2.
pub fn gauss_equation_diagnostic(
    state: &GraphState,
    spec: &SpacetimeSpec,
) -> Result<GaussReport, GraphError> {
    let n = state.grid.n();
    if n != 2 {
        return Err(GraphError::Invalid("diagnostic is implemented for n = 2 only".into()));
    }
    let cache = build_cache(state, spec, 0.0)?;
    let grid = state.grid;
    let dx = grid.spacing();
    let mismatches: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|p| -> Result<f64, GraphError> {
            let q = &cache.points[p];
            // intrinsic scalar curvature from FD of the Christoffel field
            let mut ricci = [[0.0; 3]; 3];
            for d in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        let gp = &cache.points[grid.shift(p, a, 1)].gamma;
                        let gm = &cache.points[grid.shift(p, a, -1)].gamma;
                        let bp = &cache.points[grid.shift(p, b, 1)].gamma;
                        let bm = &cache.points[grid.shift(p, b, -1)].gamma;
                        s += (gp[a][b][d] - gm[a][b][d]) / (2.0 * dx)
                            - (bp[a][a][d] - bm[a][a][d]) / (2.0 * dx);
                        for m in 0..n {
                            s += q.gamma[a][a][m] * q.gamma[m][b][d]
                                - q.gamma[a][b][m] * q.gamma[m][a][d];
                        }
                    }
                    ricci[d][b] = s;
                }
            }
            let mut intrinsic = 0.0;
            for d in 0..n {
                for b in 0..n {
                    intrinsic += q.ginv[d][b] * ricci[d][b];
                }
            }
            let (amb_ricci, amb_scalar) =
                ambient_curvature(spec, q.u, q.x).map_err(GraphError::from)?;
            let mut ricci_nn = 0.0;
            for alpha in 0..=n {
                for beta in 0..=n {
                    ricci_nn += amb_ricci[alpha][beta] * q.nu[alpha] * q.nu[beta];
                }
            }
            // |A|² in the mixed sense: h_ij h^{ij} = Σκ²
            let mean: f64 = q.kappa[..n].iter().sum();
            let asq: f64 = q.kappa[..n].iter().map(|k| k * k).sum();
            let rhs = -(mean * mean - asq) + amb_scalar + 2.0 * ricci_nn;
            Ok((intrinsic - rhs).abs() / (1.0 + rhs.abs()))
        })
        .collect::<Result<_, GraphError>>()?;
    Ok(GaussReport {
        max_rel_mismatch: mismatches.iter().fold(0.0f64, |a, &b| a.max(b)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{reference_norm, slice_curvature, PsiField};
    use crate::expr::parse_expression;
    use crate::symcone;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn power_law_spec(beta: f64, n: usize) -> SpacetimeSpec {
        SpacetimeSpec::power_law(beta, n, (0.5, 1.5), 1.0).unwrap()
    }

    fn flat_spec(n: usize) -> SpacetimeSpec {
        SpacetimeSpec::new(
            PsiField::Expression(parse_expression("0").unwrap()),
            n,
            {
                let mut m = [[0.0; 3]; 3];
                m[0][0] = 1.0;
                m[1][1] = 1.0;
                m[2][2] = 1.0;
                m
            },
            (-1.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_indexing_round_trip() {
        let grid = TorusGrid::new(3, 8, 2.0).unwrap();
        assert_eq!(grid.len(), 512);
        assert_relative_eq!(grid.spacing(), 0.25);
        for p in 0..grid.len() {
            assert_eq!(grid.index(grid.coords(p)), p);
        }
        // periodic shifts invert each other
        for p in [0, 7, 63, 511] {
            for axis in 0..3 {
                assert_eq!(grid.shift(grid.shift(p, axis, 1), axis, -1), p);
                assert_eq!(grid.shift(p, axis, 8), p);
            }
        }
        assert!(TorusGrid::new(2, 7, 1.0).is_err());
        assert!(TorusGrid::new(4, 8, 1.0).is_err());
        assert!(TorusGrid::new(2, 8, 0.0).is_err());
    }

    #[test]
    fn flat_constant_graph_is_trivial() {
        let grid = TorusGrid::new(2, 16, 1.0).unwrap();
        let state = GraphState::constant(grid, 0.25).unwrap();
        let spec = flat_spec(2);
        let cache = build_cache(&state, &spec, 0.0).unwrap();
        for q in &cache.points {
            assert_relative_eq!(q.v, 1.0);
            assert_relative_eq!(q.vt, 1.0);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(q.h[i][j].abs() < 1e-14);
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(q.g[i][j], expected, epsilon = 1e-14);
                }
            }
            assert!(q.kappa[0].abs() < 1e-14 && q.kappa[1].abs() < 1e-14);
        }
        let rep = admissibility(&cache);
        assert!(!rep.admissible); // κ̃ = 0 sits on the cone boundary
    }

    #[test]
    fn umbilic_slice_curvature_exact() {
        // u ≡ c in the power-law spacetime: κ_i = βc^{β−1} to rounding
        for (beta, c, n) in [(2.0, 1.0, 2), (2.0, 1.2, 2), (1.0, 0.9, 2), (1.5, 1.1, 3)] {
            let spec = power_law_spec(beta, n);
            let grid = TorusGrid::new(n, 8, 1.0).unwrap();
            let state = GraphState::constant(grid, c).unwrap();
            let cache = build_cache(&state, &spec, 0.0).unwrap();
            let expect = beta * c.powf(beta - 1.0);
            assert_relative_eq!(slice_curvature(&spec, c).unwrap(), expect, max_relative = 1e-12);
            for q in &cache.points {
                for i in 0..n {
                    assert_relative_eq!(q.kappa[i], expect, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn umbilic_admissibility_margin_formula() {
        // marginH2 = C(n,2)·κ²·(1+εn)² for u ≡ c
        let beta = 2.0;
        let c = 1.2;
        for (n, pairs) in [(2usize, 1.0f64), (3, 3.0)] {
            let spec = power_law_spec(beta, n);
            let grid = TorusGrid::new(n, 8, 1.0).unwrap();
            let state = GraphState::constant(grid, c).unwrap();
            for eps in [0.0, 0.1, 1.0] {
                let cache = build_cache(&state, &spec, eps).unwrap();
                let rep = admissibility(&cache);
                assert!(rep.admissible);
                let kappa = beta * c.powf(beta - 1.0);
                let expect = pairs * kappa * kappa * (1.0 + eps * n as f64).powi(2);
                assert_relative_eq!(rep.margin_h2, expect, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn cache_invariants_on_wavy_graph() {
        let spec = power_law_spec(2.0, 2);
        let grid = TorusGrid::new(2, 32, 1.0).unwrap();
        let state = GraphState::from_fn(grid, |x| {
            1.0 + 0.1 * (std::f64::consts::TAU * x[0]).sin() + 0.05 * (std::f64::consts::TAU * x[1]).cos()
        })
        .unwrap();
        let cache = build_cache(&state, &spec, 0.05).unwrap();
        for q in &cache.points {
            // g·g⁻¹ = id
            for i in 0..2 {
                for k in 0..2 {
                    let mut s = 0.0;
                    for j in 0..2 {
                        s += q.ginv[i][j] * q.g[j][k];
                    }
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((s - expect).abs() < 1e-10);
                }
            }
            // ṽ² = 1 + e^{2ψ} g^{ij} u_i u_j (Eq. 2.12b form)
            let mut q2 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    q2 += q.ginv[i][j] * q.du[i] * q.du[j];
                }
            }
            let vt_sq = 1.0 + (2.0 * q.psi).exp() * q2;
            assert!((vt_sq - q.vt * q.vt).abs() < 1e-10 * vt_sq);
            // ṽ = η_α ν^α with η = e^ψ(−1, 0, …)
            let tilt = q.psi.exp() * (-q.nu[0]);
            assert!((tilt - q.vt).abs() < 1e-10);
            // normal is unit time-like and past directed
            let gbar00 = -(2.0 * q.psi).exp();
            let mut norm = gbar00 * q.nu[0] * q.nu[0];
            for i in 0..2 {
                for j in 0..2 {
                    norm += -gbar00 * (i == j) as u8 as f64 * q.nu[i + 1] * q.nu[j + 1];
                }
            }
            assert!((norm + 1.0).abs() < 1e-10);
            assert!(q.nu[0] < 0.0);
            // h symmetric
            assert!((q.h[0][1] - q.h[1][0]).abs() < 1e-10);
        }
    }

    #[test]
    fn not_spacelike_rejected() {
        let spec = flat_spec(2);
        let grid = TorusGrid::new(2, 16, 1.0).unwrap();
        // slope ~ 2π·0.5 > 1 in places
        let state = GraphState::from_fn(grid, |x| 0.5 * (std::f64::consts::TAU * x[0]).sin()).unwrap();
        match build_cache(&state, &spec, 0.0) {
            Err(GraphError::NotSpacelike { .. }) => {}
            other => panic!("expected NotSpacelike, got {other:?}"),
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let spec = power_law_spec(2.0, 2);
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let state = GraphState::constant(grid, 3.0).unwrap();
        assert!(matches!(
            build_cache(&state, &spec, 0.0),
            Err(GraphError::OutOfDomain(_))
        ));
    }

    fn oracle_max_error(n_grid: usize) -> f64 {
        let spec = power_law_spec(2.0, 2);
        let grid = TorusGrid::new(2, n_grid, 1.0).unwrap();
        let state =
            GraphState::from_fn(grid, |x| 1.0 + 0.1 * (std::f64::consts::TAU * x[0]).sin()).unwrap();
        let cache = build_cache(&state, &spec, 0.0).unwrap();
        let oracle = embedding_oracle_h(&state, &spec).unwrap();
        let mut worst = 0.0f64;
        for (q, ho) in cache.points.iter().zip(&oracle) {
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max((q.h[i][j] - ho[i][j]).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn embedding_oracle_agrees_and_converges() {
        let e32 = oracle_max_error(32);
        let e64 = oracle_max_error(64);
        let e128 = oracle_max_error(128);
        let order1 = (e32 / e64).log2();
        let order2 = (e64 / e128).log2();
        assert!(
            order1 >= 1.8 && order2 >= 1.8,
            "convergence orders {order1:.2}, {order2:.2} (errors {e32:.3e}, {e64:.3e}, {e128:.3e})"
        );
    }

    #[test]
    fn embedding_oracle_trivial_flat() {
        let spec = flat_spec(2);
        let grid = TorusGrid::new(2, 16, 1.0).unwrap();
        let state = GraphState::constant(grid, 0.1).unwrap();
        let oracle = embedding_oracle_h(&state, &spec).unwrap();
        for h in &oracle {
            for row in h.iter().take(2) {
                for v in row.iter().take(2) {
                    assert!(v.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn embedding_oracle_three_dimensional() {
        let spec = power_law_spec(1.5, 3);
        let run = |m: usize| {
            let grid = TorusGrid::new(3, m, 1.0).unwrap();
            let state = GraphState::from_fn(grid, |x| {
                1.0 + 0.05 * (std::f64::consts::TAU * x[0]).sin()
                    + 0.05 * (std::f64::consts::TAU * (x[1] + x[2])).cos()
            })
            .unwrap();
            let cache = build_cache(&state, &spec, 0.0).unwrap();
            let oracle = embedding_oracle_h(&state, &spec).unwrap();
            let mut worst = 0.0f64;
            for (q, ho) in cache.points.iter().zip(&oracle) {
                for i in 0..3 {
                    for j in 0..3 {
                        worst = worst.max((q.h[i][j] - ho[i][j]).abs());
                    }
                }
            }
            worst
        };
        let e16 = run(16);
        let e32 = run(32);
        assert!(e16 < 0.1, "mismatch {e16}");
        let order = (e16 / e32).log2();
        assert!(order >= 1.5, "order {order:.2} (errors {e16:.3e}, {e32:.3e})");
    }

    #[test]
    fn weingarten_consistency() {
        let spec = power_law_spec(2.0, 2);
        let make = |m: usize| {
            let grid = TorusGrid::new(2, m, 1.0).unwrap();
            let state =
                GraphState::from_fn(grid, |x| 1.0 + 0.1 * (std::f64::consts::TAU * x[0]).sin())
                    .unwrap();
            weingarten_mismatch(&state, &spec).unwrap()
        };
        let e32 = make(32);
        let e64 = make(64);
        assert!(e32 < 0.2, "mismatch {e32}");
        assert!((e32 / e64).log2() > 1.5, "orders {e32:.3e} vs {e64:.3e}");
    }

    #[test]
    fn gauss_equation_holds() {
        // flat case: both sides vanish
        let spec = flat_spec(2);
        let grid = TorusGrid::new(2, 16, 1.0).unwrap();
        let state = GraphState::constant(grid, 0.0).unwrap();
        let rep = gauss_equation_diagnostic(&state, &spec).unwrap();
        assert!(rep.max_rel_mismatch < 1e-6, "flat mismatch {}", rep.max_rel_mismatch);

        // umbilic slice of the β = 1 power law at N = 64
        let spec = power_law_spec(1.0, 2);
        let grid = TorusGrid::new(2, 64, 1.0).unwrap();
        let state = GraphState::constant(grid, 1.0).unwrap();
        let rep = gauss_equation_diagnostic(&state, &spec).unwrap();
        assert!(rep.max_rel_mismatch <= 1e-3, "umbilic mismatch {}", rep.max_rel_mismatch);
    }

    #[test]
    fn gauss_equation_converges_on_wavy_graph() {
        let spec = power_law_spec(2.0, 2);
        let run = |m: usize| {
            let grid = TorusGrid::new(2, m, 1.0).unwrap();
            let state =
                GraphState::from_fn(grid, |x| 1.0 + 0.08 * (std::f64::consts::TAU * x[0]).sin())
                    .unwrap();
            gauss_equation_diagnostic(&state, &spec)
                .unwrap()
                .max_rel_mismatch
        };
        let e32 = run(32);
        let e64 = run(64);
        let order = (e32 / e64).log2();
        assert!(order >= 1.8, "order {order:.2} (errors {e32:.3e}, {e64:.3e})");
    }

    #[test]
    fn tangent_reference_norm_bounded_by_tilt() {
        // unit tangents (w.r.t. g) have reference norm ≤ c·ṽ with a stable c
        let spec = power_law_spec(2.0, 2);
        let grid = TorusGrid::new(2, 32, 1.0).unwrap();
        let state =
            GraphState::from_fn(grid, |x| 1.0 + 0.12 * (std::f64::consts::TAU * x[0]).sin())
                .unwrap();
        let cache = build_cache(&state, &spec, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst_ratio = 0.0f64;
        for q in &cache.points {
            for _ in 0..4 {
                let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let mut norm_g = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        norm_g += q.g[i][j] * xi[i] * xi[j];
                    }
                }
                if norm_g < 1e-12 {
                    continue;
                }
                let scale = norm_g.sqrt();
                // push forward: X^α = x^α_i ξ^i
                let vec = [
                    (q.du[0] * xi[0] + q.du[1] * xi[1]) / scale,
                    xi[0] / scale,
                    xi[1] / scale,
                    0.0,
                ];
                let norm_ref = reference_norm(&spec, q.u, q.x, &vec).unwrap();
                worst_ratio = worst_ratio.max(norm_ref / q.vt);
            }
        }
        assert!(worst_ratio.is_finite() && worst_ratio > 0.0);
        assert!(worst_ratio < 10.0, "ratio {worst_ratio}");
    }

    #[test]
    fn spectrum_matches_symcone_on_random_pairs() {
        // same generalized eigenproblem, two code paths
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2usize, 3] {
            for _ in 0..200 {
                let mut g = [[0.0; 3]; 3];
                let mut h = [[0.0; 3]; 3];
                let mut a = [[0.0; 3]; 3];
                for i in 0..n {
                    for j in 0..n {
                        a[i][j] = rng.gen_range(-1.0..1.0);
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let mut s = if i == j { 0.5 } else { 0.0 };
                        for k in 0..n {
                            s += a[k][i] * a[k][j];
                        }
                        g[i][j] = s;
                        let v = rng.gen_range(-1.0..1.0);
                        h[i][j] += v;
                        h[j][i] += v;
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let v = 0.5 * (h[i][j] + h[j][i]);
                        h[i][j] = v;
                        h[j][i] = v;
                    }
                }
                let ours = principal_curvatures(n, &g, &h);
                let gm = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
                let hm = nalgebra::DMatrix::from_fn(n, n, |i, j| h[i][j]);
                let pair = symcone::ShapePair::new(gm, hm).unwrap();
                let reference = pair.spectrum();
                for i in 0..n {
                    assert_relative_eq!(
                        ours[i],
                        reference.values()[i],
                        max_relative = 1e-8,
                        epsilon = 1e-8
                    );
                }
            }
        }
    }
}
