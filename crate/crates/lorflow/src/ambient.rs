//! Conformally split Lorentzian spacetime over a flat torus:
//! ds² = e^{2ψ}(−dx⁰² + σ_ij dx^i dx^j), with constant spatial metric σ.
//!
//! Supplies the ambient Christoffel components that enter the second
//! fundamental form of a graph, the geometry of coordinate slices, the
//! Riemannian reference metric, and the strictly-convex-function diagnostic.

use crate::expr::{EvalEnv, Expr};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AmbientError {
    #[error("point (x0={0}) outside the time interval [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),
    #[error("invalid spacetime: {0}")]
    Invalid(String),
    #[error("conformal factor evaluation failed: {0}")]
    Eval(String),
}

/// Conformal factor ψ: built-in analytic families or a user expression.
#[derive(Debug, Clone)]
pub enum PsiField {
    /// ψ = −β log x⁰; coordinate slices are umbilic with κ = β(x⁰)^{β−1}.
    PowerLaw { beta: f64 },
    /// Power law plus a localized spatial ripple:
    /// ψ = −β log x⁰ + A·cos(2πx¹/L)·exp(−((x⁰−m)/w)²) with m, w from the
    /// time interval.
    PerturbedPowerLaw {
        beta: f64,
        amplitude: f64,
        center: f64,
        width: f64,
        period: f64,
    },
    /// Arbitrary expression in x0..x3; derivatives by fourth-order central
    /// differences.
    Expression(Expr),
}

/// The spacetime: conformal factor, constant spatial metric, domain box.
#[derive(Debug, Clone)]
pub struct SpacetimeSpec {
    psi: PsiField,
    /// spatial dimension n (2 or 3)
    n: usize,
    sigma: [[f64; 3]; 3],
    sigma_inv: [[f64; 3]; 3],
    time_interval: (f64, f64),
    spatial_period: f64,
}

fn invert_small(n: usize, m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut out = [[0.0; 3]; 3];
    match n {
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            out[0][0] = m[1][1] / det;
            out[1][1] = m[0][0] / det;
            out[0][1] = -m[0][1] / det;
            out[1][0] = -m[1][0] / det;
        }
        3 => {
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            if det.abs() < 1e-300 {
                return None;
            }
            for i in 0..3 {
                for j in 0..3 {
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    let (c, d) = ((j + 1) % 3, (j + 2) % 3);
                    // cofactor transpose
                    out[j][i] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
                }
            }
        }
        _ => return None,
    }
    Some(out)
}

impl SpacetimeSpec {
    pub fn new(
        psi: PsiField,
        n: usize,
        sigma: [[f64; 3]; 3],
        time_interval: (f64, f64),
        spatial_period: f64,
    ) -> Result<Self, AmbientError> {
        if n != 2 && n != 3 {
            return Err(AmbientError::Invalid(format!(
                "spatial dimension must be 2 or 3, got {n}"
            )));
        }
        let (a, b) = time_interval;
        if !(a < b) {
            return Err(AmbientError::Invalid(format!(
                "time interval [{a}, {b}] is empty"
            )));
        }
        if matches!(psi, PsiField::PowerLaw { .. } | PsiField::PerturbedPowerLaw { .. }) && a <= 0.0
        {
            return Err(AmbientError::Invalid(
                "power-law family needs 0 < a < b".into(),
            ));
        }
        if spatial_period <= 0.0 {
            return Err(AmbientError::Invalid("spatial period must be > 0".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if (sigma[i][j] - sigma[j][i]).abs() > 1e-12 {
                    return Err(AmbientError::Invalid("sigma must be symmetric".into()));
                }
            }
        }
        // positive definiteness via leading principal minors
        let d1 = sigma[0][0];
        let d2 = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
        let pd = d1 > 0.0
            && d2 > 0.0
            && (n == 2 || {
                let m = &sigma;
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
                    > 0.0
            });
        if !pd {
            return Err(AmbientError::Invalid("sigma must be positive definite".into()));
        }
        let sigma_inv = invert_small(n, &sigma)
            .ok_or_else(|| AmbientError::Invalid("sigma is singular".into()))?;
        Ok(Self {
            psi,
            n,
            sigma,
            sigma_inv,
            time_interval,
            spatial_period,
        })
    }

    /// Power-law spacetime with identity σ, the workhorse for the golden tests.
    pub fn power_law(
        beta: f64,
        n: usize,
        time_interval: (f64, f64),
        spatial_period: f64,
    ) -> Result<Self, AmbientError> {
        Self::new(
            PsiField::PowerLaw { beta },
            n,
            identity3(),
            time_interval,
            spatial_period,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &[[f64; 3]; 3] {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &[[f64; 3]; 3] {
        &self.sigma_inv
    }

    pub fn time_interval(&self) -> (f64, f64) {
        self.time_interval
    }

    pub fn spatial_period(&self) -> f64 {
        self.spatial_period
    }

    pub fn psi_family(&self) -> &PsiField {
        &self.psi
    }

    pub fn check_domain(&self, x0: f64) -> Result<(), AmbientError> {
        let (a, b) = self.time_interval;
        let tol = 1e-12 * (1.0 + b.abs());
        if x0 < a - tol || x0 > b + tol {
            return Err(AmbientError::OutOfDomain(x0, a, b));
        }
        Ok(())
    }

    /// ψ at (x⁰, x).
    pub fn psi(&self, x0: f64, x: [f64; 3]) -> Result<f64, AmbientError> {
        match &self.psi {
            PsiField::PowerLaw { beta } => {
                if x0 <= 0.0 {
                    return Err(AmbientError::OutOfDomain(x0, self.time_interval.0, self.time_interval.1));
                }
                Ok(-beta * x0.ln())
            }
            PsiField::PerturbedPowerLaw {
                beta,
                amplitude,
                center,
                width,
                period,
            } => {
                if x0 <= 0.0 {
                    return Err(AmbientError::OutOfDomain(x0, self.time_interval.0, self.time_interval.1));
                }
                let bump = (-((x0 - center) / width).powi(2)).exp();
                Ok(-beta * x0.ln()
                    + amplitude * (std::f64::consts::TAU * x[0] / period).cos() * bump)
            }
            PsiField::Expression(e) => e
                .eval(&EvalEnv::point(x0, x))
                .map_err(|err| AmbientError::Eval(err.to_string())),
        }
    }

    /// ∂ψ/∂x⁰.
    pub fn psi_dot(&self, x0: f64, x: [f64; 3]) -> Result<f64, AmbientError> {
        match &self.psi {
            PsiField::PowerLaw { beta } => Ok(-beta / x0),
            PsiField::PerturbedPowerLaw {
                beta,
                amplitude,
                center,
                width,
                period,
            } => {
                let bump = (-((x0 - center) / width).powi(2)).exp();
                let dbump = bump * (-2.0 * (x0 - center) / (width * width));
                Ok(-beta / x0
                    + amplitude * (std::f64::consts::TAU * x[0] / period).cos() * dbump)
            }
            PsiField::Expression(_) => {
                self.fd_partial(x0, x, 0)
            }
        }
    }

    /// Spatial gradient ψ_i, i = 1..n.
    pub fn psi_spatial(&self, x0: f64, x: [f64; 3]) -> Result<[f64; 3], AmbientError> {
        match &self.psi {
            PsiField::PowerLaw { .. } => Ok([0.0; 3]),
            PsiField::PerturbedPowerLaw {
                amplitude,
                center,
                width,
                period,
                ..
            } => {
                let bump = (-((x0 - center) / width).powi(2)).exp();
                let k = std::f64::consts::TAU / period;
                Ok([-amplitude * k * (k * x[0]).sin() * bump, 0.0, 0.0])
            }
            PsiField::Expression(_) => {
                let mut out = [0.0; 3];
                for i in 0..self.n {
                    out[i] = self.fd_partial(x0, x, i + 1)?;
                }
                Ok(out)
            }
        }
    }

    /// Fourth-order central difference of ψ along coordinate `axis` (0 = time).
    fn fd_partial(&self, x0: f64, x: [f64; 3], axis: usize) -> Result<f64, AmbientError> {
        let scale = if axis == 0 { 1.0 + x0.abs() } else { 1.0 + x[axis - 1].abs() };
        let h = 1e-4 * scale;
        let eval = |offset: f64| -> Result<f64, AmbientError> {
            let mut x0s = x0;
            let mut xs = x;
            if axis == 0 {
                x0s += offset;
            } else {
                xs[axis - 1] += offset;
            }
            self.psi(x0s, xs)
        };
        Ok((-eval(2.0 * h)? + 8.0 * eval(h)? - 8.0 * eval(-h)? + eval(-2.0 * h)?) / (12.0 * h))
    }

    /// Full ambient metric ḡ_{αβ} = e^{2ψ}·diag(−1, σ) at (x⁰, x).
    pub fn metric(&self, x0: f64, x: [f64; 3]) -> Result<[[f64; 4]; 4], AmbientError> {
        let conformal = (2.0 * self.psi(x0, x)?).exp();
        let mut g = [[0.0; 4]; 4];
        g[0][0] = -conformal;
        for i in 0..self.n {
            for j in 0..self.n {
                g[i + 1][j + 1] = conformal * self.sigma[i][j];
            }
        }
        Ok(g)
    }
}

fn identity3() -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    m[0][0] = 1.0;
    m[1][1] = 1.0;
    m[2][2] = 1.0;
    m
}

/// The α = 0 Christoffel components of ḡ that appear in the graph formula for
/// the second fundamental form. With constant σ: Γ̄⁰₀₀ = ψ̇, Γ̄⁰ᵢ₀ = ψ_i,
/// Γ̄⁰ᵢⱼ = ψ̇ σ_ij.
#[derive(Debug, Clone, Copy)]
pub struct TimeChristoffels {
    pub g000: f64,
    pub g0i0: [f64; 3],
    pub g0ij: [[f64; 3]; 3],
}

pub fn christoffel_time_components(
    spec: &SpacetimeSpec,
    x0: f64,
    x: [f64; 3],
) -> Result<TimeChristoffels, AmbientError> {
    spec.check_domain(x0)?;
    let psi_dot = spec.psi_dot(x0, x)?;
    let psi_sp = spec.psi_spatial(x0, x)?;
    let mut g0ij = [[0.0; 3]; 3];
    for i in 0..spec.n() {
        for j in 0..spec.n() {
            g0ij[i][j] = psi_dot * spec.sigma()[i][j];
        }
    }
    Ok(TimeChristoffels {
        g000: psi_dot,
        g0i0: psi_sp,
        g0ij,
    })
}

/// All Christoffel symbols Γ̄^γ_{αβ} by central finite differences of ḡ.
/// Independent of the closed forms above; used by the embedding oracle and the
/// convexity diagnostic.
pub fn christoffel_full_fd(
    spec: &SpacetimeSpec,
    x0: f64,
    x: [f64; 3],
    step: f64,
) -> Result<[[[f64; 4]; 4]; 4], AmbientError> {
    let dim = spec.n() + 1;
    let metric_at = |a: usize, offset: f64| -> Result<[[f64; 4]; 4], AmbientError> {
        let mut x0s = x0;
        let mut xs = x;
        if a == 0 {
            x0s += offset;
        } else {
            xs[a - 1] += offset;
        }
        spec.metric(x0s, xs)
    };
    // dg[a][b][c] = ∂_a g_{bc}
    let mut dg = [[[0.0; 4]; 4]; 4];
    for a in 0..dim {
        let gp = metric_at(a, step)?;
        let gm = metric_at(a, -step)?;
        for b in 0..dim {
            for c in 0..dim {
                dg[a][b][c] = (gp[b][c] - gm[b][c]) / (2.0 * step);
            }
        }
    }
    let g = spec.metric(x0, x)?;
    // invert (n+1)x(n+1): block diagonal conformal form
    let conformal = -g[0][0];
    let mut ginv = [[0.0; 4]; 4];
    ginv[0][0] = -1.0 / conformal;
    for i in 0..spec.n() {
        for j in 0..spec.n() {
            ginv[i + 1][j + 1] = spec.sigma_inv()[i][j] / conformal;
        }
    }
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for c in 0..dim {
        for a in 0..dim {
            for b in 0..dim {
                let mut s = 0.0;
                for d in 0..dim {
                    s += ginv[c][d] * (dg[a][d][b] + dg[b][d][a] - dg[d][a][b]);
                }
                gamma[c][a][b] = 0.5 * s;
            }
        }
    }
    Ok(gamma)
}

/// Common principal curvature of the slice {x⁰ = c} with respect to the
/// past-directed normal: κ = −e^{−ψ(c)} ψ̇(c). Requires constant σ and a
/// spatially homogeneous ψ on the slice for the value to be a single number;
/// evaluated at x = 0.
pub fn slice_curvature(spec: &SpacetimeSpec, c: f64) -> Result<f64, AmbientError> {
    spec.check_domain(c)?;
    let x = [0.0; 3];
    let psi = spec.psi(c, x)?;
    let psi_dot = spec.psi_dot(c, x)?;
    Ok(-(-psi).exp() * psi_dot)
}

/// Norm of a spacetime vector in the Riemannian reference metric
/// g̃ = e^{2ψ}(dx⁰² + σ).
pub fn reference_norm(
    spec: &SpacetimeSpec,
    x0: f64,
    x: [f64; 3],
    vector: &[f64; 4],
) -> Result<f64, AmbientError> {
    let conformal = (2.0 * spec.psi(x0, x)?).exp();
    let mut q = vector[0] * vector[0];
    for i in 0..spec.n() {
        for j in 0..spec.n() {
            q += spec.sigma()[i][j] * vector[i + 1] * vector[j + 1];
        }
    }
    Ok((conformal * q).sqrt())
}

/// Candidate strictly convex function χ with claimed constant c₀.
#[derive(Debug, Clone)]
pub struct ConvexCandidate {
    pub chi: Expr,
    pub c0: f64,
}

impl ConvexCandidate {
    pub fn new(chi: Expr, c0: f64) -> Result<Self, AmbientError> {
        if !(c0 > 0.0) {
            return Err(AmbientError::Invalid(format!("c0 must be > 0, got {c0}")));
        }
        Ok(Self { chi, c0 })
    }
}

#[derive(Debug, Clone)]
pub struct ConvexReport {
    pub samples: usize,
    /// Smallest eigenvalue of χ_{αβ} − c₀ ḡ_{αβ} over all sampled points.
    pub min_margin: f64,
    pub pass: bool,
}

/// Check χ_{αβ} ≥ c₀ ḡ_{αβ} at random domain points. The covariant Hessian is
/// assembled from finite differences of χ minus the Christoffel term.
pub fn check_convex(
    candidate: &ConvexCandidate,
    spec: &SpacetimeSpec,
    samples: usize,
    seed: u64,
) -> Result<ConvexReport, AmbientError> {
    if samples < 1 {
        return Err(AmbientError::Invalid("samples must be >= 1".into()));
    }
    let dim = spec.n() + 1;
    let (a, b) = spec.time_interval();
    let period = spec.spatial_period();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;
    let chi_at = |x0: f64, x: [f64; 3]| -> Result<f64, AmbientError> {
        candidate
            .chi
            .eval(&EvalEnv::point(x0, x))
            .map_err(|e| AmbientError::Eval(e.to_string()))
    };
    for _ in 0..samples {
        let margin = 0.05 * (b - a);
        let x0 = rng.gen_range((a + margin)..(b - margin));
        let mut x = [0.0; 3];
        for xi in x.iter_mut().take(spec.n()) {
            *xi = rng.gen_range(0.0..period);
        }
        // large enough that second-difference rounding noise (~ε/h²) stays
        // below the pass threshold on exact quadratics
        let h = 1e-3 * (1.0 + x0.abs());
        let shift = |axis: usize, offset: f64| -> (f64, [f64; 3]) {
            let mut x0s = x0;
            let mut xs = x;
            if axis == 0 {
                x0s += offset;
            } else {
                xs[axis - 1] += offset;
            }
            (x0s, xs)
        };
        // gradient and second partials of χ by central differences
        let mut grad = [0.0; 4];
        let mut hess = [[0.0; 4]; 4];
        let center = chi_at(x0, x)?;
        for alpha in 0..dim {
            let (xp0, xp) = shift(alpha, h);
            let (xm0, xm) = shift(alpha, -h);
            let fp = chi_at(xp0, xp)?;
            let fm = chi_at(xm0, xm)?;
            grad[alpha] = (fp - fm) / (2.0 * h);
            hess[alpha][alpha] = (fp - 2.0 * center + fm) / (h * h);
        }
        for alpha in 0..dim {
            for beta in (alpha + 1)..dim {
                let pp = {
                    let (y0, y) = shift(alpha, h);
                    let mut y0s = y0;
                    let mut ys = y;
                    if beta == 0 {
                        y0s += h;
                    } else {
                        ys[beta - 1] += h;
                    }
                    chi_at(y0s, ys)?
                };
                let pm = {
                    let (y0, y) = shift(alpha, h);
                    let mut y0s = y0;
                    let mut ys = y;
                    if beta == 0 {
                        y0s -= h;
                    } else {
                        ys[beta - 1] -= h;
                    }
                    chi_at(y0s, ys)?
                };
                let mp = {
                    let (y0, y) = shift(alpha, -h);
                    let mut y0s = y0;
                    let mut ys = y;
                    if beta == 0 {
                        y0s += h;
                    } else {
                        ys[beta - 1] += h;
                    }
                    chi_at(y0s, ys)?
                };
                let mm = {
                    let (y0, y) = shift(alpha, -h);
                    let mut y0s = y0;
                    let mut ys = y;
                    if beta == 0 {
                        y0s -= h;
                    } else {
                        ys[beta - 1] -= h;
                    }
                    chi_at(y0s, ys)?
                };
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                hess[alpha][beta] = v;
                hess[beta][alpha] = v;
            }
        }
        let gamma = christoffel_full_fd(spec, x0, x, 1e-5 * (1.0 + x0.abs()))?;
        let g = spec.metric(x0, x)?;
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for alpha in 0..dim {
            for beta in 0..dim {
                let mut cov = hess[alpha][beta];
                for c in 0..dim {
                    cov -= gamma[c][alpha][beta] * grad[c];
                }
                m[(alpha, beta)] = cov - candidate.c0 * g[alpha][beta];
            }
        }
        let m = 0.5 * (&m + m.transpose());
        let min_eig = m
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |acc, &e| acc.min(e));
        min_margin = min_margin.min(min_eig);
    }
    Ok(ConvexReport {
        samples,
        min_margin,
        pass: min_margin >= -1e-9,
    })
}
