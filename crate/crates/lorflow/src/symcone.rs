//! Symmetric curvature functions on the Gårding cone Γ₂.
//!
//! Everything here is exact algebra on principal-curvature spectra: the
//! elementary symmetric polynomials, the scalar curvature function H₂ and its
//! square root, elliptic regularization κ ↦ κ + εH, the matrix derivatives
//! F^{ij} = Hg^{ij} − h^{ij} and their regularized counterparts, and a
//! sampling-based verification suite for the lemma-level identities the solver
//! relies on.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SymconeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spectrum not admissible (outside the Gårding cone Γ₂)")]
    NotAdmissible,
}

/// Ordered list of principal curvatures; the argument of every symmetric
/// curvature function in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSpectrum {
    values: Vec<f64>,
}

impl CurvatureSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self, SymconeError> {
        if values.len() < 2 {
            return Err(SymconeError::InvalidArgument(format!(
                "need n >= 2 principal curvatures, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SymconeError::InvalidArgument(
                "non-finite principal curvature".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean curvature H = Σ κ_i.
    pub fn mean_curvature(&self) -> f64 {
        self.values.iter().sum()
    }

    /// |A|² = Σ κ_i².
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|k| k * k).sum()
    }
}

/// Elliptic regularization strength; ε = 0 leaves spectra untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParam {
    epsilon: f64,
}

impl RegularizationParam {
    pub fn new(epsilon: f64) -> Result<Self, SymconeError> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(SymconeError::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn zero() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// k-th elementary symmetric polynomial H_k(κ) = Σ_{i1<…<ik} κ_{i1}…κ_{ik}.
///
/// Computed by incrementally multiplying out Π(1 + κ_i t), O(nk).
pub fn elementary_symmetric(k: usize, kappa: &CurvatureSpectrum) -> Result<f64, SymconeError> {
    let n = kappa.n();
    if k < 1 || k > n {
        return Err(SymconeError::InvalidArgument(format!(
            "symmetric polynomial order k={k} out of range 1..={n}"
        )));
    }
    let mut coeff = vec![0.0; k + 1];
    coeff[0] = 1.0;
    for &x in kappa.values() {
        for j in (1..=k).rev() {
            coeff[j] += x * coeff[j - 1];
        }
    }
    Ok(coeff[k])
}

/// H₂(κ) = ½(H² − |A|²); identical to `elementary_symmetric(2, κ)`.
pub fn h2_value(kappa: &CurvatureSpectrum) -> f64 {
    let h = kappa.mean_curvature();
    0.5 * (h * h - kappa.norm_sq())
}

/// Γ₂ membership: H > 0 and H₂ > 0 characterize the connected component of
/// {H₂ > 0} containing the positive cone.
pub fn in_gamma2(kappa: &CurvatureSpectrum) -> bool {
    kappa.mean_curvature() > 0.0 && h2_value(kappa) > 0.0
}

/// Value of F = H₂^{1/2} on Γ₂.
pub fn sqrt_h2(kappa: &CurvatureSpectrum) -> Result<f64, SymconeError> {
    if !in_gamma2(kappa) {
        return Err(SymconeError::NotAdmissible);
    }
    Ok(h2_value(kappa).sqrt())
}

/// Gradient of H₂^{1/2}: components (H − κ_i) / (2 H₂^{1/2}), positive on Γ₂.
pub fn sqrt_h2_gradient(kappa: &CurvatureSpectrum) -> Result<Vec<f64>, SymconeError> {
    let f = sqrt_h2(kappa)?;
    let h = kappa.mean_curvature();
    Ok(kappa.values().iter().map(|&k| (h - k) / (2.0 * f)).collect())
}

/// Elliptic regularization κ_i ↦ κ_i + εH.
pub fn regularize(kappa: &CurvatureSpectrum, eps: RegularizationParam) -> CurvatureSpectrum {
    let h = kappa.mean_curvature();
    let e = eps.epsilon();
    CurvatureSpectrum {
        values: kappa.values().iter().map(|&k| k + e * h).collect(),
    }
}

/// Induced metric together with a second fundamental form; the tensor setting
/// for the matrix derivatives of H₂.
#[derive(Debug, Clone)]
pub struct ShapePair {
    g: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl ShapePair {
    pub fn new(g: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self, SymconeError> {
        let n = g.nrows();
        if n < 2 || g.ncols() != n || h.nrows() != n || h.ncols() != n {
            return Err(SymconeError::InvalidArgument(
                "g and h must be square n x n with n >= 2".into(),
            ));
        }
        let sym_tol = 1e-10 * (1.0 + g.amax().max(h.amax()));
        if (&g - g.transpose()).amax() > sym_tol || (&h - h.transpose()).amax() > sym_tol {
            return Err(SymconeError::InvalidArgument("g and h must be symmetric".into()));
        }
        if g.clone().cholesky().is_none() {
            return Err(SymconeError::InvalidArgument(
                "g must be positive definite".into(),
            ));
        }
        Ok(Self { g, h })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Principal curvatures: eigenvalues of g^{-1}h via the symmetric-definite
    /// reduction B = L⁻¹ h L⁻ᵀ with g = LLᵀ.
    pub fn spectrum(&self) -> CurvatureSpectrum {
        let chol = self.g.clone().cholesky().expect("validated in constructor");
        let l = chol.l();
        // B = L^{-1} h L^{-T}
        let mut b = self.h.clone();
        l.solve_lower_triangular_mut(&mut b);
        let mut bt = b.transpose();
        l.solve_lower_triangular_mut(&mut bt);
        let sym = 0.5 * (&bt + bt.transpose());
        let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        CurvatureSpectrum { values: vals }
    }

    fn g_inv(&self) -> DMatrix<f64> {
        self.g.clone().try_inverse().expect("g positive definite")
    }
}

/// F^{ij} = H g^{ij} − h^{ij} for F = H₂, contravariant indices.
pub fn f_matrix_derivative(pair: &ShapePair) -> Result<DMatrix<f64>, SymconeError> {
    let kappa = pair.spectrum();
    if !in_gamma2(&kappa) {
        return Err(SymconeError::NotAdmissible);
    }
    let ginv = pair.g_inv();
    let h_up = &ginv * pair.shape() * &ginv;
    let mean = (&ginv * pair.shape()).trace();
    Ok(mean * ginv - h_up)
}

/// Derivative of the regularized operator h ↦ H₂(h + εHg):
/// F̃^{ij} = F^{ij}(h + εHg) + ε(n−1)(1+εn) H g^{ij}.
pub fn regularized_matrix_derivative(
    pair: &ShapePair,
    eps: RegularizationParam,
) -> Result<DMatrix<f64>, SymconeError> {
    let n = pair.dim() as f64;
    let e = eps.epsilon();
    let ginv = pair.g_inv();
    let mean = (&ginv * pair.shape()).trace();
    let shifted = ShapePair::new(pair.g.clone(), pair.shape() + e * mean * pair.metric())
        .expect("shift preserves symmetry and g");
    let kappa = shifted.spectrum();
    if !in_gamma2(&kappa) {
        return Err(SymconeError::NotAdmissible);
    }
    let base = f_matrix_derivative(&shifted)?;
    Ok(base + e * (n - 1.0) * (1.0 + e * n) * mean * ginv)
}

/// Quadratic form of the h-independent second derivative of H₂ at fixed g:
/// F^{ij,kl} η_ij η_kl with F^{ij,kl} = g^{ij}g^{kl} − ½(g^{ik}g^{jl} + g^{il}g^{jk}),
/// i.e. (tr_g η)² − |η|²_g.
pub fn f_second_derivative_action(pair: &ShapePair, eta: &DMatrix<f64>) -> f64 {
    let ginv = pair.g_inv();
    let a = &ginv * eta;
    let t = a.trace();
    let s = (&a * &a).trace();
    t * t - s
}

/// Curvature function selector for the spectral quadratic form.
#[derive(Debug, Clone, Copy)]
pub enum CurvatureFn {
    H2,
    SqrtH2,
}

/// Spectral form of the second derivative quadratic form: Hessian term on the
/// diagonal plus the difference-quotient term (F_i − F_j)/(κ_i − κ_j) on the
/// off-diagonal, with the equal-eigenvalue case handled as a limit.
///
/// `eta` is expressed in a g-orthonormal eigenbasis of the shape operator.
pub fn spectral_second_derivative_action(
    f: CurvatureFn,
    kappa: &CurvatureSpectrum,
    eta: &DMatrix<f64>,
) -> Result<f64, SymconeError> {
    let n = kappa.n();
    if eta.nrows() != n || eta.ncols() != n {
        return Err(SymconeError::InvalidArgument("eta dimension mismatch".into()));
    }
    let h = kappa.mean_curvature();
    let ks = kappa.values();
    type Hess = Box<dyn Fn(usize, usize) -> f64>;
    let (grad, hess): (Vec<f64>, Hess) = match f {
        CurvatureFn::H2 => (
            ks.iter().map(|&k| h - k).collect(),
            Box::new(|i, j| if i == j { 0.0 } else { 1.0 }),
        ),
        CurvatureFn::SqrtH2 => {
            let s = h2_value(kappa);
            if !(s > 0.0) || h <= 0.0 {
                return Err(SymconeError::NotAdmissible);
            }
            let sq = s.sqrt();
            let g: Vec<f64> = ks.iter().map(|&k| (h - k) / (2.0 * sq)).collect();
            let grad = g.clone();
            (
                grad,
                Box::new(move |i, j| {
                    let sij = if i == j { 0.0 } else { 1.0 };
                    sij / (2.0 * sq) - g[i] * g[j] / sq
                }),
            )
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += hess(i, j) * eta[(i, i)] * eta[(j, j)];
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let quotient = if (ks[i] - ks[j]).abs() < 1e-8 * (1.0 + ks[i].abs()) {
                // derivative limit of (F_i - F_j)/(κ_i - κ_j) as κ_j -> κ_i
                match f {
                    CurvatureFn::H2 => -1.0,
                    CurvatureFn::SqrtH2 => {
                        let s = h2_value(kappa).sqrt();
                        -1.0 / (2.0 * s)
                    }
                }
            } else {
                (grad[i] - grad[j]) / (ks[i] - ks[j])
            };
            total += quotient * eta[(i, j)] * eta[(i, j)];
        }
    }
    Ok(total)
}

/// Outcome of one identity check over the sampled spectra.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub checked: u64,
    pub violations: u64,
    /// Smallest slack observed; negative means a violation.
    pub worst_margin: f64,
}

/// Report of the lemma-identity suite.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub samples: u64,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    /// Empirical max of the §9 gradient-split ratio; reported, not asserted.
    pub gradient_split_max_ratio: f64,
}

impl IdentityReport {
    pub fn total_violations(&self) -> u64 {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

/// Draw a Γ₂ spectrum by rejection sampling from the box [−2, 4]ⁿ.
pub fn sample_gamma2(rng: &mut impl Rng, n: usize) -> CurvatureSpectrum {
    loop {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..4.0)).collect();
        let k = CurvatureSpectrum { values };
        if in_gamma2(&k) {
            return k;
        }
    }
}

/// Random SPD metric g = AᵀA + ½I.
fn sample_metric(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.transpose() * a + DMatrix::identity(n, n) * 0.5
}

/// Random admissible pair with prescribed metric: h = L Q diag(κ) Qᵀ Lᵀ so
/// that the g-eigenvalues of h are exactly κ.
fn sample_pair_with_spectrum(
    rng: &mut impl Rng,
    g: &DMatrix<f64>,
    kappa: &CurvatureSpectrum,
) -> ShapePair {
    let n = kappa.n();
    let l = g.clone().cholesky().unwrap().l();
    let gauss = DMatrix::from_fn(n, n, |_, _| {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    });
    let q = gauss.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(kappa.values().to_vec()));
    let h = &l * &q * d * q.transpose() * l.transpose();
    let h = 0.5 * (&h + h.transpose());
    ShapePair { g: g.clone(), h }
}

struct ShardAccumulator {
    checks: Vec<CheckResult>,
    split_ratio: f64,
}

impl ShardAccumulator {
    fn new() -> Self {
        let names = [
            "abs_a_le_h_sq",          // (a) |A|² ≤ H²
            "h_grad_ge_f",            // (b) H·F_i ≥ F for F = H₂
            "sqrt_h2_upper_bound",    // (c) F ≤ (1/n)F(1,…,1)H for F = √H₂
            "regularized_concavity",  // (d) midpoint concavity of regularized √H₂
            "smallest_component",     // (e) ΣF_iκ_i² ≥ (1/n)ΣF_i·κ_{i0}²
            "diag_identity",          // (f) Σ_{i≠j}κ_i² + 2F = |F^j_j|² + 2F^j_jκ_j
            "diag_inequality",        // (f) Σ_{i≠n}κ_i² + 2F ≤ (n+2)F^n_nκ_n
            "regularized_grad_bound", // (g) F_ε,i ≥ ε/(1+nε)·ΣF_ε,k
            "gradient_positivity",    // (1.16): every H − κ_i > 0 on Γ₂
            "gamma2_preserved",       // regularized spectrum stays in Γ₂
        ];
        Self {
            checks: names
                .iter()
                .map(|&name| CheckResult {
                    name,
                    checked: 0,
                    violations: 0,
                    worst_margin: f64::INFINITY,
                })
                .collect(),
            split_ratio: 0.0,
        }
    }

    fn record(&mut self, idx: usize, margin: f64, tol: f64) {
        let c = &mut self.checks[idx];
        c.checked += 1;
        if margin < c.worst_margin {
            c.worst_margin = margin;
        }
        if margin < -tol {
            c.violations += 1;
        }
    }

    fn merge(mut self, other: ShardAccumulator) -> ShardAccumulator {
        for (a, b) in self.checks.iter_mut().zip(other.checks) {
            a.checked += b.checked;
            a.violations += b.violations;
            if b.worst_margin < a.worst_margin {
                a.worst_margin = b.worst_margin;
            }
        }
        self.split_ratio = self.split_ratio.max(other.split_ratio);
        self
    }
}

fn run_shard(seed: u64, shard: u64, count: u64) -> ShardAccumulator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(shard + 1)));
    let mut acc = ShardAccumulator::new();
    for _ in 0..count {
        let n = rng.gen_range(2..=6usize);
        let kappa = sample_gamma2(&mut rng, n);
        let h = kappa.mean_curvature();
        let a2 = kappa.norm_sq();
        let f2 = h2_value(&kappa);
        let scale = 1.0 + h * h;

        // (a) |A|² ≤ H²
        acc.record(0, (h * h - a2) / scale, 1e-12);

        // (b) H·F_i − F ≥ 0 for F = H₂
        let margin_b = kappa
            .values()
            .iter()
            .map(|&k| h * (h - k) - f2)
            .fold(f64::INFINITY, f64::min);
        acc.record(1, margin_b / scale, 1e-12);

        // (1.16) gradient positivity on Γ₂
        let margin_pos = kappa
            .values()
            .iter()
            .map(|&k| h - k)
            .fold(f64::INFINITY, f64::min);
        acc.record(8, margin_pos / (1.0 + h.abs()), 1e-12);

        // (c) √H₂ ≤ (1/n)√H₂(1,…,1)·H
        let nn = n as f64;
        let f_one = (nn * (nn - 1.0) / 2.0).sqrt();
        acc.record(2, (f_one / nn * h - f2.sqrt()) / (1.0 + h), 1e-12);

        // (e) Lemma 8.3 for F = √H₂ at the smallest and every negative component
        let grad = sqrt_h2_gradient(&kappa).expect("sampled in gamma2");
        let grad_sum: f64 = grad.iter().sum();
        let weighted: f64 = grad
            .iter()
            .zip(kappa.values())
            .map(|(fi, &k)| fi * k * k)
            .sum();
        let mut margin_e = f64::INFINITY;
        for (i, &k) in kappa.values().iter().enumerate() {
            let smallest = kappa
                .values()
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            if k < 0.0 || k == smallest {
                margin_e = margin_e.min(weighted - grad_sum * k * k / nn);
            }
            let _ = i;
        }
        acc.record(4, margin_e / (1.0 + grad_sum * a2), 1e-12);

        // (f) Lemma 9.3 identities for F = H₂, mixed diagonal F^j_j = H − κ_j
        let mut worst_ident: f64 = 0.0;
        for (j, &kj) in kappa.values().iter().enumerate() {
            let fjj = h - kj;
            let lhs: f64 = kappa
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, &k)| k * k)
                .sum::<f64>()
                + 2.0 * f2;
            let rhs = fjj * fjj + 2.0 * fjj * kj;
            worst_ident = worst_ident.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
        acc.record(5, 1e-9 - worst_ident, 0.0);

        let k_max = kappa.values().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let f_nn = h - k_max;
        let lhs_n: f64 = a2 - k_max * k_max + 2.0 * f2;
        acc.record(6, ((nn + 2.0) * f_nn * k_max - lhs_n) / scale, 1e-10);

        // §9 gradient-split ratio (reported only): with F_{;j} = 1 the bound
        // reads Σ_{i≠j} |1/F^j_j + (1 − F^i_i/F^j_j)/H|² ≤ c/F.
        for (j, &kj) in kappa.values().iter().enumerate() {
            let fjj = h - kj;
            let mut lhs = 0.0;
            for (i, &ki) in kappa.values().iter().enumerate() {
                if i == j {
                    continue;
                }
                let fii = h - ki;
                let term = 1.0 / fjj + (1.0 - fii / fjj) / h;
                // exact reformulation used by the paper's proof
                let alt = (h - kj + ki) / (h * fjj);
                debug_assert!((term - alt).abs() <= 1e-9 * (1.0 + term.abs()));
                lhs += term * term;
            }
            acc.split_ratio = acc.split_ratio.max(lhs * f2);
        }

        // (g) regularized gradient bound with ε₀ = ε/(1+nε), ε ∈ {0.1, 1}
        for &e in &[0.1, 1.0] {
            let eps = RegularizationParam::new(e).unwrap();
            let reg = regularize(&kappa, eps);
            // Γ₂ inclusion under regularization (Lemma 1.1)
            let hm = reg.mean_curvature();
            acc.record(
                9,
                hm.min(h2_value(&reg)) / (1.0 + hm.abs()),
                1e-12,
            );
            let grad_reg_at = sqrt_h2_gradient(&reg).expect("regularized stays in gamma2");
            let sum_tilde: f64 = grad_reg_at.iter().sum();
            // chain rule: F_ε,i = F_i(κ̃) + ε ΣF_k(κ̃)
            let fe: Vec<f64> = grad_reg_at.iter().map(|fi| fi + e * sum_tilde).collect();
            let fe_sum: f64 = fe.iter().sum();
            let eps0 = e / (1.0 + nn * e);
            let margin_g = fe
                .iter()
                .map(|&fi| fi - eps0 * fe_sum)
                .fold(f64::INFINITY, f64::min);
            acc.record(7, margin_g / (1.0 + fe_sum), 1e-10);
        }

        // (d) midpoint concavity of the ε-regularized √H₂ on matrix pairs;
        // sampled more sparsely since each draw needs two eigensolves.
        if acc.checks[3].checked < count.div_ceil(4) {
            let g = sample_metric(&mut rng, n);
            let k1 = sample_gamma2(&mut rng, n);
            let k2 = sample_gamma2(&mut rng, n);
            let p1 = sample_pair_with_spectrum(&mut rng, &g, &k1);
            let p2 = sample_pair_with_spectrum(&mut rng, &g, &k2);
            let e = RegularizationParam::new(0.25).unwrap();
            let val = |p: &ShapePair| -> Option<f64> {
                let kk = regularize(&p.spectrum(), e);
                sqrt_h2(&kk).ok()
            };
            let mid = ShapePair::new(g.clone(), 0.5 * (p1.shape() + p2.shape())).unwrap();
            if let (Some(f1), Some(f2v), Some(fm)) = (val(&p1), val(&p2), val(&mid)) {
                acc.record(3, (fm - 0.5 * (f1 + f2v)) / (1.0 + fm), 1e-10);
            }
        }
    }
    acc
}

/// Run the lemma-identity verification suite on `samples` random Γ₂ spectra
/// with n ∈ 2..=6. Sharded across the rayon pool with independent RNG streams.
pub fn verify_lemma_identities(samples: u64, seed: u64) -> IdentityReport {
    let shards = rayon::current_num_threads().max(1) as u64;
    let per = samples.div_ceil(shards);
    let acc = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = per.min(samples.saturating_sub(s * per));
            run_shard(seed, s, count)
        })
        .reduce(ShardAccumulator::new, ShardAccumulator::merge);
    IdentityReport {
        samples,
        seed,
        gradient_split_max_ratio: acc.split_ratio,
        checks: acc.checks,
    }
}
