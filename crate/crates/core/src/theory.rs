//! Mean and mean-square performance models of the regularized ATC strategy.
//!
//! With `𝒜 = A ⊗ I_L`, `H = diag{R_1, …, R_N}`, `R_k = Σ_l c_lk R_{x,l}` and the
//! regularization Laplacian `Q = ½[diag((P+Pᵀ)1) − (P+Pᵀ)] ⊗ I_L`, the weight
//! error `v(n) = w(n) − w*` obeys, in the mean,
//!
//! ```text
//! E{v(n+1)} = B E{v(n)} − μτ r,     B = 𝒜ᵀ[I − μ(H + τQ)],   r = 𝒜ᵀ Q w*
//! ```
//!
//! and its weighted second moments propagate through `K = Bᵀ ⊗ Bᵀ`. `K` acts on
//! `(LN)²`-vectors; here it is only ever applied in matricized form,
//! `mat(K vec(X)) = Bᵀ X B`, so no `(LN)² × (LN)²` matrix is formed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DataModel, LinearModelSpec};
use crate::engine::Hyperparams;
use crate::network::{CombinationMatrices, NetworkSpec, RegularizationWeights};

/// Relative residual accepted for the steady-state Lyapunov solve.
pub const LYAPUNOV_TOL: f64 = 1e-10;
/// Krylov subspace size used by [`k_spectral_radius`].
const KRYLOV_DIM: usize = 24;
/// Values beyond this are reported as a divergent transient.
const TRANSIENT_BLOWUP: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("B − I is singular; the mean recursion has no unique fixed point")]
    Singular,
    #[error("no steady state: spectral radius of K is {radius} (>= 1)")]
    NoSteadyState { radius: f64 },
    #[error("power iteration did not converge after {iterations} restarts (last estimate {estimate})")]
    NoConvergence { estimate: f64, iterations: usize },
    #[error("steady-state solve stalled (relative residual {0})")]
    Lyapunov(f64),
}

/// Second-order description of the data at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderModel {
    /// `R_{x,k}`.
    pub cov: Vec<DMatrix<f64>>,
    /// `σ²_{z,k}`.
    pub noise_var: Vec<f64>,
    /// Stacked `w*`.
    pub w_star: DVector<f64>,
}

impl SecondOrderModel {
    pub fn from_linear(model: &LinearModelSpec) -> Self {
        let l = model.filter_len();
        Self {
            cov: model
                .sigma2_x()
                .iter()
                .map(|&s| DMatrix::identity(l, l) * s)
                .collect(),
            noise_var: model.sigma2_z().to_vec(),
            w_star: DVector::from_vec(DataModel::Linear(model.clone()).stacked_optimum()),
        }
    }

    /// Regressor second moments of any model. For non-Gaussian models the
    /// noise variances are set to zero, so only the mean-stability quantities
    /// (bound, `B`, `ρ(B)`) derived from it are meaningful.
    pub fn from_model(model: &DataModel) -> Self {
        match model {
            DataModel::Linear(m) => Self::from_linear(m),
            DataModel::Localization(_) => Self {
                cov: (0..model.n_nodes())
                    .map(|k| model.regressor_second_moment(k))
                    .collect(),
                noise_var: vec![0.0; model.n_nodes()],
                w_star: DVector::from_vec(model.stacked_optimum()),
            },
        }
    }
}

/// Moment matrices of one `(network, A, C, P, μ, τ, model)` configuration.
#[derive(Debug, Clone)]
pub struct MomentMatrices {
    pub n_nodes: usize,
    pub filter_len: usize,
    pub hyper: Hyperparams,
    /// `R_k = Σ_l c_lk R_{x,l}`.
    pub r_blocks: Vec<DMatrix<f64>>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DVector<f64>,
    pub g: DMatrix<f64>,
    pub w_star: DVector<f64>,
}

fn kron_identity(m: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::<f64>::identity(l, l))
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let l = blocks.first().map_or(0, |b| b.nrows());
    let dim = l * blocks.len();
    let mut out = DMatrix::zeros(dim, dim);
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((k * l, k * l), (l, l)).copy_from(b);
    }
    out
}

/// Regularization Laplacian `½[diag((P+Pᵀ)1) − (P+Pᵀ)] ⊗ I_L`.
pub fn regularization_laplacian(p: &DMatrix<f64>, filter_len: usize) -> DMatrix<f64> {
    let sym = p + p.transpose();
    let degrees = DMatrix::from_diagonal(&sym.column_sum());
    kron_identity(&((degrees - sym) * 0.5), filter_len)
}

pub fn build_moments(
    spec: &NetworkSpec,
    mats: &CombinationMatrices,
    reg: &RegularizationWeights,
    hyper: Hyperparams,
    model: &SecondOrderModel,
) -> Result<MomentMatrices, TheoryError> {
    let n = spec.n_nodes();
    let l = spec.filter_len();
    let dim = n * l;
    let check = |what: &'static str, expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(TheoryError::Dimension { what, expected, got })
        }
    };
    check("A", n, mats.a.nrows())?;
    check("A", n, mats.a.ncols())?;
    check("C", n, mats.c.nrows())?;
    check("C", n, mats.c.ncols())?;
    check("P", n, reg.p.nrows())?;
    check("P", n, reg.p.ncols())?;
    check("covariance list", n, model.cov.len())?;
    check("noise variance list", n, model.noise_var.len())?;
    check("w*", dim, model.w_star.len())?;
    for cov in &model.cov {
        check("covariance block", l, cov.nrows())?;
        check("covariance block", l, cov.ncols())?;
    }

    let r_blocks: Vec<DMatrix<f64>> = (0..n)
        .map(|k| {
            let mut rk = DMatrix::zeros(l, l);
            for j in 0..n {
                let c = mats.c[(j, k)];
                if c != 0.0 {
                    rk += &model.cov[j] * c;
                }
            }
            rk
        })
        .collect();
    let h = block_diag(&r_blocks);
    let q = regularization_laplacian(&reg.p, l);
    let a_t = kron_identity(&mats.a, l).transpose();
    let b = &a_t * (DMatrix::identity(dim, dim) - (&h + &q * hyper.tau) * hyper.mu);
    let r = &a_t * (&q * &model.w_star);

    let noise_blocks: Vec<DMatrix<f64>> = model
        .cov
        .iter()
        .zip(&model.noise_var)
        .map(|(cov, &s)| cov * s)
        .collect();
    let c_i = kron_identity(&mats.c, l);
    let inner = c_i.transpose() * block_diag(&noise_blocks) * &c_i;
    let g = &a_t * inner * a_t.transpose();

    Ok(MomentMatrices {
        n_nodes: n,
        filter_len: l,
        hyper,
        r_blocks,
        h,
        q,
        b,
        r,
        g,
        w_star: model.w_star.clone(),
    })
}

impl MomentMatrices {
    pub fn dim(&self) -> usize {
        self.n_nodes * self.filter_len
    }

    /// Initial weight error for `w(0) = 0`.
    pub fn initial_error(&self) -> DVector<f64> {
        -&self.w_star
    }

    /// Spectral radius of `B` from a dense eigen-decomposition.
    pub fn spectral_radius_b(&self) -> f64 {
        spectral_radius(&self.b)
    }
}

/// Largest eigenvalue modulus of a dense square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Sufficient mean-stability bound
/// `2 / (max_k λ_max(R_k) + 2τ max_k Q_kk)`, where `Q_kk` is the common
/// diagonal value of the k-th `L×L` diagonal block of `Q`.
pub fn step_size_bound(m: &MomentMatrices) -> f64 {
    let lambda_max = m
        .r_blocks
        .iter()
        .map(|rk| {
            rk.clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let q_max = (0..m.n_nodes)
        .map(|k| m.q[(k * m.filter_len, k * m.filter_len)])
        .fold(0.0, f64::max);
    2.0 / (lambda_max + 2.0 * m.hyper.tau * q_max)
}

/// `E{v(0)}, …, E{v(n)}` from `E{v(j+1)} = B E{v(j)} − μτ r`.
pub fn mean_recursion(m: &MomentMatrices, v0: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    let shift = &m.r * (m.hyper.mu * m.hyper.tau);
    let mut out = Vec::with_capacity(n + 1);
    let mut v = v0.clone();
    out.push(v.clone());
    for _ in 0..n {
        v = &m.b * &v - &shift;
        out.push(v.clone());
    }
    out
}

/// Asymptotic mean weight error `μτ (B − I)⁻¹ r`.
pub fn bias_limit(m: &MomentMatrices) -> Result<DVector<f64>, TheoryError> {
    let dim = m.dim();
    let scale = m.hyper.mu * m.hyper.tau;
    if scale == 0.0 || m.r.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(dim));
    }
    let shifted = &m.b - DMatrix::identity(dim, dim);
    let sol = shifted.lu().solve(&m.r).ok_or(TheoryError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(TheoryError::Singular);
    }
    Ok(sol * scale)
}

/// `mat(K vec(X)) = Bᵀ X B`.
pub fn apply_k(b: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    b.tr_mul(x) * b
}

/// `mat(Kᵀ vec(X)) = B X Bᵀ`.
pub fn apply_k_transpose(b: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    b * x * b.transpose()
}

/// Spectral radius of `K` by restarted Arnoldi (Krylov-accelerated power
/// iteration) on [`apply_k`]. Converged when successive restart estimates
/// differ by at most `tol` relative.
pub fn k_spectral_radius(b: &DMatrix<f64>, tol: f64, max_restarts: usize) -> Result<f64, TheoryError> {
    let n = b.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let m = KRYLOV_DIM.min(n * n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b5f_7261_6469_7573);
    let mut start = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    start /= start.norm();
    let mut prev = f64::NAN;
    let mut estimate = f64::NAN;

    for _ in 0..max_restarts {
        let mut basis: Vec<DMatrix<f64>> = Vec::with_capacity(m + 1);
        basis.push(start.clone());
        let mut hess = DMatrix::<f64>::zeros(m + 1, m);
        let mut size = m;
        let mut invariant = false;
        for j in 0..m {
            let mut w = apply_k(b, &basis[j]);
            let scale = w.norm();
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = v.dot(&w);
                    hess[(i, j)] += c;
                    w -= v * c;
                }
            }
            let nrm = w.norm();
            hess[(j + 1, j)] = nrm;
            if nrm <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                size = j + 1;
                invariant = true;
                break;
            }
            basis.push(w / nrm);
        }
        let ritz = spectral_radius(&hess.view((0, 0), (size, size)).into_owned());
        estimate = ritz;
        if invariant {
            return Ok(ritz);
        }
        if (ritz - prev).abs() <= tol * ritz.max(f64::MIN_POSITIVE) {
            return Ok(ritz);
        }
        prev = ritz;
        // restart from the power-filtered vector K^m x
        let mut next = start;
        for _ in 0..m {
            next = apply_k(b, &next);
            let nrm = next.norm();
            if nrm == 0.0 {
                return Ok(0.0);
            }
            next /= nrm;
        }
        start = next;
    }
    Err(TheoryError::NoConvergence {
        estimate,
        iterations: max_restarts,
    })
}

/// Theoretical learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientCurve {
    /// `ζ(0), …, ζ(n_iters)`; truncated if the recursion blows up.
    pub zeta: Vec<f64>,
    pub diverged: bool,
}

/// Network MSD learning curve `ζ(n) = (1/N) E{‖v(n)‖²}` for a deterministic
/// initial error `v0`.
///
/// Maintains `S(n) = mat(Kⁿ vec(I))`, the matricized row vector `Γ(n)` and the
/// mean error, and accumulates
///
/// ```text
/// ζ(n+1) = ζ(n) + (1/N)[ μ² tr(G S) − v0ᵀ(S − BᵀSB)v0 + μ²τ² rᵀSr
///                       − 2μτ (tr Γ + rᵀB E{v(n)}) ]
/// Γ(n+1) = B Γ Bᵀ + (Br)(B B E{v(n)})ᵀ − r (B E{v(n)})ᵀ
/// ```
pub fn transient_msd(m: &MomentMatrices, v0: &DVector<f64>, n_iters: usize) -> TransientCurve {
    let dim = m.dim();
    let inv_n = 1.0 / m.n_nodes as f64;
    let mu = m.hyper.mu;
    let tau = m.hyper.tau;
    let mu_tau = mu * tau;
    let with_bias = mu_tau != 0.0 && m.r.iter().any(|&v| v != 0.0);
    let br = &m.b * &m.r;
    let bt = m.b.transpose();
    let gt = m.g.transpose();

    let mut s = DMatrix::<f64>::identity(dim, dim);
    let mut s_next = DMatrix::<f64>::zeros(dim, dim);
    let mut gamma = DMatrix::<f64>::zeros(dim, dim);
    let mut scratch = DMatrix::<f64>::zeros(dim, dim);
    let mut sv = DVector::<f64>::zeros(dim);
    let mut b_mean = DVector::<f64>::zeros(dim);
    let mut bb_mean = DVector::<f64>::zeros(dim);
    let mut mean = v0.clone();
    let mut zeta = v0.norm_squared() * inv_n;
    let mut out = Vec::with_capacity(n_iters + 1);
    out.push(zeta);

    for _ in 0..n_iters {
        // S(n+1) = Bᵀ S(n) B
        scratch.gemm(1.0, &s, &m.b, 0.0);
        s_next.gemm(1.0, &bt, &scratch, 0.0);
        let noise = mu * mu * gt.dot(&s);
        sv.gemv(1.0, &s, v0, 0.0);
        let mut init = v0.dot(&sv);
        sv.gemv(1.0, &s_next, v0, 0.0);
        init -= v0.dot(&sv);
        let mut incr = noise - init;
        if with_bias {
            b_mean.gemv(1.0, &m.b, &mean, 0.0);
            sv.gemv(1.0, &s, &m.r, 0.0);
            incr += mu_tau * mu_tau * m.r.dot(&sv);
            incr -= 2.0 * mu_tau * (gamma.trace() + m.r.dot(&b_mean));
            bb_mean.gemv(1.0, &m.b, &b_mean, 0.0);
            // Γ(n+1) = B Γ(n) Bᵀ + (Br)(BB E v)ᵀ − r (B E v)ᵀ
            scratch.gemm(1.0, &gamma, &bt, 0.0);
            gamma.gemm(1.0, &m.b, &scratch, 0.0);
            gamma.ger(1.0, &br, &bb_mean, 1.0);
            gamma.ger(-1.0, &m.r, &b_mean, 1.0);
            mean.copy_from(&b_mean);
            mean.axpy(-mu_tau, &m.r, 1.0);
        }
        zeta += incr * inv_n;
        std::mem::swap(&mut s, &mut s_next);
        if !zeta.is_finite() || zeta.abs() > TRANSIENT_BLOWUP || s.amax() > TRANSIENT_BLOWUP {
            return TransientCurve {
                zeta: out,
                diverged: true,
            };
        }
        out.push(zeta);
    }
    TransientCurve {
        zeta: out,
        diverged: false,
    }
}

/// Steady-state figures of merit.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub msd: f64,
    /// `E{v(∞)}`.
    pub bias: DVector<f64>,
    /// `ρ(K) = ρ(B)²`.
    pub k_radius: f64,
}

/// Solves `X = Bᵀ X B + W` by squared Smith iteration, i.e. sums
/// `Σ_j (Bᵀ)ʲ W Bʲ` with the number of terms doubling at every step.
fn stein_solve(b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, TheoryError> {
    let mut x = w.clone();
    let mut power = b.clone();
    for _ in 0..64 {
        let incr = apply_k(&power, &x);
        x += &incr;
        if incr.norm() <= f64::EPSILON * 1e-2 * x.norm() {
            break;
        }
        power = &power * &power;
    }
    let resid = (apply_k(b, &x) + w - &x).norm() / x.norm().max(f64::MIN_POSITIVE);
    if !resid.is_finite() || resid > LYAPUNOV_TOL {
        return Err(TheoryError::Lyapunov(resid));
    }
    Ok(x)
}

/// `σ° = (1/N)(I − K)⁻¹ vec(I)` in matricized form.
pub fn steady_weight(m: &MomentMatrices) -> Result<DMatrix<f64>, TheoryError> {
    let dim = m.dim();
    stein_solve(&m.b, &(DMatrix::identity(dim, dim) / m.n_nodes as f64))
}

/// Steady-state network MSD
/// `ζ* = μ² tr(G Σ°) − 2μτ rᵀ Σ° B E{v(∞)} + μ²τ² rᵀ Σ° r`.
pub fn steady_state_msd(m: &MomentMatrices) -> Result<SteadyState, TheoryError> {
    let rho_b = m.spectral_radius_b();
    let k_radius = rho_b * rho_b;
    if k_radius.is_nan() || k_radius >= 1.0 {
        return Err(TheoryError::NoSteadyState { radius: k_radius });
    }
    let sigma = steady_weight(m)?;
    let bias = bias_limit(m)?;
    let mu = m.hyper.mu;
    let mu_tau = mu * m.hyper.tau;
    let sigma_r = &sigma * &m.r;
    let msd = mu * mu * m.g.transpose().dot(&sigma) - 2.0 * mu_tau * sigma_r.dot(&(&m.b * &bias))
        + mu_tau * mu_tau * m.r.dot(&sigma_r);
    Ok(SteadyState {
        msd,
        bias,
        k_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_uniform_a, build_uniform_p};

    fn scalar_pair_moments(hyper: Hyperparams) -> MomentMatrices {
        let spec = NetworkSpec::new(2, 1, &[(0, 1)], vec![0, 1]).unwrap();
        let reg = RegularizationWeights {
            p: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        };
        let model = SecondOrderModel {
            cov: vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 2.0],
            noise_var: vec![0.01, 0.02],
            w_star: DVector::from_vec(vec![1.0, 0.5]),
        };
        build_moments(&spec, &CombinationMatrices::identity(2), &reg, hyper, &model).unwrap()
    }

    #[test]
    fn laplacian_of_two_singletons() {
        let m = scalar_pair_moments(Hyperparams::raw(0.1, 1.0));
        assert_eq!(m.q, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_kernel_contains_consensus() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.7, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let q = regularization_laplacian(&p, 2);
        let e = DVector::from_vec(vec![0.4, -1.3, 0.4, -1.3, 0.4, -1.3]);
        assert!((&q * e).amax() < 1e-15);
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn tau_zero_has_no_drift_or_bias() {
        let m = scalar_pair_moments(Hyperparams::raw(0.1, 0.0));
        let expected = DMatrix::identity(2, 2) - &m.h * 0.1;
        assert!((&m.b - expected).amax() < 1e-15);
        assert_eq!(bias_limit(&m).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn equal_optima_give_zero_drift() {
        let spec = NetworkSpec::new(3, 2, &[(0, 1), (1, 2)], vec![0, 1, 1]).unwrap();
        let mats = CombinationMatrices {
            a: build_uniform_a(&spec),
            c: DMatrix::identity(3, 3),
        };
        let reg = RegularizationWeights {
            p: build_uniform_p(&spec),
        };
        let model = SecondOrderModel {
            cov: vec![DMatrix::identity(2, 2); 3],
            noise_var: vec![0.01; 3],
            w_star: DVector::from_vec(vec![0.2, 0.3, 0.2, 0.3, 0.2, 0.3]),
        };
        let m = build_moments(&spec, &mats, &reg, Hyperparams::raw(0.05, 2.0), &model).unwrap();
        assert!(m.r.amax() < 1e-15);
        assert!(bias_limit(&m).unwrap().amax() < 1e-15);
    }

    #[test]
    fn unit_covariance_bound_is_two() {
        let m = scalar_pair_moments(Hyperparams::raw(0.1, 0.0));
        // max lambda = 2 here
        assert_eq!(step_size_bound(&m), 1.0);
        let spec = NetworkSpec::new(1, 3, &[], vec![0]).unwrap();
        let iso = |s: f64| SecondOrderModel {
            cov: vec![DMatrix::identity(3, 3) * s],
            noise_var: vec![0.1],
            w_star: DVector::zeros(3),
        };
        let mats = CombinationMatrices::identity(1);
        let reg = RegularizationWeights::zeros(1);
        let m1 = build_moments(&spec, &mats, &reg, Hyperparams::raw(0.1, 0.0), &iso(1.0)).unwrap();
        assert_eq!(step_size_bound(&m1), 2.0);
        let m4 = build_moments(&spec, &mats, &reg, Hyperparams::raw(0.1, 0.0), &iso(4.0)).unwrap();
        assert_eq!(step_size_bound(&m4), 0.5);
    }

    #[test]
    fn k_operator_trivial_cases() {
        let b = DMatrix::<f64>::identity(3, 3);
        let x = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(apply_k(&b, &x), x);
        assert_eq!(apply_k_transpose(&b, &x), x);
        assert_eq!(apply_k(&(b * 2.0), &DMatrix::zeros(3, 3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn k_radius_of_scaled_identity() {
        let b = DMatrix::<f64>::identity(4, 4) * 0.5;
        let rho = k_spectral_radius(&b, 1e-12, 100).unwrap();
        assert!((rho - 0.25).abs() < 1e-14);
    }

    #[test]
    fn k_radius_handles_rotation() {
        // complex pair 0.9 e^{±iθ}
        let (c, s) = (0.9 * 0.3f64.cos(), 0.9 * 0.3f64.sin());
        let b = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 0.5]);
        let rho = k_spectral_radius(&b, 1e-12, 1000).unwrap();
        assert!((rho - 0.81).abs() < 1e-9, "{rho}");
    }

    #[test]
    fn steady_state_requires_stability() {
        let m = scalar_pair_moments(Hyperparams::raw(1.5, 0.0));
        assert!(matches!(steady_state_msd(&m), Err(TheoryError::NoSteadyState { .. })));
        let curve = transient_msd(&m, &m.initial_error(), 100_000);
        assert!(curve.diverged);
    }

    #[test]
    fn zero_bias_steady_state_is_noise_term() {
        let m = scalar_pair_moments(Hyperparams::raw(0.05, 0.0));
        let ss = steady_state_msd(&m).unwrap();
        // decoupled scalar LMS: Σ° = diag(1/(2(1 - b_k²))), G = diag(σ²_z R_x)
        let expect: f64 = [(1.0, 0.01), (2.0, 0.02)]
            .iter()
            .map(|&(rx, sz)| {
                let bk: f64 = 1.0 - 0.05 * rx;
                0.05f64.powi(2) * sz * rx / (2.0 * (1.0 - bk * bk))
            })
            .sum();
        assert!((ss.msd - expect).abs() < 1e-15 * expect.max(1.0), "{} vs {expect}", ss.msd);
    }

    #[test]
    fn mean_recursion_reaches_bias_limit() {
        let m = scalar_pair_moments(Hyperparams::raw(0.1, 1.0));
        let seq = mean_recursion(&m, &m.initial_error(), 2000);
        let lim = bias_limit(&m).unwrap();
        assert!((seq.last().unwrap() - &lim).norm() <= 1e-10 * lim.norm());
    }
}
