//! Regularized adapt-then-combine diffusion LMS.
//!
//! One iteration, for every node `k` simultaneously:
//!
//! ```text
//! ψ_k = w_k + μ Σ_{l ∈ N_k ∩ C(k)} c_lk (d_l − x_lᵀ w_k) x_l
//!           + μ τ Σ_{l ∈ N_k \ C(k)} ((ρ_kl + ρ_lk)/2) (w_l − w_k)
//! w_k ← Σ_{l ∈ N_k ∩ C(k)} a_lk ψ_l
//! ```
//!
//! Node updates read only neighbour blocks; the per-node link lists are
//! precomputed in an [`AtcPlan`].

use thiserror::Error;

use crate::data::{dot, DataModel, Sample, StreamKey};
use crate::network::{
    build_uniform_a, build_uniform_p, CombinationMatrices, NetworkSpec, RegularizationWeights,
};

/// States with a larger Euclidean norm are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("step size must be positive and finite (got {0})")]
    StepSize(f64),
    #[error("regularization strength must be non-negative and finite (got {0})")]
    Strength(f64),
    #[error("{what} dimension {got} does not match network ({expected})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub mu: f64,
    pub tau: f64,
}

impl Hyperparams {
    pub fn new(mu: f64, tau: f64) -> Result<Self, EngineError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(EngineError::StepSize(mu));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(EngineError::Strength(tau));
        }
        Ok(Self { mu, tau })
    }

    /// Unchecked constructor that also admits `μ = 0` (frozen dynamics).
    pub const fn raw(mu: f64, tau: f64) -> Self {
        Self { mu, tau }
    }
}

/// Block vector `w(n)` and its iteration index.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub w: Vec<f64>,
    pub iteration: usize,
}

impl NetworkState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            iteration: 0,
        }
    }
}

/// Sparse per-node view of `A`, `C` and the symmetrized `P`.
#[derive(Debug, Clone)]
pub struct AtcPlan {
    n_nodes: usize,
    filter_len: usize,
    /// `(l, c_lk)` for `l ∈ N_k ∩ C(k)`, `c_lk ≠ 0`.
    data_links: Vec<Vec<(usize, f64)>>,
    /// `(l, a_lk)` for `l ∈ N_k ∩ C(k)`, `a_lk ≠ 0`.
    combine_links: Vec<Vec<(usize, f64)>>,
    /// `(l, (ρ_kl + ρ_lk)/2)` for `l ∈ N_k \ C(k)`, weight `≠ 0`.
    reg_links: Vec<Vec<(usize, f64)>>,
}

impl AtcPlan {
    pub fn new(
        spec: &NetworkSpec,
        mats: &CombinationMatrices,
        reg: &RegularizationWeights,
    ) -> Result<Self, EngineError> {
        let n = spec.n_nodes();
        for (what, m) in [("A", &mats.a), ("C", &mats.c), ("P", &reg.p)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(EngineError::Dimension {
                    what,
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        let mut data_links = Vec::with_capacity(n);
        let mut combine_links = Vec::with_capacity(n);
        let mut reg_links = Vec::with_capacity(n);
        for k in 0..n {
            data_links.push(
                spec.intra_neighbors(k)
                    .map(|l| (l, mats.c[(l, k)]))
                    .filter(|&(_, c)| c != 0.0)
                    .collect(),
            );
            combine_links.push(
                spec.intra_neighbors(k)
                    .map(|l| (l, mats.a[(l, k)]))
                    .filter(|&(_, a)| a != 0.0)
                    .collect(),
            );
            reg_links.push(
                spec.inter_neighbors(k)
                    .map(|l| (l, reg.symmetric(k, l)))
                    .filter(|&(_, q)| q != 0.0)
                    .collect(),
            );
        }
        Ok(Self {
            n_nodes: n,
            filter_len: spec.filter_len(),
            data_links,
            combine_links,
            reg_links,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    /// Adapt step into `psi`. `xs` holds the regressors stacked like `w`.
    pub fn adapt_into(&self, w: &[f64], xs: &[f64], ds: &[f64], hyper: Hyperparams, psi: &mut [f64]) {
        let l = self.filter_len;
        let mut grad = vec![0.0; l];
        for k in 0..self.n_nodes {
            let wk = &w[k * l..(k + 1) * l];
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &(j, c) in &self.data_links[k] {
                let xj = &xs[j * l..(j + 1) * l];
                let e = c * (ds[j] - dot(xj, wk));
                for (g, x) in grad.iter_mut().zip(xj) {
                    *g += e * x;
                }
            }
            let out = &mut psi[k * l..(k + 1) * l];
            for i in 0..l {
                out[i] = wk[i] + hyper.mu * grad[i];
            }
            if hyper.tau != 0.0 && !self.reg_links[k].is_empty() {
                let scale = hyper.mu * hyper.tau;
                for &(j, q) in &self.reg_links[k] {
                    let wj = &w[j * l..(j + 1) * l];
                    for i in 0..l {
                        out[i] += scale * q * (wj[i] - wk[i]);
                    }
                }
            }
        }
    }

    /// Combine step into `w`.
    pub fn combine_into(&self, psi: &[f64], w: &mut [f64]) {
        let l = self.filter_len;
        for k in 0..self.n_nodes {
            let out = &mut w[k * l..(k + 1) * l];
            out.iter_mut().for_each(|v| *v = 0.0);
            for &(j, a) in &self.combine_links[k] {
                for (o, p) in out.iter_mut().zip(&psi[j * l..(j + 1) * l]) {
                    *o += a * p;
                }
            }
        }
    }
}

/// Intermediate estimates `ψ(n+1)` from the current state and one sample per node.
pub fn adapt_step(plan: &AtcPlan, state: &NetworkState, samples: &[Sample], hyper: Hyperparams) -> Vec<f64> {
    let xs: Vec<f64> = samples.iter().flat_map(|s| s.x.iter().copied()).collect();
    let ds: Vec<f64> = samples.iter().map(|s| s.d).collect();
    let mut psi = vec![0.0; state.w.len()];
    plan.adapt_into(&state.w, &xs, &ds, hyper, &mut psi);
    psi
}

/// `w(n+1)` from the intermediate estimates.
pub fn combine_step(plan: &AtcPlan, psi: &[f64], iteration: usize) -> NetworkState {
    let mut w = vec![0.0; psi.len()];
    plan.combine_into(psi, &mut w);
    NetworkState { w, iteration }
}

/// Output of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `ζ̂(n) = (1/N)‖w(n) − w*‖²`, starting at `n = 0`.
    pub msd: Vec<f64>,
    /// Per-node squared errors `‖w_k(n) − w*_k‖²`, indexed `[n][k]`.
    pub node_sq_err: Option<Vec<Vec<f64>>>,
    /// Last finite state.
    pub final_w: Vec<f64>,
    pub diverged: bool,
    pub key: StreamKey,
    pub hyper: Hyperparams,
}

impl Trajectory {
    /// Weight error `w(n_last) − w*`.
    pub fn final_error(&self, w_star: &[f64]) -> Vec<f64> {
        self.final_w.iter().zip(w_star).map(|(w, s)| w - s).collect()
    }
}

/// A simulation bound to a plan and a data model.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    plan: AtcPlan,
    model: &'a DataModel,
    w_star: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        spec: &NetworkSpec,
        mats: &CombinationMatrices,
        reg: &RegularizationWeights,
        model: &'a DataModel,
    ) -> Result<Self, EngineError> {
        if model.n_nodes() != spec.n_nodes() {
            return Err(EngineError::Dimension {
                what: "model node count",
                expected: spec.n_nodes(),
                got: model.n_nodes(),
            });
        }
        if model.filter_len() != spec.filter_len() {
            return Err(EngineError::Dimension {
                what: "model filter length",
                expected: spec.filter_len(),
                got: model.filter_len(),
            });
        }
        Ok(Self {
            plan: AtcPlan::new(spec, mats, reg)?,
            model,
            w_star: model.stacked_optimum(),
        })
    }

    pub fn plan(&self) -> &AtcPlan {
        &self.plan
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn run(&self, hyper: Hyperparams, n_iters: usize, key: StreamKey) -> Trajectory {
        self.run_with(hyper, n_iters, key, false)
    }

    /// Runs from `w(0) = 0`. Stops early, flagging divergence, when the state
    /// becomes non-finite or its norm exceeds [`DIVERGENCE_NORM`].
    pub fn run_with(&self, hyper: Hyperparams, n_iters: usize, key: StreamKey, record_nodes: bool) -> Trajectory {
        let n = self.plan.n_nodes;
        let l = self.plan.filter_len;
        let dim = n * l;
        let mut w = vec![0.0; dim];
        let mut psi = vec![0.0; dim];
        let mut xs = vec![0.0; dim];
        let mut ds = vec![0.0; n];
        let mut rngs = key.node_rngs(n);
        let mut msd = Vec::with_capacity(n_iters + 1);
        let mut node_sq_err = record_nodes.then(|| Vec::with_capacity(n_iters + 1));
        let mut node_err = vec![0.0; n];

        let mut record = |w: &[f64], msd: &mut Vec<f64>, nodes: &mut Option<Vec<Vec<f64>>>| {
            for k in 0..n {
                node_err[k] = w[k * l..(k + 1) * l]
                    .iter()
                    .zip(&self.w_star[k * l..(k + 1) * l])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
            msd.push(node_err.iter().sum::<f64>() / n as f64);
            if let Some(v) = nodes.as_mut() {
                v.push(node_err.clone());
            }
        };

        record(&w, &mut msd, &mut node_sq_err);
        let mut diverged = false;
        for _ in 0..n_iters {
            for k in 0..n {
                ds[k] = self
                    .model
                    .fill_sample(k, &mut rngs[k], &mut xs[k * l..(k + 1) * l]);
            }
            self.plan.adapt_into(&w, &xs, &ds, hyper, &mut psi);
            self.plan.combine_into(&psi, &mut xs);
            let norm2: f64 = xs.iter().map(|v| v * v).sum();
            if !norm2.is_finite() || norm2 > DIVERGENCE_NORM * DIVERGENCE_NORM {
                diverged = true;
                break;
            }
            std::mem::swap(&mut w, &mut xs);
            record(&w, &mut msd, &mut node_sq_err);
        }
        Trajectory {
            msd,
            node_sq_err,
            final_w: w,
            diverged,
            key,
            hyper,
        }
    }
}

/// Generic entry point: regularized ATC with the given matrices.
pub fn run(
    spec: &NetworkSpec,
    mats: &CombinationMatrices,
    reg: &RegularizationWeights,
    hyper: Hyperparams,
    model: &DataModel,
    n_iters: usize,
    key: StreamKey,
) -> Result<Trajectory, EngineError> {
    Ok(Simulation::new(spec, mats, reg, model)?.run(hyper, n_iters, key))
}

/// Stand-alone LMS at every node: `A = C = I`, `τ = 0`.
pub fn run_noncooperative_lms(
    spec: &NetworkSpec,
    model: &DataModel,
    mu: f64,
    n_iters: usize,
    key: StreamKey,
) -> Result<Trajectory, EngineError> {
    let n = spec.n_nodes();
    run(
        spec,
        &CombinationMatrices::identity(n),
        &RegularizationWeights::zeros(n),
        Hyperparams::raw(mu, 0.0),
        model,
        n_iters,
        key,
    )
}

/// Every node treated as its own cluster, so all neighbour links are
/// regularization links with uniform weights.
pub fn run_spatial_reg_lms(
    spec: &NetworkSpec,
    model: &DataModel,
    hyper: Hyperparams,
    n_iters: usize,
    key: StreamKey,
) -> Result<Trajectory, EngineError> {
    let (single, mats, reg) = spatial_setup(spec);
    run(&single, &mats, &reg, hyper, model, n_iters, key)
}

pub(crate) fn spatial_setup(spec: &NetworkSpec) -> (NetworkSpec, CombinationMatrices, RegularizationWeights) {
    let single = spec.with_singleton_clusters();
    let mats = CombinationMatrices {
        a: build_uniform_a(&single),
        c: nalgebra::DMatrix::identity(spec.n_nodes(), spec.n_nodes()),
    };
    let reg = RegularizationWeights {
        p: build_uniform_p(&single),
    };
    (single, mats, reg)
}
