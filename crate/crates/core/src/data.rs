//! Streaming data generators.
//!
//! Every (run, node) pair owns an independent ChaCha stream derived from a
//! master seed, so a node's samples depend only on `(master, run, node)` and
//! the iteration index, never on execution order.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::network::NetworkSpec;

/// Largest node index representable in a stream id.
const NODE_BITS: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("expected {expected} {what}, got {got}")]
    Count {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("optimum of cluster {cluster} has length {got}, expected {expected}")]
    OptimumLength {
        cluster: usize,
        expected: usize,
        got: usize,
    },
    #[error("{what} of node {node} must be {requirement} (got {value})")]
    BadVariance {
        what: &'static str,
        node: usize,
        requirement: &'static str,
        value: f64,
    },
    #[error("localization requires filter length 2, got {0}")]
    NotPlanar(usize),
    #[error("network has no node positions")]
    NoPositions,
    #[error("node {node} coincides with its target")]
    DegenerateGeometry { node: usize },
    #[error("targets {0} and {1} coincide")]
    DuplicateTargets(usize, usize),
}

/// Identifies the random streams of one Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub master: u64,
    pub run: u64,
}

impl StreamKey {
    pub fn new(master: u64, run: u64) -> Self {
        Self { master, run }
    }

    /// Independent generator for `node` within this run.
    pub fn node_rng(&self, node: usize) -> ChaCha8Rng {
        assert!(node < (1 << NODE_BITS), "node index exceeds stream id space");
        assert!(self.run < (1 << (64 - NODE_BITS)), "run index exceeds stream id space");
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream((self.run << NODE_BITS) | node as u64);
        rng
    }

    pub fn node_rngs(&self, n_nodes: usize) -> Vec<ChaCha8Rng> {
        (0..n_nodes).map(|k| self.node_rng(k)).collect()
    }
}

/// One observation `{x_k(n), d_k(n)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub d: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_len<T>(what: &'static str, v: &[T], expected: usize) -> Result<(), DataError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(DataError::Count {
            what,
            expected,
            got: v.len(),
        })
    }
}

/// Gaussian linear regression model `d = xᵀw* + z` with isotropic
/// regressor covariance `σ²_{x,k} I_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelSpec {
    filter_len: usize,
    optima: Vec<Vec<f64>>,
    node_cluster: Vec<usize>,
    sigma2_x: Vec<f64>,
    sigma2_z: Vec<f64>,
}

impl LinearModelSpec {
    /// `optima[q]` is the optimum shared by cluster `q` of `network`.
    pub fn new(
        network: &NetworkSpec,
        optima: Vec<Vec<f64>>,
        sigma2_x: Vec<f64>,
        sigma2_z: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = network.n_nodes();
        let l = network.filter_len();
        check_len("cluster optima", &optima, network.n_clusters())?;
        for (q, w) in optima.iter().enumerate() {
            if w.len() != l {
                return Err(DataError::OptimumLength {
                    cluster: q,
                    expected: l,
                    got: w.len(),
                });
            }
        }
        check_len("input variances", &sigma2_x, n)?;
        check_len("noise variances", &sigma2_z, n)?;
        for (k, &v) in sigma2_x.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DataError::BadVariance {
                    what: "input variance",
                    node: k,
                    requirement: "positive",
                    value: v,
                });
            }
        }
        for (k, &v) in sigma2_z.iter().enumerate() {
            // zero noise is allowed for noiseless experiments
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DataError::BadVariance {
                    what: "noise variance",
                    node: k,
                    requirement: "non-negative",
                    value: v,
                });
            }
        }
        Ok(Self {
            filter_len: l,
            optima,
            node_cluster: network.clusters().to_vec(),
            sigma2_x,
            sigma2_z,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_cluster.len()
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn optimum(&self, k: usize) -> &[f64] {
        &self.optima[self.node_cluster[k]]
    }

    pub fn cluster_optima(&self) -> &[Vec<f64>] {
        &self.optima
    }

    pub fn sigma2_x(&self) -> &[f64] {
        &self.sigma2_x
    }

    pub fn sigma2_z(&self) -> &[f64] {
        &self.sigma2_z
    }

    /// Draws `x` into `x_out` and returns `d`.
    pub fn fill_sample(&self, k: usize, rng: &mut ChaCha8Rng, x_out: &mut [f64]) -> f64 {
        let sx = self.sigma2_x[k].sqrt();
        for xi in x_out.iter_mut() {
            *xi = sx * normal(rng);
        }
        let z = self.sigma2_z[k].sqrt() * normal(rng);
        dot(x_out, self.optimum(k)) + z
    }

    pub fn gen_linear_sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut x = vec![0.0; self.filter_len];
        let d = self.fill_sample(k, rng, &mut x);
        Sample { x, d }
    }
}

/// Range/bearing localization model.
///
/// With exact distance `r_k = ‖w* − p_k‖` and unit direction
/// `u_k = (w* − p_k)/r_k`, each sample uses the perturbed direction
/// `x = u_k + α u_k^⊥ + β u_k` (`α ~ N(0, σ_α²)`, `β ~ N(0, σ_β²)`) and the
/// reference `d = r_k + v + xᵀp_k` with `v ~ N(0, σ_v²)`. Then `E{x} = u_k`
/// and `d − xᵀw* = v − β r_k` has zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSpec {
    positions: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
    node_cluster: Vec<usize>,
    sigma_alpha: Vec<f64>,
    sigma_beta: Vec<f64>,
    sigma_v: Vec<f64>,
    // cached geometry
    direction: Vec<[f64; 2]>,
    distance: Vec<f64>,
}

impl LocalizationSpec {
    /// Cluster `q` of `network` locates `targets[q]`; node positions come from
    /// the network.
    pub fn new(
        network: &NetworkSpec,
        targets: Vec<[f64; 2]>,
        sigma_alpha: Vec<f64>,
        sigma_beta: Vec<f64>,
        sigma_v: Vec<f64>,
    ) -> Result<Self, DataError> {
        if network.filter_len() != 2 {
            return Err(DataError::NotPlanar(network.filter_len()));
        }
        let positions = network.positions().ok_or(DataError::NoPositions)?.to_vec();
        let n = network.n_nodes();
        check_len("targets", &targets, network.n_clusters())?;
        for (what, v) in [
            ("sigma_alpha values", &sigma_alpha),
            ("sigma_beta values", &sigma_beta),
            ("sigma_v values", &sigma_v),
        ] {
            check_len(what, v, n)?;
            if let Some(k) = v.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(DataError::BadVariance {
                    what: "noise standard deviation",
                    node: k,
                    requirement: "non-negative",
                    value: v[k],
                });
            }
        }
        for i in 0..targets.len() {
            for j in (i + 1)..targets.len() {
                if targets[i] == targets[j] {
                    return Err(DataError::DuplicateTargets(i, j));
                }
            }
        }
        let node_cluster = network.clusters().to_vec();
        let mut direction = Vec::with_capacity(n);
        let mut distance = Vec::with_capacity(n);
        for k in 0..n {
            let t = targets[node_cluster[k]];
            let dx = t[0] - positions[k][0];
            let dy = t[1] - positions[k][1];
            let r = dx.hypot(dy);
            if r == 0.0 {
                return Err(DataError::DegenerateGeometry { node: k });
            }
            direction.push([dx / r, dy / r]);
            distance.push(r);
        }
        Ok(Self {
            positions,
            targets,
            node_cluster,
            sigma_alpha,
            sigma_beta,
            sigma_v,
            direction,
            distance,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn optimum(&self, k: usize) -> &[f64] {
        &self.targets[self.node_cluster[k]]
    }

    pub fn targets(&self) -> &[[f64; 2]] {
        &self.targets
    }

    /// Unit direction from node `k` to its target.
    pub fn direction(&self, k: usize) -> [f64; 2] {
        self.direction[k]
    }

    pub fn distance(&self, k: usize) -> f64 {
        self.distance[k]
    }

    /// `E{x xᵀ} = (1 + σ_β²) u uᵀ + σ_α² u⊥ u⊥ᵀ`.
    pub fn regressor_second_moment(&self, k: usize) -> DMatrix<f64> {
        let [ux, uy] = self.direction[k];
        let (px, py) = (-uy, ux);
        let sa = self.sigma_alpha[k].powi(2);
        let sb = 1.0 + self.sigma_beta[k].powi(2);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                sb * ux * ux + sa * px * px,
                sb * ux * uy + sa * px * py,
                sb * uy * ux + sa * py * px,
                sb * uy * uy + sa * py * py,
            ],
        )
    }

    pub fn fill_sample(&self, k: usize, rng: &mut ChaCha8Rng, x_out: &mut [f64]) -> f64 {
        let alpha = self.sigma_alpha[k] * normal(rng);
        let beta = self.sigma_beta[k] * normal(rng);
        let v = self.sigma_v[k] * normal(rng);
        let [ux, uy] = self.direction[k];
        // u⊥ = (-uy, ux)
        x_out[0] = (1.0 + beta) * ux - alpha * uy;
        x_out[1] = (1.0 + beta) * uy + alpha * ux;
        self.distance[k] + v + dot(x_out, &self.positions[k])
    }

    pub fn gen_localization_sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut x = vec![0.0; 2];
        let d = self.fill_sample(k, rng, &mut x);
        Sample { x, d }
    }
}

/// Data-generating model driving a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum DataModel {
    Linear(LinearModelSpec),
    Localization(LocalizationSpec),
}

impl DataModel {
    pub fn n_nodes(&self) -> usize {
        match self {
            DataModel::Linear(m) => m.n_nodes(),
            DataModel::Localization(m) => m.n_nodes(),
        }
    }

    pub fn filter_len(&self) -> usize {
        match self {
            DataModel::Linear(m) => m.filter_len(),
            DataModel::Localization(_) => 2,
        }
    }

    pub fn optimum(&self, k: usize) -> &[f64] {
        match self {
            DataModel::Linear(m) => m.optimum(k),
            DataModel::Localization(m) => m.optimum(k),
        }
    }

    /// Stacked optimum `w* = col{w*_1, …, w*_N}`.
    pub fn stacked_optimum(&self) -> Vec<f64> {
        (0..self.n_nodes())
            .flat_map(|k| self.optimum(k).iter().copied())
            .collect()
    }

    pub fn fill_sample(&self, k: usize, rng: &mut ChaCha8Rng, x_out: &mut [f64]) -> f64 {
        match self {
            DataModel::Linear(m) => m.fill_sample(k, rng, x_out),
            DataModel::Localization(m) => m.fill_sample(k, rng, x_out),
        }
    }

    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut x = vec![0.0; self.filter_len()];
        let d = self.fill_sample(k, rng, &mut x);
        Sample { x, d }
    }

    /// Per-node regressor second moment `E{x_k xₖᵀ}`.
    pub fn regressor_second_moment(&self, k: usize) -> DMatrix<f64> {
        match self {
            DataModel::Linear(m) => {
                let l = m.filter_len();
                DMatrix::identity(l, l) * m.sigma2_x()[k]
            }
            DataModel::Localization(m) => m.regressor_second_moment(k),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModelSpec> {
        match self {
            DataModel::Linear(m) => Some(m),
            DataModel::Localization(_) => None,
        }
    }
}

/// Writes `n_iters` samples of every node for one run as CSV with columns
/// `iteration,node,x_1..x_L,d`.
pub fn write_stream_csv<W: Write>(
    model: &DataModel,
    key: StreamKey,
    n_iters: usize,
    out: W,
) -> io::Result<()> {
    let l = model.filter_len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "node".to_string()];
    header.extend((1..=l).map(|i| format!("x_{i}")));
    header.push("d".into());
    w.write_record(&header)?;
    let mut rngs = key.node_rngs(model.n_nodes());
    let mut x = vec![0.0; l];
    for n in 0..n_iters {
        for (k, rng) in rngs.iter_mut().enumerate() {
            let d = model.fill_sample(k, rng, &mut x);
            let mut row = vec![n.to_string(), k.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.push(d.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_net() -> NetworkSpec {
        NetworkSpec::new(2, 2, &[(0, 1)], vec![0, 1]).unwrap()
    }

    #[test]
    fn noiseless_linear_is_exact() {
        let net = two_node_net();
        let m = LinearModelSpec::new(
            &net,
            vec![vec![0.5238, -0.4008], vec![0.5065, -0.3965]],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let mut rng = StreamKey::new(1, 0).node_rng(1);
        for _ in 0..100 {
            let s = m.gen_linear_sample(1, &mut rng);
            assert_eq!(s.d, dot(&s.x, &[0.5065, -0.3965]));
        }
    }

    #[test]
    fn reference_for_unit_regressor() {
        let net = two_node_net();
        let m = LinearModelSpec::new(
            &net,
            vec![vec![0.5238, -0.4008], vec![0.5065, -0.3965]],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(dot(&[1.0, 0.0], m.optimum(0)), 0.5238);
    }

    #[test]
    fn empirical_regressor_covariance() {
        let net = NetworkSpec::new(1, 3, &[], vec![0]).unwrap();
        let m = LinearModelSpec::new(&net, vec![vec![0.0; 3]], vec![1.7], vec![0.1]).unwrap();
        let mut rng = StreamKey::new(99, 3).node_rng(0);
        let n = 100_000;
        let mut cov = [[0.0; 3]; 3];
        for _ in 0..n {
            let s = m.gen_linear_sample(0, &mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += s.x[i] * s.x[j] / n as f64;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.7 } else { 0.0 };
                // 3% of the diagonal scale per entry
                assert!((cov[i][j] - target).abs() < 0.03 * 1.7, "{i},{j}: {}", cov[i][j]);
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let key = StreamKey::new(5, 7);
        let mut a = key.node_rng(3);
        let mut b = key.node_rng(3);
        let mut c = key.node_rng(4);
        let mut d = StreamKey::new(5, 8).node_rng(3);
        let xa: Vec<f64> = (0..8).map(|_| normal(&mut a)).collect();
        let xb: Vec<f64> = (0..8).map(|_| normal(&mut b)).collect();
        let xc: Vec<f64> = (0..8).map(|_| normal(&mut c)).collect();
        let xd: Vec<f64> = (0..8).map(|_| normal(&mut d)).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
    }

    fn loc_net(pos: [f64; 2]) -> NetworkSpec {
        NetworkSpec::new(1, 2, &[], vec![0])
            .unwrap()
            .with_positions(vec![pos])
            .unwrap()
    }

    #[test]
    fn noiseless_localization_geometry() {
        let net = loc_net([0.0, 0.0]);
        let m = LocalizationSpec::new(&net, vec![[3.0, 4.0]], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let mut rng = StreamKey::new(0, 0).node_rng(0);
        let s = m.gen_localization_sample(0, &mut rng);
        assert!((s.x[0] - 0.6).abs() < 1e-15 && (s.x[1] - 0.8).abs() < 1e-15);
        assert!((s.d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_localization_residual_vanishes_off_origin() {
        let net = loc_net([-7.0, 12.5]);
        let m = LocalizationSpec::new(&net, vec![[3.0, -4.0]], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let mut rng = StreamKey::new(0, 0).node_rng(0);
        let s = m.gen_localization_sample(0, &mut rng);
        assert!((s.d - dot(&s.x, &[3.0, -4.0])).abs() < 1e-12);
    }

    #[test]
    fn localization_rejects_node_on_target() {
        let net = loc_net([1.0, 1.0]);
        assert_eq!(
            LocalizationSpec::new(&net, vec![[1.0, 1.0]], vec![0.1], vec![0.01], vec![0.3]),
            Err(DataError::DegenerateGeometry { node: 0 })
        );
    }

    #[test]
    fn noisy_localization_residual_has_zero_mean() {
        let net = loc_net([20.0, 0.0]);
        let m = LocalizationSpec::new(&net, vec![[0.0, 0.0]], vec![0.1], vec![0.01], vec![0.3]).unwrap();
        let mut rng = StreamKey::new(11, 0).node_rng(0);
        let n = 100_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        let (mut mx, mut my) = (0.0, 0.0);
        for _ in 0..n {
            let s = m.gen_localization_sample(0, &mut rng);
            let e = s.d - dot(&s.x, &[0.0, 0.0]);
            sum += e;
            sum2 += e * e;
            mx += s.x[0];
            my += s.x[1];
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
        // E{x} is the unit direction (-1, 0)
        assert!((mx / n as f64 + 1.0).abs() < 1e-3);
        assert!((my / n as f64).abs() < 2e-3);
    }

    #[test]
    fn stream_csv_shape() {
        let net = two_node_net();
        let m = DataModel::Linear(
            LinearModelSpec::new(&net, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0; 2], vec![0.01; 2])
                .unwrap(),
        );
        let mut buf = Vec::new();
        write_stream_csv(&m, StreamKey::new(1, 0), 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,node,x_1,x_2,d");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(text.ends_with('\n'));
    }
}
