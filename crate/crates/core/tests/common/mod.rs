#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multitask_diffusion::data::{DataModel, LinearModelSpec, StreamKey};
use multitask_diffusion::engine::Hyperparams;
use multitask_diffusion::network::NetworkSpec;

/// Textbook ATC diffusion LMS over a dense `A` and `C`, one cluster, no
/// regularization. Returns the MSD curve and the final state.
pub fn reference_atc(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    model: &DataModel,
    mu: f64,
    n_iters: usize,
    key: StreamKey,
) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let l = model.filter_len();
    let w_star = model.stacked_optimum();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|k| key.node_rng(k)).collect();
    let mut w = vec![vec![0.0; l]; n];
    let msd_of = |w: &Vec<Vec<f64>>| {
        let mut total = 0.0;
        for k in 0..n {
            let e: f64 = (0..l).map(|i| (w[k][i] - w_star[k * l + i]).powi(2)).sum();
            total += e;
        }
        total / n as f64
    };
    let mut msd = vec![msd_of(&w)];
    for _ in 0..n_iters {
        let samples: Vec<_> = (0..n).map(|k| model.sample(k, &mut rngs[k])).collect();
        let mut psi = vec![vec![0.0; l]; n];
        for k in 0..n {
            let mut g = vec![0.0; l];
            for j in 0..n {
                if c[(j, k)] == 0.0 {
                    continue;
                }
                let s = &samples[j];
                let y: f64 = s.x.iter().zip(&w[k]).map(|(x, v)| x * v).sum();
                let e = c[(j, k)] * (s.d - y);
                for i in 0..l {
                    g[i] += e * s.x[i];
                }
            }
            for i in 0..l {
                psi[k][i] = w[k][i] + mu * g[i];
            }
        }
        for k in 0..n {
            let mut out = vec![0.0; l];
            for j in 0..n {
                if a[(j, k)] == 0.0 {
                    continue;
                }
                for i in 0..l {
                    out[i] += a[(j, k)] * psi[j][i];
                }
            }
            w[k] = out;
        }
        msd.push(msd_of(&w));
    }
    (msd, w.concat())
}

/// Explicit Kronecker product, entry by entry.
pub fn kron(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (x.nrows(), x.ncols());
    let (r, s) = (y.nrows(), y.ncols());
    DMatrix::from_fn(p * r, q * s, |i, j| x[(i / r, j / s)] * y[(i % r, j % s)])
}

/// Column-major vectorization as a column matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

/// Random connected network: a spanning path plus random chords, with
/// contiguous clusters along the path.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize, l: usize, n_clusters: usize) -> NetworkSpec {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.random::<f64>() < 0.3 {
                edges.push((i, j));
            }
        }
    }
    let clusters = (0..n).map(|k| k * n_clusters / n).collect();
    NetworkSpec::new(n, l, &edges, clusters).unwrap()
}

pub fn random_linear_model(rng: &mut ChaCha8Rng, net: &NetworkSpec) -> DataModel {
    let l = net.filter_len();
    let optima = (0..net.n_clusters())
        .map(|_| (0..l).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let sx = (0..net.n_nodes()).map(|_| rng.random_range(0.5..1.5)).collect();
    let sz = (0..net.n_nodes()).map(|_| rng.random_range(0.005..0.05)).collect();
    DataModel::Linear(LinearModelSpec::new(net, optima, sx, sz).unwrap())
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hp(mu: f64, tau: f64) -> Hyperparams {
    Hyperparams::raw(mu, tau)
}

/// Largest eigenvalue modulus from the dense complex eigensolver.
pub fn dense_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
