//! Clustered network topology, combination matrices and regularization weights.
//!
//! Conventions used throughout the crate:
//!
//! * `a[(l, k)]` is the weight node `k` gives to the intermediate estimate of
//!   node `l` during the combine step. `A` is left-stochastic (columns sum to 1)
//!   and supported on `N_k ∩ C(k)`.
//! * `c[(l, k)]` is the weight node `k` gives to the data of node `l` during the
//!   adapt step. `C` is right-stochastic (rows sum to 1) and `c[(l, k)] = 0`
//!   unless `k ∈ N_l ∩ C(l)`.
//! * `p[(k, l)]` is the regularization weight `ρ_kl`, supported on the
//!   inter-cluster neighbours `N_k \ C(k)`.
//!
//! Neighbourhoods always contain the node itself.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Tolerance used when checking stochasticity of user supplied matrices.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Maximum number of placements tried by [`random_geometric_network`].
pub const GEOMETRIC_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network must contain at least one node")]
    NoNodes,
    #[error("filter length must be positive")]
    ZeroFilterLength,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("cluster assignment has {got} entries, expected {expected}")]
    ClusterCountMismatch { expected: usize, got: usize },
    #[error("cluster {0} has no nodes")]
    EmptyCluster(usize),
    #[error("network graph is not connected")]
    Disconnected,
    #[error("cluster {0} does not induce a connected subgraph")]
    ClusterDisconnected(usize),
    #[error("position list has {got} entries, expected {expected}")]
    PositionCountMismatch { expected: usize, got: usize },
    #[error("no connected geometric graph found after {0} attempts")]
    GeometricConnectivity(usize),
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
}

/// Immutable description of a clustered network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    n_nodes: usize,
    filter_len: usize,
    neighbors: Vec<Vec<usize>>,
    clusters: Vec<usize>,
    n_clusters: usize,
    positions: Option<Vec<[f64; 2]>>,
}

impl NetworkSpec {
    /// Builds a network from an undirected edge list and a 0-based cluster
    /// assignment. Self-loops and duplicate edges are ignored.
    pub fn new(
        n_nodes: usize,
        filter_len: usize,
        edges: &[(usize, usize)],
        clusters: Vec<usize>,
    ) -> Result<Self, NetworkError> {
        if n_nodes == 0 {
            return Err(NetworkError::NoNodes);
        }
        if filter_len == 0 {
            return Err(NetworkError::ZeroFilterLength);
        }
        if clusters.len() != n_nodes {
            return Err(NetworkError::ClusterCountMismatch {
                expected: n_nodes,
                got: clusters.len(),
            });
        }
        let mut neighbors: Vec<Vec<usize>> = (0..n_nodes).map(|k| vec![k]).collect();
        for &(k, l) in edges {
            if k >= n_nodes || l >= n_nodes {
                return Err(NetworkError::EdgeOutOfRange(k, l, n_nodes));
            }
            if k != l {
                neighbors[k].push(l);
                neighbors[l].push(k);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let n_clusters = clusters.iter().max().map_or(0, |&q| q + 1);
        let mut sizes = vec![0usize; n_clusters];
        for &q in &clusters {
            sizes[q] += 1;
        }
        if let Some(q) = sizes.iter().position(|&s| s == 0) {
            return Err(NetworkError::EmptyCluster(q));
        }
        let spec = Self {
            n_nodes,
            filter_len,
            neighbors,
            clusters,
            n_clusters,
            positions: None,
        };
        if !spec.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        if let Some(q) = spec.first_disconnected_cluster() {
            return Err(NetworkError::ClusterDisconnected(q));
        }
        Ok(spec)
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self, NetworkError> {
        if positions.len() != self.n_nodes {
            return Err(NetworkError::PositionCountMismatch {
                expected: self.n_nodes,
                got: positions.len(),
            });
        }
        self.positions = Some(positions);
        Ok(self)
    }

    /// Same topology with every node placed in its own cluster, so that every
    /// link to a neighbour is an inter-cluster link.
    pub fn with_singleton_clusters(&self) -> Self {
        Self {
            clusters: (0..self.n_nodes).collect(),
            n_clusters: self.n_nodes,
            ..self.clone()
        }
    }

    /// Same topology with every node in one cluster.
    pub fn with_single_cluster(&self) -> Self {
        Self {
            clusters: vec![0; self.n_nodes],
            n_clusters: 1,
            ..self.clone()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    /// Dimension `N·L` of the stacked block vector.
    pub fn dim(&self) -> usize {
        self.n_nodes * self.filter_len
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn clusters(&self) -> &[usize] {
        &self.clusters
    }

    pub fn cluster_of(&self, k: usize) -> usize {
        self.clusters[k]
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// `N_k`, sorted, including `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn is_neighbor(&self, k: usize, l: usize) -> bool {
        self.neighbors[k].binary_search(&l).is_ok()
    }

    /// `N_k ∩ C(k)`; always contains `k`.
    pub fn intra_neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let q = self.clusters[k];
        self.neighbors[k]
            .iter()
            .copied()
            .filter(move |&l| self.clusters[l] == q)
    }

    /// `N_k \ C(k)`.
    pub fn inter_neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let q = self.clusters[k];
        self.neighbors[k]
            .iter()
            .copied()
            .filter(move |&l| self.clusters[l] != q)
    }

    pub fn cluster_members(&self, q: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&k| self.clusters[k] == q).collect()
    }

    /// Undirected edges `(k, l)` with `k < l`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&l| l > k).map(|&l| (k, l)));
        }
        out
    }

    /// Writes one `k l` pair per line (0-based, `k < l`) followed by a
    /// `clusters` line listing each node's cluster index.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, l) in self.edges() {
            writeln!(out, "{k} {l}")?;
        }
        write!(out, "clusters")?;
        for q in &self.clusters {
            write!(out, " {q}")?;
        }
        writeln!(out)
    }

    fn is_connected(&self) -> bool {
        let all: Vec<usize> = (0..self.n_nodes).collect();
        self.is_connected_subset(&all)
    }

    fn first_disconnected_cluster(&self) -> Option<usize> {
        (0..self.n_clusters).find(|&q| !self.is_connected_subset(&self.cluster_members(q)))
    }

    /// Breadth-first traversal restricted to `nodes`.
    fn is_connected_subset(&self, nodes: &[usize]) -> bool {
        let Some(&start) = nodes.first() else {
            return true;
        };
        let mut inside = vec![false; self.n_nodes];
        for &k in nodes {
            inside[k] = true;
        }
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighbors[k] {
                if inside[l] && !seen[l] {
                    seen[l] = true;
                    count += 1;
                    queue.push_back(l);
                }
            }
        }
        count == nodes.len()
    }
}

/// Adapt-step (`C`) and combine-step (`A`) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrices {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl CombinationMatrices {
    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            c: DMatrix::identity(n, n),
        }
    }
}

/// Regularization weights `ρ_kl` stored as `p[(k, l)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationWeights {
    pub p: DMatrix<f64>,
}

impl RegularizationWeights {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: DMatrix::zeros(n, n),
        }
    }

    /// Symmetrized weight `(ρ_kl + ρ_lk) / 2`.
    pub fn symmetric(&self, k: usize, l: usize) -> f64 {
        0.5 * (self.p[(k, l)] + self.p[(l, k)])
    }
}

/// `a_lk = 1/|N_k ∩ C(k)|` for `l ∈ N_k ∩ C(k)`.
pub fn build_uniform_a(spec: &NetworkSpec) -> DMatrix<f64> {
    let n = spec.n_nodes();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let members: Vec<usize> = spec.intra_neighbors(k).collect();
        let w = 1.0 / members.len() as f64;
        for l in members {
            a[(l, k)] = w;
        }
    }
    a
}

/// Right-stochastic counterpart of [`build_uniform_a`]:
/// `c_lk = 1/|N_l ∩ C(l)|` for `k ∈ N_l ∩ C(l)`.
pub fn build_uniform_c(spec: &NetworkSpec) -> DMatrix<f64> {
    build_uniform_a(spec).transpose()
}

/// `ρ_kl = 1/|N_k \ C(k)|` for `l ∈ N_k \ C(k)`; rows of nodes without
/// inter-cluster neighbours are zero.
pub fn build_uniform_p(spec: &NetworkSpec) -> DMatrix<f64> {
    let n = spec.n_nodes();
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n {
        let others: Vec<usize> = spec.inter_neighbors(k).collect();
        if others.is_empty() {
            continue;
        }
        let w = 1.0 / others.len() as f64;
        for l in others {
            p[(k, l)] = w;
        }
    }
    p
}

/// Which matrix a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixName {
    A,
    C,
    P,
}

impl fmt::Display for MatrixName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixName::A => "A",
            MatrixName::C => "C",
            MatrixName::P => "P",
        })
    }
}

/// First structural invariant found broken by [`validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("matrix {matrix} is {rows}x{cols}, expected {n}x{n}")]
    Dimension {
        matrix: MatrixName,
        rows: usize,
        cols: usize,
        n: usize,
    },
    #[error("matrix {matrix} entry ({row}, {col}) = {value} is negative or not finite")]
    Negative {
        matrix: MatrixName,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("column {col} of A not stochastic (sum = {sum})")]
    ColumnNotStochastic { col: usize, sum: f64 },
    #[error("row {row} of C not stochastic (sum = {sum})")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("matrix {matrix} has entry ({row}, {col}) outside its allowed support")]
    Support {
        matrix: MatrixName,
        row: usize,
        col: usize,
    },
    #[error("cluster {0} does not induce a connected subgraph")]
    ClusterDisconnected(usize),
}

/// Checks the structural invariants of `A`, `C` and `P` against `spec`.
pub fn validate(
    spec: &NetworkSpec,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(), Violation> {
    let n = spec.n_nodes();
    for (name, m) in [(MatrixName::A, a), (MatrixName::C, c), (MatrixName::P, p)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Violation::Dimension {
                matrix: name,
                rows: m.nrows(),
                cols: m.ncols(),
                n,
            });
        }
        for col in 0..n {
            for row in 0..n {
                let value = m[(row, col)];
                if !value.is_finite() || value < 0.0 {
                    return Err(Violation::Negative {
                        matrix: name,
                        row,
                        col,
                        value,
                    });
                }
            }
        }
    }
    let intra = |k: usize, l: usize| spec.is_neighbor(k, l) && spec.cluster_of(k) == spec.cluster_of(l);
    let inter = |k: usize, l: usize| spec.is_neighbor(k, l) && spec.cluster_of(k) != spec.cluster_of(l);

    for k in 0..n {
        let sum: f64 = a.column(k).sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Violation::ColumnNotStochastic { col: k, sum });
        }
        for l in 0..n {
            if a[(l, k)] != 0.0 && !intra(k, l) {
                return Err(Violation::Support {
                    matrix: MatrixName::A,
                    row: l,
                    col: k,
                });
            }
        }
    }
    for l in 0..n {
        let sum: f64 = c.row(l).sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Violation::RowNotStochastic { row: l, sum });
        }
        for k in 0..n {
            if c[(l, k)] != 0.0 && !intra(l, k) {
                return Err(Violation::Support {
                    matrix: MatrixName::C,
                    row: l,
                    col: k,
                });
            }
        }
    }
    for k in 0..n {
        for l in 0..n {
            if p[(k, l)] != 0.0 && !inter(k, l) {
                return Err(Violation::Support {
                    matrix: MatrixName::P,
                    row: k,
                    col: l,
                });
            }
        }
    }
    if let Some(q) = spec.first_disconnected_cluster() {
        return Err(Violation::ClusterDisconnected(q));
    }
    Ok(())
}

/// Parameters of the random geometric graph generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricParams {
    pub n_nodes: usize,
    /// Lower-left corner of the placement rectangle.
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub radius: f64,
    pub n_clusters: usize,
    pub filter_len: usize,
    pub seed: u64,
}

/// Places nodes uniformly in a rectangle and links pairs closer than
/// `radius`. Placements are redrawn until the graph is connected.
///
/// Clusters are grown from `n_clusters` randomly chosen seed nodes by a
/// multi-source breadth-first search with randomized visiting order, so each
/// cluster is a connected region of the graph.
pub fn random_geometric_network(params: &GeometricParams) -> Result<NetworkSpec, NetworkError> {
    let GeometricParams {
        n_nodes,
        origin,
        width,
        height,
        radius,
        n_clusters,
        filter_len,
        seed,
    } = *params;
    if n_nodes == 0 {
        return Err(NetworkError::NoNodes);
    }
    if !(width > 0.0 && height > 0.0 && radius > 0.0) {
        return Err(NetworkError::InvalidParameter(
            "width, height and radius must be positive".into(),
        ));
    }
    if n_clusters == 0 || n_clusters > n_nodes {
        return Err(NetworkError::InvalidParameter(format!(
            "n_clusters must lie in 1..={n_nodes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GEOMETRIC_MAX_ATTEMPTS {
        let positions: Vec<[f64; 2]> = (0..n_nodes)
            .map(|_| {
                [
                    origin[0] + width * rng.random::<f64>(),
                    origin[1] + height * rng.random::<f64>(),
                ]
            })
            .collect();
        let mut edges = Vec::new();
        for k in 0..n_nodes {
            for l in (k + 1)..n_nodes {
                let dx = positions[k][0] - positions[l][0];
                let dy = positions[k][1] - positions[l][1];
                if dx * dx + dy * dy <= radius * radius {
                    edges.push((k, l));
                }
            }
        }
        let flat = match NetworkSpec::new(n_nodes, filter_len, &edges, vec![0; n_nodes]) {
            Ok(spec) => spec,
            Err(NetworkError::Disconnected) => continue,
            Err(e) => return Err(e),
        };
        let clusters = grow_clusters(&flat, n_clusters, &mut rng);
        return NetworkSpec::new(n_nodes, filter_len, &edges, clusters)?.with_positions(positions);
    }
    Err(NetworkError::GeometricConnectivity(GEOMETRIC_MAX_ATTEMPTS))
}

fn grow_clusters(spec: &NetworkSpec, n_clusters: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = spec.n_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates for the seed nodes
    for i in 0..n_clusters {
        let j = rng.random_range(i..n);
        order.swap(i, j);
    }
    let mut label = vec![usize::MAX; n];
    let mut frontier: Vec<usize> = Vec::with_capacity(n);
    for (q, &k) in order.iter().take(n_clusters).enumerate() {
        label[k] = q;
        frontier.push(k);
    }
    // Randomized flood fill: repeatedly pick a random frontier node and claim
    // one of its unlabelled neighbours.
    while !frontier.is_empty() {
        let i = rng.random_range(0..frontier.len());
        let k = frontier[i];
        let free: Vec<usize> = spec
            .neighbors(k)
            .iter()
            .copied()
            .filter(|&l| label[l] == usize::MAX)
            .collect();
        if free.is_empty() {
            frontier.swap_remove(i);
            continue;
        }
        let l = free[rng.random_range(0..free.len())];
        label[l] = label[k];
        frontier.push(l);
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3_two_clusters() -> NetworkSpec {
        // 0 - 1 - 2, clusters {0,1} {2}
        NetworkSpec::new(3, 1, &[(0, 1), (1, 2)], vec![0, 0, 1]).unwrap()
    }

    #[test]
    fn neighborhoods_include_self_and_are_symmetric() {
        let spec = path3_two_clusters();
        for k in 0..3 {
            assert!(spec.is_neighbor(k, k));
            for &l in spec.neighbors(k) {
                assert!(spec.is_neighbor(l, k));
            }
        }
        assert_eq!(spec.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_disconnected_graph_and_cluster() {
        assert_eq!(
            NetworkSpec::new(3, 1, &[(0, 1)], vec![0, 0, 0]),
            Err(NetworkError::Disconnected)
        );
        // cluster 0 = {0, 2} not adjacent
        assert_eq!(
            NetworkSpec::new(3, 1, &[(0, 1), (1, 2)], vec![0, 1, 0]),
            Err(NetworkError::ClusterDisconnected(0))
        );
        assert_eq!(
            NetworkSpec::new(2, 1, &[(0, 1)], vec![0, 2]),
            Err(NetworkError::EmptyCluster(1))
        );
    }

    #[test]
    fn isolated_in_cluster_node_keeps_itself() {
        let spec = path3_two_clusters();
        let a = build_uniform_a(&spec);
        assert_eq!(a[(2, 2)], 1.0);
        assert_eq!(a[(1, 2)], 0.0);
    }

    #[test]
    fn clique_uniform_a_is_one_third() {
        let spec = NetworkSpec::new(3, 2, &[(0, 1), (1, 2), (0, 2)], vec![0; 3]).unwrap();
        let a = build_uniform_a(&spec);
        assert!(a.iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn uniform_p_rows() {
        // star: 0 connected to 1 and 2, each in its own cluster
        let spec = NetworkSpec::new(4, 1, &[(0, 1), (0, 2), (2, 3)], vec![0, 1, 2, 2]).unwrap();
        let p = build_uniform_p(&spec);
        assert_eq!(p[(0, 1)], 0.5);
        assert_eq!(p[(0, 2)], 0.5);
        assert_eq!(p[(1, 0)], 1.0);
        // node 3 only has an intra-cluster neighbour
        assert!(p.row(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validate_reports_broken_column() {
        let spec = path3_two_clusters();
        let mut a = build_uniform_a(&spec);
        a[(0, 0)] -= 0.1;
        let c = DMatrix::identity(3, 3);
        let p = build_uniform_p(&spec);
        assert!(matches!(
            validate(&spec, &a, &c, &p),
            Err(Violation::ColumnNotStochastic { col: 0, .. })
        ));
    }

    #[test]
    fn identity_c_is_always_valid() {
        let spec = path3_two_clusters();
        for s in [spec.clone(), spec.with_singleton_clusters(), spec.with_single_cluster()] {
            let a = build_uniform_a(&s);
            let p = build_uniform_p(&s);
            assert_eq!(validate(&s, &a, &DMatrix::identity(3, 3), &p), Ok(()));
        }
    }

    #[test]
    fn intra_cluster_rho_is_a_support_violation() {
        let spec = path3_two_clusters();
        let a = build_uniform_a(&spec);
        let mut p = build_uniform_p(&spec);
        p[(0, 1)] = 0.3;
        assert_eq!(
            validate(&spec, &a, &DMatrix::identity(3, 3), &p),
            Err(Violation::Support {
                matrix: MatrixName::P,
                row: 0,
                col: 1
            })
        );
    }

    #[test]
    fn uniform_c_respects_row_support() {
        let spec = path3_two_clusters();
        let c = build_uniform_c(&spec);
        let a = build_uniform_a(&spec);
        assert_eq!(validate(&spec, &a, &c, &build_uniform_p(&spec)), Ok(()));
        assert_eq!(c[(0, 1)], 0.5);
        assert_eq!(c[(2, 2)], 1.0);
    }

    #[test]
    fn edge_list_format() {
        let mut buf = Vec::new();
        path3_two_clusters().write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1\n1 2\nclusters 0 0 1\n");
    }

    fn geo(n: usize, seed: u64) -> GeometricParams {
        GeometricParams {
            n_nodes: n,
            origin: [0.0, 0.0],
            width: 10.0,
            height: 10.0,
            radius: 4.0,
            n_clusters: 1.min(n),
            filter_len: 2,
            seed,
        }
    }

    #[test]
    fn geometric_single_node() {
        let spec = random_geometric_network(&geo(1, 3)).unwrap();
        assert_eq!(spec.n_nodes(), 1);
        assert_eq!(spec.neighbors(0), &[0]);
    }

    #[test]
    fn geometric_is_deterministic_and_clusters_connected() {
        let mut params = geo(30, 42);
        params.n_clusters = 3;
        let a = random_geometric_network(&params).unwrap();
        let b = random_geometric_network(&params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_clusters(), 3);
        assert!(a.positions().is_some());
    }

    #[test]
    fn geometric_reports_connectivity_failure() {
        let mut params = geo(20, 1);
        params.width = 1000.0;
        params.height = 1000.0;
        params.radius = 1.0;
        assert_eq!(
            random_geometric_network(&params),
            Err(NetworkError::GeometricConnectivity(GEOMETRIC_MAX_ATTEMPTS))
        );
    }
}
