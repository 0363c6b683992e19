//! Graph and rigidity linear algebra for the agent network.
//!
//! A [`Framework`] couples an undirected, connected, minimally rigid graph
//! with desired edge lengths. All matrices follow one ordering contract:
//! edges keep their declared order, and the edge tail carries the `+1`
//! incidence sign, so `z_k = q_tail - q_head` everywhere.

use nalgebra::DMatrix;

use crate::error::NetworkError;
use crate::stacked::StackedVector;

/// Relative singular values below this count as zero in rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Absolute threshold on the second Laplacian eigenvalue for connectivity.
const CONNECTIVITY_TOLERANCE: f64 = 1e-9;

/// An undirected, connected, minimally rigid graph with desired edge lengths.
///
/// Agent indices are zero-based. Edge `k = (tail, head)` prescribes the
/// desired distance `desired_lengths[k]` between the two agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Framework {
    n: usize,
    d: usize,
    edges: Vec<(usize, usize)>,
    desired_lengths: Vec<f64>,
}

impl Framework {
    /// Validates every framework invariant: dimension in {2, 3}, no self
    /// loops or duplicate edges, exactly `2n-3` (planar) or `3n-6` (spatial)
    /// edges, positive desired lengths, and a connected graph.
    pub fn new(
        n: usize,
        d: usize,
        edges: Vec<(usize, usize)>,
        desired_lengths: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewAgents(n));
        }
        if d != 2 && d != 3 {
            return Err(NetworkError::BadDimension(d));
        }
        let expected = Self::minimal_edge_count(n, d);
        if edges.len() != expected {
            return Err(NetworkError::EdgeCount { expected, actual: edges.len(), n, d });
        }
        if desired_lengths.len() != edges.len() {
            return Err(NetworkError::DimensionMismatch {
                expected: edges.len(),
                actual: desired_lengths.len(),
            });
        }
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(NetworkError::EdgeOutOfRange(i, j));
            }
            if i == j {
                return Err(NetworkError::SelfLoop(i));
            }
            for &(a, b) in &edges[..k] {
                if (a, b) == (i, j) || (a, b) == (j, i) {
                    return Err(NetworkError::DuplicateEdge(i, j));
                }
            }
        }
        for (k, &len) in desired_lengths.iter().enumerate() {
            if !(len > 0.0) || !len.is_finite() {
                return Err(NetworkError::BadLength(k, len));
            }
        }
        // Spectral connectivity check on the raw edge list.
        let lambda2 = algebraic_connectivity_of(n, &edges);
        if lambda2 <= CONNECTIVITY_TOLERANCE {
            return Err(NetworkError::Disconnected(lambda2));
        }
        Ok(Self { n, d, edges, desired_lengths })
    }

    pub fn minimal_edge_count(n: usize, d: usize) -> usize {
        match d {
            2 => n.saturating_mul(2).saturating_sub(3),
            _ => n.saturating_mul(3).saturating_sub(6),
        }
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn desired_lengths(&self) -> &[f64] {
        &self.desired_lengths
    }

    /// Neighbors of agent `i`, in edge order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Rank a generic configuration must reach for infinitesimal rigidity.
    pub fn rigidity_rank_target(&self) -> usize {
        self.d * self.n - self.d * (self.d + 1) / 2
    }

    fn check_positions(&self, q: &StackedVector) {
        assert_eq!(q.block_size(), self.d, "position block size must equal ambient dimension");
        assert_eq!(q.block_count(), self.n, "position block count must equal agent count");
    }
}

/// Node-by-edge incidence matrix over a raw edge list: tail +1, head -1.
pub(crate) fn incidence_of(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, edges.len());
    for (k, &(tail, head)) in edges.iter().enumerate() {
        b[(tail, k)] = 1.0;
        b[(head, k)] = -1.0;
    }
    b
}

/// Graph Laplacian over a raw edge list, built degree/adjacency-wise.
/// Equals `B * B^T` exactly since all entries are small integers.
pub(crate) fn laplacian_of(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
    }
    l
}

pub(crate) fn algebraic_connectivity_of(n: usize, edges: &[(usize, usize)]) -> f64 {
    let l = laplacian_of(n, edges);
    let mut eig: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig[1]
}

/// Incidence matrix `B` of the framework graph (`n x |E|`).
pub fn incidence_matrix(fw: &Framework) -> DMatrix<f64> {
    incidence_of(fw.n, &fw.edges)
}

/// Laplacian `L = B B^T` (`n x n`).
pub fn laplacian(fw: &Framework) -> DMatrix<f64> {
    laplacian_of(fw.n, &fw.edges)
}

/// Second-smallest Laplacian eigenvalue.
pub fn algebraic_connectivity(fw: &Framework) -> f64 {
    algebraic_connectivity_of(fw.n, &fw.edges)
}

/// Stacked relative positions `z = B̄^T q`, one `d`-block per edge with
/// `z_k = q_tail - q_head`.
pub fn relative_positions(fw: &Framework, q: &StackedVector) -> Result<StackedVector, NetworkError> {
    if q.block_size() != fw.d || q.block_count() != fw.n {
        return Err(NetworkError::DimensionMismatch {
            expected: fw.d * fw.n,
            actual: q.len(),
        });
    }
    let mut z = StackedVector::zeros(fw.d, fw.edges.len());
    for (k, &(tail, head)) in fw.edges.iter().enumerate() {
        let qt = q.block(tail);
        let qh = q.block(head);
        let zk = z.block_mut(k);
        for a in 0..fw.d {
            zk[a] = qt[a] - qh[a];
        }
    }
    Ok(z)
}

/// Rigidity matrix `R(z)` (`|E| x dn`): row `k` holds `z_k^T` in the tail
/// agent's columns and `-z_k^T` in the head agent's columns. Equals half
/// the Jacobian of the squared-edge-length map.
pub fn rigidity_matrix(fw: &Framework, q: &StackedVector) -> DMatrix<f64> {
    fw.check_positions(q);
    let z = relative_positions(fw, q).expect("positions checked above");
    let mut r = DMatrix::zeros(fw.edges.len(), fw.d * fw.n);
    for (k, &(tail, head)) in fw.edges.iter().enumerate() {
        let zk = z.block(k);
        for a in 0..fw.d {
            r[(k, tail * fw.d + a)] = zk[a];
            r[(k, head * fw.d + a)] = -zk[a];
        }
    }
    r
}

/// Squared distance errors `e_k = ||z_k||^2 - d_k^2`, one scalar per edge.
pub fn distance_errors(fw: &Framework, q: &StackedVector) -> StackedVector {
    fw.check_positions(q);
    let z = relative_positions(fw, q).expect("positions checked above");
    let mut e = StackedVector::zeros(1, fw.edges.len());
    for k in 0..fw.edges.len() {
        let zk = z.block(k);
        let norm_sq: f64 = zk.iter().map(|x| x * x).sum();
        e.block_mut(k)[0] = norm_sq - fw.desired_lengths[k] * fw.desired_lengths[k];
    }
    e
}

/// Numerical rank, counting singular values above `RANK_TOLERANCE` times
/// the largest one.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// True iff the configuration is infinitesimally and minimally rigid:
/// `rank R(z) = dn - d(d+1)/2` together with the matching edge count
/// (the latter holds by construction of [`Framework`]).
pub fn is_infinitesimally_minimally_rigid(fw: &Framework, q: &StackedVector) -> bool {
    let target = fw.rigidity_rank_target();
    if fw.edges.len() != target {
        return false;
    }
    numerical_rank(&rigidity_matrix(fw, q)) == target
}
