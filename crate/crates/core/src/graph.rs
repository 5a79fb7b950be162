//! Leader/follower communication topology.
//!
//! Nodes are labelled `1..=N` with followers `1..=M` first and leaders
//! `M+1..=N` after them. Follower edges are undirected; leader edges point
//! from a leader to a follower. The adjacency convention is
//! `a[i][j] = 1` iff node `i` receives information from node `j`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::matcore::{self, kron, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    num_followers: usize,
    num_leaders: usize,
    adjacency: Matrix,
}

impl CommGraph {
    pub fn num_followers(&self) -> usize {
        self.num_followers
    }

    pub fn num_leaders(&self) -> usize {
        self.num_leaders
    }

    pub fn num_nodes(&self) -> usize {
        self.num_followers + self.num_leaders
    }

    /// `a[i][j]`, zero-based.
    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn is_leader(&self, node: usize) -> bool {
        node >= self.num_followers
    }

    /// Zero-based in-neighbours of `node`.
    pub fn in_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(move |&j| self.adjacency[(node, j)] != 0.0)
    }

    pub fn laplacian(&self) -> Matrix {
        let n = self.num_nodes();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            l[(i, i)] = self.adjacency.row(i).sum();
        }
        l
    }
}

/// Builds and validates a graph from 1-based edge pairs `(from, to)`.
///
/// Follower–follower pairs may be listed in either orientation (or both).
/// Leader edges must be written `(leader, follower)`.
pub fn build_graph(num_followers: usize, num_leaders: usize, edges: &[(usize, usize)]) -> Result<CommGraph> {
    if num_followers == 0 || num_leaders == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = num_followers + num_leaders;
    let is_leader = |label: usize| label > num_followers;
    let mut adjacency = Matrix::zeros(n, n);
    for &(from, to) in edges {
        for label in [from, to] {
            if label == 0 || label > n {
                return Err(Error::LabelOutOfRange { label, max: n });
            }
        }
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        if is_leader(to) {
            return Err(Error::EdgeIntoLeader { from, to });
        }
        adjacency[(to - 1, from - 1)] = 1.0;
        if !is_leader(from) {
            adjacency[(from - 1, to - 1)] = 1.0;
        }
    }

    if !followers_connected(&adjacency, num_followers) {
        return Err(Error::FollowersDisconnected);
    }
    for leader in num_followers..n {
        if (0..num_followers).all(|f| adjacency[(f, leader)] == 0.0) {
            return Err(Error::IsolatedLeader(leader + 1));
        }
    }
    Ok(CommGraph {
        num_followers,
        num_leaders,
        adjacency,
    })
}

fn followers_connected(adjacency: &Matrix, m: usize) -> bool {
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            if !seen[j] && adjacency[(i, j)] != 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Arbitrary node labels with an explicit leader set, normalised to the
/// followers-first numbering. Followers keep ascending label order; leaders
/// keep the order in which they are listed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub followers: Vec<i64>,
    pub leaders: Vec<i64>,
}

impl LabelMap {
    pub fn new(labels: &BTreeSet<i64>, leaders: &[i64]) -> Result<Self> {
        for l in leaders {
            if !labels.contains(l) {
                return Err(Error::ModelInvariant(format!("leader {l} is not a graph node")));
            }
        }
        let followers = labels
            .iter()
            .copied()
            .filter(|l| !leaders.contains(l))
            .collect();
        Ok(Self {
            followers,
            leaders: leaders.to_vec(),
        })
    }

    /// 1-based normalised index of a user label.
    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.followers
            .iter()
            .position(|&l| l == label)
            .map(|p| p + 1)
            .or_else(|| {
                self.leaders
                    .iter()
                    .position(|&l| l == label)
                    .map(|p| self.followers.len() + p + 1)
            })
    }
}

#[derive(Debug, Clone)]
pub struct LaplacianPartition {
    pub laplacian: Matrix,
    /// Follower–follower block.
    pub l1: Matrix,
    /// Follower–leader block.
    pub l2: Matrix,
    /// Ascending spectrum of `l1`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of `l1`, columns matching `eigenvalues`.
    pub eigenvectors: Matrix,
    /// `−L1⁻¹ L2`; each row holds convex-combination weights over leaders.
    pub hull_coeffs: Matrix,
}

impl LaplacianPartition {
    pub fn num_followers(&self) -> usize {
        self.l1.nrows()
    }

    pub fn num_leaders(&self) -> usize {
        self.l2.ncols()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

pub fn laplacian_partition(g: &CommGraph) -> Result<LaplacianPartition> {
    let m = g.num_followers();
    let k = g.num_leaders();
    let laplacian = g.laplacian();
    let l1 = laplacian.view((0, 0), (m, m)).clone_owned();
    let l2 = laplacian.view((0, m), (m, k)).clone_owned();
    let (eigenvalues, eigenvectors) = matcore::eig_sym(&l1)?;
    if eigenvalues[0] <= 0.0 {
        return Err(Error::InvalidSpectrum(format!(
            "L1 is not positive definite (smallest eigenvalue {:.3e})",
            eigenvalues[0]
        )));
    }
    let hull_coeffs = -l1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("Cholesky factorisation of L1 failed".into()))?
        .solve(&l2);
    Ok(LaplacianPartition {
        laplacian,
        l1,
        l2,
        eigenvalues,
        eigenvectors,
        hull_coeffs,
    })
}

/// `(hull_coeffs ⊗ I_k) · leader_states` for leader states stacked in
/// `k`-dimensional blocks.
pub fn hull_point(part: &LaplacianPartition, leader_states: &Matrix) -> Result<Matrix> {
    let leaders = part.num_leaders();
    if leader_states.ncols() != 1 || leader_states.nrows() % leaders != 0 || leader_states.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "leader state stack of length {} is not a multiple of {leaders} leaders",
            leader_states.nrows()
        )));
    }
    let k = leader_states.nrows() / leaders;
    Ok(kron(&part.hull_coeffs, &matcore::identity(k)) * leader_states)
}

/// The example topology with six followers and leaders 7, 8, 9. The
/// follower block is fixed by its target `L1`; leader edges are
/// 7→2, 8→3, 8→4, 9→4, 9→6, matching its diagonal.
pub fn six_follower_example() -> CommGraph {
    build_graph(
        6,
        3,
        &[
            (1, 2),
            (1, 3),
            (1, 5),
            (1, 6),
            (2, 3),
            (3, 4),
            (4, 5),
            (5, 6),
            (7, 2),
            (8, 3),
            (8, 4),
            (9, 4),
            (9, 6),
        ],
    )
    .expect("example topology is valid")
}
