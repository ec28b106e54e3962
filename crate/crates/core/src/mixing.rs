//! Interaction weight matrices for the gossip step.
//!
//! A valid mixing matrix is symmetric, doubly stochastic, nonnegative, and
//! connected (`sigma2 < 1`, where `sigma2` is the largest eigenvalue
//! magnitude on the subspace orthogonal to the consensus direction). The
//! lazy variant `(1-eps)·I + eps·A` is the effective per-round averaging
//! operator under a consensus stepsize `eps`.

use nalgebra::DMatrix;
use thiserror::Error;

/// Stochasticity / symmetry validation tolerance: ~100x double round-off
/// for the matrix sizes this simulator targets (N <= 1e3).
pub const VALIDATION_TOL: f64 = 1e-12;

/// Validated symmetric doubly stochastic weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    n_agents: usize,
    sigma2: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MixingError {
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("weight matrix must be nonempty")]
    Empty,
    #[error("non-finite weight at ({i},{j})")]
    NonFinite { i: usize, j: usize },
    #[error("asymmetric weights at ({i},{j}): {a_ij} vs {a_ji}")]
    Asymmetric { i: usize, j: usize, a_ij: f64, a_ji: f64 },
    #[error("negative weight {value} at ({i},{j})")]
    Negative { i: usize, j: usize, value: f64 },
    #[error("row {i} sums to {sum}, expected 1")]
    RowSum { i: usize, sum: f64 },
    #[error("column {j} sums to {sum}, expected 1")]
    ColSum { j: usize, sum: f64 },
    #[error("interaction graph is disconnected (sigma2 = {sigma2})")]
    Disconnected { sigma2: f64 },
    #[error("edge ({i},{j}) references an agent outside 0..{n}")]
    NodeOutOfRange { i: usize, j: usize, n: usize },
    #[error("self-loop on agent {0} is not allowed")]
    SelfLoop(usize),
    #[error("need at least one agent")]
    NoAgents,
    #[error("consensus stepsize must lie in (0,1], got {0}")]
    BadLazyStep(f64),
}

impl MixingMatrix {
    /// Validate a raw weight matrix and compute its spectral gap.
    ///
    /// `sigma2` is the spectral radius of `A - 11ᵀ/N`, i.e. the largest
    /// eigenvalue *magnitude* once the consensus eigenvalue is projected
    /// out. Connectivity requires `sigma2 < 1`.
    pub fn from_weights(raw: DMatrix<f64>) -> Result<Self, MixingError> {
        let (rows, cols) = raw.shape();
        if rows != cols {
            return Err(MixingError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(MixingError::Empty);
        }
        let n = rows;
        for i in 0..n {
            for j in 0..n {
                let v = raw[(i, j)];
                if !v.is_finite() {
                    return Err(MixingError::NonFinite { i, j });
                }
                if v < 0.0 {
                    return Err(MixingError::Negative { i, j, value: v });
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a_ij, a_ji) = (raw[(i, j)], raw[(j, i)]);
                if (a_ij - a_ji).abs() > VALIDATION_TOL {
                    return Err(MixingError::Asymmetric { i, j, a_ij, a_ji });
                }
            }
        }
        for i in 0..n {
            let sum: f64 = raw.row(i).iter().sum();
            if (sum - 1.0).abs() > VALIDATION_TOL {
                return Err(MixingError::RowSum { i, sum });
            }
        }
        for j in 0..n {
            let sum: f64 = raw.column(j).iter().sum();
            if (sum - 1.0).abs() > VALIDATION_TOL {
                return Err(MixingError::ColSum { j, sum });
            }
        }
        let sigma2 = consensus_orthogonal_radius(&raw);
        if sigma2 >= 1.0 - VALIDATION_TOL {
            return Err(MixingError::Disconnected { sigma2 });
        }
        Ok(Self {
            weights: raw,
            n_agents: n,
            sigma2,
        })
    }

    /// Metropolis weights on an undirected graph:
    /// `a_ij = 1/(1 + max(deg_i, deg_j))` on edges, diagonal absorbs the rest.
    pub fn metropolis(edges: &[(usize, usize)], n_agents: usize) -> Result<Self, MixingError> {
        if n_agents == 0 {
            return Err(MixingError::NoAgents);
        }
        let mut adj = vec![vec![false; n_agents]; n_agents];
        for &(i, j) in edges {
            if i >= n_agents || j >= n_agents {
                return Err(MixingError::NodeOutOfRange { i, j, n: n_agents });
            }
            if i == j {
                return Err(MixingError::SelfLoop(i));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&e| e).count()).collect();
        let mut w = DMatrix::<f64>::zeros(n_agents, n_agents);
        for i in 0..n_agents {
            for j in 0..n_agents {
                if adj[i][j] {
                    w[(i, j)] = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
                }
            }
        }
        for i in 0..n_agents {
            let off: f64 = w.row(i).iter().sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::from_weights(w)
    }

    /// Ring topology with Metropolis weights (the default experiment graph).
    pub fn metropolis_ring(n_agents: usize) -> Result<Self, MixingError> {
        if n_agents == 1 {
            return Self::from_weights(DMatrix::from_element(1, 1, 1.0));
        }
        let edges: Vec<(usize, usize)> = (0..n_agents).map(|i| (i, (i + 1) % n_agents)).collect();
        let dedup: Vec<(usize, usize)> = if n_agents == 2 { vec![(0, 1)] } else { edges };
        Self::metropolis(&dedup, n_agents)
    }

    /// Complete graph with Metropolis weights.
    pub fn metropolis_complete(n_agents: usize) -> Result<Self, MixingError> {
        let mut edges = Vec::new();
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                edges.push((i, j));
            }
        }
        if n_agents == 1 {
            return Self::from_weights(DMatrix::from_element(1, 1, 1.0));
        }
        Self::metropolis(&edges, n_agents)
    }

    /// Path topology with Metropolis weights.
    pub fn metropolis_path(n_agents: usize) -> Result<Self, MixingError> {
        if n_agents == 1 {
            return Self::from_weights(DMatrix::from_element(1, 1, 1.0));
        }
        let edges: Vec<(usize, usize)> = (0..n_agents - 1).map(|i| (i, i + 1)).collect();
        Self::metropolis(&edges, n_agents)
    }

    /// Lazy averaging operator `(1-eps)·I + eps·A` for `eps` in (0,1].
    pub fn lazy(&self, eps: f64) -> Result<DMatrix<f64>, MixingError> {
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
            return Err(MixingError::BadLazyStep(eps));
        }
        let n = self.n_agents;
        let mut m = &self.weights * eps;
        for i in 0..n {
            m[(i, i)] += 1.0 - eps;
        }
        Ok(m)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Neighbor count of agent `i` (positive off-diagonal weights).
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n_agents)
            .filter(|&j| j != i && self.weights[(i, j)] > 0.0)
            .count()
    }

    /// Off-diagonal neighbors of `i` with their weights, plus the diagonal.
    pub fn row_support(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.n_agents)
            .filter(|&j| self.weights[(i, j)] > 0.0 || j == i)
            .map(|j| (j, self.weights[(i, j)]))
            .collect()
    }
}

/// Spectral radius of `A - 11ᵀ/N` via symmetric eigendecomposition.
fn consensus_orthogonal_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut b = a.clone();
    let off = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] -= off;
        }
    }
    b.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// Parse a whitespace-separated matrix file: one row per line, blank lines
/// and `#` comments ignored. All rows must have equal length.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>, MatrixParseError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in body.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| MatrixParseError::BadNumber {
                line: lineno + 1,
                token: tok.to_string(),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(MatrixParseError::RaggedRow {
                    line: lineno + 1,
                    expected: first.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MatrixParseError::Empty);
    }
    let n_rows = rows.len();
    let n_cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(
        n_rows,
        n_cols,
        rows.into_iter().flatten(),
    ))
}

/// Parse an edge-list file: one `i j` pair of 0-based agent ids per line,
/// blank lines and `#` comments ignored.
pub fn parse_edge_list_text(text: &str) -> Result<Vec<(usize, usize)>, MatrixParseError> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(MatrixParseError::BadEdge {
                line: lineno + 1,
                got: toks.len(),
            });
        }
        let mut pair = [0usize; 2];
        for (slot, tok) in pair.iter_mut().zip(&toks) {
            *slot = tok.parse().map_err(|_| MatrixParseError::BadNumber {
                line: lineno + 1,
                token: tok.to_string(),
            })?;
        }
        edges.push((pair[0], pair[1]));
    }
    Ok(edges)
}

#[derive(Debug, Error, PartialEq)]
pub enum MatrixParseError {
    #[error("line {line}: cannot parse '{token}' as a number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: row has {got} entries, expected {expected}")]
    RaggedRow { line: usize, expected: usize, got: usize },
    #[error("line {line}: edge needs exactly 2 agent ids, got {got}")]
    BadEdge { line: usize, got: usize },
    #[error("matrix file contains no rows")]
    Empty,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn rank_one_averaging_matrix_is_valid() {
        let m = MixingMatrix::from_weights(DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert!(m.sigma2().abs() < 1e-14);
    }

    #[test]
    fn ring_of_five_matches_closed_form_gap() {
        // Eigenvalues are 1/3 + (2/3)cos(2*pi*j/5); the largest magnitude on
        // the orthogonal subspace is (1+sqrt(5))/6.
        let m = MixingMatrix::metropolis_ring(5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j || (i + 1) % 5 == j || (j + 1) % 5 == i {
                    1.0 / 3.0
                } else {
                    0.0
                };
                assert!((m.weights()[(i, j)] - expect).abs() < 1e-15);
            }
        }
        let expected = (1.0 + 5.0f64.sqrt()) / 6.0;
        assert!((m.sigma2() - expected).abs() < 1e-12, "sigma2 {}", m.sigma2());
    }

    #[test]
    fn identity_matrix_is_disconnected() {
        let err = MixingMatrix::from_weights(DMatrix::identity(5, 5)).unwrap_err();
        assert!(matches!(err, MixingError::Disconnected { sigma2 } if (sigma2 - 1.0).abs() < 1e-12));
    }

    #[test]
    fn complete_graph_weights() {
        let m = MixingMatrix::metropolis_complete(5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((m.weights()[(i, j)] - 0.2).abs() < 1e-15);
            }
        }
        assert!(m.sigma2() < 1e-12);
    }

    #[test]
    fn path_of_two_is_the_averaging_matrix() {
        let m = MixingMatrix::metropolis_path(2).unwrap();
        for v in m.weights().iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn disconnected_edge_list_is_rejected() {
        // Two components: {0,1} and {2,3}.
        let err = MixingMatrix::metropolis(&[(0, 1), (2, 3)], 4).unwrap_err();
        assert!(matches!(err, MixingError::Disconnected { .. }));
    }

    #[test]
    fn validation_diagnostics_are_distinct() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.6]);
        assert!(matches!(
            MixingMatrix::from_weights(asym),
            Err(MixingError::Asymmetric { .. })
        ));
        let badrow = DMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.6, 0.6]);
        assert!(matches!(
            MixingMatrix::from_weights(badrow),
            Err(MixingError::RowSum { .. })
        ));
        let neg = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        assert!(matches!(
            MixingMatrix::from_weights(neg),
            Err(MixingError::Negative { .. })
        ));
        assert!(matches!(
            MixingMatrix::metropolis(&[(0, 5)], 3),
            Err(MixingError::NodeOutOfRange { .. })
        ));
        assert!(matches!(
            MixingMatrix::metropolis(&[(1, 1)], 3),
            Err(MixingError::SelfLoop(1))
        ));
    }

    #[test]
    fn lazy_preserves_double_stochasticity() {
        let m = MixingMatrix::metropolis_ring(5).unwrap();
        for eps in [1e-6, 0.25, 0.5, 1.0] {
            let a_k = m.lazy(eps).unwrap();
            for i in 0..5 {
                let row: f64 = a_k.row(i).iter().sum();
                let col: f64 = a_k.column(i).iter().sum();
                assert!((row - 1.0).abs() < 1e-12);
                assert!((col - 1.0).abs() < 1e-12);
            }
            for i in 0..5 {
                for j in 0..5 {
                    assert!((a_k[(i, j)] - a_k[(j, i)]).abs() < 1e-15);
                }
            }
        }
        assert_eq!(m.lazy(1.0).unwrap(), *m.weights());
        assert!(matches!(m.lazy(0.0), Err(MixingError::BadLazyStep(_))));
        assert!(matches!(m.lazy(1.5), Err(MixingError::BadLazyStep(_))));
    }

    #[test]
    fn lazy_half_on_averaging_matrix() {
        let m = MixingMatrix::from_weights(DMatrix::from_element(2, 2, 0.5)).unwrap();
        let a_k = m.lazy(0.5).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((a_k - expect).norm() < 1e-15);
    }

    #[test]
    fn lazy_contraction_rate() {
        // sigma2((1-eps)I + eps*A) = 1 - eps*(1 - sigma2(A)) for our graphs.
        let m = MixingMatrix::metropolis_ring(5).unwrap();
        for eps in [0.2, 0.7, 1.0] {
            let lazy = MixingMatrix::from_weights(m.lazy(eps).unwrap()).unwrap();
            let expect = 1.0 - eps * (1.0 - m.sigma2());
            assert!((lazy.sigma2() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma2_matches_power_iteration_oracle() {
        // Independent route: power iteration on A - 11^T/N.
        let m = MixingMatrix::metropolis(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)], 5)
            .unwrap();
        let n = 5;
        let mut b = m.weights().clone();
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] -= 1.0 / n as f64;
            }
        }
        // Power iteration on B^2 (PSD) to avoid sign flapping.
        let b2 = &b * &b;
        let mut v = DVector::from_fn(n, |i, _| (i as f64 + 1.0).sin());
        let mut lam = 0.0;
        for _ in 0..10_000 {
            v = &b2 * v;
            let norm = v.norm();
            assert!(norm > 0.0);
            v /= norm;
            lam = (v.transpose() * &b2 * &v)[(0, 0)];
        }
        assert!((lam.sqrt() - m.sigma2()).abs() < 1e-10);
    }

    #[test]
    fn metropolis_always_validates_on_connected_graphs() {
        for n in 2..=12 {
            MixingMatrix::metropolis_ring(n).unwrap();
            MixingMatrix::metropolis_path(n).unwrap();
            MixingMatrix::metropolis_complete(n).unwrap();
        }
        // Star graph: hub 0.
        let star: Vec<(usize, usize)> = (1..8).map(|i| (0, i)).collect();
        MixingMatrix::metropolis(&star, 8).unwrap();
    }

    #[test]
    fn matrix_text_round_trip() {
        let text = "# averaging pair\n0.5 0.5\n0.5 0.5\n";
        let raw = parse_matrix_text(text).unwrap();
        MixingMatrix::from_weights(raw).unwrap();
        assert!(matches!(
            parse_matrix_text("0.5 x\n"),
            Err(MatrixParseError::BadNumber { line: 1, .. })
        ));
        assert!(matches!(
            parse_matrix_text("0.5 0.5\n0.5\n"),
            Err(MatrixParseError::RaggedRow { line: 2, .. })
        ));
        assert_eq!(parse_matrix_text("# only comments\n"), Err(MatrixParseError::Empty));
    }

    #[test]
    fn edge_list_text_parses() {
        let edges = parse_edge_list_text("0 1\n1 2 # closes the path\n\n").unwrap();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
        assert!(matches!(
            parse_edge_list_text("0 1 2\n"),
            Err(MatrixParseError::BadEdge { line: 1, got: 3 })
        ));
    }
}
