//! Distributed low-rank matrix factorization.
//!
//! Factor a target matrix `A` (observed entrywise) as `U·Vᵀ` with
//! `U: m×r`, `V: n×r`. Agent `i` owns a disjoint slice of the observed
//! entries and its private objective is
//! `f_i(U,V) = (1/2)·sum_{(a,b) in Omega_i} (U_a·V_b - A_ab)²`,
//! so the global objective is `1/(2N)` times the squared residual over all
//! observed entries. The variable layout is row-major `U` stacked above
//! row-major `V`, `d = (m+n)·r`.

use nalgebra::DVector;

use super::{ensure_finite, Objective, ObjectiveError};
use crate::rng::{stream, Domain};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MatrixFactorization {
    m: usize,
    n: usize,
    rank: usize,
    /// Per-agent observed entries `(row, col, value)`, disjoint across agents.
    entries: Vec<Vec<(usize, usize, f64)>>,
    /// Frobenius norm of the observed target entries.
    target_norm: f64,
}

impl MatrixFactorization {
    /// Build from a global triplet list, partitioned round-robin by row
    /// index (`row % n_agents` owns the entry).
    pub fn from_triplets(
        m: usize,
        n: usize,
        rank: usize,
        n_agents: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, ObjectiveError> {
        if m == 0 || n == 0 || rank == 0 || n_agents == 0 {
            return Err(ObjectiveError::InvalidData(
                "matrix shape, rank, and agent count must be positive".into(),
            ));
        }
        if rank > m.min(n) {
            return Err(ObjectiveError::InvalidData(format!(
                "rank {rank} exceeds min(m, n) = {}",
                m.min(n)
            )));
        }
        let mut row_seen = vec![false; m];
        let mut col_seen = vec![false; n];
        let mut entries = vec![Vec::new(); n_agents];
        let mut norm_sq = 0.0;
        for &(a, b, v) in triplets {
            if a >= m || b >= n {
                return Err(ObjectiveError::InvalidData(format!(
                    "entry ({a},{b}) outside {m}x{n}"
                )));
            }
            if !v.is_finite() {
                return Err(ObjectiveError::InvalidData(format!(
                    "non-finite value at ({a},{b})"
                )));
            }
            row_seen[a] = true;
            col_seen[b] = true;
            norm_sq += v * v;
            entries[a % n_agents].push((a, b, v));
        }
        if let Some(a) = row_seen.iter().position(|&s| !s) {
            return Err(ObjectiveError::InvalidData(format!(
                "row {a} has no observed entries"
            )));
        }
        if let Some(b) = col_seen.iter().position(|&s| !s) {
            return Err(ObjectiveError::InvalidData(format!(
                "column {b} has no observed entries"
            )));
        }
        Ok(Self {
            m,
            n,
            rank,
            entries,
            target_norm: norm_sq.sqrt(),
        })
    }

    /// Planted fully observed instance: `A = U*·V*ᵀ` with factor entries
    /// drawn uniformly from `[-scale, scale]` under the given seed. The
    /// optimum value is 0, so `f_star = 0` is exact.
    pub fn planted(
        m: usize,
        n: usize,
        rank: usize,
        n_agents: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "planted factor scale must be positive, got {scale}"
            )));
        }
        let mut rng = stream(seed, Domain::Estimate, 2, 0);
        let u: Vec<f64> = (0..m * rank).map(|_| rng.random_range(-scale..scale)).collect();
        let v: Vec<f64> = (0..n * rank).map(|_| rng.random_range(-scale..scale)).collect();
        let mut triplets = Vec::with_capacity(m * n);
        for a in 0..m {
            for b in 0..n {
                let mut dot = 0.0;
                for t in 0..rank {
                    dot += u[a * rank + t] * v[b * rank + t];
                }
                triplets.push((a, b, dot));
            }
        }
        Self::from_triplets(m, n, rank, n_agents, &triplets)
    }

    /// The planted optimum packed into the variable layout (for tests).
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.rank)
    }

    fn u_at<'a>(&self, x: &'a DVector<f64>, row: usize) -> &'a [f64] {
        &x.as_slice()[row * self.rank..(row + 1) * self.rank]
    }

    fn v_at<'a>(&self, x: &'a DVector<f64>, col: usize) -> &'a [f64] {
        let off = self.m * self.rank;
        &x.as_slice()[off + col * self.rank..off + (col + 1) * self.rank]
    }

    fn residual(&self, x: &DVector<f64>, a: usize, b: usize, v: f64) -> f64 {
        let u = self.u_at(x, a);
        let w = self.v_at(x, b);
        u.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() - v
    }

    fn check(&self, agent: usize, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if agent >= self.entries.len() {
            return Err(ObjectiveError::AgentOutOfRange {
                agent,
                n_agents: self.entries.len(),
            });
        }
        if x.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        ensure_finite(x, "matrix factorization input")
    }

    /// Relative reconstruction error over the observed entries,
    /// `||U·Vᵀ - A||_F / ||A||_F`.
    pub fn relative_error(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check(0, x)?;
        let mut res_sq = 0.0;
        for agent in &self.entries {
            for &(a, b, v) in agent {
                let r = self.residual(x, a, b, v);
                res_sq += r * r;
            }
        }
        Ok(res_sq.sqrt() / self.target_norm)
    }
}

impl Objective for MatrixFactorization {
    fn dim(&self) -> usize {
        (self.m + self.n) * self.rank
    }

    fn n_agents(&self) -> usize {
        self.entries.len()
    }

    fn name(&self) -> &'static str {
        "matrix_factorization"
    }

    fn local_value(&self, agent: usize, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check(agent, x)?;
        let mut acc = 0.0;
        for &(a, b, v) in &self.entries[agent] {
            let r = self.residual(x, a, b, v);
            acc += r * r;
        }
        Ok(0.5 * acc)
    }

    fn local_grad(&self, agent: usize, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check(agent, x)?;
        let mut g = DVector::zeros(self.dim());
        let off = self.m * self.rank;
        for &(a, b, v) in &self.entries[agent] {
            let r = self.residual(x, a, b, v);
            for t in 0..self.rank {
                g[a * self.rank + t] += r * x[off + b * self.rank + t];
                g[off + b * self.rank + t] += r * x[a * self.rank + t];
            }
        }
        Ok(g)
    }

    fn gradient_lipschitz_hint(&self, radius: f64) -> f64 {
        // Per observed entry the Hessian contribution is bounded by
        // ||grad r||² + |r|·||hess r|| <= 2·rank·R² + (rank·R² + |A_ab|).
        let mut worst: f64 = 0.0;
        for agent in &self.entries {
            let mut acc = 0.0;
            for &(_, _, v) in agent {
                acc += 3.0 * self.rank as f64 * radius * radius + v.abs();
            }
            worst = worst.max(acc);
        }
        worst
    }
}

/// Parse a triplet file: one `row col value` per line (0-based indices),
/// `#` comments and blank lines ignored.
pub fn parse_triplets_text(text: &str) -> Result<Vec<(usize, usize, f64)>, ObjectiveError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(ObjectiveError::InvalidData(format!(
                "line {}: expected 'row col value', got {} fields",
                lineno + 1,
                toks.len()
            )));
        }
        let a: usize = toks[0].parse().map_err(|_| {
            ObjectiveError::InvalidData(format!("line {}: bad row '{}'", lineno + 1, toks[0]))
        })?;
        let b: usize = toks[1].parse().map_err(|_| {
            ObjectiveError::InvalidData(format!("line {}: bad col '{}'", lineno + 1, toks[1]))
        })?;
        let v: f64 = toks[2].parse().map_err(|_| {
            ObjectiveError::InvalidData(format!("line {}: bad value '{}'", lineno + 1, toks[2]))
        })?;
        out.push((a, b, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::test_support::{check_gradients, check_lipschitz_hint};

    fn small() -> MatrixFactorization {
        MatrixFactorization::planted(6, 5, 2, 3, 0.7, 42).unwrap()
    }

    #[test]
    fn origin_with_single_entry_has_zero_gradient() {
        // One observed entry with value 2 and zero factors: both factor
        // blocks of the gradient vanish because each carries the other
        // (zero) factor.
        let obj =
            MatrixFactorization::from_triplets(1, 1, 1, 1, &[(0, 0, 2.0)]).unwrap();
        let g = obj.local_grad(0, &DVector::zeros(2)).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn value_is_nonnegative_and_zero_at_plant() {
        let obj = small();
        let mut rng = crate::rng::stream(42, Domain::Estimate, 2, 0);
        // Re-derive the planted factors with the same stream the
        // constructor used.
        let (m, n, r) = obj.shape();
        let u: Vec<f64> = (0..m * r).map(|_| rng.random_range(-0.7..0.7)).collect();
        let v: Vec<f64> = (0..n * r).map(|_| rng.random_range(-0.7..0.7)).collect();
        let planted = DVector::from_iterator(obj.dim(), u.into_iter().chain(v));
        let at_plant = obj.global_value(&planted).unwrap();
        assert!(at_plant < 1e-24, "value at plant {at_plant}");
        assert!((obj.relative_error(&planted).unwrap()) < 1e-12);
        let mut probe = planted.clone();
        probe[0] += 0.3;
        assert!(obj.global_value(&probe).unwrap() > 0.0);
    }

    #[test]
    fn partition_is_disjoint_and_covers_rows() {
        let obj = small();
        let total: usize = obj.entries.iter().map(|e| e.len()).sum();
        assert_eq!(total, 6 * 5);
        for (i, agent) in obj.entries.iter().enumerate() {
            for &(a, _, _) in agent {
                assert_eq!(a % 3, i);
            }
        }
    }

    #[test]
    fn construction_rejects_uncovered_rows_and_bad_entries() {
        assert!(MatrixFactorization::from_triplets(2, 2, 1, 1, &[(0, 0, 1.0), (0, 1, 1.0)])
            .unwrap_err()
            .to_string()
            .contains("row 1"));
        assert!(MatrixFactorization::from_triplets(2, 2, 1, 1, &[(0, 0, 1.0), (1, 0, 1.0)])
            .unwrap_err()
            .to_string()
            .contains("column 1"));
        assert!(MatrixFactorization::from_triplets(2, 2, 1, 1, &[(0, 5, 1.0)]).is_err());
        assert!(MatrixFactorization::from_triplets(2, 2, 3, 1, &[(0, 0, 1.0)]).is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let obj = small();
        check_gradients(&obj, 1.0, 20, 55, 1e-6);
    }

    #[test]
    fn fd_hessian_is_symmetric() {
        let obj = MatrixFactorization::planted(3, 3, 1, 2, 0.7, 9).unwrap();
        let mut rng = crate::rng::stream(77, Domain::Estimate, 3, 0);
        let x = DVector::from_fn(obj.dim(), |_, _| rng.random_range(-1.0..1.0));
        let h = obj.global_hessian(&x).unwrap();
        let asym = (&h - h.transpose()).norm();
        assert!(asym < 1e-5, "asymmetry {asym}");
    }

    #[test]
    fn lipschitz_hint_dominates_sampled_ratios() {
        let obj = small();
        check_lipschitz_hint(&obj, 1.0, 30, 21);
    }

    #[test]
    fn triplet_text_parses_and_rejects() {
        let t = parse_triplets_text("0 0 1.5\n1 1 -2 # corner\n").unwrap();
        assert_eq!(t, vec![(0, 0, 1.5), (1, 1, -2.0)]);
        assert!(parse_triplets_text("0 0\n").is_err());
        assert!(parse_triplets_text("0 x 1\n").is_err());
    }
}
