//! Synthetic quadratic strict saddle.
//!
//! Agent `i` holds `f_i(x) = (1/2)·xᵀ·H_i·x` with symmetric `H_i`. The
//! average Hessian has smallest eigenvalue exactly `-margin` and the rest
//! of the spectrum positive, so the origin is a strict saddle of the global
//! objective with a known escape direction — the canonical test function
//! for second-order behavior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{ensure_finite, Objective, ObjectiveError};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    h_mats: Vec<DMatrix<f64>>,
    h_bar: DMatrix<f64>,
    dim: usize,
    margin: f64,
    lipschitz: f64,
}

impl QuadraticSaddle {
    /// Deterministically generate `n_agents` symmetric matrices whose
    /// average has spectrum `{-margin, +0.5, …, +1.5}` in a seeded random
    /// orthogonal frame. `heterogeneity` scales zero-sum symmetric
    /// perturbations that make the local Hessians disagree.
    pub fn new(
        n_agents: usize,
        dim: usize,
        margin: f64,
        heterogeneity: f64,
        seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if n_agents == 0 {
            return Err(ObjectiveError::InvalidData("need at least one agent".into()));
        }
        if dim < 2 {
            return Err(ObjectiveError::InvalidData(
                "strict saddle needs dim >= 2 (one negative and one positive direction)".into(),
            ));
        }
        if !(margin.is_finite() && margin > 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "margin must be positive, got {margin}"
            )));
        }
        if !(heterogeneity.is_finite() && heterogeneity >= 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "heterogeneity must be nonnegative, got {heterogeneity}"
            )));
        }
        let mut rng = stream(seed, Domain::Estimate, 4, 0);
        // Random orthogonal frame from the QR of a random matrix.
        let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        let mut lambda = DVector::zeros(dim);
        lambda[0] = -margin;
        for j in 1..dim {
            lambda[j] = 0.5 + (j - 1) as f64 / (dim - 1).max(1) as f64;
        }
        let h_bar = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
        let h_bar = symmetrize(h_bar);

        let mut h_mats = Vec::with_capacity(n_agents);
        if n_agents == 1 || heterogeneity == 0.0 {
            h_mats = vec![h_bar.clone(); n_agents];
        } else {
            let mut sum = DMatrix::zeros(dim, dim);
            for _ in 0..n_agents - 1 {
                let mut s = DMatrix::from_fn(dim, dim, |_, _| {
                    rng.random_range(-heterogeneity..heterogeneity)
                });
                s = symmetrize(s);
                sum += &s;
                h_mats.push(&h_bar + s);
            }
            h_mats.push(&h_bar - sum);
        }
        let lipschitz = h_mats
            .iter()
            .map(spectral_norm)
            .fold(0.0f64, f64::max);
        Ok(Self {
            h_mats,
            h_bar,
            dim,
            margin,
            lipschitz,
        })
    }

    /// Build from explicit per-agent symmetric matrices. The average must
    /// have at least one strictly negative and one strictly positive
    /// eigenvalue.
    pub fn from_matrices(h_mats: Vec<DMatrix<f64>>) -> Result<Self, ObjectiveError> {
        let Some(first) = h_mats.first() else {
            return Err(ObjectiveError::InvalidData("need at least one agent".into()));
        };
        let dim = first.nrows();
        let mut h_bar = DMatrix::zeros(dim, dim);
        for (i, h) in h_mats.iter().enumerate() {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(ObjectiveError::InvalidData(format!(
                    "agent {i}: matrix shape mismatch"
                )));
            }
            if (h - h.transpose()).norm() > 1e-12 {
                return Err(ObjectiveError::InvalidData(format!(
                    "agent {i}: matrix is not symmetric"
                )));
            }
            h_bar += h;
        }
        h_bar /= h_mats.len() as f64;
        let eig = h_bar.clone().symmetric_eigen().eigenvalues;
        let min = eig.min();
        let max = eig.max();
        if !(min < 0.0 && max > 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "average Hessian spectrum [{min}, {max}] is not a strict saddle"
            )));
        }
        let lipschitz = h_mats.iter().map(spectral_norm).fold(0.0f64, f64::max);
        Ok(Self {
            h_mats,
            h_bar,
            dim,
            margin: -min,
            lipschitz,
        })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn average_hessian(&self) -> &DMatrix<f64> {
        &self.h_bar
    }

    fn check(&self, agent: usize, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if agent >= self.h_mats.len() {
            return Err(ObjectiveError::AgentOutOfRange {
                agent,
                n_agents: self.h_mats.len(),
            });
        }
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        ensure_finite(x, "quadratic saddle input")
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

impl Objective for QuadraticSaddle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_agents(&self) -> usize {
        self.h_mats.len()
    }

    fn name(&self) -> &'static str {
        "quadratic_saddle"
    }

    fn local_value(&self, agent: usize, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check(agent, x)?;
        Ok(0.5 * (x.transpose() * &self.h_mats[agent] * x)[(0, 0)])
    }

    fn local_grad(&self, agent: usize, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check(agent, x)?;
        Ok(&self.h_mats[agent] * x)
    }

    fn global_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        self.check(0, x)?;
        Ok(self.h_bar.clone())
    }

    fn gradient_lipschitz_hint(&self, _radius: f64) -> f64 {
        self.lipschitz
    }
}
