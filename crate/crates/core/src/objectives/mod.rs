//! Distributed benchmark objectives.
//!
//! An [`Objective`] is an average of `N` private per-agent functions over a
//! shared variable in `R^d`. Agents only ever evaluate their own value and
//! gradient; the global value/gradient/Hessian accessors exist for the
//! monitoring side (stationarity classification, metrics traces), not for
//! the optimization dynamics.

mod logistic;
mod matfac;
mod quadratic;

pub use logistic::{parse_samples_text, LogisticBilinear};
pub use matfac::{parse_triplets_text, MatrixFactorization};
pub use quadratic::QuadraticSaddle;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::rng::{stream, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("non-finite input while evaluating {context}")]
    NonFinite { context: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("agent {agent} out of range (n_agents = {n_agents})")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("direction vector must be nonzero")]
    ZeroDirection,
    #[error("invalid objective data: {0}")]
    InvalidData(String),
}

pub(crate) fn ensure_finite(x: &DVector<f64>, context: &'static str) -> Result<(), ObjectiveError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ObjectiveError::NonFinite { context })
    }
}

/// A distributed objective `F(x) = (1/N) * sum_i f_i(x)`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn n_agents(&self) -> usize;
    fn name(&self) -> &'static str;

    /// Exact analytic value of agent `agent`'s private objective.
    fn local_value(&self, agent: usize, x: &DVector<f64>) -> Result<f64, ObjectiveError>;

    /// Exact analytic gradient of agent `agent`'s private objective.
    fn local_grad(&self, agent: usize, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError>;

    fn global_value(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        let mut acc = 0.0;
        for i in 0..self.n_agents() {
            acc += self.local_value(i, x)?;
        }
        Ok(acc / self.n_agents() as f64)
    }

    fn global_grad(&self, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        let mut acc = DVector::zeros(self.dim());
        for i in 0..self.n_agents() {
            acc += self.local_grad(i, x)?;
        }
        Ok(acc / self.n_agents() as f64)
    }

    /// Dense global Hessian. Objectives with closed-form curvature override
    /// this; the default central-differences the global gradient.
    fn global_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        fd_hessian(|y| self.global_grad(y), x)
    }

    /// Hessian-vector product via central differences of the global
    /// gradient, with step `1e-5 * max(1, ||x||) / ||v||`.
    fn hessian_vector_product(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>, ObjectiveError> {
        let norm_v = v.norm();
        if norm_v == 0.0 || !norm_v.is_finite() {
            return Err(ObjectiveError::ZeroDirection);
        }
        let delta = 1e-5 * x.norm().max(1.0) / norm_v;
        let plus = self.global_grad(&(x + v * delta))?;
        let minus = self.global_grad(&(x - v * delta))?;
        Ok((plus - minus) / (2.0 * delta))
    }

    /// An upper bound on the gradient Lipschitz constant valid on the box
    /// `||x||_inf <= radius`. Used as a sanity envelope for empirical
    /// smoothness checks and as a default scheduler input.
    fn gradient_lipschitz_hint(&self, radius: f64) -> f64;
}

/// Dense Hessian by central differences of a gradient oracle.
pub fn fd_hessian<G>(grad: G, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>, ObjectiveError>,
{
    let d = x.len();
    let delta = 1e-5 * x.norm().max(1.0);
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += delta;
        xm[j] -= delta;
        let col = (grad(&xp)? - grad(&xm)?) / (2.0 * delta);
        h.set_column(j, &col);
    }
    Ok(h)
}

/// Gradient by central differences of a value oracle (test oracle for the
/// analytic gradients).
pub fn fd_gradient<F>(value: F, x: &DVector<f64>, step: f64) -> Result<DVector<f64>, ObjectiveError>
where
    F: Fn(&DVector<f64>) -> Result<f64, ObjectiveError>,
{
    let d = x.len();
    let mut g = DVector::zeros(d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        g[j] = (value(&xp)? - value(&xm)?) / (2.0 * step);
    }
    Ok(g)
}

/// Estimate the gradient bound `G` as the largest local-gradient norm over
/// `n_samples` points drawn uniformly from `[-radius, radius]^d`.
pub fn estimate_gradient_bound(
    obj: &dyn Objective,
    radius: f64,
    n_samples: u32,
    seed: u64,
) -> Result<f64, ObjectiveError> {
    let mut rng = stream(seed, Domain::Estimate, 1, 0);
    let d = obj.dim();
    let mut bound: f64 = 0.0;
    for _ in 0..n_samples {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-radius..radius));
        for agent in 0..obj.n_agents() {
            bound = bound.max(obj.local_grad(agent, &x)?.norm());
        }
    }
    Ok(bound)
}
