//! Bilinear logistic classifier: the scalar single-hidden-unit network.
//!
//! Each sample is a scalar feature `h` with label `y` in `{-1, +1}`; the
//! model output is `sigmoid(h·w1·w2)` and the loss is the cross entropy
//! `ln(1 + exp(-y·h·w1·w2))` plus a Tikhonov term `(reg/2)·||w||²`. When
//! the pooled sample mean of `y·h` is 1 and `reg = 0.1`, the origin is a
//! stationary point whose Hessian is `[[0.1, -0.5], [-0.5, 0.1]]` with
//! eigenvalues `{0.6, -0.4}` — a certified strict saddle.

use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, Objective, ObjectiveError};

const POOLED_MEAN_TOL: f64 = 1e-12;

/// Pooled-mean-one bilinear logistic objective over `(h, y)` samples.
#[derive(Debug, Clone)]
pub struct LogisticBilinear {
    samples: Vec<Vec<(f64, f64)>>,
    reg: f64,
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

impl LogisticBilinear {
    /// Build from explicit per-agent samples. The pooled empirical mean of
    /// `y·h` must equal 1 (to 1e-12) so the origin carries the certified
    /// curvature; labels must be exactly `-1` or `+1`.
    pub fn from_agent_samples(
        samples: Vec<Vec<(f64, f64)>>,
        reg: f64,
    ) -> Result<Self, ObjectiveError> {
        if samples.is_empty() {
            return Err(ObjectiveError::InvalidData("need at least one agent".into()));
        }
        if !(reg.is_finite() && reg > 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "regularizer must be positive, got {reg}"
            )));
        }
        let mut pooled = 0.0;
        let mut count = 0usize;
        for (i, agent) in samples.iter().enumerate() {
            if agent.is_empty() {
                return Err(ObjectiveError::InvalidData(format!(
                    "agent {i} has no samples"
                )));
            }
            for &(h, y) in agent {
                if !h.is_finite() {
                    return Err(ObjectiveError::InvalidData(format!(
                        "agent {i}: non-finite feature {h}"
                    )));
                }
                if y != 1.0 && y != -1.0 {
                    return Err(ObjectiveError::InvalidData(format!(
                        "agent {i}: label must be -1 or +1, got {y}"
                    )));
                }
                pooled += y * h;
                count += 1;
            }
        }
        let mean = pooled / count as f64;
        if (mean - 1.0).abs() > POOLED_MEAN_TOL {
            return Err(ObjectiveError::InvalidData(format!(
                "pooled mean of y*h is {mean}, expected 1 within {POOLED_MEAN_TOL:e}"
            )));
        }
        Ok(Self { samples, reg })
    }

    /// Every agent holds the same two samples `{(1.5, +1), (0.5, +1)}`,
    /// giving per-agent and pooled mean exactly 1.
    pub fn homogeneous(n_agents: usize, reg: f64) -> Result<Self, ObjectiveError> {
        let agent = vec![(1.5, 1.0), (0.5, 1.0)];
        Self::from_agent_samples(vec![agent; n_agents], reg)
    }

    /// Per-agent means spread symmetrically around 1: agents `i` and
    /// `N-1-i` hold `(1 ± s_i, +1)` so the pooled mean stays 1 while local
    /// gradients disagree away from the origin.
    pub fn heterogeneous(n_agents: usize, reg: f64, spread: f64) -> Result<Self, ObjectiveError> {
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(ObjectiveError::InvalidData(format!(
                "spread must be nonnegative, got {spread}"
            )));
        }
        let mut samples = vec![Vec::new(); n_agents];
        for i in 0..n_agents / 2 {
            let s = spread * (i + 1) as f64 / n_agents as f64;
            samples[i].push((1.0 + s, 1.0));
            samples[n_agents - 1 - i].push((1.0 - s, 1.0));
        }
        if n_agents % 2 == 1 {
            samples[n_agents / 2].push((1.0, 1.0));
        }
        Self::from_agent_samples(samples, reg)
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    fn check(&self, agent: usize, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if agent >= self.samples.len() {
            return Err(ObjectiveError::AgentOutOfRange {
                agent,
                n_agents: self.samples.len(),
            });
        }
        if x.len() != 2 {
            return Err(ObjectiveError::DimensionMismatch {
                expected: 2,
                got: x.len(),
            });
        }
        ensure_finite(x, "logistic objective input")
    }

    /// Exact per-agent 2x2 Hessian.
    pub fn local_hessian(&self, agent: usize, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        self.check(agent, x)?;
        let (w1, w2) = (x[0], x[1]);
        let rows = &self.samples[agent];
        let m = rows.len() as f64;
        let (mut h11, mut h22, mut h12) = (0.0, 0.0, 0.0);
        for &(h, y) in rows {
            let a = -y * h;
            let u = a * w1 * w2;
            let s = sigmoid(u);
            let sp = s * (1.0 - s);
            h11 += sp * a * a * w2 * w2;
            h22 += sp * a * a * w1 * w1;
            h12 += sp * a * a * w1 * w2 + s * a;
        }
        h11 = h11 / m + self.reg;
        h22 = h22 / m + self.reg;
        h12 /= m;
        Ok(DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22]))
    }
}

impl Objective for LogisticBilinear {
    fn dim(&self) -> usize {
        2
    }

    fn n_agents(&self) -> usize {
        self.samples.len()
    }

    fn name(&self) -> &'static str {
        "logistic_bilinear"
    }

    fn local_value(&self, agent: usize, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check(agent, x)?;
        let (w1, w2) = (x[0], x[1]);
        let rows = &self.samples[agent];
        let mut acc = 0.0;
        for &(h, y) in rows {
            acc += log1p_exp(-y * h * w1 * w2);
        }
        Ok(acc / rows.len() as f64 + 0.5 * self.reg * (w1 * w1 + w2 * w2))
    }

    fn local_grad(&self, agent: usize, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check(agent, x)?;
        let (w1, w2) = (x[0], x[1]);
        let rows = &self.samples[agent];
        let mut factor = 0.0;
        for &(h, y) in rows {
            let a = -y * h;
            factor += sigmoid(a * w1 * w2) * a;
        }
        factor /= rows.len() as f64;
        Ok(DVector::from_column_slice(&[
            factor * w2 + self.reg * w1,
            factor * w1 + self.reg * w2,
        ]))
    }

    fn global_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        let mut acc = DMatrix::zeros(2, 2);
        for agent in 0..self.samples.len() {
            acc += self.local_hessian(agent, x)?;
        }
        Ok(acc / self.samples.len() as f64)
    }

    fn gradient_lipschitz_hint(&self, radius: f64) -> f64 {
        // Gershgorin row bound of the per-sample Hessian on |w|_inf <= R:
        // |H11| + |H12| <= a²R²/2 + |a| + reg with a = -y·h.
        let mut worst: f64 = 0.0;
        for agent in &self.samples {
            for &(h, _) in agent {
                let a = h.abs();
                worst = worst.max(0.5 * a * a * radius * radius + a);
            }
        }
        worst + self.reg
    }
}

/// Parse per-agent classification samples: one `h y` pair per line, `#`
/// comments and blank lines ignored, labels `-1` or `1`.
pub fn parse_samples_text(text: &str) -> Result<Vec<(f64, f64)>, ObjectiveError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(ObjectiveError::InvalidData(format!(
                "line {}: expected 'h y', got {} fields",
                lineno + 1,
                toks.len()
            )));
        }
        let h: f64 = toks[0].parse().map_err(|_| {
            ObjectiveError::InvalidData(format!("line {}: bad feature '{}'", lineno + 1, toks[0]))
        })?;
        let y: f64 = toks[1].parse().map_err(|_| {
            ObjectiveError::InvalidData(format!("line {}: bad label '{}'", lineno + 1, toks[1]))
        })?;
        out.push((h, y));
    }
    Ok(out)
}
