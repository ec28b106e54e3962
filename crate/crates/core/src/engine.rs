//! Synchronous multi-agent round loop.
//!
//! Each round `k`, every agent quantizes its own iterate once, broadcasts
//! that single realization to all neighbors, folds the received values into
//! a consensus step weighted by `eps_k`, and then takes a local gradient
//! step of size `eta_k`:
//!
//! ```text
//! x~_i = x_i + eps_k * sum_{j in N_i ∪ {i}} a_ij * (Q(x_j) - x_i)
//! x_i' = x~_i - eta_k * grad f_i(x_i)
//! ```
//!
//! Because the self-term uses the agent's own quantized value and every
//! receiver observes the same realization, the stacked update equals the
//! matrix form `x' = A_k x + eps_k * A * xi - eta_k * grad f(x)` with
//! `A_k = (1-eps_k) I + eps_k A` and `xi = Q(x) - x`, which the test suite
//! checks against an independent oracle.
//!
//! Grid schemes transmit wire-faithful values: indices are clamped to the
//! configured bit width before decoding, and every clamp bumps a saturation
//! counter that flags the run (clamping silently would corrupt the
//! unbiasedness the escape argument rests on).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mixing::MixingMatrix;
use crate::objectives::{Objective, ObjectiveError};
use crate::quantizer::{quantize_vector, QuantizerError, QuantizerSpec};
use crate::rng::{stream, Domain};
use crate::schedule::StepsizeRule;
use crate::SCHEMA_VERSION;

/// Abort when any coordinate magnitude exceeds this.
pub const DEFAULT_DIVERGENCE_LIMIT: f64 = 1e12;
/// Largest dimension handled by dense eigendecomposition.
pub const DEFAULT_HESSIAN_DENSE_LIMIT: usize = 400;
/// Iteration cap for the shifted power iteration.
pub const POWER_ITERATION_CAP: u32 = 300;
/// Relative convergence tolerance for the power iteration.
pub const POWER_ITERATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine configuration error: {0}")]
    Config(String),
    #[error("divergence: agent {agent} left the trust region at iteration {iteration}")]
    Divergence { agent: usize, iteration: u64 },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error("smallest-eigenvalue estimation failed: {0}")]
    EigenFailure(String),
}

/// Initial agent placement.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Every agent starts at the same point.
    AtPoint(DVector<f64>),
    /// Each agent coordinate drawn uniformly from `[lo, hi)` under the
    /// run's `Init` stream.
    RandomBox { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_iters: u64,
    pub master_seed: u64,
    pub init: Init,
    /// Evaluate `lambda_min` at the average iterate every this many rounds;
    /// 0 disables curvature monitoring.
    pub hessian_cadence: u64,
    pub hessian_dense_limit: usize,
    pub divergence_limit: f64,
}

impl RunOptions {
    pub fn new(n_iters: u64, master_seed: u64, init: Init) -> Self {
        Self {
            n_iters,
            master_seed,
            init,
            hessian_cadence: 0,
            hessian_dense_limit: DEFAULT_HESSIAN_DENSE_LIMIT,
            divergence_limit: DEFAULT_DIVERGENCE_LIMIT,
        }
    }
}

/// One metrics row; row `k` describes the state *at* round `k` and the
/// stepsizes that will be applied there. `bits_cumulative` counts wire
/// traffic of the rounds already executed.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRow {
    pub k: u64,
    pub consensus_error_sq: f64,
    pub f_bar: f64,
    pub grad_norm: f64,
    pub lambda_min: Option<f64>,
    pub bits_cumulative: u128,
    pub eps: f64,
    pub eta: f64,
}

/// Run metadata for the sidecar file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub schema_version: u32,
    pub objective: String,
    pub n_agents: usize,
    pub dim: usize,
    pub n_iters: u64,
    pub master_seed: u64,
    pub quantizer: QuantizerSpec,
    pub stepsize_rule: String,
    pub sigma2: f64,
    pub saturation_count: u64,
    pub wall_time_ms: u128,
    /// Extra key-value pairs echoed by the orchestration layer
    /// (variant name, derived constants, config echo).
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<IterRow>,
    /// Final per-agent iterates (one row per agent); feeds the end-of-run
    /// stationarity classification without replaying the trajectory.
    pub final_state: DMatrix<f64>,
    pub meta: RunMeta,
}

impl RunRecord {
    pub fn final_row(&self) -> &IterRow {
        self.rows.last().expect("a run record always has rows")
    }

    /// A nonzero saturation count means some broadcast hit the wire-format
    /// clamp and the unbiasedness guarantee no longer holds end to end.
    pub fn saturation_flagged(&self) -> bool {
        self.meta.saturation_count > 0
    }

    /// CSV rendering: header plus one line per recorded round. Contains no
    /// wall-clock data, so identical runs produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("k,consensus_error_sq,F_bar,grad_norm,lambda_min,bits_cum,eps_k,eta_k\n");
        for r in &self.rows {
            let lambda = r.lambda_min.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.k,
                r.consensus_error_sq,
                r.f_bar,
                r.grad_norm,
                lambda,
                r.bits_cumulative,
                r.eps,
                r.eta
            ));
        }
        out
    }

    /// Human-readable key-value sidecar (includes wall time).
    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("schema_version", m.schema_version.to_string());
        push("objective", m.objective.clone());
        push("n_agents", m.n_agents.to_string());
        push("dim", m.dim.to_string());
        push("n_iters", m.n_iters.to_string());
        push("master_seed", m.master_seed.to_string());
        push("quantizer_scheme", m.quantizer.scheme.name().to_string());
        push("interval_ell", m.quantizer.interval_ell.to_string());
        push("bit_width", m.quantizer.bit_width.to_string());
        if matches!(m.quantizer.scheme, crate::quantizer::QuantizerScheme::LogScale) {
            push("log_base", m.quantizer.log_base.to_string());
        }
        push("stepsize_rule", m.stepsize_rule.clone());
        push("sigma2", m.sigma2.to_string());
        push("saturation_count", m.saturation_count.to_string());
        push("saturation_flagged", (m.saturation_count > 0).to_string());
        for (k, v) in &m.extra {
            push(k, v.clone());
        }
        push("wall_time_ms", m.wall_time_ms.to_string());
        out
    }
}

/// Squared Frobenius norm of the stacked deviation from the row average,
/// `||x - 1*mean(x)||_F^2`.
pub fn consensus_error_sq(state: &DMatrix<f64>) -> f64 {
    let n = state.nrows();
    let mut acc = 0.0;
    for j in 0..state.ncols() {
        let col = state.column(j);
        let mean = col.sum() / n as f64;
        for i in 0..n {
            let dev = col[i] - mean;
            acc += dev * dev;
        }
    }
    acc
}

/// Row-average iterate.
pub fn average_iterate(state: &DMatrix<f64>) -> DVector<f64> {
    let n = state.nrows() as f64;
    DVector::from_fn(state.ncols(), |j, _| state.column(j).sum() / n)
}

/// Everything one executed round exposes to callers (oracle tests
/// reconstruct the noise matrix as `quantized - state_before`).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Realized broadcast values, one row per agent.
    pub quantized: DMatrix<f64>,
    pub eps: f64,
    pub eta: f64,
    pub saturated: u64,
}

/// In-flight simulation state. One instance is one logical thread of
/// execution; concurrency happens across instances, never within one.
pub struct Simulation<'a> {
    obj: &'a dyn Objective,
    quantizer: QuantizerSpec,
    stepsize: StepsizeRule,
    master_seed: u64,
    divergence_limit: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
    bits_per_round: u128,
    state: DMatrix<f64>,
    k: u64,
    bits_cumulative: u128,
    saturation_count: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        obj: &'a dyn Objective,
        mixing: &MixingMatrix,
        quantizer: QuantizerSpec,
        stepsize: StepsizeRule,
        opts: &RunOptions,
    ) -> Result<Self, EngineError> {
        let n = obj.n_agents();
        let d = obj.dim();
        if mixing.n_agents() != n {
            return Err(EngineError::Config(format!(
                "mixing matrix is for {} agents but the objective has {}",
                mixing.n_agents(),
                n
            )));
        }
        if opts.n_iters == 0 {
            return Err(EngineError::Config("n_iters must be at least 1".into()));
        }
        if !(opts.divergence_limit.is_finite() && opts.divergence_limit > 0.0) {
            return Err(EngineError::Config(format!(
                "divergence limit must be positive, got {}",
                opts.divergence_limit
            )));
        }
        let state = match &opts.init {
            Init::AtPoint(x) => {
                if x.len() != d {
                    return Err(EngineError::Config(format!(
                        "init point has dim {}, objective needs {}",
                        x.len(),
                        d
                    )));
                }
                DMatrix::from_fn(n, d, |_, j| x[j])
            }
            Init::RandomBox { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(EngineError::Config(format!(
                        "random init needs lo < hi, got [{lo}, {hi})"
                    )));
                }
                let mut state = DMatrix::zeros(n, d);
                for i in 0..n {
                    let mut rng = stream(opts.master_seed, Domain::Init, i as u64, 0);
                    for j in 0..d {
                        state[(i, j)] = rand::Rng::random_range(&mut rng, *lo..*hi);
                    }
                }
                state
            }
        };
        let neighbors: Vec<Vec<(usize, f64)>> = (0..n).map(|i| mixing.row_support(i)).collect();
        let bits_per_round = (0..n)
            .map(|i| quantizer.bits_per_vector(d) * mixing.degree(i) as u128)
            .sum();
        Ok(Self {
            obj,
            quantizer,
            stepsize,
            master_seed: opts.master_seed,
            divergence_limit: opts.divergence_limit,
            neighbors,
            bits_per_round,
            state,
            k: 0,
            bits_cumulative: 0,
            saturation_count: 0,
        })
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn round(&self) -> u64 {
        self.k
    }

    pub fn bits_cumulative(&self) -> u128 {
        self.bits_cumulative
    }

    pub fn saturation_count(&self) -> u64 {
        self.saturation_count
    }

    pub fn stepsize(&self) -> &StepsizeRule {
        &self.stepsize
    }

    /// Execute one synchronous round.
    pub fn step(&mut self) -> Result<StepOutcome, EngineError> {
        let n = self.obj.n_agents();
        let d = self.obj.dim();
        let k = self.k;
        let eps = self.stepsize.eps(k);
        let eta = self.stepsize.eta(k);

        // Every agent draws exactly one realization per round from its own
        // (seed, agent, round) stream; all receivers see that value.
        let mut quantized = DMatrix::zeros(n, d);
        let mut saturated = 0u64;
        let mut row_buf = vec![0.0; d];
        for i in 0..n {
            for (j, slot) in row_buf.iter_mut().enumerate() {
                *slot = self.state[(i, j)];
            }
            let mut rng = stream(self.master_seed, Domain::Quantize, i as u64, k);
            let mut q = quantize_vector(&row_buf, k, &self.quantizer, &mut rng)?;
            if let Some(grid) = q.grid.as_mut() {
                let clamps = grid.saturate(self.quantizer.bit_width);
                if clamps > 0 {
                    saturated += clamps;
                    q.values = grid.decode();
                }
            }
            for (j, v) in q.values.iter().enumerate() {
                quantized[(i, j)] = *v;
            }
        }

        let mut next = DMatrix::zeros(n, d);
        for i in 0..n {
            let x_i = self.state.row(i).transpose();
            let grad = self.obj.local_grad(i, &x_i)?;
            for j in 0..d {
                let mut mix = 0.0;
                for &(nb, w) in &self.neighbors[i] {
                    mix += w * (quantized[(nb, j)] - self.state[(i, j)]);
                }
                next[(i, j)] = self.state[(i, j)] + eps * mix - eta * grad[j];
            }
        }

        for i in 0..n {
            for j in 0..d {
                let v = next[(i, j)];
                if !v.is_finite() || v.abs() > self.divergence_limit {
                    return Err(EngineError::Divergence {
                        agent: i,
                        iteration: k + 1,
                    });
                }
            }
        }

        self.state = next;
        self.k += 1;
        self.bits_cumulative += self.bits_per_round;
        self.saturation_count += saturated;
        Ok(StepOutcome {
            quantized,
            eps,
            eta,
            saturated,
        })
    }

    fn metrics_row(&self, opts: &RunOptions) -> Result<IterRow, EngineError> {
        let k = self.k;
        let avg = average_iterate(&self.state);
        let f_bar = self.obj.global_value(&avg)?;
        let grad_norm = self.obj.global_grad(&avg)?.norm();
        let lambda = if opts.hessian_cadence > 0 && k.is_multiple_of(opts.hessian_cadence) {
            Some(lambda_min(self.obj, &avg, opts.hessian_dense_limit)?)
        } else {
            None
        };
        Ok(IterRow {
            k,
            consensus_error_sq: consensus_error_sq(&self.state),
            f_bar,
            grad_norm,
            lambda_min: lambda,
            bits_cumulative: self.bits_cumulative,
            eps: self.stepsize.eps(k),
            eta: self.stepsize.eta(k),
        })
    }
}

/// Execute a full run and collect the metrics trace (`n_iters + 1` rows,
/// one per visited state including the initial one).
pub fn run(
    obj: &dyn Objective,
    mixing: &MixingMatrix,
    quantizer: QuantizerSpec,
    stepsize: StepsizeRule,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    let started = Instant::now();
    let meta_quantizer = quantizer.clone();
    let rule_name = stepsize.name().to_string();
    let mut sim = Simulation::new(obj, mixing, quantizer, stepsize, opts)?;
    let mut rows = Vec::with_capacity(opts.n_iters as usize + 1);
    rows.push(sim.metrics_row(opts)?);
    for _ in 0..opts.n_iters {
        sim.step()?;
        rows.push(sim.metrics_row(opts)?);
    }
    Ok(RunRecord {
        rows,
        final_state: sim.state().clone(),
        meta: RunMeta {
            schema_version: SCHEMA_VERSION,
            objective: obj.name().to_string(),
            n_agents: obj.n_agents(),
            dim: obj.dim(),
            n_iters: opts.n_iters,
            master_seed: opts.master_seed,
            quantizer: meta_quantizer,
            stepsize_rule: rule_name,
            sigma2: mixing.sigma2(),
            saturation_count: sim.saturation_count(),
            wall_time_ms: started.elapsed().as_millis(),
            extra: Vec::new(),
        },
    })
}

/// Stationarity classes of an iterate under tolerance `epsilon` and Hessian
/// Lipschitz constant `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    /// `||grad F(x)|| > epsilon`.
    LargeGradient,
    /// Small gradient and `lambda_min <= -sqrt(rho*epsilon)`.
    EpsStrictSaddle,
    /// Small gradient and `lambda_min > -sqrt(rho*epsilon)`.
    EpsSosp,
}

impl PointClass {
    pub fn name(&self) -> &'static str {
        match self {
            PointClass::LargeGradient => "large_gradient",
            PointClass::EpsStrictSaddle => "eps_strict_saddle",
            PointClass::EpsSosp => "eps_sosp",
        }
    }
}

/// Classify a point per the second-order stationarity definition.
pub fn classify_point(
    obj: &dyn Objective,
    x: &DVector<f64>,
    epsilon: f64,
    rho: f64,
    dense_limit: usize,
) -> Result<PointClass, EngineError> {
    if !(epsilon.is_finite() && epsilon > 0.0 && rho.is_finite() && rho > 0.0) {
        return Err(EngineError::Config(format!(
            "classification needs epsilon > 0 and rho > 0, got {epsilon}, {rho}"
        )));
    }
    let grad_norm = obj.global_grad(x)?.norm();
    if grad_norm > epsilon {
        return Ok(PointClass::LargeGradient);
    }
    let lambda = lambda_min(obj, x, dense_limit)?;
    if lambda <= -(rho * epsilon).sqrt() {
        Ok(PointClass::EpsStrictSaddle)
    } else {
        Ok(PointClass::EpsSosp)
    }
}

/// Smallest eigenvalue of the global Hessian at `x`: dense symmetric
/// eigendecomposition up to `dense_limit`, shifted power iteration on
/// Hessian-vector products beyond it.
pub fn lambda_min(
    obj: &dyn Objective,
    x: &DVector<f64>,
    dense_limit: usize,
) -> Result<f64, EngineError> {
    let d = obj.dim();
    if d <= dense_limit {
        let h = obj.global_hessian(x)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::EigenFailure(
                "Hessian has non-finite entries".into(),
            ));
        }
        let sym = (&h + h.transpose()) * 0.5;
        Ok(sym.symmetric_eigen().eigenvalues.min())
    } else {
        lambda_min_power(obj, x)
    }
}

/// Two-phase power iteration: first the spectral norm `s` of the Hessian
/// (via the PSD operator `H²`), then the dominant eigenvalue of the
/// positive shift `s·I - H`, giving `lambda_min = s - lambda_max(s·I - H)`.
fn lambda_min_power(obj: &dyn Objective, x: &DVector<f64>) -> Result<f64, EngineError> {
    let d = obj.dim();
    let hvp = |v: &DVector<f64>| obj.hessian_vector_product(x, v);

    // Deterministic start vector, independent of any run seed.
    let mut probe = stream(0x0E11_7AC7, Domain::Estimate, d as u64, 0);
    let v0 = DVector::from_fn(d, |_, _| rand::Rng::random_range(&mut probe, -1.0..1.0));

    // Phase 1: ||H|| from power iteration on H^2.
    let h_norm_sq = power_iterate(
        |v| {
            let hv = hvp(v)?;
            hvp(&hv)
        },
        &v0,
        "spectral norm",
    )?;
    let s = h_norm_sq.max(0.0).sqrt();
    if s == 0.0 {
        return Ok(0.0);
    }
    let shift = s * 1.001;

    // Phase 2: lambda_max(shift*I - H) >= shift - s > 0.
    let mu = power_iterate(
        |v| {
            let hv = hvp(v)?;
            Ok(v * shift - hv)
        },
        &v0,
        "shifted operator",
    )?;
    Ok(shift - mu)
}

fn power_iterate<F>(op: F, v0: &DVector<f64>, label: &str) -> Result<f64, EngineError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, ObjectiveError>,
{
    let mut v = v0.clone();
    let norm = v.norm();
    if norm == 0.0 {
        return Err(EngineError::EigenFailure("zero start vector".into()));
    }
    v /= norm;
    let mut prev = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        let mut w = op(&v)?;
        let rayleigh = v.dot(&w);
        let wnorm = w.norm();
        if wnorm < 1e-300 {
            // Operator annihilates the probe: eigenvalue 0.
            return Ok(0.0);
        }
        w /= wnorm;
        if (rayleigh - prev).abs() <= POWER_ITERATION_TOL * rayleigh.abs().max(1.0) {
            return Ok(rayleigh);
        }
        prev = rayleigh;
        v = w;
    }
    Err(EngineError::EigenFailure(format!(
        "{label}: power iteration did not converge within {POWER_ITERATION_CAP} iterations"
    )))
}
