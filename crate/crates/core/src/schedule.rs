//! Decrease-and-hold stepsize sequences.
//!
//! Two stepsizes drive each round: the consensus stepsize `eps_k` (tracks the
//! reference `c1/(1+c2·k^alpha)`) and the gradient stepsize `eta_k` (tracks
//! `c1/(1+c2·k^beta)` with `beta > alpha`, so `eta` decays faster). Both
//! follow their reference before `t0`, stay frozen on each hold interval
//! `[t_i, t_{i+1})`, and resume the reference after the last hold. The holds
//! are what let quantization perturbations accumulate long enough to push
//! the average iterate off a strict saddle, while the decreasing envelope
//! still anneals the noise away.
//!
//! Theoretical mode derives the hold boundaries and repeat count from the
//! escape-analysis constants (`C1`, `C2`, `C3`, `Q`, `d1`, `d2`); practical
//! mode takes a desk-scale hold layout directly, because the theoretical
//! `t0` is astronomically large at experiment scales.

use thiserror::Error;

use crate::rng::{stream, Domain};
use rand::Rng;

/// Cap on materialized hold boundaries in theoretical mode.
const MAX_HOLDS: f64 = 1_000_000.0;
/// Largest exactly-representable integer horizon we accept from the
/// real-valued constants (2^53).
const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

/// Hold layout selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Holds derived from the analysis constants. `gamma` is the
    /// normalization constant inside `C3`; it is not pinned down by the
    /// closed-form constants and is exposed as a knob (default 1).
    Theoretical { gamma: f64 },
    /// Fixed hold layout: first hold at `t0`, `n_holds` holds of length
    /// `hold` each.
    Practical { t0: u64, hold: u64, n_holds: u32 },
}

/// Validated stepsize parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    /// Consensus-stepsize decay exponent, in (0.6, 2/3).
    pub alpha: f64,
    /// Gradient-stepsize decay exponent, in (3·alpha/2, 1).
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Failure-probability budget in (0,1); enters `C1` and `C2`.
    pub p: f64,
    /// Target stationarity tolerance (the `epsilon` of the second-order
    /// stationarity definition).
    pub epsilon_target: f64,
    pub mode: Mode,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("alpha must lie strictly in (0.6, 2/3), got {0}")]
    AlphaOutOfRange(f64),
    #[error("beta must lie strictly in (3*alpha/2, 1) = ({lo}, 1), got {beta}")]
    BetaOutOfRange { beta: f64, lo: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("p must lie in (0,1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("hold length must be at least 1")]
    BadHoldLength,
    #[error("schedule mode does not match the requested constructor")]
    WrongMode,
    #[error("exponent gate violated: {which} must be positive")]
    ExponentGate { which: &'static str },
    #[error("sigma2 must lie in [0,1), got {0}")]
    Sigma2OutOfRange(f64),
    #[error("f0 ({f0}) must be finite and at least f_star ({f_star})")]
    FStarAboveF0 { f0: f64, f_star: f64 },
    #[error("n_agents and dim must be at least 1")]
    EmptyProblem,
    #[error("theoretical horizon does not fit an exact integer range: {what} = {value:e}")]
    HorizonOverflow { what: &'static str, value: f64 },
    #[error("theoretical schedule needs {0:e} holds, beyond the materialization cap")]
    TooManyHolds(f64),
    #[error("constant stepsize rule needs eps in (0,1] and eta > 0, got eps={eps}, eta={eta}")]
    BadConstantRule { eps: f64, eta: f64 },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ScheduleError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::NonPositive { name, value })
    }
}

impl ScheduleParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        c1: f64,
        c2: f64,
        p: f64,
        epsilon_target: f64,
        mode: Mode,
    ) -> Result<Self, ScheduleError> {
        if !(alpha > 0.6 && alpha < 2.0 / 3.0) {
            return Err(ScheduleError::AlphaOutOfRange(alpha));
        }
        let lo = 1.5 * alpha;
        if !(beta > lo && beta < 1.0) {
            return Err(ScheduleError::BetaOutOfRange { beta, lo });
        }
        require_positive("c1", c1)?;
        require_positive("c2", c2)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(ScheduleError::ProbabilityOutOfRange(p));
        }
        require_positive("epsilon_target", epsilon_target)?;
        match mode {
            Mode::Theoretical { gamma } => require_positive("gamma", gamma)?,
            Mode::Practical { hold, .. } => {
                if hold == 0 {
                    return Err(ScheduleError::BadHoldLength);
                }
            }
        }
        Ok(Self {
            alpha,
            beta,
            c1,
            c2,
            p,
            epsilon_target,
            mode,
        })
    }

    /// Reference function `c1/(1 + c2·k^expo)` with `0^expo = 0`.
    pub fn reference(&self, expo: f64, k: f64) -> f64 {
        let pow = if k == 0.0 { 0.0 } else { k.powf(expo) };
        self.c1 / (1.0 + self.c2 * pow)
    }
}

/// Problem-scale quantities feeding the theoretical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Uniform bound on local gradient norms.
    pub grad_bound: f64,
    /// Hessian Lipschitz constant (rho).
    pub rho: f64,
    /// Gradient Lipschitz constant (L); carried for diagnostics and the
    /// curvature estimator, not used by the closed-form constants.
    pub grad_lipschitz: f64,
    /// Mixing-matrix spectral gap input.
    pub sigma2: f64,
    pub n_agents: usize,
    pub dim: usize,
    /// Quantization interval.
    pub ell: f64,
    /// Objective value at the initial point.
    pub f0: f64,
    /// Estimated lower bound on the objective.
    pub f_star: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        require_positive("grad_bound", self.grad_bound)?;
        require_positive("rho", self.rho)?;
        require_positive("grad_lipschitz", self.grad_lipschitz)?;
        if !(self.sigma2 >= 0.0 && self.sigma2 < 1.0) {
            return Err(ScheduleError::Sigma2OutOfRange(self.sigma2));
        }
        if self.n_agents == 0 || self.dim == 0 {
            return Err(ScheduleError::EmptyProblem);
        }
        require_positive("ell", self.ell)?;
        if !(self.f0.is_finite() && self.f_star.is_finite() && self.f0 >= self.f_star) {
            return Err(ScheduleError::FStarAboveF0 {
                f0: self.f0,
                f_star: self.f_star,
            });
        }
        Ok(())
    }
}

/// The derived analysis constants, echoed into run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub d1: f64,
    pub d2: f64,
    pub big_c1: f64,
    pub big_c2: f64,
    pub big_c3: f64,
    /// Guaranteed objective decrease per completed hold.
    pub q_decrease: f64,
    /// Real-valued first hold boundary, `ceil(max{C1,C2,C3})`.
    pub t0: f64,
    /// Real-valued hold count before ceiling.
    pub i_holds: f64,
}

/// Evaluate the closed-form constants:
///
/// - `d1 = (1+(1-s2)·e0)/(1-s2)·G²` and `d2 = (1+(1-s2)·e0)·s2²·N·d·ell²`
///   with `e0 = c1` (the reference at k = 0),
/// - `C1 = (4·c1^(2/3)·(d1+d2)/(p·c2^(2/3)·(1-s2)))^(3/(2a))`,
/// - `C2 = (4·(f0-f*)·(d1+d2)^(2/3)·(1-s2)^(2/3)·c1/(c2·p·e²·sqrt(rho·e)))^(1/(2a-b))`,
/// - `C3 = (12·rho·(d1+d2)^(1/6)/((1-s2)^(1/6)·sqrt(gamma)·(rho·e)^(1/4)·ell))^(1/(b-4a/3))`,
/// - `Q = (1/60²)·sqrt(e³/rho)`,
/// - `t0 = ceil(max{C1,C2,C3})`, and
/// - `I = 30·max{(f0-f*)/Q, 2(f0-f*)·eps_{t0}/(e²·eta_{t0})}` with the
///   stepsizes read off the reference functions at `t0`.
pub fn derive_constants(
    sp: &ScheduleParams,
    pc: &ProblemConstants,
) -> Result<DerivedConstants, ScheduleError> {
    pc.validate()?;
    let Mode::Theoretical { gamma } = sp.mode else {
        return Err(ScheduleError::WrongMode);
    };
    let two_alpha_minus_beta = 2.0 * sp.alpha - sp.beta;
    if two_alpha_minus_beta <= 0.0 {
        return Err(ScheduleError::ExponentGate {
            which: "2*alpha - beta",
        });
    }
    let beta_minus = sp.beta - 4.0 * sp.alpha / 3.0;
    if beta_minus <= 0.0 {
        return Err(ScheduleError::ExponentGate {
            which: "beta - 4*alpha/3",
        });
    }

    let s2 = pc.sigma2;
    let gap = 1.0 - s2;
    let eps0 = sp.c1;
    let d1 = (1.0 + gap * eps0) / gap * pc.grad_bound * pc.grad_bound;
    let d2 =
        (1.0 + gap * eps0) * s2 * s2 * pc.n_agents as f64 * pc.dim as f64 * pc.ell * pc.ell;
    let ds = d1 + d2;
    let e = sp.epsilon_target;
    let gain = pc.f0 - pc.f_star;
    let sqrt_rho_eps = (pc.rho * e).sqrt();

    let big_c1 = (4.0 * sp.c1.powf(2.0 / 3.0) * ds / (sp.p * sp.c2.powf(2.0 / 3.0) * gap))
        .powf(3.0 / (2.0 * sp.alpha));
    let big_c2 = (4.0 * gain * ds.powf(2.0 / 3.0) * gap.powf(2.0 / 3.0) * sp.c1
        / (sp.c2 * sp.p * e * e * sqrt_rho_eps))
        .powf(1.0 / two_alpha_minus_beta);
    let big_c3 = (12.0 * pc.rho * ds.powf(1.0 / 6.0)
        / (gap.powf(1.0 / 6.0) * gamma.sqrt() * (pc.rho * e).powf(0.25) * pc.ell))
        .powf(1.0 / beta_minus);
    let q_decrease = (e.powi(3) / pc.rho).sqrt() / 3600.0;

    let t0 = big_c1.max(big_c2).max(big_c3).ceil();
    if !t0.is_finite() {
        return Err(ScheduleError::HorizonOverflow {
            what: "t0",
            value: t0,
        });
    }
    let eps_t0 = sp.reference(sp.alpha, t0);
    let eta_t0 = sp.reference(sp.beta, t0);
    let i_holds = 30.0 * ((gain / q_decrease).max(2.0 * gain * eps_t0 / (e * e * eta_t0)));
    Ok(DerivedConstants {
        d1,
        d2,
        big_c1,
        big_c2,
        big_c3,
        q_decrease,
        t0,
        i_holds,
    })
}

/// A fully materialized decrease-and-hold schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    params: ScheduleParams,
    /// `t_0 < t_1 < … < t_I`; holds run on `[t_i, t_{i+1})` for `i < I`.
    hold_starts: Vec<u64>,
    derived: Option<DerivedConstants>,
}

impl Schedule {
    /// Build a practical-mode schedule: `n_holds` holds of uniform length.
    pub fn practical(params: ScheduleParams) -> Result<Self, ScheduleError> {
        let Mode::Practical { t0, hold, n_holds } = params.mode else {
            return Err(ScheduleError::WrongMode);
        };
        if hold == 0 {
            return Err(ScheduleError::BadHoldLength);
        }
        let hold_starts: Vec<u64> = (0..=n_holds as u64).map(|i| t0 + i * hold).collect();
        Ok(Self {
            params,
            hold_starts,
            derived: None,
        })
    }

    /// Build a theoretical-mode schedule by deriving the constants and
    /// materializing the hold recurrence
    /// `t_{i+1} = t_i + ceil((1 + c2·t_i^alpha)/(c1·sqrt(rho·epsilon)))`.
    ///
    /// Errors out when the constants put `t0` or the hold count beyond any
    /// materializable horizon — at experiment scales that is the expected
    /// outcome, and practical mode exists for exactly that reason.
    pub fn theoretical(
        params: ScheduleParams,
        pc: &ProblemConstants,
    ) -> Result<Self, ScheduleError> {
        let derived = derive_constants(&params, pc)?;
        if derived.t0 > MAX_EXACT_INT {
            return Err(ScheduleError::HorizonOverflow {
                what: "t0",
                value: derived.t0,
            });
        }
        let i_holds = derived.i_holds.ceil();
        if i_holds > MAX_HOLDS {
            return Err(ScheduleError::TooManyHolds(i_holds));
        }
        let sqrt_rho_eps = (pc.rho * params.epsilon_target).sqrt();
        let mut hold_starts = Vec::with_capacity(i_holds as usize + 1);
        let mut t_i = derived.t0 as u64;
        hold_starts.push(t_i);
        for _ in 0..i_holds as u64 {
            let t_f = t_i as f64;
            let step =
                ((1.0 + params.c2 * t_f.powf(params.alpha)) / (params.c1 * sqrt_rho_eps)).ceil();
            if !step.is_finite() || step > MAX_EXACT_INT || t_f + step > MAX_EXACT_INT {
                return Err(ScheduleError::HorizonOverflow {
                    what: "t_{i+1}",
                    value: t_f + step,
                });
            }
            t_i += step as u64;
            hold_starts.push(t_i);
        }
        Ok(Self {
            params,
            hold_starts,
            derived: Some(derived),
        })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn hold_starts(&self) -> &[u64] {
        &self.hold_starts
    }

    pub fn derived(&self) -> Option<&DerivedConstants> {
        self.derived.as_ref()
    }

    /// First hold boundary.
    pub fn t0(&self) -> u64 {
        self.hold_starts[0]
    }

    /// Last hold boundary `t_I`; the reference decay resumes here.
    pub fn t_last(&self) -> u64 {
        *self.hold_starts.last().unwrap()
    }

    /// Index `i` of the hold interval `[t_i, t_{i+1})` containing `k`, if any.
    fn hold_index(&self, k: u64) -> Option<usize> {
        if k < self.t0() || k >= self.t_last() {
            return None;
        }
        // partition_point returns the number of boundaries <= k.
        Some(self.hold_starts.partition_point(|&t| t <= k) - 1)
    }

    fn piecewise(&self, expo: f64, k: u64) -> f64 {
        let anchor = match self.hold_index(k) {
            Some(i) => self.hold_starts[i],
            None => k,
        };
        self.params.reference(expo, anchor as f64)
    }

    /// Consensus stepsize at round `k`.
    pub fn eps(&self, k: u64) -> f64 {
        self.piecewise(self.params.alpha, k)
    }

    /// Gradient stepsize at round `k`.
    pub fn eta(&self, k: u64) -> f64 {
        self.piecewise(self.params.beta, k)
    }
}

/// Stepsize policy used by the engine: the decrease-and-hold schedule plus
/// the comparison baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum StepsizeRule {
    /// The decrease-and-hold schedule.
    DecreaseHold(Schedule),
    /// Pure reference functions, no holds (conventional diminishing).
    Diminishing(ScheduleParams),
    /// Fixed stepsizes; `eps = 1` with a constant `eta` is the classic
    /// unquantized-gossip baseline.
    Constant { eps: f64, eta: f64 },
    /// Decrease-and-hold layout, but each hold's value is sampled from the
    /// reference function at a uniform point inside the hold interval.
    RandomHold {
        schedule: Schedule,
        seed: u64,
        draws: Vec<(f64, f64)>,
    },
}

impl StepsizeRule {
    pub fn constant(eps: f64, eta: f64) -> Result<Self, ScheduleError> {
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0 && eta.is_finite() && eta > 0.0) {
            return Err(ScheduleError::BadConstantRule { eps, eta });
        }
        Ok(StepsizeRule::Constant { eps, eta })
    }

    /// Sample the per-hold stepsizes for the random-hold baseline.
    pub fn random_hold(schedule: Schedule, seed: u64) -> Self {
        let params = schedule.params().clone();
        let draws = schedule
            .hold_starts()
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut rng = stream(seed, Domain::HoldStepsize, i as u64, 0);
                let u: f64 = rng.random();
                let tau = w[0] as f64 + u * (w[1] - w[0]) as f64;
                (
                    params.reference(params.alpha, tau),
                    params.reference(params.beta, tau),
                )
            })
            .collect();
        StepsizeRule::RandomHold {
            schedule,
            seed,
            draws,
        }
    }

    pub fn eps(&self, k: u64) -> f64 {
        match self {
            StepsizeRule::DecreaseHold(s) => s.eps(k),
            StepsizeRule::Diminishing(p) => p.reference(p.alpha, k as f64),
            StepsizeRule::Constant { eps, .. } => *eps,
            StepsizeRule::RandomHold { schedule, draws, .. } => match schedule.hold_index(k) {
                Some(i) => draws[i].0,
                None => schedule.params().reference(schedule.params().alpha, k as f64),
            },
        }
    }

    pub fn eta(&self, k: u64) -> f64 {
        match self {
            StepsizeRule::DecreaseHold(s) => s.eta(k),
            StepsizeRule::Diminishing(p) => p.reference(p.beta, k as f64),
            StepsizeRule::Constant { eta, .. } => *eta,
            StepsizeRule::RandomHold { schedule, draws, .. } => match schedule.hold_index(k) {
                Some(i) => draws[i].1,
                None => schedule.params().reference(schedule.params().beta, k as f64),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepsizeRule::DecreaseHold(_) => "decrease_hold",
            StepsizeRule::Diminishing(_) => "diminishing",
            StepsizeRule::Constant { .. } => "constant",
            StepsizeRule::RandomHold { .. } => "random_hold",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn practical_params(t0: u64, hold: u64, n_holds: u32) -> ScheduleParams {
        ScheduleParams::new(
            0.62,
            0.94,
            0.03,
            0.3,
            0.1,
            0.1,
            Mode::Practical { t0, hold, n_holds },
        )
        .unwrap()
    }

    #[test]
    fn parameter_gate_rejects_boundaries() {
        for alpha in [0.6, 2.0 / 3.0, 0.7, 0.55] {
            assert!(matches!(
                ScheduleParams::new(alpha, 0.94, 0.03, 0.3, 0.1, 0.1, Mode::Theoretical { gamma: 1.0 }),
                Err(ScheduleError::AlphaOutOfRange(_))
            ));
        }
        for beta in [1.0, 1.5 * 0.62, 0.5, 1.2] {
            assert!(matches!(
                ScheduleParams::new(0.62, beta, 0.03, 0.3, 0.1, 0.1, Mode::Theoretical { gamma: 1.0 }),
                Err(ScheduleError::BetaOutOfRange { .. })
            ));
        }
        assert!(matches!(
            ScheduleParams::new(0.62, 0.94, 0.0, 0.3, 0.1, 0.1, Mode::Theoretical { gamma: 1.0 }),
            Err(ScheduleError::NonPositive { name: "c1", .. })
        ));
        assert!(matches!(
            ScheduleParams::new(0.62, 0.94, 0.03, 0.3, 1.0, 0.1, Mode::Theoretical { gamma: 1.0 }),
            Err(ScheduleError::ProbabilityOutOfRange(_))
        ));
        assert!(matches!(
            ScheduleParams::new(
                0.62,
                0.94,
                0.03,
                0.3,
                0.1,
                0.1,
                Mode::Practical { t0: 5, hold: 0, n_holds: 2 }
            ),
            Err(ScheduleError::BadHoldLength)
        ));
    }

    #[test]
    fn reference_values_match_high_precision_oracle() {
        let s = Schedule::practical(practical_params(100, 50, 3)).unwrap();
        // k = 0: both stepsizes start at c1 (0^expo = 0).
        assert_eq!(s.eps(0), 0.03);
        assert_eq!(s.eta(0), 0.03);
        // k = 1: 0.03/1.3 for both exponents (1^x = 1).
        let expect = 0.03 / 1.3;
        assert!((s.eps(1) - expect).abs() < 1e-16);
        assert!((s.eta(1) - expect).abs() < 1e-16);
        // Reference values at larger k, frozen from decimal evaluation.
        let s2 = Schedule::practical(practical_params(1000, 50, 0)).unwrap();
        let expect_eta100 = 1.262_768_310_727_985_3e-3;
        assert!((s2.eta(100) - expect_eta100).abs() / expect_eta100 < 1e-12);
        let expect_eps1000 = 1.319_662_869_291_209e-3;
        assert!((s2.eps(999) - s2.eps(998)).abs() > 0.0);
        assert!((s2.eps(1000) - expect_eps1000).abs() / expect_eps1000 < 1e-12);
    }

    #[test]
    fn practical_hold_layout() {
        let s = Schedule::practical(practical_params(100, 50, 3)).unwrap();
        assert_eq!(s.hold_starts(), &[100, 150, 200, 250]);
        // Constant on [100, 150).
        let v = s.eps(100);
        for k in 100..150 {
            assert_eq!(s.eps(k), v);
        }
        assert!(s.eps(150) < v);
        // Strictly decreasing on [1, 100).
        for k in 1..100 {
            assert!(s.eps(k + 1) < s.eps(k));
        }
        // Hold value equals the reference at the boundary, bitwise.
        for &t in s.hold_starts() {
            let reference = 0.03 / (1.0 + 0.3 * (t as f64).powf(0.62));
            assert_eq!(s.eps(t), reference);
        }
    }

    #[test]
    fn monotone_and_ordered_over_long_horizon() {
        let s = Schedule::practical(practical_params(100, 500, 8)).unwrap();
        let mut prev_eps = f64::INFINITY;
        let mut prev_eta = f64::INFINITY;
        for k in 0..=1_000_000u64 {
            let (e, n) = (s.eps(k), s.eta(k));
            assert!(e <= prev_eps, "eps must be non-increasing at k={k}");
            assert!(n <= prev_eta, "eta must be non-increasing at k={k}");
            assert!(e >= n, "eps >= eta must hold at k={k}");
            prev_eps = e;
            prev_eta = n;
        }
    }

    fn constants_input() -> (ScheduleParams, ProblemConstants) {
        let sp = ScheduleParams::new(
            0.62,
            0.94,
            0.03,
            0.3,
            0.1,
            0.1,
            Mode::Theoretical { gamma: 1.0 },
        )
        .unwrap();
        let pc = ProblemConstants {
            grad_bound: 1.0,
            rho: 1.0,
            grad_lipschitz: 1.0,
            sigma2: 0.5,
            n_agents: 5,
            dim: 2,
            ell: 0.3,
            f0: std::f64::consts::LN_2,
            f_star: 0.0,
        };
        (sp, pc)
    }

    #[test]
    fn derived_d1_and_q_match_hand_values() {
        let (sp, pc) = constants_input();
        let d = derive_constants(&sp, &pc).unwrap();
        // d1 = (1 + 0.5*0.03)/0.5 = 2.03 with G = 1.
        assert!((d.d1 - 2.03).abs() < 1e-14);
        // Q = (1/3600)*sqrt(0.1^3/1).
        let q_expect = 8.784_104_611_578_832e-6;
        assert!((d.q_decrease - q_expect).abs() / q_expect < 1e-12);
    }

    #[test]
    fn hold_recurrence_step_matches_oracle() {
        // ceil((1 + 0.3*1000^0.62)/(0.03*0.1)) = 7578 from decimal evaluation.
        let t_i: f64 = 1000.0;
        let step = ((1.0 + 0.3 * t_i.powf(0.62)) / (0.03 * 0.1f64)).ceil();
        assert_eq!(step, 7578.0);
    }

    #[test]
    fn constants_are_monotone_in_p() {
        let (_, pc) = constants_input();
        let mut prev_c1 = f64::INFINITY;
        let mut prev_c2 = f64::INFINITY;
        for p in [0.1, 0.5, 0.9] {
            let sp =
                ScheduleParams::new(0.62, 0.94, 0.03, 0.3, p, 0.1, Mode::Theoretical { gamma: 1.0 })
                    .unwrap();
            let d = derive_constants(&sp, &pc).unwrap();
            assert!(d.big_c1 < prev_c1);
            assert!(d.big_c2 < prev_c2);
            prev_c1 = d.big_c1;
            prev_c2 = d.big_c2;
        }
    }

    #[test]
    fn theoretical_schedule_materializes_small_case() {
        // Parameters tuned so t0 and the hold count stay desk-sized;
        // boundaries frozen from a decimal-arithmetic evaluation.
        let sp = ScheduleParams::new(
            0.62,
            0.94,
            0.5,
            0.3,
            0.9,
            1.0,
            Mode::Theoretical { gamma: 1e6 },
        )
        .unwrap();
        let pc = ProblemConstants {
            grad_bound: 0.1,
            rho: 0.01,
            grad_lipschitz: 1.0,
            sigma2: 0.2,
            n_agents: 3,
            dim: 2,
            ell: 8.0,
            f0: 0.049,
            f_star: 0.0,
        };
        let s = Schedule::theoretical(sp, &pc).unwrap();
        assert_eq!(s.t0(), 242_255);
        assert_eq!(&s.hold_starts()[..4], &[242_255, 255_349, 268_877, 282_844]);
        assert_eq!(s.hold_starts().len(), 531);
        assert_eq!(s.t_last(), 161_390_866);
        for w in s.hold_starts().windows(2) {
            assert!(w[0] < w[1]);
        }
        // Inside a hold the stepsizes freeze at the boundary value.
        assert_eq!(s.eps(250_000), s.eps(242_255));
        assert!(s.eps(242_254) > s.eps(242_255));
    }

    #[test]
    fn experiment_scale_theoretical_horizon_fails_loudly() {
        let (sp, pc) = constants_input();
        let err = Schedule::theoretical(sp, &pc).unwrap_err();
        assert!(matches!(
            err,
            ScheduleError::TooManyHolds(_) | ScheduleError::HorizonOverflow { .. }
        ));
    }

    #[test]
    fn derive_rejects_wrong_mode() {
        let sp = practical_params(10, 10, 1);
        let (_, pc) = constants_input();
        assert_eq!(derive_constants(&sp, &pc).unwrap_err(), ScheduleError::WrongMode);
    }

    #[test]
    fn random_hold_draws_come_from_the_reference_band() {
        let s = Schedule::practical(practical_params(50, 100, 4)).unwrap();
        let rule = StepsizeRule::random_hold(s.clone(), 9);
        for (i, w) in s.hold_starts().windows(2).enumerate() {
            let k = w[0] + 1;
            let eps = rule.eps(k);
            let hi = s.params().reference(s.params().alpha, w[0] as f64);
            let lo = s.params().reference(s.params().alpha, w[1] as f64);
            assert!(eps >= lo && eps <= hi, "hold {i} draw {eps} outside [{lo},{hi}]");
            assert!(rule.eps(k) >= rule.eta(k));
        }
        // Outside holds the rule follows the reference.
        assert_eq!(rule.eps(10), s.params().reference(s.params().alpha, 10.0));
        // Deterministic in the seed.
        let again = StepsizeRule::random_hold(s.clone(), 9);
        assert_eq!(rule.eps(51), again.eps(51));
        let other = StepsizeRule::random_hold(s, 10);
        assert_ne!(rule.eps(51), other.eps(51));
    }

    #[test]
    fn constant_rule_validation() {
        assert!(StepsizeRule::constant(1.0, 0.05).is_ok());
        for (eps, eta) in [(0.0, 0.05), (1.5, 0.05), (1.0, 0.0)] {
            assert!(matches!(
                StepsizeRule::constant(eps, eta),
                Err(ScheduleError::BadConstantRule { .. })
            ));
        }
    }
}
