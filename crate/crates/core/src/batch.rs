//! Experiment orchestration: materialize a validated config, run every
//! (variant, seed) pair, emit one CSV + metadata sidecar per run and a
//! summary per batch.
//!
//! File layout under the output directory:
//!
//! ```text
//! <variant>__<seed>.csv        metrics trace (schema in `engine`)
//! <variant>__<seed>.meta.txt   key-value sidecar (includes wall time)
//! summary.txt                  human-readable aggregate
//! summary.kv                   machine-readable aggregate
//! ```
//!
//! All files are written atomically (temp file + rename). Runs are
//! deterministic in (config, seed): rerunning a batch reproduces every CSV
//! byte for byte; only the wall-time line of the sidecars differs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use thiserror::Error;

use crate::config::{
    ConfigError, ConstantsConfig, EtaChoice, ExperimentConfig, GradBoundSpec, InitConfig,
    LogisticSplit, MatFacSource, MixingConfig, ObjectiveConfig, QuantizerConfig, StepsizeChoice,
    VariantConfig,
};
use crate::engine::{
    average_iterate, classify_point, run, EngineError, Init, PointClass, RunOptions, RunRecord,
};
use crate::mixing::{
    parse_edge_list_text, parse_matrix_text, MatrixParseError, MixingError, MixingMatrix,
};
use crate::objectives::{
    estimate_gradient_bound, parse_samples_text, parse_triplets_text, LogisticBilinear,
    MatrixFactorization, Objective, ObjectiveError, QuadraticSaddle,
};
use crate::quantizer::{QuantizerError, QuantizerSpec};
use crate::schedule::{ProblemConstants, Schedule, ScheduleError, StepsizeRule};
use crate::SCHEMA_VERSION;

/// Constant-stepsize grid searched for the unquantized-gossip baseline,
/// largest first; the first non-divergent, non-worsening run wins.
pub const ETA_GRID: [f64; 9] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("variant '{variant}', seed {seed}: {source}")]
    Run {
        variant: String,
        seed: u64,
        source: EngineError,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Mixing(#[from] MixingError),
    #[error("{path}: {source}")]
    DataFile {
        path: PathBuf,
        source: MatrixParseError,
    },
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("grid search found no stable constant stepsize for variant '{0}'")]
    GridSearchFailed(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-variant aggregates over the seed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub name: String,
    pub n_seeds: usize,
    pub final_f_mean: f64,
    pub final_f_min: f64,
    pub final_f_max: f64,
    pub final_grad_norm_mean: f64,
    pub final_consensus_mean: f64,
    /// Fraction of seeds whose final average iterate classifies as an
    /// approximate second-order stationary point.
    pub escape_rate: f64,
    pub n_sosp: usize,
    pub n_strict_saddle: usize,
    pub n_large_gradient: usize,
    pub mean_bits_per_iter: f64,
    pub saturated_runs: usize,
    /// Grid-searched constant gradient stepsize, when one was used.
    pub eta_const: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub experiment: String,
    pub variants: Vec<VariantSummary>,
}

impl SummaryReport {
    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn to_human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        for v in &self.variants {
            let _ = writeln!(s, "\nvariant {} ({} seeds)", v.name, v.n_seeds);
            let _ = writeln!(
                s,
                "  final F(x_bar): mean {:.6e}  min {:.6e}  max {:.6e}",
                v.final_f_mean, v.final_f_min, v.final_f_max
            );
            let _ = writeln!(s, "  final grad norm (mean): {:.6e}", v.final_grad_norm_mean);
            let _ = writeln!(
                s,
                "  final consensus error^2 (mean): {:.6e}",
                v.final_consensus_mean
            );
            let _ = writeln!(
                s,
                "  classification: {} sosp / {} strict saddle / {} large gradient",
                v.n_sosp, v.n_strict_saddle, v.n_large_gradient
            );
            let _ = writeln!(s, "  escape rate: {:.2}", v.escape_rate);
            let _ = writeln!(s, "  mean bits per iteration: {:.1}", v.mean_bits_per_iter);
            if v.saturated_runs > 0 {
                let _ = writeln!(s, "  WARNING: {} runs hit wire saturation", v.saturated_runs);
            }
            if let Some(eta) = v.eta_const {
                let _ = writeln!(s, "  constant eta (grid-searched): {eta}");
            }
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema_version = {SCHEMA_VERSION}");
        let _ = writeln!(s, "experiment = {}", self.experiment);
        for v in &self.variants {
            let p = format!("variant.{}", v.name);
            let _ = writeln!(s, "{p}.n_seeds = {}", v.n_seeds);
            let _ = writeln!(s, "{p}.final_f_mean = {}", v.final_f_mean);
            let _ = writeln!(s, "{p}.final_f_min = {}", v.final_f_min);
            let _ = writeln!(s, "{p}.final_f_max = {}", v.final_f_max);
            let _ = writeln!(s, "{p}.final_grad_norm_mean = {}", v.final_grad_norm_mean);
            let _ = writeln!(s, "{p}.final_consensus_mean = {}", v.final_consensus_mean);
            let _ = writeln!(s, "{p}.escape_rate = {}", v.escape_rate);
            let _ = writeln!(s, "{p}.n_sosp = {}", v.n_sosp);
            let _ = writeln!(s, "{p}.n_strict_saddle = {}", v.n_strict_saddle);
            let _ = writeln!(s, "{p}.n_large_gradient = {}", v.n_large_gradient);
            let _ = writeln!(s, "{p}.mean_bits_per_iter = {}", v.mean_bits_per_iter);
            let _ = writeln!(s, "{p}.saturated_runs = {}", v.saturated_runs);
            if let Some(eta) = v.eta_const {
                let _ = writeln!(s, "{p}.eta_const = {eta}");
            }
        }
        s
    }
}

/// Build the mixing matrix from config (file paths relative to `base_dir`).
pub fn build_mixing(cfg: &MixingConfig, base_dir: &Path) -> Result<MixingMatrix, BatchError> {
    match cfg {
        MixingConfig::Ring { n_agents } => Ok(MixingMatrix::metropolis_ring(*n_agents)?),
        MixingConfig::Complete { n_agents } => Ok(MixingMatrix::metropolis_complete(*n_agents)?),
        MixingConfig::Path { n_agents } => Ok(MixingMatrix::metropolis_path(*n_agents)?),
        MixingConfig::EdgeFile { path, n_agents } => {
            let full = base_dir.join(path);
            let text = fs::read_to_string(&full).map_err(io_err(&full))?;
            let edges = parse_edge_list_text(&text)
                .map_err(|source| BatchError::DataFile { path: full, source })?;
            Ok(MixingMatrix::metropolis(&edges, *n_agents)?)
        }
        MixingConfig::MatrixFile { path } => {
            let full = base_dir.join(path);
            let text = fs::read_to_string(&full).map_err(io_err(&full))?;
            let raw = parse_matrix_text(&text)
                .map_err(|source| BatchError::DataFile { path: full, source })?;
            Ok(MixingMatrix::from_weights(raw)?)
        }
    }
}

/// Build the objective from config (file paths relative to `base_dir`).
pub fn build_objective(
    cfg: &ObjectiveConfig,
    n_agents: usize,
    base_dir: &Path,
) -> Result<Box<dyn Objective>, BatchError> {
    match cfg {
        ObjectiveConfig::Logistic { reg, split } => match split {
            LogisticSplit::Homogeneous => {
                Ok(Box::new(LogisticBilinear::homogeneous(n_agents, *reg)?))
            }
            LogisticSplit::Heterogeneous { spread } => Ok(Box::new(
                LogisticBilinear::heterogeneous(n_agents, *reg, *spread)?,
            )),
            LogisticSplit::Files { samples_dir } => {
                let mut samples = Vec::with_capacity(n_agents);
                for i in 0..n_agents {
                    let path = base_dir.join(samples_dir).join(format!("agent_{i}.txt"));
                    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                    samples.push(parse_samples_text(&text)?);
                }
                Ok(Box::new(LogisticBilinear::from_agent_samples(
                    samples, *reg,
                )?))
            }
        },
        ObjectiveConfig::MatFac { rank, source } => match source {
            MatFacSource::Planted {
                rows,
                cols,
                scale,
                data_seed,
            } => Ok(Box::new(MatrixFactorization::planted(
                *rows, *cols, *rank, n_agents, *scale, *data_seed,
            )?)),
            MatFacSource::File { rows, cols, path } => {
                let full = base_dir.join(path);
                let text = fs::read_to_string(&full).map_err(io_err(&full))?;
                let triplets = parse_triplets_text(&text)?;
                Ok(Box::new(MatrixFactorization::from_triplets(
                    *rows, *cols, *rank, n_agents, &triplets,
                )?))
            }
        },
        ObjectiveConfig::Quadratic {
            dim,
            margin,
            heterogeneity,
            matrix_seed,
        } => Ok(Box::new(QuadraticSaddle::new(
            n_agents,
            *dim,
            *margin,
            *heterogeneity,
            *matrix_seed,
        )?)),
    }
}

fn variant_quantizer(
    base: &QuantizerConfig,
    v: &VariantConfig,
) -> Result<QuantizerSpec, BatchError> {
    let scheme = v.scheme.unwrap_or(base.scheme);
    let ell = v.interval_ell.unwrap_or(base.interval_ell);
    let bits = v.bit_width.unwrap_or(base.bit_width);
    let log_base = v.log_base.unwrap_or(base.log_base);
    Ok(QuantizerSpec::new(scheme, ell, bits)?.with_log_base(log_base)?)
}

fn problem_constants(
    cc: &ConstantsConfig,
    obj: &dyn Objective,
    mixing: &MixingMatrix,
    ell: f64,
) -> Result<ProblemConstants, BatchError> {
    let grad_bound = match &cc.grad_bound {
        GradBoundSpec::Value(v) => *v,
        // Deterministic estimation stream, independent of run seeds.
        GradBoundSpec::Auto { radius, samples } => {
            estimate_gradient_bound(obj, *radius, *samples, 0)?
        }
    };
    Ok(ProblemConstants {
        grad_bound,
        rho: cc.rho,
        grad_lipschitz: cc.grad_lipschitz,
        sigma2: mixing.sigma2(),
        n_agents: obj.n_agents(),
        dim: obj.dim(),
        ell,
        f0: cc.f0,
        f_star: cc.f_star,
    })
}

/// Build the decrease-and-hold schedule configured for this experiment.
fn base_schedule(
    cfg: &ExperimentConfig,
    obj: &dyn Objective,
    mixing: &MixingMatrix,
    ell: f64,
) -> Result<Schedule, BatchError> {
    let params = cfg.schedule.params.clone();
    match &cfg.schedule.constants {
        None => Ok(Schedule::practical(params)?),
        Some(cc) => {
            let pc = problem_constants(cc, obj, mixing, ell)?;
            Ok(Schedule::theoretical(params, &pc)?)
        }
    }
}

fn init_from_config(cfg: &InitConfig) -> Init {
    match cfg {
        InitConfig::AtPoint(p) => Init::AtPoint(DVector::from_column_slice(p)),
        InitConfig::RandomBox { lo, hi } => Init::RandomBox { lo: *lo, hi: *hi },
    }
}

fn run_options(cfg: &ExperimentConfig, seed: u64) -> RunOptions {
    RunOptions {
        n_iters: cfg.n_iters,
        master_seed: seed,
        init: init_from_config(&cfg.init),
        hessian_cadence: cfg.hessian_cadence,
        hessian_dense_limit: cfg.hessian_dense_limit,
        divergence_limit: cfg.divergence_limit,
    }
}

/// Largest grid stepsize whose full-horizon pilot run (first seed) neither
/// diverges nor ends above its starting objective value.
pub fn grid_search_eta(
    obj: &dyn Objective,
    mixing: &MixingMatrix,
    quantizer: &QuantizerSpec,
    eps_const: f64,
    cfg: &ExperimentConfig,
    variant: &str,
) -> Result<f64, BatchError> {
    let seed = cfg.seeds[0];
    for &eta in ETA_GRID.iter() {
        let rule = match StepsizeRule::constant(eps_const, eta) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let opts = run_options(cfg, seed);
        match run(obj, mixing, quantizer.clone(), rule, &opts) {
            Ok(rec) => {
                let first = rec.rows.first().expect("rows");
                let last = rec.final_row();
                if last.f_bar.is_finite() && last.f_bar <= first.f_bar + 1e-12 {
                    return Ok(eta);
                }
            }
            Err(EngineError::Divergence { .. }) => continue,
            Err(other) => {
                return Err(BatchError::Run {
                    variant: variant.to_string(),
                    seed,
                    source: other,
                })
            }
        }
    }
    Err(BatchError::GridSearchFailed(variant.to_string()))
}

fn stepsize_for_variant(
    v: &VariantConfig,
    cfg: &ExperimentConfig,
    obj: &dyn Objective,
    mixing: &MixingMatrix,
    quantizer: &QuantizerSpec,
) -> Result<(StepsizeRule, Option<f64>), BatchError> {
    match &v.stepsize {
        StepsizeChoice::Schedule => {
            let s = base_schedule(cfg, obj, mixing, quantizer.interval_ell)?;
            Ok((StepsizeRule::DecreaseHold(s), None))
        }
        StepsizeChoice::Diminishing => {
            Ok((StepsizeRule::Diminishing(cfg.schedule.params.clone()), None))
        }
        StepsizeChoice::RandomHold { seed } => {
            let s = base_schedule(cfg, obj, mixing, quantizer.interval_ell)?;
            Ok((StepsizeRule::random_hold(s, *seed), None))
        }
        StepsizeChoice::Constant { eps, eta } => {
            let eta = match eta {
                EtaChoice::Value(v) => *v,
                EtaChoice::Grid => grid_search_eta(obj, mixing, quantizer, *eps, cfg, &v.name)?,
            };
            Ok((StepsizeRule::constant(*eps, eta)?, Some(eta)))
        }
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// The outcome of one (variant, seed) run kept for aggregation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub variant: String,
    pub seed: u64,
    pub record: RunRecord,
    pub final_class: PointClass,
}

/// Execute the full batch: every variant against every seed. When
/// `out_dir` is given, per-run CSVs, sidecars, and the summary are written
/// there (the directory is created if needed). `progress` observes each
/// finished run in order.
pub fn run_batch(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&RunOutcome),
) -> Result<SummaryReport, BatchError> {
    let mixing = build_mixing(&cfg.mixing, base_dir)?;
    let n_agents = mixing.n_agents();
    let obj = build_objective(&cfg.objective, n_agents, base_dir)?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let mut summaries = Vec::new();
    for variant in &cfg.variants {
        let quantizer = variant_quantizer(&cfg.quantizer, variant)?;
        let (rule, eta_const) =
            stepsize_for_variant(variant, cfg, obj.as_ref(), &mixing, &quantizer)?;

        let mut finals: Vec<(f64, f64, f64)> = Vec::new();
        let mut classes: Vec<PointClass> = Vec::new();
        let mut bits_mean = 0.0;
        let mut saturated_runs = 0usize;
        for &seed in &cfg.seeds {
            let opts = run_options(cfg, seed);
            let mut record = run(obj.as_ref(), &mixing, quantizer.clone(), rule.clone(), &opts)
                .map_err(|source| BatchError::Run {
                    variant: variant.name.clone(),
                    seed,
                    source,
                })?;
            let avg = average_iterate(&record.final_state);
            let final_class = classify_point(
                obj.as_ref(),
                &avg,
                cfg.classify_epsilon,
                cfg.classify_rho,
                cfg.hessian_dense_limit,
            )
            .map_err(|source| BatchError::Run {
                variant: variant.name.clone(),
                seed,
                source,
            })?;

            record.meta.extra.push(("experiment".into(), cfg.name.clone()));
            record.meta.extra.push(("variant".into(), variant.name.clone()));
            record
                .meta
                .extra
                .push(("final_class".into(), final_class.name().into()));
            if let Some(eta) = eta_const {
                record.meta.extra.push(("eta_const".into(), eta.to_string()));
            }
            if let StepsizeRule::DecreaseHold(s) = &rule {
                if let Some(d) = s.derived() {
                    for (k, v) in [
                        ("derived_d1", d.d1),
                        ("derived_d2", d.d2),
                        ("derived_C1", d.big_c1),
                        ("derived_C2", d.big_c2),
                        ("derived_C3", d.big_c3),
                        ("derived_Q", d.q_decrease),
                        ("derived_t0", d.t0),
                        ("derived_I", d.i_holds),
                    ] {
                        record.meta.extra.push((k.into(), v.to_string()));
                    }
                }
            }

            if let Some(dir) = out_dir {
                let stem = format!("{}__{}", variant.name, seed);
                let csv_path = dir.join(format!("{stem}.csv"));
                write_atomic(&csv_path, &record.to_csv()).map_err(io_err(&csv_path))?;
                let meta_path = dir.join(format!("{stem}.meta.txt"));
                write_atomic(&meta_path, &record.meta_text()).map_err(io_err(&meta_path))?;
            }

            let last = record.final_row();
            finals.push((last.f_bar, last.grad_norm, last.consensus_error_sq));
            bits_mean += last.bits_cumulative as f64 / cfg.n_iters as f64;
            if record.saturation_flagged() {
                saturated_runs += 1;
            }
            classes.push(final_class);
            progress(&RunOutcome {
                variant: variant.name.clone(),
                seed,
                record,
                final_class,
            });
        }

        let n = finals.len();
        let nf = n as f64;
        let n_sosp = classes.iter().filter(|c| **c == PointClass::EpsSosp).count();
        let n_saddle = classes
            .iter()
            .filter(|c| **c == PointClass::EpsStrictSaddle)
            .count();
        let n_large = classes
            .iter()
            .filter(|c| **c == PointClass::LargeGradient)
            .count();
        summaries.push(VariantSummary {
            name: variant.name.clone(),
            n_seeds: n,
            final_f_mean: finals.iter().map(|f| f.0).sum::<f64>() / nf,
            final_f_min: finals.iter().map(|f| f.0).fold(f64::INFINITY, f64::min),
            final_f_max: finals.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max),
            final_grad_norm_mean: finals.iter().map(|f| f.1).sum::<f64>() / nf,
            final_consensus_mean: finals.iter().map(|f| f.2).sum::<f64>() / nf,
            escape_rate: n_sosp as f64 / nf,
            n_sosp,
            n_strict_saddle: n_saddle,
            n_large_gradient: n_large,
            mean_bits_per_iter: bits_mean / nf,
            saturated_runs,
            eta_const,
        });
    }

    let report = SummaryReport {
        experiment: cfg.name.clone(),
        variants: summaries,
    };
    if let Some(dir) = out_dir {
        let human = dir.join("summary.txt");
        write_atomic(&human, &report.to_human()).map_err(io_err(&human))?;
        let kv = dir.join("summary.kv");
        write_atomic(&kv, &report.to_kv()).map_err(io_err(&kv))?;
    }
    Ok(report)
}
