//! Experiment configuration files.
//!
//! The format is a flat key-value text file with INI-style sections:
//!
//! ```text
//! schema_version = 1
//!
//! [experiment]
//! name = saddle_escape
//! seeds = 1,2,3            # or seed_base = 40 / n_seeds = 10
//! iters = 5000
//! classify_epsilon = 0.1
//! classify_rho = 1.0
//!
//! [mixing]
//! kind = ring              # ring | complete | path | edge_file | matrix_file
//! n_agents = 5
//!
//! [quantizer]
//! scheme = switching       # switching | level1_only | log_scale | identity
//! interval_ell = 0.3
//! bit_width = 9
//!
//! [schedule]
//! mode = practical
//! alpha = 0.62
//! beta = 0.94
//! c1 = 0.03
//! c2 = 0.3
//! p = 0.1
//! epsilon_target = 0.1
//! t0 = 10
//! hold = 1600
//! n_holds = 3
//!
//! [objective]
//! kind = logistic
//!
//! [init]
//! kind = at_point
//! point = 0,0
//!
//! [variant.alg1]           # optional comparison variants
//! scheme = switching
//! [variant.dgd]
//! scheme = identity
//! stepsize = constant
//! eps_const = 1.0
//! eta_const = grid
//! ```
//!
//! `#` starts a comment anywhere on a line. Unknown keys are errors, not
//! warnings: a typo in `alpha` would silently disable the theory gates
//! otherwise. Parse errors carry line numbers; semantic errors name the
//! violated constraint and key.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::quantizer::QuantizerScheme;
use crate::schedule::{Mode, ScheduleParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("key '{key}': {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parse the raw key-value layer: sections prefix keys, `#` comments and
/// blank lines are skipped, duplicate full keys are rejected.
fn parse_kv(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(inner) = body.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: "section header must look like [name]".into(),
                });
            };
            let name = name.trim();
            if name.is_empty() || !name.split('.').all(is_ident) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("invalid section name '{name}'"),
                });
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: "expected 'key = value' or a [section] header".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || !key.split('.').all(is_ident) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("invalid key '{key}'"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key '{key}' has an empty value"),
            });
        }
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if !seen.insert(full.clone()) {
            return Err(ConfigError::DuplicateKey { key: full, line });
        }
        entries.push(Entry {
            key: full,
            value: value.to_string(),
            line,
        });
    }
    Ok(entries)
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Consumption tracker over parsed entries; anything left unconsumed at the
/// end is an unknown key.
struct KvMap {
    entries: Vec<Entry>,
    taken: Vec<bool>,
}

impl KvMap {
    fn new(entries: Vec<Entry>) -> Self {
        let taken = vec![false; entries.len()];
        Self { entries, taken }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        for (i, e) in self.entries.iter().enumerate() {
            if !self.taken[i] && e.key == key {
                self.taken[i] = true;
                return Some((e.value.clone(), e.line));
            }
        }
        None
    }

    fn require(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key)
            .map(|(v, _)| v)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn take_parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, _)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| invalid(key, format!("cannot parse '{v}'"))),
        }
    }

    fn require_parse<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        let v = self.require(key)?;
        v.parse::<T>()
            .map_err(|_| invalid(key, format!("cannot parse '{v}'")))
    }

    fn take_parse_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.take_parse(key)?.unwrap_or(default))
    }

    /// First-appearance-ordered middle components of keys matching
    /// `prefix.<name>.<rest>`.
    fn group_names(&self, prefix: &str) -> Vec<String> {
        let mut names = Vec::new();
        let pat = format!("{prefix}.");
        for e in &self.entries {
            if let Some(rest) = e.key.strip_prefix(&pat) {
                if let Some((name, _)) = rest.split_once('.') {
                    if !names.iter().any(|n| n == name) {
                        names.push(name.to_string());
                    }
                }
            }
        }
        names
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (i, e) in self.entries.iter().enumerate() {
            if !self.taken[i] {
                return Err(ConfigError::UnknownKey {
                    key: e.key.clone(),
                    line: e.line,
                });
            }
        }
        Ok(())
    }
}

fn require_finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, "value must be finite"))
    }
}

/// Network construction choice.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingConfig {
    Ring { n_agents: usize },
    Complete { n_agents: usize },
    Path { n_agents: usize },
    EdgeFile { path: String, n_agents: usize },
    MatrixFile { path: String },
}

impl MixingConfig {
    /// Agent count when the config itself pins it (file-backed matrices
    /// resolve it at materialization time).
    pub fn n_agents(&self) -> Option<usize> {
        match self {
            MixingConfig::Ring { n_agents }
            | MixingConfig::Complete { n_agents }
            | MixingConfig::Path { n_agents }
            | MixingConfig::EdgeFile { n_agents, .. } => Some(*n_agents),
            MixingConfig::MatrixFile { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerConfig {
    pub scheme: QuantizerScheme,
    pub interval_ell: f64,
    pub bit_width: u32,
    pub log_base: f64,
}

/// `G` for the theoretical constants: supplied or estimated from a box.
#[derive(Debug, Clone, PartialEq)]
pub enum GradBoundSpec {
    Auto { radius: f64, samples: u32 },
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsConfig {
    pub grad_bound: GradBoundSpec,
    pub rho: f64,
    pub grad_lipschitz: f64,
    pub f0: f64,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub params: ScheduleParams,
    /// Present in theoretical mode only.
    pub constants: Option<ConstantsConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogisticSplit {
    Homogeneous,
    Heterogeneous { spread: f64 },
    Files { samples_dir: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatFacSource {
    Planted {
        rows: usize,
        cols: usize,
        scale: f64,
        data_seed: u64,
    },
    File {
        rows: usize,
        cols: usize,
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveConfig {
    Logistic {
        reg: f64,
        split: LogisticSplit,
    },
    MatFac {
        rank: usize,
        source: MatFacSource,
    },
    Quadratic {
        dim: usize,
        margin: f64,
        heterogeneity: f64,
        matrix_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitConfig {
    AtPoint(Vec<f64>),
    RandomBox { lo: f64, hi: f64 },
}

/// Constant-rule gradient stepsize: fixed, or grid-searched at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaChoice {
    Grid,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepsizeChoice {
    /// The configured decrease-and-hold schedule.
    Schedule,
    Constant { eps: f64, eta: EtaChoice },
    Diminishing,
    RandomHold { seed: u64 },
}

/// One comparison variant: the base configuration plus overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantConfig {
    pub name: String,
    pub scheme: Option<QuantizerScheme>,
    pub interval_ell: Option<f64>,
    pub bit_width: Option<u32>,
    pub log_base: Option<f64>,
    pub stepsize: StepsizeChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub n_iters: u64,
    pub output_dir: String,
    pub hessian_cadence: u64,
    pub classify_epsilon: f64,
    pub classify_rho: f64,
    pub hessian_dense_limit: usize,
    pub divergence_limit: f64,
    pub mixing: MixingConfig,
    pub quantizer: QuantizerConfig,
    pub schedule: ScheduleConfig,
    pub objective: ObjectiveConfig,
    pub init: InitConfig,
    pub variants: Vec<VariantConfig>,
}

/// Load and fully validate a config from a file on disk.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    load_config_str(&text)
}

/// Load and fully validate a config from text.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut kv = KvMap::new(parse_kv(text)?);

    let schema: u32 = kv.require_parse("schema_version")?;
    if schema != crate::SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!(
                "unsupported version {schema}, this build reads {}",
                crate::SCHEMA_VERSION
            ),
        ));
    }

    let name = kv.require("experiment.name")?;
    if !is_ident(&name) {
        return Err(invalid(
            "experiment.name",
            "must be alphanumeric with '_' or '-'",
        ));
    }

    let seeds = parse_seed_plan(&mut kv)?;
    let n_iters: u64 = kv.require_parse("experiment.iters")?;
    if n_iters == 0 {
        return Err(invalid("experiment.iters", "must be at least 1"));
    }
    let output_dir = kv
        .take("experiment.output_dir")
        .map(|(v, _)| v)
        .unwrap_or_else(|| "out".to_string());
    let hessian_cadence = kv.take_parse_or("experiment.hessian_cadence", 0u64)?;
    let classify_epsilon = require_finite(
        "experiment.classify_epsilon",
        kv.require_parse("experiment.classify_epsilon")?,
    )?;
    let classify_rho = require_finite(
        "experiment.classify_rho",
        kv.require_parse("experiment.classify_rho")?,
    )?;
    if classify_epsilon <= 0.0 {
        return Err(invalid("experiment.classify_epsilon", "must be positive"));
    }
    if classify_rho <= 0.0 {
        return Err(invalid("experiment.classify_rho", "must be positive"));
    }
    let hessian_dense_limit = kv.take_parse_or(
        "experiment.hessian_dense_limit",
        crate::engine::DEFAULT_HESSIAN_DENSE_LIMIT,
    )?;
    let divergence_limit = kv.take_parse_or(
        "experiment.divergence_limit",
        crate::engine::DEFAULT_DIVERGENCE_LIMIT,
    )?;
    if !(divergence_limit.is_finite() && divergence_limit > 0.0) {
        return Err(invalid(
            "experiment.divergence_limit",
            "must be positive and finite",
        ));
    }

    let mixing = parse_mixing(&mut kv)?;
    let quantizer = parse_quantizer(&mut kv)?;
    let schedule = parse_schedule(&mut kv)?;
    let objective = parse_objective(&mut kv)?;
    let init = parse_init(&mut kv)?;
    let variants = parse_variants(&mut kv)?;

    kv.finish()?;
    Ok(ExperimentConfig {
        name,
        seeds,
        n_iters,
        output_dir,
        hessian_cadence,
        classify_epsilon,
        classify_rho,
        hessian_dense_limit,
        divergence_limit,
        mixing,
        quantizer,
        schedule,
        objective,
        init,
        variants,
    })
}

fn parse_seed_plan(kv: &mut KvMap) -> Result<Vec<u64>, ConfigError> {
    let explicit = kv.take("experiment.seeds");
    let base = kv.take_parse::<u64>("experiment.seed_base")?;
    let count = kv.take_parse::<u64>("experiment.n_seeds")?;
    match (explicit, base, count) {
        (Some((list, _)), None, None) => {
            let mut seeds = Vec::new();
            for tok in list.split(',') {
                let tok = tok.trim();
                let s: u64 = tok
                    .parse()
                    .map_err(|_| invalid("experiment.seeds", format!("bad seed '{tok}'")))?;
                seeds.push(s);
            }
            if seeds.is_empty() {
                return Err(invalid("experiment.seeds", "need at least one seed"));
            }
            Ok(seeds)
        }
        (None, Some(base), Some(count)) => {
            if count == 0 {
                return Err(invalid("experiment.n_seeds", "must be at least 1"));
            }
            if count > 100_000 {
                return Err(invalid("experiment.n_seeds", "batch too large (cap 100000)"));
            }
            Ok((0..count).map(|i| base.wrapping_add(i)).collect())
        }
        (Some(_), _, _) => Err(invalid(
            "experiment.seeds",
            "conflicts with experiment.seed_base/n_seeds; use one form",
        )),
        (None, _, _) => Err(ConfigError::MissingKey(
            "experiment.seeds (or seed_base + n_seeds)".into(),
        )),
    }
}

fn parse_mixing(kv: &mut KvMap) -> Result<MixingConfig, ConfigError> {
    let kind = kv.require("mixing.kind")?;
    let mut n_agents = || -> Result<usize, ConfigError> {
        let n: usize = kv.require_parse("mixing.n_agents")?;
        if n == 0 || n > 10_000 {
            return Err(invalid("mixing.n_agents", "must be in 1..=10000"));
        }
        Ok(n)
    };
    match kind.as_str() {
        "ring" => Ok(MixingConfig::Ring {
            n_agents: n_agents()?,
        }),
        "complete" => Ok(MixingConfig::Complete {
            n_agents: n_agents()?,
        }),
        "path" => Ok(MixingConfig::Path {
            n_agents: n_agents()?,
        }),
        "edge_file" => {
            let n = n_agents()?;
            let path = kv.require("mixing.path")?;
            Ok(MixingConfig::EdgeFile { path, n_agents: n })
        }
        "matrix_file" => {
            let path = kv.require("mixing.path")?;
            Ok(MixingConfig::MatrixFile { path })
        }
        other => Err(invalid(
            "mixing.kind",
            format!("unknown kind '{other}' (ring | complete | path | edge_file | matrix_file)"),
        )),
    }
}

fn parse_scheme(key: &str, value: &str) -> Result<QuantizerScheme, ConfigError> {
    match value {
        "switching" => Ok(QuantizerScheme::Switching),
        "level1_only" => Ok(QuantizerScheme::Level1Only),
        "log_scale" => Ok(QuantizerScheme::LogScale),
        "identity" => Ok(QuantizerScheme::Identity),
        other => Err(invalid(
            key,
            format!("unknown scheme '{other}' (switching | level1_only | log_scale | identity)"),
        )),
    }
}

fn parse_quantizer(kv: &mut KvMap) -> Result<QuantizerConfig, ConfigError> {
    let scheme = parse_scheme("quantizer.scheme", &kv.require("quantizer.scheme")?)?;
    let interval_ell: f64 = kv.require_parse("quantizer.interval_ell")?;
    let bit_width: u32 = kv.require_parse("quantizer.bit_width")?;
    let log_base: f64 = kv.take_parse_or("quantizer.log_base", 2.0)?;
    // Delegate the numeric gates to the quantizer module.
    crate::quantizer::QuantizerSpec::new(scheme, interval_ell, bit_width)
        .and_then(|s| s.with_log_base(log_base))
        .map_err(|e| invalid("quantizer", e))?;
    Ok(QuantizerConfig {
        scheme,
        interval_ell,
        bit_width,
        log_base,
    })
}

fn parse_schedule(kv: &mut KvMap) -> Result<ScheduleConfig, ConfigError> {
    let mode = kv.require("schedule.mode")?;
    let alpha: f64 = kv.require_parse("schedule.alpha")?;
    let beta: f64 = kv.require_parse("schedule.beta")?;
    let c1: f64 = kv.require_parse("schedule.c1")?;
    let c2: f64 = kv.require_parse("schedule.c2")?;
    let p: f64 = kv.require_parse("schedule.p")?;
    let epsilon_target: f64 = kv.require_parse("schedule.epsilon_target")?;
    let (mode, constants) = match mode.as_str() {
        "practical" => {
            let t0: u64 = kv.require_parse("schedule.t0")?;
            let hold: u64 = kv.require_parse("schedule.hold")?;
            let n_holds: u32 = kv.require_parse("schedule.n_holds")?;
            (Mode::Practical { t0, hold, n_holds }, None)
        }
        "theoretical" => {
            let gamma: f64 = kv.take_parse_or("schedule.gamma", 1.0)?;
            let grad_bound = match kv.require("constants.G")?.as_str() {
                "auto" => GradBoundSpec::Auto {
                    radius: kv.take_parse_or("constants.g_box_radius", 1.0)?,
                    samples: kv.take_parse_or("constants.g_samples", 256u32)?,
                },
                v => GradBoundSpec::Value(v.parse::<f64>().map_err(|_| {
                    invalid(
                        "constants.G",
                        format!("expected 'auto' or a number, got '{v}'"),
                    )
                })?),
            };
            let constants = ConstantsConfig {
                grad_bound,
                rho: kv.require_parse("constants.rho")?,
                grad_lipschitz: kv.require_parse("constants.L")?,
                f0: kv.require_parse("constants.f0")?,
                f_star: kv.require_parse("constants.f_star")?,
            };
            (Mode::Theoretical { gamma }, Some(constants))
        }
        other => {
            return Err(invalid(
                "schedule.mode",
                format!("unknown mode '{other}' (practical | theoretical)"),
            ))
        }
    };
    let params = ScheduleParams::new(alpha, beta, c1, c2, p, epsilon_target, mode)
        .map_err(|e| invalid("schedule", e))?;
    Ok(ScheduleConfig { params, constants })
}

fn parse_objective(kv: &mut KvMap) -> Result<ObjectiveConfig, ConfigError> {
    let kind = kv.require("objective.kind")?;
    match kind.as_str() {
        "logistic" => {
            let reg: f64 = kv.take_parse_or("objective.logistic.reg", 0.1)?;
            let split = match kv
                .take("objective.logistic.split")
                .map(|(v, _)| v)
                .unwrap_or_else(|| "homogeneous".into())
                .as_str()
            {
                "homogeneous" => LogisticSplit::Homogeneous,
                "heterogeneous" => LogisticSplit::Heterogeneous {
                    spread: kv.take_parse_or("objective.logistic.spread", 0.5)?,
                },
                "files" => LogisticSplit::Files {
                    samples_dir: kv.require("objective.logistic.samples_dir")?,
                },
                other => {
                    return Err(invalid(
                        "objective.logistic.split",
                        format!("unknown split '{other}' (homogeneous | heterogeneous | files)"),
                    ))
                }
            };
            Ok(ObjectiveConfig::Logistic { reg, split })
        }
        "matrix_factorization" => {
            let rank: usize = kv.require_parse("objective.matfac.rank")?;
            let rows: usize = kv.require_parse("objective.matfac.rows")?;
            let cols: usize = kv.require_parse("objective.matfac.cols")?;
            let source = match kv
                .take("objective.matfac.source")
                .map(|(v, _)| v)
                .unwrap_or_else(|| "planted".into())
                .as_str()
            {
                "planted" => MatFacSource::Planted {
                    rows,
                    cols,
                    scale: kv.take_parse_or("objective.matfac.scale", 0.7)?,
                    data_seed: kv.take_parse_or("objective.matfac.data_seed", 1u64)?,
                },
                "file" => MatFacSource::File {
                    rows,
                    cols,
                    path: kv.require("objective.matfac.path")?,
                },
                other => {
                    return Err(invalid(
                        "objective.matfac.source",
                        format!("unknown source '{other}' (planted | file)"),
                    ))
                }
            };
            Ok(ObjectiveConfig::MatFac { rank, source })
        }
        "quadratic_saddle" => Ok(ObjectiveConfig::Quadratic {
            dim: kv.require_parse("objective.quadratic.dim")?,
            margin: kv.require_parse("objective.quadratic.margin")?,
            heterogeneity: kv.take_parse_or("objective.quadratic.heterogeneity", 0.0)?,
            matrix_seed: kv.take_parse_or("objective.quadratic.matrix_seed", 1u64)?,
        }),
        other => Err(invalid(
            "objective.kind",
            format!("unknown kind '{other}' (logistic | matrix_factorization | quadratic_saddle)"),
        )),
    }
}

fn parse_init(kv: &mut KvMap) -> Result<InitConfig, ConfigError> {
    let kind = kv.require("init.kind")?;
    match kind.as_str() {
        "at_point" => {
            let raw = kv.require("init.point")?;
            let mut point = Vec::new();
            for tok in raw.split(',') {
                let tok = tok.trim();
                let v: f64 = tok
                    .parse()
                    .map_err(|_| invalid("init.point", format!("bad coordinate '{tok}'")))?;
                point.push(require_finite("init.point", v)?);
            }
            Ok(InitConfig::AtPoint(point))
        }
        "random_box" => {
            let lo: f64 = kv.require_parse("init.lo")?;
            let hi: f64 = kv.require_parse("init.hi")?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid("init", format!("need lo < hi, got [{lo}, {hi})")));
            }
            Ok(InitConfig::RandomBox { lo, hi })
        }
        other => Err(invalid(
            "init.kind",
            format!("unknown kind '{other}' (at_point | random_box)"),
        )),
    }
}

fn parse_variants(kv: &mut KvMap) -> Result<Vec<VariantConfig>, ConfigError> {
    let names = kv.group_names("variant");
    let mut variants = Vec::new();
    for name in names {
        let prefix = format!("variant.{name}");
        let scheme = match kv.take(&format!("{prefix}.scheme")) {
            Some((v, _)) => Some(parse_scheme(&format!("{prefix}.scheme"), &v)?),
            None => None,
        };
        let interval_ell = kv.take_parse::<f64>(&format!("{prefix}.interval_ell"))?;
        let bit_width = kv.take_parse::<u32>(&format!("{prefix}.bit_width"))?;
        let log_base = kv.take_parse::<f64>(&format!("{prefix}.log_base"))?;
        let stepsize = match kv
            .take(&format!("{prefix}.stepsize"))
            .map(|(v, _)| v)
            .unwrap_or_else(|| "schedule".into())
            .as_str()
        {
            "schedule" => StepsizeChoice::Schedule,
            "diminishing" => StepsizeChoice::Diminishing,
            "constant" => {
                let eps: f64 = kv.take_parse_or(&format!("{prefix}.eps_const"), 1.0)?;
                let eta = match kv.require(&format!("{prefix}.eta_const"))?.as_str() {
                    "grid" => EtaChoice::Grid,
                    v => EtaChoice::Value(v.parse::<f64>().map_err(|_| {
                        invalid(
                            &format!("{prefix}.eta_const"),
                            format!("expected 'grid' or a number, got '{v}'"),
                        )
                    })?),
                };
                StepsizeChoice::Constant { eps, eta }
            }
            "random_hold" => StepsizeChoice::RandomHold {
                seed: kv.take_parse_or(&format!("{prefix}.hold_seed"), 0u64)?,
            },
            other => {
                return Err(invalid(
                    &format!("{prefix}.stepsize"),
                    format!(
                        "unknown rule '{other}' (schedule | constant | diminishing | random_hold)"
                    ),
                ))
            }
        };
        variants.push(VariantConfig {
            name,
            scheme,
            interval_ell,
            bit_width,
            log_base,
            stepsize,
        });
    }
    if variants.is_empty() {
        variants.push(VariantConfig {
            name: "default".into(),
            scheme: None,
            interval_ell: None,
            bit_width: None,
            log_base: None,
            stepsize: StepsizeChoice::Schedule,
        });
    }
    Ok(variants)
}

/// Render a config in canonical form; `load_config_str(write_config(c))`
/// reproduces `c` exactly (floats are written shortest-round-trip).
pub fn write_config(cfg: &ExperimentConfig) -> String {
    use fmt::Write;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "schema_version = {}", crate::SCHEMA_VERSION);
    let _ = writeln!(w, "\n[experiment]");
    let _ = writeln!(w, "name = {}", cfg.name);
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(w, "seeds = {}", seeds.join(","));
    let _ = writeln!(w, "iters = {}", cfg.n_iters);
    let _ = writeln!(w, "output_dir = {}", cfg.output_dir);
    let _ = writeln!(w, "hessian_cadence = {}", cfg.hessian_cadence);
    let _ = writeln!(w, "classify_epsilon = {}", cfg.classify_epsilon);
    let _ = writeln!(w, "classify_rho = {}", cfg.classify_rho);
    let _ = writeln!(w, "hessian_dense_limit = {}", cfg.hessian_dense_limit);
    let _ = writeln!(w, "divergence_limit = {}", cfg.divergence_limit);

    let _ = writeln!(w, "\n[mixing]");
    match &cfg.mixing {
        MixingConfig::Ring { n_agents } => {
            let _ = writeln!(w, "kind = ring\nn_agents = {n_agents}");
        }
        MixingConfig::Complete { n_agents } => {
            let _ = writeln!(w, "kind = complete\nn_agents = {n_agents}");
        }
        MixingConfig::Path { n_agents } => {
            let _ = writeln!(w, "kind = path\nn_agents = {n_agents}");
        }
        MixingConfig::EdgeFile { path, n_agents } => {
            let _ = writeln!(w, "kind = edge_file\nn_agents = {n_agents}\npath = {path}");
        }
        MixingConfig::MatrixFile { path } => {
            let _ = writeln!(w, "kind = matrix_file\npath = {path}");
        }
    }

    let _ = writeln!(w, "\n[quantizer]");
    let _ = writeln!(w, "scheme = {}", cfg.quantizer.scheme.name());
    let _ = writeln!(w, "interval_ell = {}", cfg.quantizer.interval_ell);
    let _ = writeln!(w, "bit_width = {}", cfg.quantizer.bit_width);
    let _ = writeln!(w, "log_base = {}", cfg.quantizer.log_base);

    let _ = writeln!(w, "\n[schedule]");
    let sp = &cfg.schedule.params;
    match sp.mode {
        Mode::Practical { t0, hold, n_holds } => {
            let _ = writeln!(w, "mode = practical");
            let _ = writeln!(
                w,
                "alpha = {}\nbeta = {}\nc1 = {}\nc2 = {}",
                sp.alpha, sp.beta, sp.c1, sp.c2
            );
            let _ = writeln!(w, "p = {}\nepsilon_target = {}", sp.p, sp.epsilon_target);
            let _ = writeln!(w, "t0 = {t0}\nhold = {hold}\nn_holds = {n_holds}");
        }
        Mode::Theoretical { gamma } => {
            let _ = writeln!(w, "mode = theoretical");
            let _ = writeln!(
                w,
                "alpha = {}\nbeta = {}\nc1 = {}\nc2 = {}",
                sp.alpha, sp.beta, sp.c1, sp.c2
            );
            let _ = writeln!(w, "p = {}\nepsilon_target = {}", sp.p, sp.epsilon_target);
            let _ = writeln!(w, "gamma = {gamma}");
        }
    }
    if let Some(c) = &cfg.schedule.constants {
        let _ = writeln!(w, "\n[constants]");
        match &c.grad_bound {
            GradBoundSpec::Auto { radius, samples } => {
                let _ = writeln!(w, "G = auto\ng_box_radius = {radius}\ng_samples = {samples}");
            }
            GradBoundSpec::Value(v) => {
                let _ = writeln!(w, "G = {v}");
            }
        }
        let _ = writeln!(
            w,
            "rho = {}\nL = {}\nf0 = {}\nf_star = {}",
            c.rho, c.grad_lipschitz, c.f0, c.f_star
        );
    }

    let _ = writeln!(w, "\n[objective]");
    match &cfg.objective {
        ObjectiveConfig::Logistic { reg, split } => {
            let _ = writeln!(w, "kind = logistic");
            let _ = writeln!(w, "\n[objective.logistic]");
            let _ = writeln!(w, "reg = {reg}");
            match split {
                LogisticSplit::Homogeneous => {
                    let _ = writeln!(w, "split = homogeneous");
                }
                LogisticSplit::Heterogeneous { spread } => {
                    let _ = writeln!(w, "split = heterogeneous\nspread = {spread}");
                }
                LogisticSplit::Files { samples_dir } => {
                    let _ = writeln!(w, "split = files\nsamples_dir = {samples_dir}");
                }
            }
        }
        ObjectiveConfig::MatFac { rank, source } => {
            let _ = writeln!(w, "kind = matrix_factorization");
            let _ = writeln!(w, "\n[objective.matfac]");
            let _ = writeln!(w, "rank = {rank}");
            match source {
                MatFacSource::Planted {
                    rows,
                    cols,
                    scale,
                    data_seed,
                } => {
                    let _ = writeln!(w, "rows = {rows}\ncols = {cols}");
                    let _ = writeln!(w, "source = planted\nscale = {scale}\ndata_seed = {data_seed}");
                }
                MatFacSource::File { rows, cols, path } => {
                    let _ = writeln!(w, "rows = {rows}\ncols = {cols}");
                    let _ = writeln!(w, "source = file\npath = {path}");
                }
            }
        }
        ObjectiveConfig::Quadratic {
            dim,
            margin,
            heterogeneity,
            matrix_seed,
        } => {
            let _ = writeln!(w, "kind = quadratic_saddle");
            let _ = writeln!(w, "\n[objective.quadratic]");
            let _ = writeln!(w, "dim = {dim}\nmargin = {margin}");
            let _ = writeln!(w, "heterogeneity = {heterogeneity}\nmatrix_seed = {matrix_seed}");
        }
    }

    let _ = writeln!(w, "\n[init]");
    match &cfg.init {
        InitConfig::AtPoint(point) => {
            let coords: Vec<String> = point.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(w, "kind = at_point\npoint = {}", coords.join(","));
        }
        InitConfig::RandomBox { lo, hi } => {
            let _ = writeln!(w, "kind = random_box\nlo = {lo}\nhi = {hi}");
        }
    }

    for v in &cfg.variants {
        let _ = writeln!(w, "\n[variant.{}]", v.name);
        if let Some(s) = v.scheme {
            let _ = writeln!(w, "scheme = {}", s.name());
        }
        if let Some(ell) = v.interval_ell {
            let _ = writeln!(w, "interval_ell = {ell}");
        }
        if let Some(b) = v.bit_width {
            let _ = writeln!(w, "bit_width = {b}");
        }
        if let Some(b) = v.log_base {
            let _ = writeln!(w, "log_base = {b}");
        }
        match &v.stepsize {
            StepsizeChoice::Schedule => {
                let _ = writeln!(w, "stepsize = schedule");
            }
            StepsizeChoice::Diminishing => {
                let _ = writeln!(w, "stepsize = diminishing");
            }
            StepsizeChoice::Constant { eps, eta } => {
                let _ = writeln!(w, "stepsize = constant\neps_const = {eps}");
                match eta {
                    EtaChoice::Grid => {
                        let _ = writeln!(w, "eta_const = grid");
                    }
                    EtaChoice::Value(v) => {
                        let _ = writeln!(w, "eta_const = {v}");
                    }
                }
            }
            StepsizeChoice::RandomHold { seed } => {
                let _ = writeln!(w, "stepsize = random_hold\nhold_seed = {seed}");
            }
        }
    }
    s
}
