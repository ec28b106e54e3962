//! `dqopt` — run quantized decentralized-optimization experiments from a
//! config file and emit CSV traces plus a summary.

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use dqopt::batch::{run_batch, BatchError};
use dqopt::config::{load_config, ConfigError};

/// Default-output-directory environment variable, honored only when
/// `--out` is absent.
const OUT_ENV: &str = "DQOPT_OUT_DIR";

const USAGE: &str = "\
usage: dqopt --config PATH [options]

options:
  --config PATH          experiment config file (required)
  --out DIR              output directory (default ./out, or $DQOPT_OUT_DIR)
  --seed-override N      run only the single seed N
  --iters-override N     cap every run at N iterations
  --quiet                suppress per-run progress and the summary
  --help                 print this text

exit codes: 0 success, 1 runtime failure (e.g. divergence), 2 usage/config error
";

struct Cli {
    config: PathBuf,
    out: PathBuf,
    seed_override: Option<u64>,
    iters_override: Option<u64>,
    quiet: bool,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    let mut config: Option<PathBuf> = None;
    let mut out: Option<PathBuf> = None;
    let mut seed_override: Option<u64> = None;
    let mut iters_override: Option<u64> = None;
    let mut quiet = false;
    let mut seen_quiet = false;

    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut want = |slot_taken: bool, name: &str| -> Result<String, String> {
            if slot_taken {
                return Err(format!("conflicting duplicate flag {name}"));
            }
            it.next()
                .cloned()
                .ok_or_else(|| format!("{name} needs a value"))
        };
        match arg.as_str() {
            "--help" | "-h" => return Err(String::new()),
            "--config" => config = Some(PathBuf::from(want(config.is_some(), "--config")?)),
            "--out" => out = Some(PathBuf::from(want(out.is_some(), "--out")?)),
            "--seed-override" => {
                let v = want(seed_override.is_some(), "--seed-override")?;
                seed_override =
                    Some(v.parse().map_err(|_| format!("--seed-override: bad integer '{v}'"))?);
            }
            "--iters-override" => {
                let v = want(iters_override.is_some(), "--iters-override")?;
                let n: u64 = v
                    .parse()
                    .map_err(|_| format!("--iters-override: bad integer '{v}'"))?;
                if n == 0 {
                    return Err("--iters-override must be at least 1".into());
                }
                iters_override = Some(n);
            }
            "--quiet" => {
                if seen_quiet {
                    return Err("conflicting duplicate flag --quiet".into());
                }
                seen_quiet = true;
                quiet = true;
            }
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    let config = config.ok_or("--config is required")?;
    let out = out.unwrap_or_else(|| {
        env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    });
    Ok(Cli {
        config,
        out,
        seed_override,
        iters_override,
        quiet,
    })
}

fn real_main() -> Result<(), (u8, String)> {
    let args: Vec<String> = env::args().skip(1).collect();
    let cli = parse_args(&args).map_err(|msg| {
        if msg.is_empty() {
            (0, USAGE.to_string())
        } else {
            (2, format!("error: {msg}\n\n{USAGE}"))
        }
    })?;

    let mut cfg = load_config(&cli.config).map_err(|e| (2, format!("config error: {e}")))?;
    if let Some(seed) = cli.seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(cap) = cli.iters_override {
        cfg.n_iters = cfg.n_iters.min(cap);
    }

    let base_dir = cli
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));

    let quiet = cli.quiet;
    let report = run_batch(&cfg, &base_dir, Some(&cli.out), |outcome| {
        if !quiet {
            let last = outcome.record.final_row();
            println!(
                "variant={} seed={} final_F={:.6e} grad={:.3e} consensus={:.3e} class={}",
                outcome.variant,
                outcome.seed,
                last.f_bar,
                last.grad_norm,
                last.consensus_error_sq,
                outcome.final_class.name()
            );
        }
    })
    .map_err(|e| {
        let code = match &e {
            BatchError::Config(ConfigError::Io(_)) => 1,
            BatchError::Config(_) | BatchError::Schedule(_) | BatchError::Quantizer(_) => 2,
            _ => 1,
        };
        (code, format!("error: {e}"))
    })?;

    if !quiet {
        print!("{}", report.to_human());
        println!("\noutputs written to {}", cli.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err((0, text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err((code, text)) => {
            eprintln!("{text}");
            ExitCode::from(code)
        }
    }
}
