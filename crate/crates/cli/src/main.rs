use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use omnisync::codebook::{
    build_omni_codebook, dft_sweep_codebook, pattern_csv, random_phase_codebook, standard_basis_codebook,
    verify_codebook, zc_codebook, AngleGrid, CodebookReport, SlotSchedule, EXPORT_GRID, VERIFY_GRID,
};
use omnisync::detector::threshold_from_fa;
use omnisync::montecarlo::{analytic, analytic_csv, sweep, Approach, ExperimentConfig, Quantity};
use omnisync::{analysis::fa_closed_form, Codebook};

const COVERAGE_GRID: usize = 256;
const SEED_ENV: &str = "OMNISYNC_SEED";

#[derive(Parser)]
#[command(
    name = "omnisync",
    version,
    about = "Omnidirectional codebooks and GLRT synchronization sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a codebook and write it as JSON.
    Codebook(CodebookArgs),
    /// Export per-slot beam patterns of a codebook as CSV.
    Pattern {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = EXPORT_GRID)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a codebook against the omnidirectional design conditions. Exits 1 on failure.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Threshold for a target false-alarm probability, printed as JSON.
    Threshold {
        #[arg(long)]
        pfa: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        l: usize,
        #[arg(long, default_value_t = 2)]
        nr: usize,
        #[arg(long, default_value_t = 2)]
        nt: usize,
    },
    /// Closed-form false-alarm and missed-detection values for one approach.
    Analytic {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, value_parser = parse_quantity)]
        quantity: Quantity,
        /// Defaults to the first approach of the config.
        #[arg(long, value_parser = parse_approach)]
        approach: Option<Approach>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep; writes the results CSV and a run manifest.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's worker count; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        /// Defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Validate the config and write only the manifest.
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in config: paper-sec6 or desk.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    OmniGolay,
    QuasiOmniZc,
    DftSweep,
    RandomPhase,
    /// Standard-basis precoders, one per slot (`K = M_t`).
    Basis,
}

#[derive(Args)]
struct CodebookArgs {
    #[arg(long, default_value_t = 64)]
    mt: usize,
    /// Transmit streams; omni-golay and random-phase only (default 2 and 1).
    #[arg(long)]
    nt: Option<usize>,
    /// Receive array; omni-golay only (default 16).
    #[arg(long)]
    mr: Option<usize>,
    /// Receive streams; omni-golay only (default 2).
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value_t = DesignArg::OmniGolay)]
    design: DesignArg,
    /// Seed of the random-phase design.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Root of the Zadoff-Chu design.
    #[arg(long, default_value_t = 1)]
    zc_root: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_quantity(s: &str) -> std::result::Result<Quantity, String> {
    s.parse().map_err(|e: omnisync::Error| e.to_string())
}

fn parse_approach(s: &str) -> std::result::Result<Approach, String> {
    s.parse().map_err(|e: omnisync::Error| e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Codebook(args) => cmd_codebook(args),
        Command::Pattern { input, grid, out } => {
            let cb = read_codebook(&input)?;
            let csv = pattern_csv(&cb, &AngleGrid::new(grid)?);
            write(&out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { input } => {
            let report = check(&read_codebook(&input)?)?;
            for c in &report.checks {
                println!(
                    "{:<26} {:>12.3e} <= {:<8.1e} {}",
                    c.name,
                    c.deviation,
                    c.tolerance,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
            println!("{}", if report.pass() { "pass" } else { "fail" });
            Ok(if report.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Threshold { pfa, k, l, nr, nt } => {
            let gamma = threshold_from_fa(pfa, k, l, nr, nt)?;
            let doc = serde_json::json!({
                "p_fa": pfa,
                "k": k,
                "l": l,
                "nr": nr,
                "nt": nt,
                "gamma": gamma,
                "p_fa_at_gamma": fa_closed_form(gamma, k, l, nr, nt),
            });
            println!("{doc}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Analytic {
            source,
            quantity,
            approach,
            out,
        } => {
            let cfg = load_config(&source)?;
            let approach = approach.unwrap_or(cfg.approaches[0]);
            let csv = analytic_csv(&analytic(&cfg, approach, quantity)?);
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            source,
            out,
            workers,
            manifest,
            dry_run,
        } => cmd_simulate(&source, &out, workers, manifest, dry_run),
    }
}

fn cmd_codebook(a: CodebookArgs) -> Result<ExitCode> {
    let single_rx = || -> Result<()> {
        if a.mr.is_some() || a.nr.is_some() {
            bail!("--mr/--nr apply to omni-golay only; this design has one receive antenna");
        }
        Ok(())
    };
    let cb: Codebook = match a.design {
        DesignArg::OmniGolay => {
            let (nt, mr, nr) = (a.nt.unwrap_or(2), a.mr.unwrap_or(16), a.nr.unwrap_or(2));
            let st = SlotSchedule::cyclic(a.k, a.mt, nt)?;
            let sr = SlotSchedule::cyclic(a.k, mr, nr)?;
            build_omni_codebook(a.mt, nt, mr, nr, a.k, &st, &sr)?
        }
        DesignArg::RandomPhase => {
            single_rx()?;
            random_phase_codebook(a.mt, a.nt.unwrap_or(1), a.k, a.seed)?
        }
        single => {
            single_rx()?;
            if a.nt.is_some_and(|n| n != 1) {
                bail!("this design has a single transmit stream, got --nt {}", a.nt.unwrap());
            }
            match single {
                DesignArg::QuasiOmniZc => zc_codebook(a.mt, a.zc_root, a.k)?,
                DesignArg::DftSweep => dft_sweep_codebook(a.mt, a.k)?,
                _ => {
                    if a.k != a.mt {
                        bail!("basis design has K = M_t = {} slots, got --k {}", a.mt, a.k);
                    }
                    standard_basis_codebook(a.mt)?
                }
            }
        }
    };
    let report = check(&cb)?;
    write(&a.out, &cb.to_json())?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    println!(
        "{} mt={} nt={} mr={} nr={} k={}: {}",
        cb.design,
        cb.mt,
        cb.nt,
        cb.mr,
        cb.nr,
        cb.k,
        if failed.is_empty() {
            "verify pass".to_string()
        } else {
            format!("verify fail ({})", failed.join(", "))
        }
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(
    source: &ConfigSource,
    out: &Path,
    workers: Option<usize>,
    manifest: Option<PathBuf>,
    dry_run: bool,
) -> Result<ExitCode> {
    let mut cfg = load_config(source)?;
    let seed_source = match std::env::var(SEED_ENV) {
        Ok(v) => {
            cfg.master_seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not a u64"))?;
            SEED_ENV
        }
        Err(_) => "config",
    };
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.check()?;
    let manifest_path = manifest.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    if dry_run {
        let doc = serde_json::json!({
            "tool": "omnisync",
            "version": env!("CARGO_PKG_VERSION"),
            "dry_run": true,
            "master_seed_source": seed_source,
            "config": serde_json::to_value(&cfg)?,
        });
        write(&manifest_path, &serde_json::to_string_pretty(&doc)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let result = sweep(&cfg)?;
    let doc = serde_json::json!({
        "tool": "omnisync",
        "version": env!("CARGO_PKG_VERSION"),
        "results": out.display().to_string(),
        "master_seed_source": seed_source,
        "rows": result.rows.len(),
        "skipped_drops": result.skipped_drops,
        "config": serde_json::to_value(&cfg)?,
    });
    write(out, &result.csv())?;
    if let Err(e) = write(&manifest_path, &serde_json::to_string_pretty(&doc)?) {
        let _ = fs::remove_file(out);
        return Err(e);
    }
    eprintln!(
        "{} rows, {} skipped drops, seed {} ({seed_source}) -> {}",
        result.rows.len(),
        result.skipped_drops,
        cfg.master_seed,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_config(source: &ConfigSource) -> Result<ExperimentConfig> {
    if let Some(name) = &source.preset {
        return ExperimentConfig::preset(name).with_context(|| format!("unknown preset `{name}`"));
    }
    let path = source.config.as_ref().expect("clap requires one source");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?)
}

fn read_codebook(path: &Path) -> Result<Codebook> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Codebook::from_json(&text).with_context(|| format!("in {}", path.display()))?)
}

fn check(cb: &Codebook) -> Result<CodebookReport> {
    Ok(verify_codebook(cb, VERIFY_GRID, COVERAGE_GRID)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
