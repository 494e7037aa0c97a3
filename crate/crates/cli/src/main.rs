use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use nlw_core::snapshot::{read_all, read_manifest, SnapshotRecord};
use nlw_core::verify::{run_all, run_suite, CriterionResult, Suite, VerifyOptions};

mod config;
mod run;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "nlw",
    version,
    about = "Radial defocusing wave simulations and weighted-energy diagnostics"
)]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Uniform refinement multiplier for every grid.
    #[arg(long, global = true, default_value_t = 1)]
    grid_scale: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve every point of a configured sweep and write reports.
    Run {
        config: PathBuf,
        /// Validate and list the sweep points without evolving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run an acceptance suite, or `all`.
    Verify { suite: String },
    /// Print the records of a snapshot file or manifest.
    Inspect {
        snapshot: PathBuf,
        /// Dump one record's node values as CSV.
        #[arg(long)]
        record: Option<usize>,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.grid_scale == 0 {
        eprintln!("--grid-scale must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Run { ref config, dry_run } => cmd_run(&cli, config, dry_run),
        Command::Verify { ref suite } => cmd_verify(&cli, suite),
        Command::Inspect { ref snapshot, record } => match cmd_inspect(snapshot, record) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_FAILURE)
            }
        },
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn cmd_run(cli: &Cli, path: &Path, dry_run: bool) -> ExitCode {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let points = match cfg.validate(cli.grid_scale) {
        Ok(p) => p,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if dry_run {
        for p in &points {
            println!(
                "{}: p = {}, gamma0 = {}, amplitude = {}, n = {}",
                p.dir_name(),
                p.params.p(),
                p.params.gamma0(),
                p.amplitude,
                p.grid.n
            );
        }
        return ExitCode::SUCCESS;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("nlw-out"));
    let pool = match thread_pool(cli.jobs.or(cfg.jobs)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    match pool.install(|| run::run_experiment(&cfg, &points, &out)) {
        Ok(summary) => {
            let resumed = summary.points.iter().filter(|p| p.resumed).count();
            println!(
                "{} point(s) written to {} ({resumed} reused persisted trajectories)",
                summary.points.len(),
                summary.out.display()
            );
            for p in &summary.points {
                for f in &p.failures {
                    eprintln!("point {:03}: {f}", p.index);
                }
            }
            if summary.failed() {
                ExitCode::from(EXIT_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn write_verify_csv(dir: &Path, name: &str, results: &[CriterionResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("verify_{name}.csv")))?;
    w.write_record(["criterion", "name", "status", "measured", "threshold", "seconds"])?;
    for r in results {
        w.write_record([
            r.id.to_string(),
            r.name.to_string(),
            if r.passed { "PASS" } else { "FAIL" }.to_string(),
            r.measured.clone(),
            r.threshold.clone(),
            format!("{:.3}", r.elapsed.as_secs_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(cli: &Cli, suite: &str) -> ExitCode {
    let opts = VerifyOptions {
        grid_scale: cli.grid_scale,
        ..Default::default()
    };
    let parsed = if suite == "all" {
        None
    } else {
        match suite.parse::<Suite>() {
            Ok(s) => Some(s),
            Err(e) => {
                let names: Vec<_> = Suite::ALL.iter().map(Suite::name).collect();
                eprintln!("{e}; expected one of: all, {}", names.join(", "));
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    };
    let pool = match thread_pool(cli.jobs) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let results = pool.install(|| match parsed {
        Some(s) => run_suite(s, &opts),
        None => run_all(&opts),
    });
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{suite}: {} passed, {failed} failed", results.len() - failed);
    if let Some(dir) = &cli.out {
        if let Err(e) = write_verify_csv(dir, suite, &results) {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn max_abs_phi(rec: &SnapshotRecord) -> f64 {
    let dr = rec.header.dr;
    rec.psi
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, v)| (v / (i as f64 * dr)).abs())
        .fold(0.0, f64::max)
}

fn cmd_inspect(path: &Path, record: Option<usize>) -> Result<()> {
    let data = if path.extension().is_some_and(|e| e == "manifest") {
        read_manifest(path)?.0
    } else {
        path.to_path_buf()
    };
    let records = read_all(&data).with_context(|| format!("reading {}", data.display()))?;
    if let Some(k) = record {
        let Some(rec) = records.get(k) else {
            bail!("record {k} out of range, file holds {}", records.len());
        };
        println!("r,psi,pi");
        for (i, (psi, pi)) in rec.psi.iter().zip(&rec.pi).enumerate() {
            println!("{:e},{psi:e},{pi:e}", i as f64 * rec.header.dr);
        }
        return Ok(());
    }
    println!("{}: {} record(s)", data.display(), records.len());
    if let Some(first) = records.first() {
        let h = first.header;
        println!(
            "format v{}, n = {}, dr = {}, dt = {}, p = {}, gamma0 = {}{}",
            h.version,
            h.n,
            h.dr,
            h.dt,
            h.p,
            h.gamma0,
            if h.image_cone { ", image cone" } else { "" }
        );
    }
    println!("index,t,max_abs_phi");
    for (k, rec) in records.iter().enumerate() {
        println!("{k},{:e},{:e}", rec.header.t, max_abs_phi(rec));
    }
    Ok(())
}
