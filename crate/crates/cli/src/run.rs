//! Sweep orchestration, persistence and report emission for `nlw run`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nlw_core::analysis::{fit_decay, scattering_report, theorem_compare, FitRegion};
use nlw_core::energies::{energy_report, ApexRequest, ReportRequest};
use nlw_core::snapshot::{load_trajectory, write_trajectory};
use nlw_core::solver::{simulate, Trajectory, Variant as ModelVariant};

use crate::config::{Diagnostic, ExperimentConfig, RunPoint};

const FINGERPRINT: &str = "point.txt";
const STEM: &str = "trajectory";

/// What happened at one sweep point.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub index: usize,
    pub resumed: bool,
    pub lines: Vec<String>,
    /// Diagnostics that ran but did not produce a usable result.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub points: Vec<PointOutcome>,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.points.iter().any(|p| !p.failures.is_empty())
    }
}

/// Cone apexes: the configured grid followed by `random` seeded draws.
pub fn apexes(cfg: &ExperimentConfig, r_max: f64) -> Vec<(f64, f64)> {
    let mut out = cfg.apex_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_end = cfg.run.t_end;
    for _ in 0..cfg.apexes.random {
        let t0 = t_end * (1.0 - rng.gen::<f64>());
        let r0 = rng.gen::<f64>() * (r_max - t0);
        out.push((t0, r0));
    }
    out
}

fn obtain_trajectory(cfg: &ExperimentConfig, point: &RunPoint, dir: &Path) -> Result<(Trajectory, bool)> {
    let fingerprint = point.fingerprint(cfg);
    let stamp = dir.join(FINGERPRINT);
    let manifest = dir.join(format!("{STEM}.manifest"));
    if manifest.exists() && fs::read_to_string(&stamp).ok().as_deref() == Some(fingerprint.as_str()) {
        let tr = load_trajectory(&manifest, point.params, point.model, point.data)
            .with_context(|| format!("reloading {}", manifest.display()))?;
        return Ok((tr, true));
    }
    let _ = fs::remove_file(&stamp);
    let tr = simulate(
        &point.data,
        cfg.run.t_end,
        cfg.run.cadence,
        &point.model,
        &point.params,
        &point.grid,
    )?;
    write_trajectory(dir, STEM, &tr)?;
    fs::write(&stamp, fingerprint)?;
    Ok((tr, false))
}

fn run_point(cfg: &ExperimentConfig, point: &RunPoint, out: &Path) -> Result<PointOutcome> {
    let dir = out.join(point.dir_name());
    fs::create_dir_all(&dir)?;
    let (tr, resumed) = obtain_trajectory(cfg, point, &dir)?;
    let mut lines = vec![format!(
        "p = {}, gamma0 = {}, amplitude = {}, n = {}, snapshots = {}{}",
        point.params.p(),
        point.params.gamma0(),
        point.amplitude,
        point.grid.n,
        tr.snapshots.len(),
        match tr.truncated_at {
            Some(t) => format!(", truncated at t = {t}"),
            None => String::new(),
        }
    )];
    let mut failures = Vec::new();
    let full_space = point.model.variant == ModelVariant::FullSpace;

    for diag in &cfg.run.diagnostics {
        match diag {
            Diagnostic::Energy => {
                let gamma = point.params.gamma0() - point.params.epsilon();
                let req = ReportRequest {
                    apexes: apexes(cfg, point.grid.r_max)
                        .into_iter()
                        .map(|(t0, r0)| ApexRequest { t0, r0, gamma })
                        .collect(),
                    outgoing_u: Vec::new(),
                    hyperboloid_extent: full_space.then_some(tr.t_end()),
                    cone_quadrature: None,
                };
                match energy_report(&tr, &req) {
                    Ok(rep) => {
                        rep.write_csv(BufWriter::new(File::create(dir.join("energy.csv"))?))?;
                        let last = rep.rows.last().map(|r| r.energy).unwrap_or(0.0);
                        lines.push(format!(
                            "energy: E = {last:.10e}, E0 weighted = {:.10e}",
                            rep.weighted_k0
                        ));
                    }
                    Err(e) => failures.push(format!("energy: {e}")),
                }
            }
            Diagnostic::Decay => {
                let window = cfg.fit_window().expect("validated");
                match fit_decay(&tr, &window) {
                    Ok(fit) => {
                        let mut w = csv::Writer::from_path(dir.join("decay.csv"))?;
                        w.write_record(["a", "b", "log_c", "rms", "samples", "v_decades", "reliable"])?;
                        w.write_record([
                            format!("{:e}", fit.a),
                            format!("{:e}", fit.b),
                            format!("{:e}", fit.log_c),
                            format!("{:e}", fit.rms),
                            fit.samples.to_string(),
                            format!("{:e}", fit.v_decades),
                            fit.reliable.to_string(),
                        ])?;
                        w.flush()?;
                        match theorem_compare(&fit, &point.params, FitRegion::Interior) {
                            Ok((da, db)) => lines.push(format!(
                                "decay: a = {:.4}, b = {:.4}, rms = {:.3}, deviation from theory ({da:+.4}, {db:+.4})",
                                fit.a, fit.b, fit.rms
                            )),
                            Err(e) => failures.push(format!("decay: {e}")),
                        }
                    }
                    Err(e) => failures.push(format!("decay: {e}")),
                }
            }
            Diagnostic::Scattering => {
                let rep = scattering_report(Some(&tr));
                let mut w = csv::Writer::from_path(dir.join("scattering.csv"))?;
                w.write_record(["p_star", "mixed_norm_partial", "late_growth", "converged"])?;
                w.write_record([
                    format!("{:e}", rep.p_star),
                    format!("{:e}", rep.mixed_norm_partial.unwrap_or(0.0)),
                    format!("{:e}", rep.late_growth.unwrap_or(0.0)),
                    rep.converged.to_string(),
                ])?;
                w.flush()?;
                lines.push(format!(
                    "scattering: p* = {:.8}, mixed norm = {:.6e}",
                    rep.p_star,
                    rep.mixed_norm_partial.unwrap_or(0.0)
                ));
            }
        }
    }
    Ok(PointOutcome {
        index: point.index,
        resumed,
        lines,
        failures,
    })
}

/// Runs every point, each writing into its own directory, then merges the
/// summary in point order.
pub fn run_experiment(cfg: &ExperimentConfig, points: &[RunPoint], out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let outcomes = points
        .par_iter()
        .map(|p| run_point(cfg, p, out).with_context(|| format!("point {}", p.index)))
        .collect::<Result<Vec<_>>>()?;

    let mut text = String::new();
    writeln!(text, "nlw run summary")?;
    writeln!(text, "seed = {}", cfg.seed)?;
    writeln!(text, "points = {}", outcomes.len())?;
    for o in &outcomes {
        writeln!(text, "[point {:03}]", o.index)?;
        for l in &o.lines {
            writeln!(text, "  {l}")?;
        }
        for f in &o.failures {
            writeln!(text, "  FAILED {f}")?;
        }
    }
    fs::write(out.join("summary.txt"), text)?;
    Ok(RunSummary {
        out: out.to_path_buf(),
        points: outcomes,
    })
}
