//! `fplap`: batch front end for the solver and the verification harness.

mod checks;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fplap_core::operator::loglog_slope;
use fplap_core::{benchmark_apply, io, solve, Field, OperatorApplyPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{RunConfig, CHECKS};

#[derive(Parser)]
#[command(name = "fplap", version, about = "Nonlocal parabolic p-Laplacian solver and estimate checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized checks; overrides `[verify] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Use refinement levels 1..=k; overrides `[verify] refine`.
    #[arg(long)]
    refine: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and persist the trajectory.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Run verification checks; with no names, runs `[verify] checks`.
    Verify {
        checks: Vec<String>,
        /// Load level 1 from a trajectory directory written by `solve`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Time the tiled operator against the naive double loop.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

struct Loaded {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    levels: Vec<usize>,
}

fn load(common: &Common) -> anyhow::Result<Loaded> {
    let cfg = RunConfig::load(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = common.seed.unwrap_or(cfg.verify.seed);
    let levels = match common.refine {
        Some(0) => bail!("--refine: levels must be >= 1"),
        Some(k) => (1..=k).collect(),
        None => cfg.verify.refine.clone(),
    };
    Ok(Loaded { cfg, out, seed, levels })
}

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Every numeric leaf of `v` as a `key,value` row with a dotted path key.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&join(k), x, rows)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&join(&i.to_string()), x, rows)),
        Value::Number(n) => rows.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => rows.push((prefix.to_string(), (*b as u8).to_string())),
        Value::Null => rows.push((prefix.to_string(), "nan".into())),
        Value::String(_) => {}
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(common: &Common) -> anyhow::Result<bool> {
    let l = load(common)?;
    let spec = l.cfg.problem(1)?;
    let traj = solve(&spec, &l.cfg.step_config())?;
    io::write_mesh(&l.out.join("mesh.csv"), &spec.mesh)?;
    let files = io::write_trajectory(&l.out.join("trajectory"), &traj)?;
    write_json(
        &l.out.join("diagnostics.json"),
        &json!({
            "nodes": spec.mesh.len(),
            "interior_nodes": spec.mesh.interior_count(),
            "steps": traj.stats,
        }),
    )?;
    println!("solved {} steps on {} nodes; wrote {} trajectory files to {}", traj.stats.len(), spec.mesh.len(), files.len(), l.out.display());
    Ok(true)
}

fn cmd_verify(names: &[String], trajectory: Option<&Path>, common: &Common) -> anyhow::Result<bool> {
    let l = load(common)?;
    let names: Vec<String> = if names.is_empty() { l.cfg.verify.checks.clone() } else { names.to_vec() };
    if names.is_empty() {
        bail!("no checks requested; available: {}", CHECKS.join(", "));
    }
    for n in &names {
        if !CHECKS.contains(&n.as_str()) {
            bail!("unknown check `{n}`; available: {}", CHECKS.join(", "));
        }
    }
    let mut ctx = checks::Runner::new(l.cfg.clone(), l.seed, l.levels.clone(), trajectory)?;
    let mut summary = Vec::new();
    let mut all = true;
    for name in &names {
        let o = ctx.run(name).with_context(|| format!("check `{name}`"))?;
        let report = json!({ "check": name, "seed": l.seed, "levels": l.levels, "pass": o.pass, "report": o.payload });
        write_json(&l.out.join(format!("{name}.json")), &report)?;
        let mut rows = Vec::new();
        flatten("", &o.payload, &mut rows);
        write_rows(&l.out.join(format!("{name}.csv")), &["key", "value"], rows.into_iter().map(|(k, v)| vec![k, v]))?;
        println!("{} {name}", if o.pass { "PASS" } else { "FAIL" });
        summary.push(vec![name.clone(), o.pass.to_string()]);
        all &= o.pass;
    }
    write_rows(&l.out.join("summary.csv"), &["check", "pass"], summary)?;
    Ok(all)
}

fn cmd_bench(common: &Common) -> anyhow::Result<bool> {
    let l = load(common)?;
    let b = &l.cfg.bench;
    if b.h.is_empty() {
        bail!("bench.h: the size sweep is empty");
    }
    if b.reps == 0 {
        bail!("bench.reps: must be at least 1");
    }
    let kernel = l.cfg.kernel_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(l.seed);
    let mut reports = Vec::new();
    for &h in &b.h {
        let mesh = l.cfg.mesh_with(h)?;
        let plan = OperatorApplyPlan::new(&mesh, &kernel, 0.0);
        let u = Field::new((0..mesh.len()).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.0);
        let r = benchmark_apply(&plan, &mesh, &kernel, &u, b.reps)?;
        println!("N = {:>6}: naive {:.3e}s tiled {:.3e}s speedup {:.1}x agree {}", r.nodes, r.naive_secs, r.tiled_secs, r.speedup, r.agree);
        reports.push(r);
    }
    let sizes: Vec<f64> = reports.iter().map(|r| r.nodes as f64).collect();
    let times: Vec<f64> = reports.iter().map(|r| r.tiled_secs).collect();
    let slope = if reports.len() >= 2 { loglog_slope(&sizes, &times).ok() } else { None };
    if let Some(s) = slope {
        println!("log-log slope {s:.3}");
    }
    let agree = reports.iter().all(|r| r.agree);
    write_json(&l.out.join("bench.json"), &json!({ "agree": agree, "slope": slope, "sizes": reports }))?;
    write_rows(
        &l.out.join("bench.csv"),
        &["nodes", "naive_secs", "tiled_serial_secs", "tiled_secs", "speedup", "max_rel_diff", "agree"],
        reports.iter().map(|r| {
            vec![
                r.nodes.to_string(),
                r.naive_secs.to_string(),
                r.tiled_serial_secs.to_string(),
                r.tiled_secs.to_string(),
                r.speedup.to_string(),
                r.max_rel_diff.to_string(),
                r.agree.to_string(),
            ]
        }),
    )?;
    Ok(agree)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { common } => cmd_solve(common),
        Command::Verify { checks, trajectory, common } => cmd_verify(checks, trajectory.as_deref(), common),
        Command::Bench { common } => cmd_bench(common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
