// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use latbound_bench::synth::random_state;
use latbound_bench::{run_scenario, BenchConfig};
use latbound_core::costmodel::{CostModel, CostModelConfig};
use latbound_core::model::LatencyBound;
use latbound_core::planner::{pre_dcon, render_plan, validate_plan, PlanKind, PlannerBudget};
use latbound_core::replication::{reliable_replica_count, HalfRounding, ReliabilityQuery};
use latbound_core::simnet::Topology;

#[derive(Parser)]
#[command(
    name = "latbound",
    about = "Latency-bounded replicated store simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its report files.
    Run {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Smallest replica count meeting a system failure target.
    SolveReplicas {
        #[arg(long)]
        pi: f64,
        #[arg(long)]
        pf: f64,
        #[arg(long)]
        floor: bool,
    },
    /// Print the plan chosen for a random store state.
    PlanDebug {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        kind: Option<Kind>,
        /// Bound in milliseconds; omit for an unbounded request.
        #[arg(long)]
        bound_ms: Option<f64>,
    },
    /// Rerun the scenario that produced a trace and compare the outputs.
    Replay { trace: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Write,
    Read,
}

fn run(scenario: &str, cfg: &BenchConfig, out: &Path) -> Result<()> {
    let report = run_scenario(scenario, cfg)?;
    report.write_dir(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    println!(
        "{scenario}: {} ops, {} oracle checks, {} violations -> {}",
        report.rows.len(),
        report.oracle_checks,
        report.violations.len(),
        out.display()
    );
    for a in report.aggregates.iter().filter(|a| a.kind != "all") {
        println!(
            "  {:<28} {:<5} n={:<6} p50={}us p99={}us values={} nulls={}",
            a.phase, a.kind, a.count, a.p50_us, a.p99_us, a.values, a.nulls
        );
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if !report.violations.is_empty() {
        bail!("{} oracle violations", report.violations.len());
    }
    Ok(())
}

fn replay(trace: &Path) -> Result<()> {
    let dir = trace.parent().unwrap_or(Path::new("."));
    let meta: toml::Table = toml::from_str(
        &std::fs::read_to_string(dir.join("run.toml")).context("reading run.toml")?,
    )?;
    let scenario = meta
        .get("scenario")
        .and_then(|v| v.as_str())
        .context("run.toml lacks scenario")?;
    let cfg = BenchConfig::load(&dir.join("config.toml"))?;
    let report = run_scenario(scenario, &cfg)?;
    let old_trace = std::fs::read(trace)?;
    let old_ops = std::fs::read(dir.join("ops.csv"))?;
    let trace_ok = old_trace == report.trace_tsv.as_bytes();
    let ops_ok = old_ops == report.ops_csv().as_bytes();
    println!(
        "trace.tsv {}",
        if trace_ok { "identical" } else { "DIFFERS" }
    );
    println!("ops.csv {}", if ops_ok { "identical" } else { "DIFFERS" });
    if !(trace_ok && ops_ok) {
        bail!("replay diverged");
    }
    Ok(())
}

fn plan_debug(seed: u64, kind: Option<Kind>, bound_ms: Option<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = random_state(&mut rng, 20, false);
    if let Some(k) = kind {
        s.kind = match k {
            Kind::Write => PlanKind::Write,
            Kind::Read => PlanKind::Read,
        };
        s.conds.a = s.kind == PlanKind::Write;
        s.conds.b = s.kind == PlanKind::Read;
    }
    s.bound = match bound_ms {
        Some(ms) => LatencyBound::Finite(Duration::from_secs_f64(ms.max(0.0) / 1e3)),
        None => LatencyBound::Infinite,
    };
    let model = CostModel::new(CostModelConfig::for_topology(&Topology::two_dc()));
    let (plan, est) = pre_dcon(&PlannerBudget { t_r: s.bound }, &s.input(&model));
    println!("kind {:?} bound {}", s.kind, s.bound);
    println!("conditions {:?}", s.conds);
    println!("summary {:?}", s.summary);
    println!("estimate {est:?}");
    println!("legal {}", validate_plan(&plan, &s.conds));
    print!("{}", render_plan(&plan, &model, s.bound));
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            scenario,
            config,
            seed,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => BenchConfig::load(&p)?,
                None => BenchConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run(&scenario, &cfg, &out)
        }
        Cmd::SolveReplicas { pi, pf, floor } => {
            let r = reliable_replica_count(ReliabilityQuery {
                p_i: pi,
                p_f: pf,
                rounding: if floor {
                    HalfRounding::Floor
                } else {
                    HalfRounding::Ceil
                },
            })?;
            println!("{r}");
            Ok(())
        }
        Cmd::PlanDebug {
            seed,
            kind,
            bound_ms,
        } => {
            plan_debug(seed, kind, bound_ms);
            Ok(())
        }
        Cmd::Replay { trace } => replay(&trace),
    }
}
