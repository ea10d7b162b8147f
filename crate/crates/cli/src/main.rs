use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hiersim::config::Scaling;
use hiersim::experiment::{run_experiment, sweep, SweepAxis};
use hiersim::workloads::{self, Shape, KERNELS};
use hiersim::{MetricsReport, SimConfig, SimError};

#[derive(Parser)]
#[command(
    name = "hiersim",
    version,
    about = "Discrete-event simulator of a hierarchical task runtime on a manycore chip"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration and write its reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the event trace to trace.log.
        #[arg(long)]
        trace: bool,
        /// Write the dependency tree of the top scheduler to deps.dot.
        #[arg(long)]
        dump_deps: bool,
    },
    /// Run the cross product of the given axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker counts, e.g. `1,2,4,8`.
        #[arg(id = "sweep_workers", long = "sweep-workers", value_delimiter = ',')]
        workers: Vec<usize>,
        /// Scheduler shapes separated by `;`, e.g. `1;1,2;1,2,4`.
        #[arg(id = "sweep_levels", long = "sweep-levels")]
        levels: Option<String>,
        /// Bias values, e.g. `0,20,100`.
        #[arg(id = "sweep_bias", long = "sweep-bias", value_delimiter = ',')]
        bias: Vec<u32>,
        /// Seeds, e.g. `1,2,3`.
        #[arg(id = "sweep_seeds", long = "sweep-seeds", value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Kernel parameter values, e.g. `task_cycles=1000,2000`. Repeatable.
        #[arg(id = "sweep_params", long = "sweep-param")]
        params: Vec<String>,
        /// Also run a one-worker reference per point and report speedup.
        #[arg(long)]
        speedup: bool,
    },
    /// List kernels with their parameters and defaults.
    ListKernels,
    /// Parse a config, check it and build its kernel without running.
    ValidateConfig { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    kernel: Option<String>,
    /// Kernel parameter `name=value`. Repeatable.
    #[arg(long = "param", short)]
    params: Vec<String>,
    /// Scheduler counts per level, top first, e.g. `1,4`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, short)]
    workers: Option<usize>,
    #[arg(long)]
    bias: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scaling: Option<ScalingArg>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Strong,
    Weak,
}

fn parse_param(s: &str) -> anyhow::Result<(String, &str)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected name=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim()))
}

fn load(path: &Path) -> Result<SimConfig, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    SimConfig::from_toml(&text)
}

impl Common {
    fn config(&self) -> anyhow::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => load(p)?,
            None => SimConfig::default(),
        };
        if let Some(k) = &self.kernel {
            if *k != cfg.kernel.name {
                cfg.kernel.params.clear();
            }
            cfg.kernel.name = k.clone();
        }
        for p in &self.params {
            let (k, v) = parse_param(p)?;
            let v = v.parse().with_context(|| format!("parameter {k}"))?;
            cfg.kernel.params.insert(k, v);
        }
        if let Some(l) = &self.levels {
            cfg.topology.levels = l.clone();
        }
        if let Some(w) = self.workers {
            cfg.topology.workers = w;
        }
        if let Some(b) = self.bias {
            cfg.bias = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.scaling {
            cfg.scaling = match s {
                ScalingArg::Strong => Scaling::Strong,
                ScalingArg::Weak => Scaling::Weak,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summary(label: &str, r: &MetricsReport) {
    let s = r.schedulers();
    print!(
        "{label}: {} tasks in {} cycles, balance {:.1}, scheduler busy {:.1}%, worker idle {:.1}%",
        r.tasks,
        r.makespan,
        r.balance,
        100.0 * s.busy_fraction(),
        100.0 * r.workers().idle_fraction(),
    );
    match r.speedup {
        Some(x) => println!(", speedup {x:.2}"),
        None => println!(),
    }
}

fn axes(
    workers: Vec<usize>,
    levels: Option<String>,
    bias: Vec<u32>,
    seeds: Vec<u64>,
    params: Vec<String>,
) -> anyhow::Result<Vec<SweepAxis>> {
    let mut out = Vec::new();
    if let Some(l) = levels {
        let shapes = l
            .split(';')
            .map(|s| {
                s.split(',')
                    .map(|x| x.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("levels `{l}`"))?;
        out.push(SweepAxis::Levels(shapes));
    }
    if !workers.is_empty() {
        out.push(SweepAxis::Workers(workers));
    }
    if !bias.is_empty() {
        out.push(SweepAxis::Bias(bias));
    }
    if !seeds.is_empty() {
        out.push(SweepAxis::Seed(seeds));
    }
    for p in params {
        let (k, vs) = parse_param(&p)?;
        let vs = vs
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<Result<Vec<i64>, _>>()
            .with_context(|| format!("parameter {k}"))?;
        out.push(SweepAxis::Param(k, vs));
    }
    if out.is_empty() {
        bail!("a sweep needs at least one --sweep-* axis");
    }
    Ok(out)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run {
            common,
            trace,
            dump_deps,
        } => {
            let mut cfg = common.config()?;
            cfg.debug.trace |= trace;
            cfg.debug.dump_deps |= dump_deps;
            let e = run_experiment(&cfg)?;
            e.write(&common.out)
                .with_context(|| format!("writing {}", common.out.display()))?;
            summary(&cfg.kernel.name, &e.report);
            println!("reports in {}", common.out.display());
        }
        Cmd::Sweep {
            common,
            workers,
            levels,
            bias,
            seeds,
            params,
            speedup,
        } => {
            let cfg = common.config()?;
            let r = sweep(&cfg, &axes(workers, levels, bias, seeds, params)?, speedup);
            r.write(&common.out)
                .with_context(|| format!("writing {}", common.out.display()))?;
            for p in &r.points {
                summary(&p.label, &p.report);
            }
            println!("reports in {}", common.out.display());
            if let Some((label, err)) = r.failed {
                return Err(anyhow::Error::new(err).context(format!("sweep point {label}")));
            }
        }
        Cmd::ListKernels => {
            for k in KERNELS {
                println!("{:<24}{}", k.name, k.about);
                let ps: Vec<String> = k.defaults.iter().map(|(n, v)| format!("{n}={v}")).collect();
                println!("{:<24}{}", "", ps.join(" "));
            }
        }
        Cmd::ValidateConfig { path } => {
            let cfg = load(&path)?;
            let shape = Shape::of(&cfg.topology);
            let params = workloads::resolve(&cfg.kernel, cfg.scaling, shape)?;
            workloads::build(&cfg.kernel, cfg.scaling, shape)?;
            let ps: Vec<String> = params.iter().map(|(n, v)| format!("{n}={v}")).collect();
            println!(
                "ok: {} on {:?} with {} workers; {}",
                cfg.kernel.name,
                cfg.topology.levels,
                cfg.topology.workers,
                ps.join(" ")
            );
        }
    }
    Ok(())
}

/// 2 for configuration errors, 3 when the run deadlocked or stalled, 1 for
/// anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<SimError>()) {
        Some(SimError::Config(_)) => 2,
        Some(SimError::Deadlock { .. } | SimError::Stalled(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
