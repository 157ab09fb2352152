use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use branchtree::codings::{roundtrip_failures, OrderedTree};
use branchtree::config::{KernelSpec, MechanismSpec, OffspringSpec, RunConfig};
use branchtree::csbp::CsbpKernel;
use branchtree::gw::{sample_generations, sample_tree_with_budget};
use branchtree::harness;
use branchtree::rng::stream_rng;
use branchtree::{Error, Result};

#[derive(Parser)]
#[command(name = "branchtree", version, about = "Galton-Watson trees, CSBP numerics and branching-walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous-state branching process numerics.
    Csbp {
        #[command(subcommand)]
        command: CsbpCommand,
    },
    /// Tree codings.
    Codings {
        #[command(subcommand)]
        command: CodingsCommand,
    },
    /// Galton-Watson sampling.
    Simulate {
        #[command(subcommand)]
        command: SimulateCommand,
    },
    /// Run one experiment and print its report.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum CsbpCommand {
    /// u_t(λ), v(t) and consistency defects.
    Eval {
        #[arg(long, default_value = "quadratic")]
        kind: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

#[derive(Subcommand)]
enum CodingsCommand {
    /// Check the coding bijections on a given tree or on random trees.
    Roundtrip {
        /// Child counts in lexicographic order, e.g. `2,0,1,0`.
        #[arg(long)]
        tree: Option<String>,
        /// Number of random geometric trees when no tree is given.
        #[arg(long, default_value_t = 1000)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Print sampled trees as child-count strings, or generation sizes.
    Gw {
        #[arg(long, default_value = "geometric")]
        offspring: String,
        #[arg(long, default_value_t = 1)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print `Y_0..Y_n` of a forest of this many trees instead.
        #[arg(long)]
        forest: Option<u64>,
        #[arg(long, default_value_t = 100)]
        levels: u64,
        #[arg(long, default_value_t = 10_000_000)]
        budget: usize,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// feller-height, ray-knight, extinction, holder, contour-gap,
    /// reduced-discrete, stable-marginals, poisson-tree, reduced-exact,
    /// snake-laplace, snake-exit, snake-1d
    name: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    offspring: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    /// Limit mechanism for snake-1d: `quadratic` or `stable:<gamma>`.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    p: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Csbp {
            command:
                CsbpCommand::Eval {
                    kind,
                    alpha,
                    beta,
                    c,
                    gamma,
                    t,
                    lambda,
                },
        } => {
            let spec = match kind.as_str() {
                "quadratic" => MechanismSpec::Quadratic { beta },
                "stable" => MechanismSpec::Stable { c, gamma },
                "custom" => MechanismSpec::Custom {
                    alpha,
                    beta,
                    atoms: vec![],
                    stable: None,
                },
                other => return Err(Error::Config {
                    field: "kind".into(),
                    message: format!("unknown mechanism kind `{other}`"),
                }),
            };
            let eval = CsbpKernel::new(spec.build()?).evaluate(t, lambda)?;
            println!("{}", serde_json::to_string_pretty(&eval)?);
            Ok(true)
        }
        Command::Codings {
            command: CodingsCommand::Roundtrip { tree, random, seed },
        } => {
            let trees: Vec<OrderedTree> = match tree {
                Some(s) => vec![s.parse()?],
                None => {
                    let d = OffspringSpec::Geometric.build()?;
                    let mut rng = stream_rng(seed, 0);
                    let mut out = Vec::with_capacity(random);
                    while out.len() < random {
                        // heavy-tailed sizes: skip the rare huge tree
                        match sample_tree_with_budget(&d, 1_000_000, &mut rng) {
                            Ok(t) => out.push(t),
                            Err(Error::NodeBudgetExceeded { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    out
                }
            };
            let mut failures = 0;
            for t in &trees {
                let bad = roundtrip_failures(t);
                if !bad.is_empty() {
                    failures += 1;
                    println!("FAIL {t}: {}", bad.join(", "));
                }
            }
            if trees.len() == 1 {
                let t = &trees[0];
                println!("height   {:?}", t.height().0);
                println!("contour  {:?}", t.contour().0);
                println!("walk     {:?}", t.lukasiewicz().0);
            }
            println!("{} trees, {failures} failures", trees.len());
            Ok(failures == 0)
        }
        Command::Simulate {
            command:
                SimulateCommand::Gw {
                    offspring,
                    trees,
                    seed,
                    forest,
                    levels,
                    budget,
                },
        } => {
            let d = offspring.parse::<OffspringSpec>()?.build()?;
            let mut rng = stream_rng(seed, 0);
            match forest {
                Some(p) => {
                    let sizes = sample_generations(&d, p, levels, &mut rng)?;
                    let line: Vec<String> = sizes.iter().map(u64::to_string).collect();
                    println!("{}", line.join(","));
                }
                None => {
                    for _ in 0..trees {
                        println!("{}", sample_tree_with_budget(&d, budget, &mut rng)?);
                    }
                }
            }
            Ok(true)
        }
        Command::Experiment(args) => {
            let config = experiment_config(args)?;
            let report = harness::run(&config)?;
            print!("{}", report.summary());
            if config.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(report.pass)
        }
    }
}

fn experiment_config(a: ExperimentArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let mut c = RunConfig::load(path)?;
            c.experiment = a.name.clone();
            c
        }
        None => {
            let seed = a.seed.ok_or_else(|| Error::Config {
                field: "seed".into(),
                message: "a seed is required (--seed or a config file)".into(),
            })?;
            RunConfig::new(a.name.clone(), seed)
        }
    };
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.workers.is_some() {
        c.workers = a.workers;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    if a.csv.is_some() {
        c.csv = a.csv;
    }
    if let Some(o) = a.offspring {
        c.offspring = o.parse()?;
    }
    if let Some(k) = a.kernel {
        c.kernel = match k.as_str() {
            "gaussian" => KernelSpec::Gaussian,
            "lattice" => KernelSpec::Lattice,
            other => {
                return Err(Error::Config {
                    field: "kernel".into(),
                    message: format!("unknown kernel `{other}`"),
                })
            }
        };
    }
    if let Some(psi) = a.psi {
        // the walk's offspring law fixes its limit mechanism
        c.offspring = match psi.as_str() {
            "quadratic" => OffspringSpec::Geometric,
            s => match s.strip_prefix("stable:") {
                Some(_) => s.parse()?,
                None => {
                    return Err(Error::Config {
                        field: "psi".into(),
                        message: format!("expected quadratic or stable:<gamma>, got `{s}`"),
                    })
                }
            },
        };
    }
    if let Some(r) = a.r {
        c.snake_exit.half_width = r;
    }
    if let Some(g) = a.g {
        c.snake_exit.g_lo = g;
        c.snake_exit.g_hi = g;
    }
    if let Some(x) = a.x {
        c.snake_exit.x = x;
    }
    if let Some(p) = a.p {
        c.snake_exit.p = p;
    }
    if let Some(r) = a.reps {
        c.snake_exit.reps = r;
    }
    c.validate()?;
    Ok(c)
}
