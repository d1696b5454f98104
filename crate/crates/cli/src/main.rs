use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use reach_synth::bench::{preset, PRESETS};
use reach_synth::certify::{
    check_exact_rules, default_horizon, probe_robustness, simulate_many, Certificate,
    PerturbationSpec,
};
use reach_synth::encode::{encode, Variant};
use reach_synth::geometry::rational::parse_scalar;
use reach_synth::io::{
    certificate_from_json, certificate_to_json, problem_from_json, problem_to_json,
};
use reach_synth::model::Problem;
use reach_synth::post::{build_table, OUT};
use reach_synth::render::{render_csv, render_svg, LabelMode, RenderSpec, Scene};
use reach_synth::solver::SolverConfig;
use reach_synth::synth::{
    fixed_point, init_partition, synthesize, RefinementStrategy, StrategyKind, SynthConfig, Verdict,
};

const EXIT_SAT: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_FAILED: u8 = 2;
const EXIT_UNSAT: u8 = 10;
const EXIT_UNKNOWN: u8 = 20;

#[derive(Parser)]
#[command(
    name = "reach-synth",
    version,
    about = "Reach-avoid controller synthesis for piecewise-affine systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem JSON file.
    problem: Option<PathBuf>,
    /// Use a built-in instance instead of a file.
    #[arg(long, conflicts_with = "problem")]
    preset: Option<String>,
    /// Override the induction depth.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the refinement loop.
    Synth {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long)]
        solver: Option<String>,
        #[arg(long, default_value = "must")]
        strategy: String,
        /// Disable the extra splitting of the coarsest cells.
        #[arg(long)]
        no_fair: bool,
        #[arg(long, default_value_t = 8)]
        max_iters: usize,
        #[arg(long, default_value_t = 20_000)]
        max_cells: usize,
        /// Seconds for the whole run.
        #[arg(long, default_value_t = 600)]
        wallclock: u64,
        /// Seconds per solver call.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
        #[arg(long, default_value_t = 2)]
        init_splits: usize,
        /// Directory for certificate.json, run.jsonl and verdict.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a certificate against the exact rules.
    Check {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Write one encoding of the initial partition as SMT-LIB.
    Encode {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long, default_value = "strong")]
        variant: String,
        #[arg(long, default_value_t = 2)]
        init_splits: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a certified controller, or probe perturbed systems.
    Simulate {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probe constant per-location offsets of this size instead.
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
    /// Draw the partition, Must and May as SVG plus a CSV table.
    Render {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
        axes: Vec<usize>,
        #[arg(long, default_value = "none")]
        labels: String,
        #[arg(long, default_value = "render.svg")]
        svg: PathBuf,
        #[arg(long, default_value = "render.csv")]
        csv: PathBuf,
    },
    /// Print a built-in instance as problem JSON.
    Export { name: String },
}

fn load_problem(args: &ProblemArgs) -> Result<Problem> {
    let mut problem = match (&args.problem, &args.preset) {
        (_, Some(name)) => preset(name)
            .with_context(|| format!("unknown preset {name}; known: {}", PRESETS.join(", ")))?,
        (Some(path), None) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            problem_from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, None) => bail!("give a problem file or --preset"),
    };
    if let Some(k) = args.k {
        problem.k = k;
    }
    Ok(problem)
}

fn load_certificate(problem: &Problem, path: &Path) -> Result<Certificate> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    certificate_from_json(problem, &text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth {
            input,
            solver,
            strategy,
            no_fair,
            max_iters,
            max_cells,
            wallclock,
            timeout,
            init_splits,
            out_dir,
        } => {
            let problem = load_problem(&input)?;
            let kind = StrategyKind::parse(&strategy)
                .with_context(|| format!("unknown strategy {strategy}"))?;
            let mut cfg = SynthConfig::new(
                SolverConfig::resolve(solver.as_deref()).with_timeout(Duration::from_secs(timeout)),
            );
            cfg.strategy = RefinementStrategy {
                fair: !no_fair,
                ..RefinementStrategy::of(kind)
            };
            cfg.budget.max_iters = max_iters;
            cfg.budget.max_cells = max_cells;
            cfg.budget.wallclock = Duration::from_secs(wallclock);
            cfg.init_splits = init_splits;
            let run = synthesize(&problem, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            let mut log = Vec::new();
            run.write_log(&mut log)?;
            write(&out_dir.join("run.jsonl"), &String::from_utf8(log)?)?;
            let (verdict, code) = match &run.verdict {
                Verdict::Sat(cert) => {
                    write(
                        &out_dir.join("certificate.json"),
                        &certificate_to_json(&problem, cert),
                    )?;
                    (json!({"verdict": "sat"}), EXIT_SAT)
                }
                Verdict::Unsat {
                    partition_hash,
                    encoding_hash,
                } => (
                    json!({"verdict": "unsat", "partition_hash": partition_hash, "encoding_hash": encoding_hash}),
                    EXIT_UNSAT,
                ),
                Verdict::Unknown { reason } => (
                    json!({"verdict": "unknown", "reason": reason}),
                    EXIT_UNKNOWN,
                ),
            };
            let mut verdict = verdict;
            verdict["iterations"] = json!(run.iterations.len());
            verdict["cells"] = json!(run.partition.len());
            let text = serde_json::to_string_pretty(&verdict)?;
            write(&out_dir.join("verdict.json"), &text)?;
            println!("{text}");
            Ok(code)
        }
        Command::Check { input, certificate } => {
            let problem = load_problem(&input)?;
            let cert = load_certificate(&problem, &certificate)?;
            let report = check_exact_rules(&problem, &cert);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed() {
                EXIT_SAT
            } else {
                EXIT_FAILED
            })
        }
        Command::Encode {
            input,
            variant,
            init_splits,
            out,
        } => {
            let problem = load_problem(&input)?;
            let variant =
                Variant::parse(&variant).with_context(|| format!("unknown variant {variant}"))?;
            let partition = init_partition(&problem, init_splits);
            let table = build_table(&problem, &partition)?;
            let encoded = encode(&problem, &partition, &table, variant)?;
            match out {
                Some(path) => write(&path, &encoded.smtlib)?,
                None => print!("{}", encoded.smtlib),
            }
            eprintln!(
                "{} assertions (predicted {})",
                encoded.n_assertions, encoded.predicted_assertions
            );
            Ok(EXIT_SAT)
        }
        Command::Simulate {
            input,
            certificate,
            runs,
            seed,
            perturb,
            samples,
        } => {
            let problem = load_problem(&input)?;
            let cert = load_certificate(&problem, &certificate)?;
            if let Some(eps) = perturb {
                let spec = PerturbationSpec {
                    epsilon: parse_scalar(&eps).with_context(|| format!("bad --perturb {eps}"))?,
                    samples,
                    seed,
                };
                let report = probe_robustness(&problem, &cert, &spec);
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(if report.passed == report.samples {
                    EXIT_SAT
                } else {
                    EXIT_FAILED
                });
            }
            let horizon = default_horizon(&problem, &cert);
            let report = simulate_many(&problem, &cert.controller, runs, seed, horizon);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.all_ok() {
                EXIT_SAT
            } else {
                EXIT_FAILED
            })
        }
        Command::Render {
            input,
            certificate,
            axes,
            labels,
            svg,
            csv,
        } => {
            let problem = load_problem(&input)?;
            let labels = match labels.as_str() {
                "none" => LabelMode::None,
                "rank" => LabelMode::Rank,
                "input" => LabelMode::Input,
                other => bail!("unknown label mode {other}"),
            };
            let [a, b] = axes[..] else {
                bail!("--axes takes two axis indices");
            };
            let spec = RenderSpec {
                axes: [a, b],
                labels,
                ..RenderSpec::default()
            };
            let cert = certificate
                .map(|path| load_certificate(&problem, &path))
                .transpose()?;
            let (partition, must, may) = match &cert {
                Some(cert) => {
                    let table = build_table(&problem, &cert.partition)?;
                    let drop_out = |v: Vec<usize>| -> Vec<usize> {
                        v.into_iter().filter(|&q| q != OUT).collect()
                    };
                    (
                        cert.partition.clone(),
                        drop_out(fixed_point(&table, &cert.controller, false)),
                        drop_out(fixed_point(&table, &cert.controller, true)),
                    )
                }
                None => (problem.control.clone(), Vec::new(), Vec::new()),
            };
            let scene = Scene {
                problem: &problem,
                partition: &partition,
                must: &must,
                may: &may,
                controller: cert.as_ref().map(|c| &c.controller),
                ranking: cert.as_ref().map(|c| &c.ranking),
            };
            write(&svg, &render_svg(&scene, &spec)?)?;
            write(&csv, &render_csv(&scene))?;
            println!(
                "{}",
                json!({"cells": partition.len(), "must": must.len(), "may": may.len()})
            );
            Ok(EXIT_SAT)
        }
        Command::Export { name } => {
            let problem = preset(&name)
                .with_context(|| format!("unknown preset {name}; known: {}", PRESETS.join(", ")))?;
            println!("{}", problem_to_json(&problem));
            Ok(EXIT_SAT)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
