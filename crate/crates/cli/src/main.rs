use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpg_lab::runner::{self, ExperimentConfig, ExperimentKind};
use mpg_lab::Error;

#[derive(Parser)]
#[command(name = "mpg-lab", version, about = "Experiments on decoupled Markov potential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write plot.svg next to the iterations CSV.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learner and log per-iteration NE-gap, welfare and potential.
    Simulate(RunArgs),
    /// Certify (lambda, mu)-smoothness and search the smallest mu.
    AnalyzeSmoothness(RunArgs),
    /// Analyze the built-in three-stage counterexample.
    Counterexample(RunArgs),
    /// Evaluate a policy: NE-gap, welfare and the potential check.
    EvalPolicy(RunArgs),
    /// Theoretical sample sizes next to the configured ones.
    SampleSizes(RunArgs),
    /// Draw an SVG chart from an iterations CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to plot.svg next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named presets.
    Presets,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => runner::load_config(path)?,
        None if kind == ExperimentKind::Counterexample => ExperimentConfig::default(),
        None => return Err(Failure::Config("--config is required".into())),
    };
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(Failure::Config(format!(
                "config describes a {} experiment, not {}",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if args.plot {
        cfg.output.plot = Some(true);
    }
    let out = match (&args.out, &cfg.output.dir) {
        (Some(o), _) => o.clone(),
        (None, Some(d)) => cfg.resolve_path(d),
        (None, None) => PathBuf::from("runs").join(kind.name()),
    };
    cfg.check()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    let report = pool.install(|| runner::run_experiment(&cfg))?;
    for line in &report.text {
        println!("{line}");
    }
    for path in runner::write_report(&report, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn plot(input: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let csv = std::fs::read_to_string(&input).map_err(|e| Failure::Config(format!("cannot read {}: {e}", input.display())))?;
    let svg = runner::plot::svg_from_csv(&csv)?;
    let out = out.unwrap_or_else(|| input.with_file_name("plot.svg"));
    std::fs::write(&out, svg).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run(ExperimentKind::Simulate, a),
        Command::AnalyzeSmoothness(a) => run(ExperimentKind::AnalyzeSmoothness, a),
        Command::Counterexample(a) => run(ExperimentKind::Counterexample, a),
        Command::EvalPolicy(a) => run(ExperimentKind::EvalPolicy, a),
        Command::SampleSizes(a) => run(ExperimentKind::SampleSizes, a),
        Command::Plot { input, out } => plot(input, out),
        Command::Presets => {
            for (name, about) in runner::PRESETS {
                println!("{name:16} {about}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
