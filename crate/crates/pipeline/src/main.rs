use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsfuse_pipeline::{Experiment, ExperimentConfig, Outcome, PipelineError, RunOptions, Stage};

#[derive(Parser, Debug)]
#[command(name = "hsfuse", version, about = "Hyperspectral pansharpening experiments")]
struct Cli {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted-path override, e.g. `dip.lambda=0.8`; repeatable.
    #[arg(long = "stage-override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Rerun even when existing outputs were made with another config.
    #[arg(long, global = true)]
    force: bool,

    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic toy scene to `scene`.
    Toygen(ToygenArgs),
    /// Partition the scene, synthesize (LR-HSI, PAN) pairs and split them.
    Prepare(PrepareArgs),
    /// Upsample every LR-HSI to the PAN grid.
    Upsample(UpsampleArgs),
    /// Train the residual network on the training split.
    Train,
    /// Add predicted residuals to the upsampled test cubes.
    Fuse,
    /// Score test cubes against their references.
    Evaluate,
    /// Run DIP upsampling for every lambda in `lambda_sweep` and tabulate.
    Sweep,
    /// Collect tables into a markdown summary.
    Report,
    /// prepare, upsample, train, fuse and evaluate in order.
    Run,
}

#[derive(Args, Debug)]
struct ToygenArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Bands averaged into the PAN image.
    #[arg(long)]
    pan_bands: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    train_ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct UpsampleArgs {
    /// dip-qss | dip-spectral | nearest | bicubic
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root for this run.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn push<T: ToString>(v: &mut Vec<String>, key: &str, val: Option<T>) {
    if let Some(x) = val {
        v.push(format!("{key}={}", x.to_string()));
    }
}

fn json_str(p: &std::path::Path) -> String {
    serde_json::to_string(&p.display().to_string()).expect("string")
}

/// Subcommand flags become overrides applied before `--stage-override`.
fn flag_overrides(cmd: &Command) -> Vec<String> {
    let mut v = Vec::new();
    match cmd {
        Command::Toygen(a) => {
            push(&mut v, "scene", a.out.as_deref().map(json_str));
            push(&mut v, "toy.seed", a.seed);
            push(&mut v, "toy.count", a.count);
        }
        Command::Prepare(a) => {
            push(&mut v, "scene", a.scene.as_deref().map(json_str));
            push(&mut v, "degrade.beta", a.beta);
            push(&mut v, "degrade.kernel_size", a.kernel_size);
            push(&mut v, "degrade.sigma", a.sigma);
            push(&mut v, "degrade.pan_band_count", a.pan_bands);
            push(&mut v, "degrade.patch_size", a.patch_size);
            push(&mut v, "split.seed", a.split_seed);
            push(&mut v, "split.train_ratio", a.train_ratio);
        }
        Command::Upsample(a) => {
            push(&mut v, "upsample.method", a.method.clone());
            push(&mut v, "dip.lambda", a.lambda);
            push(&mut v, "dip.iterations", a.iterations);
            push(&mut v, "dip.seed", a.seed);
            push(&mut v, "output_root", a.out.as_deref().map(json_str));
        }
        _ => {}
    }
    v
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides = flag_overrides(&cli.command);
    overrides.extend(cli.overrides.iter().cloned());
    let config = base.with_overrides(&overrides)?;
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }
    let exp = Experiment::new(config, RunOptions { force: cli.force })?;
    let stage = match cli.command {
        Command::Toygen(_) => {
            let dir = exp.toygen()?;
            println!("toygen: wrote {}", dir.display());
            return Ok(());
        }
        Command::Run => {
            exp.run_pipeline()?;
            println!("run: outputs under {}", exp.layout.root.display());
            return Ok(());
        }
        Command::Prepare(_) => Stage::Prepare,
        Command::Upsample(_) => Stage::Upsample,
        Command::Train => Stage::Train,
        Command::Fuse => Stage::Fuse,
        Command::Evaluate => Stage::Evaluate,
        Command::Sweep => Stage::Sweep,
        Command::Report => Stage::Report,
    };
    let outcome = exp.run(stage)?;
    let word = if outcome == Outcome::Skipped { "up to date" } else { "done" };
    println!("{}: {word} ({})", stage.name(), exp.layout.stage_dir(stage).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
