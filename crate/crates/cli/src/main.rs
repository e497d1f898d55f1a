use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sosc_bench::{write_jsonl, GeneratorSpec};
use sosc_cli::commands::{self, Preset, PresetOptions};
use sosc_cli::{CliError, ControlSettings, Result, RunConfig};
use sosc_core::DVector;

#[derive(Parser)]
#[command(name = "sosc", version, about = "Streaming subspace clustering with semi-Markov sequencing")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream as JSON lines.
    Generate(GenerateArgs),
    /// Learn a model from a stream, optionally resuming a saved one.
    Fit(FitArgs),
    /// Score a model on a labelled stream.
    Eval(EvalArgs),
    /// Plan autonomously from a start observation and track the plan.
    Plan(PlanArgs),
    /// Blend an operator trajectory with the model's regression.
    Shared(SharedArgs),
    /// Print the combined Gaussians of a task-parameterized model.
    CombineFrames(CombineArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    demos: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the generator spec, for presets that have one.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// Continue from this saved model instead of starting empty.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Per-step CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Learn a task-parameterized model with this many frames.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Generator spec whose final centers are the ground truth; defaults to
    /// per-label means of the input.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    model: PathBuf,
    /// Start observation, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    start: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    out_idx: Option<Vec<usize>>,
    #[arg(long)]
    horizon: Option<usize>,
    /// JSON array of frames for a task-parameterized model.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SharedArgs {
    #[arg(long)]
    model: PathBuf,
    /// Operator trajectory as JSON lines.
    #[arg(long)]
    operator: PathBuf,
    #[arg(long, value_delimiter = ',')]
    in_idx: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    out_idx: Option<Vec<usize>>,
    #[arg(long)]
    kappa2: Option<f64>,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(&cfg, a),
        Command::Fit(a) => fit(&cfg, a),
        Command::Eval(a) => eval(a),
        Command::Plan(a) => plan(&cfg, a),
        Command::Shared(a) => shared(&cfg, a),
        Command::CombineFrames(a) => combine(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn generate(cfg: &RunConfig, a: GenerateArgs) -> Result<()> {
    let d = PresetOptions::default();
    let opts = PresetOptions {
        dim: a.dim.unwrap_or(d.dim),
        length: a.length.unwrap_or(d.length),
        demos: a.demos.unwrap_or(d.demos),
        noise_sd: a.noise_sd.unwrap_or(d.noise_sd),
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let (records, spec) = commands::generate_preset(a.preset, seed, opts)?;
    write_jsonl(create(&a.out)?, &records)?;
    match (a.truth, spec) {
        (Some(path), Some(spec)) => commands::write_text(&path, &serde_json::to_string_pretty(&spec)?)?,
        (Some(_), None) => return Err(CliError::Usage("this preset has no generator spec to write".into())),
        (None, _) => {}
    }
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn fit(cfg: &RunConfig, a: FitArgs) -> Result<()> {
    let records = commands::read_records(&a.input)?;
    let mut model = match &a.resume {
        Some(path) => commands::read_model(path)?,
        None => {
            let first = records.first().ok_or_else(|| CliError::Data("input stream is empty".into()))?;
            let mut hp = cfg.hyperparams.clone().unwrap_or_default();
            if let Some(l) = a.lambda {
                hp.lambda = l;
            }
            commands::new_model(first.x.len(), hp, a.frames.or(cfg.frames))?
        }
    };
    let reports = commands::fit_records(&mut model, &records)?;
    commands::write_model(&a.model_out, &model)?;
    if let Some(path) = &a.log {
        commands::write_fit_log(create(path)?, &reports)?;
    }
    println!("fitted {} points: K = {}", reports.len(), model.k());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = commands::read_model(&a.model)?;
    let records = commands::read_records(&a.input)?;
    let truth = match &a.truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let spec: GeneratorSpec = serde_json::from_str(&text)?;
            Some(commands::spec_means(&spec))
        }
        None => commands::truth_means(&records),
    };
    let metrics = commands::evaluate(&model, &records, truth.as_deref())?;
    let text = serde_json::to_string_pretty(&metrics)?;
    match &a.out {
        Some(path) => commands::write_text(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn positions_idx(given: Option<Vec<usize>>, cfg: Option<&Vec<usize>>, dim: usize) -> Vec<usize> {
    given.or_else(|| cfg.cloned()).unwrap_or_else(|| (0..dim).collect())
}

fn plan(cfg: &RunConfig, a: PlanArgs) -> Result<()> {
    let model = commands::read_model(&a.model)?;
    let frames = a.frames.as_deref().map(commands::read_frames).transpose()?;
    let out_idx = positions_idx(a.out_idx, cfg.out_idx.as_ref(), model.dim());
    let horizon = a.horizon.or(cfg.horizon).unwrap_or(200);
    let xi0 = DVector::from_vec(a.start);
    let run = commands::plan(&model, frames.as_deref(), &xi0, &out_idx, horizon, &ControlSettings::from_config(cfg))?;
    commands::write_plan_csv(create(&a.out)?, &run)?;
    println!("planned {} steps", run.reference.len());
    Ok(())
}

fn shared(cfg: &RunConfig, a: SharedArgs) -> Result<()> {
    let model = commands::read_model(&a.model)?;
    let frames = a.frames.as_deref().map(commands::read_frames).transpose()?;
    let operator: Vec<DVector<f64>> = commands::read_records(&a.operator)?.iter().map(|r| r.point()).collect();
    let half = model.dim() / 2;
    let in_idx = a.in_idx.or_else(|| cfg.in_idx.clone()).unwrap_or_else(|| (0..half).collect());
    let out_idx = a.out_idx.or_else(|| cfg.out_idx.clone()).unwrap_or_else(|| (half..2 * half).collect());
    let kappa2 = a.kappa2.or(cfg.kappa2).unwrap_or(model.hyperparams().kappa2);
    let steps = commands::shared_control(
        &model,
        frames.as_deref(),
        &operator,
        &in_idx,
        &out_idx,
        kappa2,
        &ControlSettings::from_config(cfg),
    )?;
    commands::write_shared_csv(create(&a.out)?, &steps)?;
    println!("shared control over {} steps", steps.len());
    Ok(())
}

fn combine(a: CombineArgs) -> Result<()> {
    let model = commands::read_model(&a.model)?;
    let frames = commands::read_frames(&a.frames)?;
    let docs = commands::combine_frames(&model, &frames)?;
    let text = serde_json::to_string_pretty(&docs)?;
    match &a.out {
        Some(path) => commands::write_text(path, &text)?,
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}
