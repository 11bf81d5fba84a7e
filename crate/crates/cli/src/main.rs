use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splatgen_core::annotator::AnnotationMode;
use splatgen_core::dataset::RunManifest;
use splatgen_core::metrics::{self, ApMode};
use splatgen_core::pipeline::{self, GenerateOptions};
use splatgen_core::scene::{load_scene_spec, AssetLibrary, SceneSpec};
use splatgen_core::{Error, Result};

/// Synthetic object-detection datasets from Gaussian splat assets.
#[derive(Parser, Debug)]
#[command(name = "splatgen", version)]
struct Cli {
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render and annotate a dataset.
    Generate(GenerateArgs),
    /// Score YOLO predictions against ground-truth labels.
    Evaluate(EvaluateArgs),
    /// Render one frame with its boxes drawn in.
    Inspect(InspectArgs),
    /// Load a spec, print it with defaults filled in, and report problems.
    ValidateSpec(ValidateArgs),
}

#[derive(Args, Debug)]
struct SpecOverrides {
    /// Annotation mode, overriding the spec.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<AnnotationMode>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Scene spec (TOML or JSON).
    #[arg(long, required_unless_present = "manifest")]
    spec: Option<PathBuf>,
    /// Re-run exactly what an earlier run's manifest describes.
    #[arg(long, conflicts_with_all = ["spec", "seed", "frames", "mode", "split"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Master seed; a random one is drawn and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    frames: u64,
    /// Worker threads, 0 for all cores.
    #[arg(long, env = "SPLATGEN_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    overrides: SpecOverrides,
    /// train,val,test ratios, e.g. 0.8,0.1,0.1.
    #[arg(long, value_parser = parse_split)]
    split: Option<[f64; 3]>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of prediction label files (class cx cy w h conf).
    #[arg(long)]
    preds: PathBuf,
    /// Directory of ground-truth label files.
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated class names, in class id order.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, default_value_t = metrics::DEFAULT_CONF_THRESH)]
    conf_thresh: f64,
    #[arg(long, default_value = "coco101", value_parser = parse_ap_mode)]
    ap_mode: ApMode,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    frame: u64,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "SPLATGEN_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    overrides: SpecOverrides,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    spec: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<AnnotationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ap_mode(s: &str) -> std::result::Result<ApMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{p}' is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    let ratios: [f64; 3] = parts
        .try_into()
        .map_err(|_| "expected three comma-separated ratios".to_string())?;
    splatgen_core::dataset::check_split_ratios(&ratios).map_err(|e| e.to_string())?;
    Ok(ratios)
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPLATGEN_LOG")
        .format(|buf, record| writeln!(buf, "level={} {}", record.level().as_str().to_lowercase(), record.args()))
        .init();
}

fn load_spec(path: &Path, overrides: &SpecOverrides) -> Result<SceneSpec> {
    let mut spec = load_scene_spec(path)?;
    if let Some(mode) = overrides.mode {
        spec.annotation.mode = mode;
    }
    Ok(spec)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (spec, seed, frames) = match &args.manifest {
        Some(path) => {
            let m = RunManifest::read(path)?;
            (m.spec, m.master_seed, m.frames)
        }
        None => {
            let path = args.spec.as_deref().expect("clap enforces --spec or --manifest");
            let mut spec = load_spec(path, &args.overrides)?;
            if let Some(split) = args.split {
                spec.output.split = split;
            }
            spec.validate()?;
            (spec, args.seed.unwrap_or_else(rand::random), args.frames)
        }
    };
    println!("seed={seed}");
    let manifest = pipeline::generate(
        &spec,
        &GenerateOptions {
            out: args.out.clone(),
            master_seed: seed,
            frames,
            threads: args.threads,
        },
    )?;
    let counts: Vec<String> = manifest
        .class_counts
        .iter()
        .map(|c| format!("{}={}", c.name, c.annotations))
        .collect();
    println!(
        "frames={} seconds={:.2} img_per_s={:.3} annotations: {}",
        manifest.frames,
        manifest.timing.wall_seconds,
        manifest.timing.images_per_second,
        counts.join(" ")
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.conf_thresh) {
        return Err(Error::Config(format!("--conf-thresh {} is outside [0, 1]", args.conf_thresh)));
    }
    for (flag, dir) in [("--preds", &args.preds), ("--gt", &args.gt)] {
        if !dir.is_dir() {
            return Err(Error::Config(format!("{flag} {} is not a directory", dir.display())));
        }
    }
    let report = metrics::evaluate(&args.preds, &args.gt, &args.classes, args.conf_thresh, args.ap_mode)?;
    for w in &report.warnings {
        log::warn!("event=stem_mismatch message=\"{w}\"");
    }
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()).map_err(|e| Error::File {
            path: out.clone(),
            source: e,
        })?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let spec = load_spec(&args.spec, &args.overrides)?;
    let (canvas, annotations) = pipeline::with_threads(args.threads, || pipeline::inspect(&spec, args.seed, args.frame))??;
    std::fs::write(&args.out, canvas.to_png()?).map_err(|e| Error::File {
        path: args.out.clone(),
        source: e,
    })?;
    for a in &annotations {
        println!(
            "instance={} class={} box=[{:.1}, {:.1}, {:.1}, {:.1}] visibility={:.3} truncated={}",
            a.instance_id, a.class_id, a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max, a.visibility, a.truncated
        );
    }
    println!("wrote {} ({} boxes)", args.out.display(), annotations.len());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let spec = load_scene_spec(&args.spec)?;
    let warnings = spec.validate()?;
    AssetLibrary::load(&spec)?;
    print!("{}", spec.to_toml()?);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("{}: ok", args.spec.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::ValidateSpec(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
