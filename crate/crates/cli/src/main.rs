use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use trailnav::config::{ConfigError, RunConfig};
use trailnav::dataprep::{self, DataprepError, LabelGrid, LabelMap};
use trailnav::evalkit::{evaluate_hard, EvalError, EvalReport};
use trailnav::mask::{load_mask, save_mask, MaskError, SegClass};
use trailnav::runs::{self, RunError, SWEEP_SPEEDS};
use trailnav::sim::TrailWorld;

mod plot;

#[derive(Parser)]
#[command(name = "trailnav", version, about = "Trail following from segmentation masks")]
struct Cli {
    /// Config file: `key = value` lines or a JSON object.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a directory of mask files.
    Replay {
        mask_dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-loop simulation on a world file.
    Simulate(SimulateArgs),
    /// Dataset preparation tools.
    #[command(subcommand)]
    Dataprep(DataprepCommand),
    /// Score predicted masks against ground truth.
    Eval {
        gt_dir: PathBuf,
        pred_dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print every config key with its effective value and description.
    Config,
}

#[derive(Args)]
struct SimulateArgs {
    world: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Forward speed in m/s (overrides planner.forward_speed).
    #[arg(long, conflicts_with = "sweep")]
    speed: Option<f64>,
    /// Run every speed in 0.2, 0.4, 0.6, 0.8, 1.0 m/s.
    #[arg(long)]
    sweep: bool,
    /// Replace the compensator with a pass-through.
    #[arg(long)]
    no_compensation: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Write trajectory plots as PNG.
    #[arg(long)]
    emit_plots: bool,
}

#[derive(Subcommand)]
enum DataprepCommand {
    /// Map source class-id images to three-class masks.
    Relabel {
        /// Label image or directory of label images.
        input: PathBuf,
        /// JSON label map; the built-in urban map when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rasterize rectangle labels from an `image,x,y,w,h` CSV.
    Boxes {
        csv: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Random flip and rotation of masks, with a replay record.
    Augment {
        /// Mask file or directory of masks.
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Input(_) => 4,
            CliError::Data(_) => 5,
            CliError::Output(_) => 6,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::EmptyDirectory(_) | RunError::InvalidWorld(_) => CliError::Input(e.to_string()),
            RunError::Io { .. } => CliError::Output(e.to_string()),
        }
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::IoFailure { .. } => CliError::Output(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DataprepError> for CliError {
    fn from(e: DataprepError) -> Self {
        match e {
            DataprepError::Mask(m) => m.into(),
            DataprepError::LabelMap(_) | DataprepError::BoxCsv(_) => CliError::Input(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| output_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    write_text(path, &(text + "\n"))
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{} does not exist", path.display())))
    }
}

/// Image files of a directory in name order, or the path itself.
fn image_inputs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_exists(path)?;
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let files = runs::list_masks(path)?;
    if files.is_empty() {
        return Err(CliError::Input(format!("no .png or .pgm files in {}", path.display())));
    }
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn png_name(path: &Path) -> String {
    let stem = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{stem}.png")
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Replay { mask_dir, out } => {
            require_exists(&mask_dir)?;
            let result = runs::write_replay(&mask_dir, &out, &cfg)?;
            for e in &result.load_errors {
                eprintln!("warning: skipped {}: {}", e.file, e.error);
            }
            println!(
                "replayed {} frames ({} rejected, {} safety stops) -> {}",
                result.frames.len(),
                result.rejects,
                result.safety_stops,
                out.display()
            );
        }
        Command::Simulate(args) => simulate(&mut cfg, args)?,
        Command::Dataprep(cmd) => dataprep_cmd(&mut cfg, cmd)?,
        Command::Eval { gt_dir, pred_dir, out } => eval(&cfg, &gt_dir, &pred_dir, &out)?,
        Command::Config => {
            cfg.validate()?;
            let eff = cfg.effective();
            for (key, doc) in trailnav::config::KEYS {
                println!("{key} = {}    # {doc}", eff[*key]);
            }
        }
    }
    Ok(())
}

fn simulate(cfg: &mut RunConfig, args: SimulateArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_compensation {
        cfg.set("comp.enabled", "false")?;
    }
    if let Some(speed) = args.speed {
        cfg.set("planner.forward_speed", &speed.to_string())?;
    }
    require_exists(&args.world)?;
    let world = TrailWorld::load(&args.world).map_err(|e| CliError::Input(e.to_string()))?;
    let speeds: Vec<f64> = if args.sweep { SWEEP_SPEEDS.to_vec() } else { vec![cfg.pipeline.planner.forward_speed] };
    let results = runs::write_simulation(&world, &args.out, cfg, &speeds)?;
    for r in &results {
        let m = &r.output.metrics;
        println!(
            "speed {:.1} m/s: completed={} distance={:.2} m rms={:.3} m max={:.3} m off_trail={} stops={}",
            r.speed, m.completed, m.distance_covered, m.rms_lateral_dev, m.max_lateral_dev, m.off_trail_events, m.safety_stops
        );
        if args.emit_plots {
            let path = runs::run_dir(&args.out, &results, r).join("trajectory.png");
            plot::trajectory(&world, &r.output.trace)
                .save(&path)
                .map_err(|e| output_err(&path, e))?;
        }
    }
    println!("metrics -> {}", args.out.join("metrics.json").display());
    Ok(())
}

fn dataprep_cmd(cfg: &mut RunConfig, cmd: DataprepCommand) -> Result<(), CliError> {
    cfg.validate()?;
    match cmd {
        DataprepCommand::Relabel { input, map, out } => {
            let label_map = match &map {
                Some(path) => {
                    require_exists(path)?;
                    LabelMap::load(path)?
                }
                None => LabelMap::default(),
            };
            let mut items = Vec::new();
            for path in image_inputs(&input)? {
                let grid = LabelGrid::load(&path)?;
                let mask = dataprep::relabel(&grid, &label_map)?;
                let name = png_name(&path);
                save_mask(&mask, out.join(&name))?;
                items.push(json!({
                    "source": file_name(&path),
                    "output": name,
                    "traversable": mask.count(SegClass::Traversable),
                    "untraversable": mask.count(SegClass::Untraversable),
                    "void": mask.count(SegClass::Void),
                }));
            }
            let n = items.len();
            write_json(
                &out.join("relabel.json"),
                &json!({ "config": cfg.effective(), "seed": cfg.seed, "label_map": label_map, "items": items }),
            )?;
            println!("relabeled {n} images -> {}", out.display());
        }
        DataprepCommand::Boxes { csv, width, height, out } => {
            require_exists(&csv)?;
            let text = fs::read_to_string(&csv).map_err(|e| CliError::Input(format!("{}: {e}", csv.display())))?;
            let groups = dataprep::parse_box_csv(&text)?;
            let mut items = Vec::new();
            for (image, boxes) in &groups {
                let mask = dataprep::boxes_to_mask(boxes, (width, height))?;
                let name = png_name(Path::new(image));
                save_mask(&mask, out.join(&name))?;
                let fraction = mask.count(SegClass::Traversable) as f64 / mask.len() as f64;
                items.push(json!({ "image": image, "output": name, "boxes": boxes, "traversable_fraction": fraction }));
            }
            write_json(
                &out.join("boxes.json"),
                &json!({ "config": cfg.effective(), "seed": cfg.seed, "width": width, "height": height, "items": items }),
            )?;
            println!("rasterized {} images -> {}", groups.len(), out.display());
        }
        DataprepCommand::Augment { input, seed, out } => {
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut items = Vec::new();
            for (index, path) in image_inputs(&input)?.iter().enumerate() {
                let mask = load_mask(path)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(index as u64);
                let (augmented, record) = dataprep::augment(&mask, &mut rng);
                let name = png_name(path);
                save_mask(&augmented, out.join(&name))?;
                items.push(json!({ "source": file_name(path), "output": name, "stream": index, "record": record }));
            }
            let n = items.len();
            write_json(&out.join("augment.json"), &json!({ "config": cfg.effective(), "seed": cfg.seed, "items": items }))?;
            println!("augmented {n} masks -> {}", out.display());
        }
    }
    Ok(())
}

fn iou_field(r: &EvalReport, class: SegClass) -> String {
    r.per_class_iou[class.index()].map_or(String::new(), |v| v.to_string())
}

fn eval(cfg: &RunConfig, gt_dir: &Path, pred_dir: &Path, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    require_exists(pred_dir)?;
    let gt_files = image_inputs(gt_dir)?;
    let mut csv = String::from("image,evaluated_pixels,cross_entropy,iou_traversable,iou_untraversable,pixel_accuracy\n");
    let mut images = Vec::new();
    let mut reports = Vec::new();
    for gt_path in &gt_files {
        let name = file_name(gt_path);
        let pred_path = pred_dir.join(&name);
        if !pred_path.exists() {
            return Err(CliError::Input(format!("no prediction {} for ground truth {name}", pred_path.display())));
        }
        let gt = load_mask(gt_path)?;
        let pred = load_mask(&pred_path)?;
        let report = evaluate_hard(&gt, &pred).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        csv.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            report.evaluated_pixels,
            report.cross_entropy,
            iou_field(&report, SegClass::Traversable),
            iou_field(&report, SegClass::Untraversable),
            report.pixel_accuracy
        ));
        images.push(json!({ "image": name, "report": report }));
        reports.push(report);
    }
    let total: usize = reports.iter().map(|r| r.evaluated_pixels).sum();
    let weighted = |f: fn(&EvalReport) -> f64| {
        reports.iter().map(|r| f(r) * r.evaluated_pixels as f64).sum::<f64>() / total as f64
    };
    let mean_iou = |class: SegClass| {
        let v: Vec<f64> = reports.iter().filter_map(|r| r.per_class_iou[class.index()]).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let summary = json!({
        "config": cfg.effective(),
        "seed": cfg.seed,
        "images": images.len(),
        "evaluated_pixels": total,
        "cross_entropy": weighted(|r| r.cross_entropy),
        "pixel_accuracy": weighted(|r| r.pixel_accuracy),
        "mean_iou_traversable": mean_iou(SegClass::Traversable),
        "mean_iou_untraversable": mean_iou(SegClass::Untraversable),
        "per_image": images,
    });
    write_json(&out.join("report.json"), &summary)?;
    write_text(&out.join("per_image.csv"), &csv)?;
    println!("evaluated {} images ({total} pixels) -> {}", reports.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
