//! `offnadir` subcommands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use offnadir_core::data_model::validate;
use offnadir_core::eval::{EvalConfig, IouSpace, Track};
use offnadir_core::foa::{FusionStrategy, RotationAngleSet};
use offnadir_core::geometry::rasterize;
use offnadir_core::synth::{generate_dataset, perturb_predictions};
use offnadir_core::toy::{train_toy, ToyConfig, ToySummary};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::configs::{NoiseJson, SceneJson};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_predictions;
use crate::format::{read_dataset, read_predictions, write_dataset, write_predictions, write_text};
use crate::pbm::to_pbm;
use crate::report::emit_report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ValidationFailed = 1,
    UsageError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "offnadir", version, about = "Off-nadir building footprint tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check annotation invariants; exits 1 when any are violated.
    Validate(ValidateArgs),
    /// Fill in missing footprints and building boxes.
    Derive(DeriveArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene and optionally perturbed predictions.
    Synth(SynthArgs),
    /// Train the toy offset regressor with and without rotation augmentation.
    TrainToy(TrainToyArgs),
    /// Dump one PBM mask per annotation.
    Masks(MasksArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Tolerance in pixels for the geometric checks.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct DeriveArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Boundary band radius in pixels; 2% of the image diagonal by default.
    #[arg(long)]
    boundary_d: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Mask IoU for TP/FP/FN: raster (pixel masks) or polygon (exact areas).
    #[arg(long, default_value = "raster")]
    iou_space: String,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene configuration JSON; library defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    pred_out: Option<PathBuf>,
    /// Noise configuration JSON for the predictions.
    #[arg(long, requires = "pred_out")]
    noise: Option<PathBuf>,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    buildings: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    /// Degrees off nadir.
    #[arg(long)]
    nadir_angle: Option<f64>,
    /// rectangle or l_shape.
    #[arg(long)]
    footprint_kind: Option<String>,
    #[arg(long, requires = "pred_out")]
    vertex_jitter: Option<f64>,
    #[arg(long, requires = "pred_out")]
    offset_noise: Option<f64>,
    #[arg(long, requires = "pred_out")]
    drop_rate: Option<f64>,
    #[arg(long, requires = "pred_out")]
    spurious_rate: Option<f64>,
    /// iou_linked or uniform.
    #[arg(long, requires = "pred_out")]
    score_model: Option<String>,
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    /// Comma-separated rotation angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,90,180,270")]
    angles: Vec<f64>,
    /// max_norm or mean.
    #[arg(long, default_value = "max_norm")]
    fusion: String,
    #[arg(long, default_value_t = ToyConfig::default().steps)]
    steps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = ToyConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = ToyConfig::default().hidden_dim)]
    hidden_dim: usize,
}

#[derive(Debug, Args)]
struct MasksArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// roof or footprint.
    #[arg(long, default_value = "footprint")]
    track: String,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = out.write_all(text.as_bytes());
                ExitStatus::Success
            } else {
                let _ = err.write_all(text.as_bytes());
                ExitStatus::UsageError
            };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(a, out, err),
        Command::Derive(a) => cmd_derive(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::TrainToy(a) => cmd_train_toy(a, out),
        Command::Masks(a) => cmd_masks(a),
    };
    match result {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            ExitStatus::UsageError
        }
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::Usage(message.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Refuses to write over an input file.
fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out) = fs::canonicalize(output) else {
        return Ok(());
    };
    for input in inputs {
        if fs::canonicalize(input).is_ok_and(|i| i == out) {
            return Err(usage(format!("{} would overwrite an input file", output.display())));
        }
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus> {
    if !(a.tol >= 0.0 && a.tol.is_finite()) {
        return Err(usage("--tol must be a non-negative number"));
    }
    let d = read_dataset(&a.dataset)?;
    let violations = validate(&d, a.tol);
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "{:>13}  {:<22}  magnitude", "annotation_id", "rule").map_err(io)?;
    for v in &violations {
        writeln!(out, "{:>13}  {:<22}  {}", v.annotation_id, v.rule.name(), v.magnitude).map_err(io)?;
    }
    if violations.is_empty() {
        Ok(ExitStatus::Success)
    } else {
        let _ = writeln!(err, "{} violation(s) in {}", violations.len(), a.dataset.display());
        Ok(ExitStatus::ValidationFailed)
    }
}

fn cmd_derive(a: DeriveArgs) -> Result<ExitStatus> {
    ensure_distinct(&a.out, &[&a.dataset])?;
    write_dataset(&a.out, &read_dataset(&a.dataset)?)?;
    Ok(ExitStatus::Success)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<ExitStatus> {
    let outputs: Vec<&Path> = std::iter::once(a.out.as_path()).chain(a.csv.as_deref()).collect();
    for o in &outputs {
        ensure_distinct(o, &[&a.gt, &a.pred])?;
    }
    if a.csv.as_deref() == Some(a.out.as_path()) {
        return Err(usage("--out and --csv must differ"));
    }
    let iou_space =
        IouSpace::parse(&a.iou_space).ok_or_else(|| usage(format!("unknown IoU space {:?} (raster, polygon)", a.iou_space)))?;
    let config = EvalConfig {
        iou_threshold: a.iou,
        iou_space,
        boundary_d: a.boundary_d,
        ..EvalConfig::default()
    };
    config.validate()?;
    let jobs = match a.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let gt = read_dataset(&a.gt)?;
    let mut preds = read_predictions(&a.pred)?;
    let report = evaluate_predictions(&mut preds, &gt, &config, jobs).map_err(|source| Error::Content {
        path: a.pred.clone(),
        source,
    })?;
    emit_report(&report, &config, &a.out, a.csv.as_deref())?;
    Ok(ExitStatus::Success)
}

fn cmd_synth(a: SynthArgs) -> Result<ExitStatus> {
    let inputs: Vec<&Path> = a.config.iter().chain(&a.noise).map(PathBuf::as_path).collect();
    ensure_distinct(&a.out, &inputs)?;
    if let Some(p) = &a.pred_out {
        ensure_distinct(p, &inputs)?;
        if p == &a.out {
            return Err(usage("--out and --pred-out must differ"));
        }
    }
    let mut scene: SceneJson = match &a.config {
        Some(p) => read_json(p)?,
        None => SceneJson::default(),
    };
    scene.images = a.images.unwrap_or(scene.images);
    scene.n_buildings = a.buildings.unwrap_or(scene.n_buildings);
    scene.width = a.width.unwrap_or(scene.width);
    scene.height = a.height.unwrap_or(scene.height);
    scene.nadir_angle = a.nadir_angle.unwrap_or(scene.nadir_angle);
    if let Some(k) = a.footprint_kind {
        scene.footprint_kind = k;
    }
    let config = scene.to_config(a.seed).map_err(usage)?;
    let gt = generate_dataset(&config, scene.images)?;
    write_dataset(&a.out, &gt)?;
    if let Some(pred_out) = &a.pred_out {
        let mut noise: NoiseJson = match &a.noise {
            Some(p) => read_json(p)?,
            None => NoiseJson::default(),
        };
        noise.vertex_jitter_sigma = a.vertex_jitter.unwrap_or(noise.vertex_jitter_sigma);
        noise.offset_noise_sigma = a.offset_noise.unwrap_or(noise.offset_noise_sigma);
        noise.drop_rate = a.drop_rate.unwrap_or(noise.drop_rate);
        noise.spurious_rate = a.spurious_rate.unwrap_or(noise.spurious_rate);
        if let Some(s) = a.score_model {
            noise.score_model = s;
        }
        let preds = perturb_predictions(&gt, &noise.to_config(a.seed).map_err(usage)?)?;
        write_predictions(pred_out, gt.images(), &preds)?;
    }
    Ok(ExitStatus::Success)
}

#[derive(Debug, Serialize)]
struct ToyEntry {
    name: &'static str,
    angles_deg: Vec<f64>,
    fusion: &'static str,
    held_out_epe: f64,
    rotated_epe: f64,
    final_loss: f64,
}

#[derive(Debug, Serialize)]
struct ToyReport {
    seed: u64,
    steps: usize,
    configurations: Vec<ToyEntry>,
    /// Rotated-test EPE of the requested set over the single-angle baseline.
    rotated_ratio: Option<f64>,
}

fn entry(name: &'static str, c: &ToyConfig, s: &ToySummary) -> ToyEntry {
    ToyEntry {
        name,
        angles_deg: c.angles.angles().iter().map(|a| a.to_degrees()).collect(),
        fusion: c.fusion.as_str(),
        held_out_epe: s.held_out_epe,
        rotated_epe: s.rotated_epe,
        final_loss: s.final_loss,
    }
}

fn cmd_train_toy(a: TrainToyArgs, out: &mut dyn Write) -> Result<ExitStatus> {
    let fusion = FusionStrategy::parse(&a.fusion).ok_or_else(|| usage(format!("unknown fusion {:?} (max_norm, mean)", a.fusion)))?;
    if a.out == a.report {
        return Err(usage("--out and --report must differ"));
    }
    let config = ToyConfig {
        angles: RotationAngleSet::from_degrees(&a.angles)?,
        fusion,
        steps: a.steps,
        seed: a.seed,
        learning_rate: a.learning_rate,
        hidden_dim: a.hidden_dim,
        ..ToyConfig::default()
    };
    config.validate()?;
    let run = train_toy(&config)?;
    let mut configurations = vec![entry("requested", &config, &run.summary)];
    let mut rotated_ratio = None;
    if config.angles != RotationAngleSet::identity() {
        let base_config = ToyConfig {
            angles: RotationAngleSet::identity(),
            ..config.clone()
        };
        let base = train_toy(&base_config)?;
        rotated_ratio = Some(run.summary.rotated_epe / base.summary.rotated_epe);
        configurations.push(entry("baseline", &base_config, &base.summary));
    }
    let report = ToyReport {
        seed: a.seed,
        steps: a.steps,
        configurations,
        rotated_ratio,
    };
    Checkpoint::new(&config, run.params).save(&a.out)?;
    let mut text = serde_json::to_string_pretty(&report).expect("plain data always serializes");
    text.push('\n');
    write_text(&a.report, &text)?;
    let io = |e| Error::io("<stdout>", e);
    for c in &report.configurations {
        writeln!(out, "{:<9}  held-out EPE {:.4} px  rotated EPE {:.4} px", c.name, c.held_out_epe, c.rotated_epe).map_err(io)?;
    }
    Ok(ExitStatus::Success)
}

fn cmd_masks(a: MasksArgs) -> Result<ExitStatus> {
    let track = Track::ALL
        .into_iter()
        .find(|t| t.as_str() == a.track)
        .ok_or_else(|| usage(format!("unknown track {:?} (roof, footprint)", a.track)))?;
    let d = read_dataset(&a.dataset)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for ann in d.annotations() {
        let image = d.image(ann.image_id).expect("datasets keep referential integrity");
        let poly = match track {
            Track::Roof => &ann.roof,
            Track::Footprint => &ann.footprint,
        };
        let mask = rasterize(poly, image.width as usize, image.height as usize);
        let path = a.out_dir.join(format!("{}_{}_{}.pbm", ann.image_id, ann.id, track.as_str()));
        fs::write(&path, to_pbm(&mask)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(ExitStatus::Success)
}
