//! The `gmf` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use gmf_core::data::{preprocess, Augmentation, ClassLabel, PreprocessConfig};
use gmf_core::detect::{detect_multiscale, DetectParams};
use gmf_core::eval::evaluate;
use gmf_core::frames::{AnnotateOptions, CascadeDetector};
use gmf_core::gradcam::{grad_cam, overlay, triptych};
use gmf_core::model::{Model, ModelSpec};
use gmf_core::raster::confusion_heatmap;
use gmf_core::train::{grid_search, train, GridSpec, OptimizerKind, TrainConfig};
use gmf_core::Mode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotate::annotate_frames;
use crate::cascade::{cascade_from_xml, cascade_json, load_cascade};
use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::codec::{decode_image, save_image};
use crate::dataset::ImageDataset;
use crate::error::{self, Error, Result};
use crate::manifest::{scan_folders, write_manifest};
use crate::report::{detections_csv, grid_csv, score_csv, write_metric_log};
use crate::score::score_folder;
use crate::workers;

#[derive(Debug, Parser)]
#[command(name = "gmf", version, about = "Facial emotion recognition: training, evaluation, Grad-CAM and frame annotation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads for decoding and inference [default: $GMF_WORKERS or 1]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// JSON object of flag defaults for the subcommand; flags on the command line win
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a path,label manifest for a folder of class subfolders
    Manifest {
        /// Folder whose subfolders start with a class id 0-5
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model and save the best-validation checkpoint
    Train(TrainArgs),
    /// Train every configuration of a hyperparameter grid and rank them
    Grid(GridArgs),
    /// Accuracy and confusion matrix on a manifest
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Manifest CSV
        #[arg(long)]
        data: PathBuf,
        /// Write the confusion-matrix heat map (.png or .ppm)
        #[arg(long)]
        heatmap: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch: usize,
    },
    /// Softmax scores for every image below a folder
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Grad-CAM overlay for one image
    Explain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Class id 0-5, class name, or auto for the predicted class
        #[arg(long, default_value = "auto")]
        class: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Heat map opacity in [0, 1]
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Write original, heat map and overlay side by side
        #[arg(long)]
        triptych: bool,
        /// Panel size of the triptych
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Detect faces with a Haar cascade
    Detect {
        /// Cascade JSON (or OpenCV XML)
        #[arg(long)]
        cascade: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        params: DetectArgs,
    },
    /// Detect, classify and draw faces on every frame of a folder
    Annotate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        cascade: PathBuf,
        /// Folder of frame images, processed in name order
        #[arg(long)]
        frames: PathBuf,
        /// Output folder for annotated frames and results.csv
        #[arg(short, long)]
        output: PathBuf,
        /// Blend a Grad-CAM map into each face box
        #[arg(long)]
        gradcam: bool,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Fraction of the box added on each side before cropping
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        /// Frames per top-emotion update
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[command(flatten)]
        params: DetectArgs,
    },
    /// Print the number of trainable parameters of an architecture
    Params {
        #[arg(long)]
        arch: String,
    },
    /// Convert an OpenCV Haar cascade XML file to the JSON schema
    ConvertCascade {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "gimefive15")]
    pub arch: String,
    /// Training manifest CSV
    #[arg(long)]
    pub train: PathBuf,
    /// Validation manifest CSV
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop once validation accuracy has not improved for --patience epochs
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// sgd, adam or adamw
    #[arg(long, default_value = "sgd")]
    pub optimizer: String,
    /// Random flip, rotation, crop and erasing during training
    #[arg(long)]
    pub augment: bool,
    /// Metric log CSV [default: <output>.metrics.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid JSON file, or `standard` for the built-in search space
    #[arg(long)]
    pub space: String,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// First configuration index to run
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Number of configurations to run [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
    /// Only enumerate the configurations
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub augment: bool,
    /// Ranked results CSV (with --dry-run: the enumerated configurations)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, default_value_t = 1.1)]
    pub scale_factor: f64,
    #[arg(long, default_value_t = 3)]
    pub min_neighbors: usize,
    /// Smallest window side in pixels
    #[arg(long, default_value_t = 0)]
    pub min_size: usize,
    /// Largest window side in pixels, 0 for no limit
    #[arg(long, default_value_t = 0)]
    pub max_size: usize,
}

impl DetectArgs {
    fn params(&self) -> Result<DetectParams> {
        if self.scale_factor.is_nan() || self.scale_factor <= 1.0 {
            return Err(Error::Usage(format!("--scale-factor must exceed 1, got {}", self.scale_factor)));
        }
        Ok(DetectParams {
            scale_factor: self.scale_factor,
            min_neighbors: self.min_neighbors,
            min_size: self.min_size,
            max_size: self.max_size,
            ..DetectParams::default()
        })
    }
}

fn parse_optimizer(name: &str) -> Result<OptimizerKind> {
    serde_json::from_value(serde_json::Value::String(name.to_ascii_lowercase()))
        .map_err(|_| Error::Usage(format!("unknown optimizer {name:?} (sgd, adam, adamw)")))
}

fn parse_class(text: &str) -> Result<Option<ClassLabel>> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let label = match text.parse::<usize>() {
        Ok(id) => ClassLabel::from_id(id).ok(),
        Err(_) => ClassLabel::from_name(text),
    };
    label.map(Some).ok_or_else(|| Error::Usage(format!("--class must be 0-5, a class name or auto, got {text:?}")))
}

fn preprocess_config(augment: bool) -> PreprocessConfig {
    if augment {
        PreprocessConfig::with_augmentations(Augmentation::standard())
    } else {
        PreprocessConfig::default()
    }
}

fn default_log_path(ckpt: &Path) -> PathBuf {
    let stem = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    ckpt.with_file_name(format!("{stem}.metrics.csv"))
}

fn cmd_train(a: &TrainArgs, workers: usize) -> Result<()> {
    let spec = ModelSpec::from_arch(&a.arch).map_err(|e| Error::Usage(e.to_string()))?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        batch_size: a.batch,
        epochs: a.epochs,
        early_stopping: a.early_stop,
        patience: a.patience,
        seed: a.seed,
        optimizer: parse_optimizer(&a.optimizer)?,
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let pre = PreprocessConfig { target_size: spec.input_shape[1], ..preprocess_config(a.augment) };
    let train_set = ImageDataset::open(&a.train, pre.clone(), workers)?;
    let valid_set = ImageDataset::open(&a.valid, pre.clone(), workers)?;
    let mut model = Model::<f32>::build(&spec, a.seed)?;
    let report = train(&mut model, &train_set, &valid_set, &cfg, |m| {
        eprintln!("epoch {:>3}  loss {:.6}  train {:.4}  valid {:.4}", m.epoch, m.train_loss, m.train_acc, m.valid_acc);
        std::ops::ControlFlow::Continue(())
    })?;
    let meta = CheckpointMeta { preprocess: pre, epoch: report.best_epoch, metrics: report.history.clone() };
    save_checkpoint(&report.best_model, &meta, &a.output)?;
    let log = a.log.clone().unwrap_or_else(|| default_log_path(&a.output));
    write_metric_log(&report.history, &log)?;
    let stop = if report.stopped_early { " (stopped early)" } else { "" };
    println!("best epoch {} valid accuracy {}{stop}", report.best_epoch, report.best_valid_acc);
    Ok(())
}

fn cmd_grid(a: &GridArgs, workers: usize) -> Result<()> {
    let grid = if a.space == "standard" {
        GridSpec::standard()
    } else {
        let path = Path::new(&a.space);
        serde_json::from_str(&error::read_string(path)?).map_err(|e| Error::format(path, e))?
    };
    let end = match a.limit {
        Some(n) => a.start.saturating_add(n).min(grid.len()),
        None => grid.len(),
    };
    if a.dry_run {
        println!("{}", grid.len());
        if let Some(out) = &a.output {
            let listed: Vec<_> = (a.start..end)
                .filter_map(|i| grid.nth(i).map(|point| gmf_core::train::GridResult { index: i, point, best_valid_acc: None, error: None }))
                .collect();
            error::write(out, &grid_csv(&listed))?;
        }
        return Ok(());
    }
    let (Some(train_path), Some(valid_path)) = (&a.train, &a.valid) else {
        return Err(Error::Usage("grid needs --train and --valid unless --dry-run is given".into()));
    };
    let pre = preprocess_config(a.augment);
    let train_set = ImageDataset::open(train_path, pre.clone(), workers)?;
    let valid_set = ImageDataset::open(valid_path, pre, workers)?;
    let base = TrainConfig { seed: a.seed, ..TrainConfig::default() };
    let results = grid_search(&grid, a.start..end, |point| {
        eprintln!("config {point:?}");
        let mut model = Model::<f32>::build(&point.model_spec(), a.seed)?;
        let report = train(&mut model, &train_set, &valid_set, &point.train_config(&base), |_| std::ops::ControlFlow::Continue(()))?;
        Ok(report.best_valid_acc)
    })?;
    for r in results.iter().take(5) {
        println!("#{} valid {:?} {:?}", r.index, r.best_valid_acc, r.point);
    }
    if let Some(out) = &a.output {
        error::write(out, &grid_csv(&results))?;
    }
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path, heatmap: Option<&Path>, batch: usize, workers: usize) -> Result<()> {
    let mut ck = load_checkpoint(ckpt)?;
    let set = ImageDataset::open(data, ck.meta.preprocess.clone(), workers)?;
    let ev = evaluate(&mut ck.model, &set, batch.max(1))?;
    let cm = &ev.confusion;
    let mut out = std::io::stdout().lock();
    let w = |out: &mut std::io::StdoutLock, s: String| writeln!(out, "{s}").map_err(|e| Error::io(Path::new("<stdout>"), e));
    w(&mut out, format!("accuracy {} ({}/{})", ev.accuracy, cm.trace(), cm.total()))?;
    w(&mut out, format!("{:>10} {}", "true\\pred", ClassLabel::ALL.map(|l| format!("{:>9}", l.name())).join(" ")))?;
    for (i, row) in cm.counts.iter().enumerate() {
        w(&mut out, format!("{:>10} {}", ClassLabel::ALL[i].name(), row.map(|n| format!("{n:>9}")).join(" ")))?;
    }
    if let Some(path) = heatmap {
        save_image(&confusion_heatmap(cm), path)?;
    }
    Ok(())
}

fn cmd_explain(ckpt: &Path, image: &Path, class: &str, output: &Path, alpha: f64, tri: bool, size: usize) -> Result<()> {
    let target = parse_class(class)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("--alpha must lie in [0, 1], got {alpha}")));
    }
    let mut ck = load_checkpoint(ckpt)?;
    let img = decode_image(image)?;
    let x = preprocess(&img, &ck.meta.preprocess, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0));
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let result = grad_cam(&mut ck.model, &x.reshape(&shape)?, target)?;
    let picture = if tri { triptych(&img, &result, size.max(1), alpha)? } else { overlay(&img, &result.map, alpha)? };
    save_image(&picture, output)?;
    let pred = gmf_core::nn::argmax(&result.logits);
    println!("predicted {} explained {}", ClassLabel::ALL[pred].name(), result.map.target.name());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_annotate(
    ckpt: &Path,
    cascade: &Path,
    frames: &Path,
    output: &Path,
    opts: AnnotateOptions,
    window: usize,
    params: DetectParams,
    workers: usize,
) -> Result<()> {
    if !(0.0..=1.0).contains(&opts.cam_alpha) {
        return Err(Error::Usage(format!("--alpha must lie in [0, 1], got {}", opts.cam_alpha)));
    }
    let ck = load_checkpoint(ckpt)?;
    let detector = CascadeDetector { cascade: load_cascade(cascade)?, params };
    let opts = AnnotateOptions { preprocess: ck.meta.preprocess.clone(), ..opts };
    let mut models = vec![ck.model; workers];
    let report = annotate_frames(frames, output, &detector, &mut models, &opts, window)?;
    let faces = report.rows.iter().filter(|r| r.face.is_some()).count();
    println!("{} frames, {} faces, {} unreadable", report.frames, faces, report.failed);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let workers = workers::resolve(cli.workers);
    match cli.command {
        Command::Manifest { root, output } => {
            let report = scan_folders(&root)?;
            write_manifest(&report.manifest, &output)?;
            let h = report.manifest.histogram();
            println!("{} images, per class {:?}", report.manifest.len(), h);
            for s in &report.skipped {
                eprintln!("skipped {s}");
            }
        }
        Command::Train(a) => cmd_train(&a, workers)?,
        Command::Grid(a) => cmd_grid(&a, workers)?,
        Command::Eval { ckpt, data, heatmap, batch } => cmd_eval(&ckpt, &data, heatmap.as_deref(), batch, workers)?,
        Command::Score { ckpt, dir, output } => {
            let mut ck = load_checkpoint(&ckpt)?;
            let rows = score_folder(&mut ck.model, &dir, &ck.meta.preprocess, workers)?;
            error::write(&output, &score_csv(&rows))?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} images scored, {} unreadable", rows.len() - failed, failed);
        }
        Command::Explain { ckpt, image, class, output, alpha, triptych, size } => {
            cmd_explain(&ckpt, &image, &class, &output, alpha, triptych, size)?
        }
        Command::Detect { cascade, image, output, params } => {
            let cascade = load_cascade(&cascade)?;
            let img = decode_image(&image)?;
            let dets = detect_multiscale(&cascade, &img, &params.params()?);
            error::write(&output, &detections_csv(&dets))?;
            println!("{} faces", dets.len());
        }
        Command::Annotate { ckpt, cascade, frames, output, gradcam, alpha, margin, window, params } => {
            let opts = AnnotateOptions { margin, gradcam, cam_alpha: alpha, ..AnnotateOptions::default() };
            cmd_annotate(&ckpt, &cascade, &frames, &output, opts, window, params.params()?, workers)?
        }
        Command::Params { arch } => {
            let spec = ModelSpec::from_arch(&arch).map_err(|e| Error::Usage(e.to_string()))?;
            println!("{}", Model::<f32>::build_uninit(&spec)?.count_parameters());
        }
        Command::ConvertCascade { input, output } => {
            let text = error::read_string(&input)?;
            let cascade = cascade_from_xml(&text).map_err(|e| Error::format(&input, e))?;
            error::write(&output, cascade_json(&cascade).as_bytes())?;
            let weak: usize = cascade.stages.iter().map(|s| s.classifiers.len()).sum();
            println!("{} stages, {weak} weak classifiers, window {}x{}", cascade.stages.len(), cascade.width, cascade.height);
        }
    }
    Ok(())
}

fn config_value(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Appends `--flag value` pairs from the `--config` file for every flag
/// of the chosen subcommand that the command line does not set itself.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config = None;
    for (i, a) in text.iter().enumerate() {
        if a == "--config" {
            config = text.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        }
    }
    let Some(config) = config else { return Ok(args) };
    let root = Cli::command();
    let Some(sub) = text.iter().skip(1).find_map(|a| root.find_subcommand(a)) else { return Ok(args) };
    let path = Path::new(&config);
    let json: serde_json::Value = serde_json::from_str(&error::read_string(path)?).map_err(|e| Error::format(path, e))?;
    let obj = json.as_object().ok_or_else(|| Error::format(path, "expected a JSON object"))?;
    let mut out = args;
    for (key, value) in obj {
        let long = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| Error::Usage(format!("{}: unknown setting {key:?} for {}", path.display(), sub.get_name())))?;
        let given = text.iter().any(|t| {
            t == &format!("--{long}")
                || t.starts_with(&format!("--{long}="))
                || arg.get_short().is_some_and(|s| t == &format!("-{s}") || (t.starts_with(&format!("-{s}")) && !t.starts_with("--")))
        });
        if given || long == "config" {
            continue;
        }
        let is_switch = matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::Count);
        let values: Vec<&serde_json::Value> = match value {
            serde_json::Value::Array(items) => items.iter().collect(),
            v => vec![v],
        };
        for v in values {
            if is_switch {
                if v.as_bool() == Some(true) {
                    out.push(format!("--{long}").into());
                }
                continue;
            }
            let s = config_value(v).ok_or_else(|| Error::Usage(format!("{}: setting {key:?} must be a scalar", path.display())))?;
            out.push(format!("--{long}").into());
            out.push(s.into());
        }
    }
    Ok(out)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).try_init();
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for usage errors, 2 for failures while running.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return if matches!(e, Error::Usage(_)) { 1 } else { 2 };
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn class_argument() {
        assert_eq!(parse_class("auto").unwrap(), None);
        assert_eq!(parse_class("3").unwrap(), Some(ClassLabel::Anger));
        assert_eq!(parse_class("fear").unwrap(), Some(ClassLabel::Fear));
        assert!(parse_class("6").is_err());
    }

    #[test]
    fn optimizer_names() {
        assert_eq!(parse_optimizer("SGD").unwrap(), OptimizerKind::Sgd);
        assert!(parse_optimizer("rmsprop").is_err());
    }
}
