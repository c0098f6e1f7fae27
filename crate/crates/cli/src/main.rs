//! Command-line front end: one verb per pipeline stage.
//!
//! Exit codes: 0 on success, 2 for bad input (unreadable files, malformed
//! manifests or models, invalid arguments), 3 when a numerical procedure
//! fails (diverging training, single-class training data).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use redlesion_core::candidates::detect_candidates;
use redlesion_core::cnn::{self, load_model, save_model};
use redlesion_core::forest::{load_forest, save_forest};
use redlesion_core::image::io::{load_fundus, load_mask, save_label_map, save_mask};
use redlesion_core::image::{compute_fov_mask, FovMask};
use redlesion_core::patches::{load_patch_set, save_patch_set};
use redlesion_core::pipeline::report::{ImageSummary, LesionSummary};
use redlesion_core::pipeline::run::{cnn_training_set, feature_names, fit_forest};
use redlesion_core::pipeline::{
    analyze_dataset, evaluate_images, evaluate_lesions, feature_table, generate_synthetic, load_dataset, read_detections,
    run_detect, write_detections, Dataset, EvaluationSummary, FeatureMode, ImageDetections, LoadedImage, PipelineConfig,
    TrainedModels,
};
use redlesion_core::FeatureTable;

#[derive(Parser)]
#[command(name = "redlesion", version, about = "Red lesion detection in retinal fundus images")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the field-of-view mask of an image.
    Fov {
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Lightness threshold in (0, 1); the configuration value by default.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Detect lesion candidates in one image and write a 16-bit label map.
    DetectCandidates {
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Precomputed field-of-view mask.
        #[arg(long)]
        fov: Option<PathBuf>,
        /// Also write one CSV row per candidate.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build the augmented CNN training patches of a manifest.
    BuildPatches {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train the CNN on a patch set.
    TrainCnn {
        patches: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Write the per-epoch loss and learning rate as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write the 128 learned features of every candidate of a manifest.
    CnnFeatures {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the 63 hand-crafted features of every candidate of a manifest.
    Features {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train the random forest on one or more feature tables, joined column
    /// wise (hand-crafted table first for the hybrid vector).
    TrainRf {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score the candidates of every image of a manifest.
    Detect {
        manifest: PathBuf,
        #[arg(long)]
        forest: PathBuf,
        /// CNN model, required by the cnn and hybrid modes.
        #[arg(long)]
        cnn: Option<PathBuf>,
        /// hcf, cnn or hybrid; the configuration value by default.
        #[arg(long)]
        mode: Option<FeatureMode>,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-lesion FROC curve and CPM of a detection directory.
    EvalLesion {
        detections: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the curve as CSV (threshold, fpi, sensitivity).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print CPM and the sensitivity at the configured FPI.
        #[arg(long)]
        summary: bool,
        /// Write the summary as TOML.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-image ROC curve and AUC of a detection directory.
    EvalImage {
        detections: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the curve as CSV (threshold, fpr, tpr).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print AUC and the sensitivity at the configured specificity.
        #[arg(long)]
        summary: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a manifest.
    Synth {
        dir: PathBuf,
        #[arg(short = 'n', long, default_value_t = 30)]
        images: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e.chain().any(|c| c.downcast_ref::<redlesion_core::Error>().is_some_and(|e| e.is_numeric()));
            ExitCode::from(if numeric { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }

    match cli.command {
        Command::Fov { image, output, threshold } => {
            let img = load_fundus(&image)?;
            let fov = compute_fov_mask(&img, threshold.unwrap_or(cfg.fov_threshold))?;
            save_mask(&output, fov.mask())?;
            println!("fov_width = {}", fov.fov_width());
        }
        Command::DetectCandidates { image, output, fov, csv } => {
            let img = load_fundus(&image)?;
            let fov = match fov {
                Some(p) => FovMask::new(load_mask(p)?)?,
                None => compute_fov_mask(&img, cfg.fov_threshold)?,
            };
            let set = detect_candidates(&img, &fov, &cfg.candidates)?;
            save_label_map(&output, set.width, set.height, &set.label_map()?)?;
            if let Some(p) = csv {
                let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
                writeln!(f, "candidate_id,centroid_x,centroid_y,area,major_axis,minor_axis")?;
                for c in set.iter() {
                    writeln!(f, "{},{},{},{},{},{}", c.id, c.centroid.0, c.centroid.1, c.area(), c.major_axis, c.minor_axis)?;
                }
                f.flush()?;
            }
            println!("candidates = {}", set.len());
        }
        Command::BuildPatches { manifest, output } => {
            let ds = dataset(&manifest, &cfg)?;
            let analyses = analyze_dataset(&ds, &cfg, FeatureMode::Cnn)?;
            let set = cnn_training_set(&analyses, cfg.cnn.beta)?;
            save_patch_set(&output, &set)?;
            println!("patches = {}\nlesion_patches = {}\nbeta = {}", set.len(), set.positives(), set.beta);
        }
        Command::TrainCnn { patches, output, log } => {
            let set = load_patch_set(&patches)?;
            info!("training on {} patches", set.len());
            let trained = cnn::train(&set, &cfg.cnn_config())?;
            save_model(&output, &trained.model)?;
            if let Some(p) = log {
                let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
                writeln!(f, "epoch,loss,eta,halved")?;
                for e in &trained.log.epochs {
                    writeln!(f, "{},{},{},{}", e.epoch, e.loss, e.eta, e.halved)?;
                }
                f.flush()?;
            }
            let last = trained.log.epochs.last();
            println!("epochs = {}\nconverged = {}", trained.log.epochs.len(), trained.log.converged);
            if let Some(e) = last {
                println!("final_loss = {}", e.loss);
            }
        }
        Command::CnnFeatures { manifest, model, output } => {
            let model = load_model(&model)?;
            let ds = dataset(&manifest, &cfg)?;
            let analyses = analyze_dataset(&ds, &cfg, FeatureMode::Cnn)?;
            let table = feature_table(&analyses, FeatureMode::Cnn, Some(&model))?;
            table.save(&output)?;
            println!("rows = {}", table.len());
        }
        Command::Features { manifest, output } => {
            let ds = dataset(&manifest, &cfg)?;
            let analyses = analyze_dataset(&ds, &cfg, FeatureMode::Hcf)?;
            let table = feature_table(&analyses, FeatureMode::Hcf, None)?;
            table.save(&output)?;
            println!("rows = {}", table.len());
        }
        Command::TrainRf { tables, output } => {
            let mut table = FeatureTable::load(&tables[0]).with_context(|| tables[0].display().to_string())?;
            for p in &tables[1..] {
                let next = FeatureTable::load(p).with_context(|| p.display().to_string())?;
                table = table.hstack(&next)?;
            }
            let Some(mode) = FeatureMode::ALL.into_iter().find(|m| feature_names(*m) == table.names) else {
                bail!("the joined columns match no feature mode; give the hand-crafted table before the CNN table");
            };
            let (forest, selection) = fit_forest(&table, &cfg.forest_config())?;
            save_forest(&output, &forest)?;
            println!("mode = \"{mode}\"\ntrees = {}", forest.n_trees());
            if let Some(sel) = selection {
                for (t, e) in sel.errors {
                    println!("oob_error_{t} = {e}");
                }
            }
        }
        Command::Detect { manifest, forest, cnn, mode, output } => {
            let mode = mode.unwrap_or(cfg.mode);
            let forest = load_forest(&forest)?;
            let cnn = match (mode.uses_cnn(), cnn) {
                (true, Some(p)) => Some(load_model(p)?),
                (true, None) => bail!("the {mode} mode needs --cnn"),
                (false, _) => None,
            };
            let models = TrainedModels { mode, cnn, forest };
            let ds = dataset(&manifest, &cfg)?;
            let analyses = analyze_dataset(&ds, &cfg, mode)?;
            let dets = analyses.iter().map(|a| run_detect(a, &models)).collect::<redlesion_core::Result<Vec<_>>>()?;
            write_detections(&output, &dets)?;
            for d in &dets {
                println!("{} {}", d.id, d.image_probability);
            }
        }
        Command::EvalLesion {
            detections,
            manifest,
            output,
            summary,
            report,
        } => {
            let dets = read_detections(&detections)?;
            let ds = dataset(&manifest, &cfg)?;
            let mut kept = Vec::new();
            let mut gts = Vec::new();
            let records = match_records(&ds, &dets)?;
            for (d, img) in dets.into_iter().zip(records) {
                match img.ground_truth() {
                    Some(gt) => {
                        gts.push(gt);
                        kept.push(d);
                    }
                    None => warn!("{} has no lesion annotations; left out", img.id),
                }
            }
            let (curve, s) = evaluate_lesions(&kept, &gts, &cfg.evaluation)?;
            if let Some(p) = output {
                curve.write_csv(std::fs::File::create(p)?)?;
            }
            emit(summary, report.as_deref(), Some(s), None)?;
        }
        Command::EvalImage {
            detections,
            manifest,
            output,
            summary,
            report,
        } => {
            let dets = read_detections(&detections)?;
            let ds = dataset(&manifest, &cfg)?;
            let mut probs = Vec::new();
            let mut labels = Vec::new();
            for (d, img) in dets.iter().zip(match_records(&ds, &dets)?) {
                match img.label {
                    Some(l) => {
                        probs.push(d.image_probability);
                        labels.push(l == 1);
                    }
                    None => warn!("{} has no image label; left out", img.id),
                }
            }
            let (curve, s) = evaluate_images(&probs, &labels, &cfg.evaluation)?;
            if let Some(p) = output {
                curve.write_csv(std::fs::File::create(p)?)?;
            }
            emit(summary, report.as_deref(), None, Some(s))?;
        }
        Command::Synth { dir, images } => {
            let m = generate_synthetic(&dir, cfg.seed, images, &cfg.synth)?;
            let positives = m.records.iter().filter(|r| r.label == Some(1)).count();
            println!("images = {}\nwith_lesions = {positives}\nmanifest = \"{}\"", m.records.len(), dir.join("manifest.toml").display());
        }
    }
    Ok(())
}

fn dataset(manifest: &Path, cfg: &PipelineConfig) -> Result<Dataset> {
    Ok(load_dataset(manifest, &cfg.evaluation, cfg.fov_threshold)?)
}

/// Loads the manifest record of every detected image, in order.
fn match_records(ds: &Dataset, dets: &[ImageDetections]) -> Result<Vec<LoadedImage>> {
    dets.iter()
        .map(|d| {
            let id = &d.id;
            let Some(i) = ds.ids().position(|r| r == id) else {
                bail!("image {id} is not in the manifest");
            };
            Ok(ds.load(i)?)
        })
        .collect()
}

fn emit(print: bool, report: Option<&Path>, lesion: Option<LesionSummary>, image: Option<ImageSummary>) -> Result<()> {
    let text = EvaluationSummary { mode: None, lesion, image }.to_toml()?;
    if print {
        print!("{text}");
    }
    if let Some(p) = report {
        std::fs::write(p, &text)?;
    }
    Ok(())
}
