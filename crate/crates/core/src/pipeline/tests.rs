use std::path::PathBuf;

use super::run::{cnn_training_set, feature_names, fit_forest};
use super::*;
use crate::cnn::CnnModel;
use crate::error::Error;
use crate::image::io::save_gray;
use crate::image::{FovMask, FundusImage, GrayImage};

fn small_synth() -> SynthParams {
    SynthParams {
        size: 128,
        lesions: (2, 4),
        vessels: 3,
        ..SynthParams::default()
    }
}

#[test]
fn feature_modes() {
    assert_eq!(FeatureMode::Hcf.dim(), 63);
    assert_eq!(FeatureMode::Cnn.dim(), 128);
    assert_eq!(FeatureMode::Hybrid.dim(), 191);
    for m in FeatureMode::ALL {
        assert_eq!(m.name().parse::<FeatureMode>().unwrap(), m);
        assert_eq!(feature_names(m).len(), m.dim());
    }
    assert!("both".parse::<FeatureMode>().is_err());
    let names = feature_names(FeatureMode::Hybrid);
    assert_eq!((names[0].as_str(), names[63].as_str(), names[190].as_str()), ("m_R", "cnn_000", "cnn_127"));
}

#[test]
fn default_config_round_trips() {
    let cfg = PipelineConfig::default();
    cfg.validate().unwrap();
    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    // an empty document is the default configuration
    assert_eq!(PipelineConfig::from_toml("").unwrap(), cfg);
}

#[test]
fn edited_config_round_trips() {
    let mut cfg = PipelineConfig {
        seed: 12345,
        mode: FeatureMode::Cnn,
        fov_threshold: 0.26,
        ..PipelineConfig::default()
    };
    cfg.candidates.max_per_scale = 80;
    cfg.candidates.lower_threshold = Some(0.01);
    cfg.cnn.beta = Some(0.8);
    cfg.cnn.single_precision = true;
    cfg.forest.grid = vec![10, 20];
    cfg.forest.max_features = Some(7);
    cfg.evaluation.strict = false;
    cfg.evaluation.lesion_agreement = 0.75;
    cfg.synth.lesions = (0, 3);
    let text = cfg.to_toml().unwrap();
    let back = PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml().unwrap(), text);
    assert_eq!(back.cnn_config().seed, 12345);
    assert_eq!(back.forest_config().seed, 12345);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(matches!(PipelineConfig::from_toml("fov_threshold = 1.5"), Err(Error::Config(_))));
    assert!(PipelineConfig::from_toml("unknown_key = 1").is_err());
    for section in ["candidates", "cnn", "features", "forest", "evaluation", "synth"] {
        assert!(PipelineConfig::from_toml(&format!("[{section}]\nepochs = 3")).is_err(), "{section}");
    }
    assert!(PipelineConfig::from_toml("[forest]\ntrees = 0").is_err());
    assert!(PipelineConfig::from_toml("[cnn]\neta0 = -1.0").is_err());
    assert!(PipelineConfig::from_toml("[evaluation]\nfpi = 0.0").is_err());
    assert!(PipelineConfig::from_toml("mode = \"both\"").is_err());
    let cfg = PipelineConfig::from_toml("seed = 3\nmode = \"hcf\"\n[candidates]\nmax_per_scale = 50").unwrap();
    assert_eq!((cfg.seed, cfg.mode, cfg.candidates.max_per_scale), (3, FeatureMode::Hcf, 50));
}

fn manifest_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn write_image(dir: &std::path::Path, name: &str) -> PathBuf {
    let img = FundusImage::from_gray(GrayImage::from_fn(40, 30, |x, y| if (x as f64 - 20.0).hypot(y as f64 - 15.0) < 12.0 { 0.6 } else { 0.0 }));
    let p = dir.join(name);
    crate::image::io::save_fundus(&p, &img).unwrap();
    PathBuf::from(name)
}

#[test]
fn empty_manifest_is_an_empty_dataset() {
    let dir = manifest_dir();
    std::fs::write(dir.path().join("m.toml"), "").unwrap();
    let ds = load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).unwrap();
    assert!(ds.is_empty());
}

#[test]
fn full_confidence_map_gives_lesions_and_label() {
    let dir = manifest_dir();
    let image = write_image(dir.path(), "a.png");
    save_gray(dir.path().join("a_gt.png"), &GrayImage::filled(40, 30, 1.0)).unwrap();
    let unlabeled = write_image(dir.path(), "b.png");
    let text = format!(
        "[[record]]\nid = \"a\"\nimage = \"{}\"\nlesion_maps = [\"a_gt.png\"]\n\n[[record]]\nid = \"b\"\nimage = \"{}\"\n",
        image.display(),
        unlabeled.display()
    );
    std::fs::write(dir.path().join("m.toml"), text).unwrap();
    let ds = load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).unwrap();
    assert_eq!(ds.ids().collect::<Vec<_>>(), ["a", "b"]);

    let a = ds.load(0).unwrap();
    assert!(a.is_supervised());
    assert!(a.ground_truth().unwrap().count() >= 1);
    assert_eq!(a.label, Some(1));
    // the field of view was estimated from the bright disk
    assert!(a.fov.fov_width() > 15 && a.fov.fov_width() < 30);

    let b = ds.load(1).unwrap();
    assert!(!b.is_supervised());
    assert_eq!(b.label, None);
    assert!(b.ground_truth().is_none());
}

#[test]
fn manifest_errors_name_the_record() {
    let dir = manifest_dir();
    let image = write_image(dir.path(), "a.png");
    let missing = "[[record]]\nid = \"x7\"\nimage = \"nope.png\"\n";
    std::fs::write(dir.path().join("m.toml"), missing).unwrap();
    let err = load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).unwrap_err();
    assert!(err.to_string().contains("x7"), "{err}");

    let dup = format!("[[record]]\nid = \"a\"\nimage = \"{0}\"\n[[record]]\nid = \"a\"\nimage = \"{0}\"\n", image.display());
    std::fs::write(dir.path().join("m.toml"), dup).unwrap();
    assert!(load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).is_err());

    // a lesion map that is not an image fails on load, naming the record
    std::fs::write(dir.path().join("junk.png"), b"not a png").unwrap();
    let bad = format!("[[record]]\nid = \"r9\"\nimage = \"{}\"\nlesion_maps = [\"junk.png\"]\n", image.display());
    std::fs::write(dir.path().join("m.toml"), bad).unwrap();
    let ds = load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).unwrap();
    let err = ds.load(0).unwrap_err();
    assert!(matches!(err, Error::Record { ref id, .. } if id == "r9"), "{err}");

    std::fs::write(dir.path().join("m.toml"), "[[record]]\nid = 3\n").unwrap();
    assert!(load_dataset(dir.path().join("m.toml"), &EvalConfig::default(), 0.15).is_err());
}

#[test]
fn strict_and_inclusive_agreement_in_manifests() {
    let dir = manifest_dir();
    let image = write_image(dir.path(), "a.png");
    save_gray(dir.path().join("gt.png"), &GrayImage::filled(40, 30, 0.75)).unwrap();
    let level = crate::image::io::load_gray(dir.path().join("gt.png")).unwrap().data()[0];
    let text = format!("[[record]]\nid = \"a\"\nimage = \"{}\"\nlesion_maps = [\"gt.png\"]\n", image.display());
    std::fs::write(dir.path().join("m.toml"), text).unwrap();
    let load = |strict| {
        let ev = EvalConfig {
            lesion_agreement: level,
            strict,
            ..EvalConfig::default()
        };
        load_dataset(dir.path().join("m.toml"), &ev, 0.15).unwrap().load(0).unwrap()
    };
    // a map sitting exactly on the level is kept by ">=" and dropped by ">"
    let inclusive = load(false);
    assert_eq!(inclusive.lesion_mask.unwrap().count(), 40 * 30);
    assert_eq!(inclusive.label, Some(1));
    let strict = load(true);
    assert_eq!(strict.ground_truth().unwrap().count(), 0);
    assert_eq!(strict.label, Some(0));
}

#[test]
fn synthetic_datasets_are_reproducible() {
    let p = small_synth();
    let (a, b) = (manifest_dir(), manifest_dir());
    let ma = generate_synthetic(a.path(), 9, 3, &p).unwrap();
    let mb = generate_synthetic(b.path(), 9, 3, &p).unwrap();
    assert_eq!(ma.records, mb.records);
    for r in &ma.records {
        for f in std::iter::once(&r.image).chain(&r.lesion_maps).chain(&r.vessels).chain(&r.fov) {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }
    assert_eq!(
        std::fs::read(a.path().join("manifest.toml")).unwrap(),
        std::fs::read(b.path().join("manifest.toml")).unwrap()
    );

    // what is read back equals what was rendered
    let ds = load_dataset(a.path().join("manifest.toml"), &EvalConfig::default(), 0.15).unwrap();
    for i in 0..3 {
        let s = synthesize(9, i as u64, &p).unwrap();
        let img = ds.load(i).unwrap();
        assert_eq!(img.image, s.image);
        assert_eq!(img.lesion_mask.as_ref(), Some(&s.lesion_mask));
        assert_eq!(img.vessels.as_ref(), Some(&s.vessel_mask));
        assert_eq!(img.fov.mask(), &s.fov);
        assert_eq!(img.label, Some(u8::from(s.has_lesions())));
    }
}

#[test]
fn lesion_free_synthetic_images_are_negative() {
    let p = SynthParams {
        lesions: (0, 0),
        ..small_synth()
    };
    let dir = manifest_dir();
    let m = generate_synthetic(dir.path(), 1, 2, &p).unwrap();
    assert!(m.records.iter().all(|r| r.label == Some(0)));
    let ds = Dataset::new(m, &EvalConfig::default(), 0.15).unwrap();
    let img = ds.load(0).unwrap();
    assert_eq!(img.ground_truth().unwrap().count(), 0);
}

/// Analyses of a few small synthetic images, with an untrained CNN and a
/// small forest for each mode.
fn tiny_models(cfg: &PipelineConfig) -> (Vec<ImageAnalysis>, CnnModel) {
    let analyses: Vec<ImageAnalysis> = (0..3)
        .map(|i| {
            let s = synthesize(4, i, &cfg.synth).unwrap();
            analyze(&s.to_loaded(format!("t{i}")).unwrap(), cfg, FeatureMode::Hybrid).unwrap()
        })
        .collect();
    let set = cnn_training_set(&analyses, None).unwrap();
    let cnn = crate::cnn::train(
        &set,
        &crate::cnn::TrainConfig {
            max_epochs: 0,
            ..cfg.cnn_config()
        },
    )
    .unwrap()
    .model;
    (analyses, cnn)
}

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 5,
        synth: small_synth(),
        ..PipelineConfig::default()
    };
    cfg.forest.trees = 10;
    cfg.forest.grid = Vec::new();
    cfg
}

#[test]
fn detection_uses_the_mode_vector() {
    let cfg = tiny_config();
    let (analyses, cnn) = tiny_models(&cfg);
    assert!(analyses.iter().all(|a| !a.candidates.is_empty()));
    let mut tables = Vec::new();
    for mode in FeatureMode::ALL {
        let (models, report) = train_forest_stage(&analyses, &cfg, mode, Some(&cnn)).unwrap();
        assert_eq!(models.forest.n_features, mode.dim());
        assert_eq!(models.cnn.is_some(), mode.uses_cnn());
        assert_eq!(report.candidates, analyses.iter().map(|a| a.candidates.len()).sum::<usize>());
        let d = run_detect(&analyses[0], &models).unwrap();
        assert_eq!(d.probabilities.len(), analyses[0].candidates.len());
        assert_eq!(d.image_probability, d.probabilities.iter().copied().fold(0.0, f64::max));
        // rerunning gives the same output
        assert_eq!(run_detect(&analyses[0], &models).unwrap(), d);
        tables.push(feature_table(&analyses, mode, Some(&cnn)).unwrap());
    }
    // the hybrid table is the hand-crafted block followed by the CNN block,
    // over the same candidates
    let (h, c, hy) = (&tables[0], &tables[1], &tables[2]);
    assert_eq!(h.hstack(c).unwrap(), *hy);
    assert_eq!(hy.dim(), 191);
}

#[test]
fn forest_dimension_must_match() {
    let cfg = tiny_config();
    let (analyses, cnn) = tiny_models(&cfg);
    let (hcf_models, _) = train_forest_stage(&analyses, &cfg, FeatureMode::Hcf, None).unwrap();
    let wrong = TrainedModels {
        mode: FeatureMode::Hybrid,
        cnn: Some(cnn),
        forest: hcf_models.forest,
    };
    let err = run_detect(&analyses[0], &wrong).unwrap_err();
    assert!(err.to_string().contains("191"), "{err}");
    // the CNN block cannot be built without a CNN
    assert!(train_forest_stage(&analyses, &cfg, FeatureMode::Cnn, None).is_err());
}

#[test]
fn image_without_candidates_scores_zero() {
    let cfg = tiny_config();
    let (analyses, cnn) = tiny_models(&cfg);
    let (models, _) = train_forest_stage(&analyses, &cfg, FeatureMode::Hybrid, Some(&cnn)).unwrap();
    let flat = LoadedImage {
        id: "flat".into(),
        image: FundusImage::from_gray(GrayImage::filled(96, 96, 0.5)),
        fov: FovMask::full(96, 96),
        lesion_mask: None,
        vessels: None,
        label: None,
    };
    let a = analyze(&flat, &cfg, FeatureMode::Hybrid).unwrap();
    assert!(a.candidates.is_empty());
    let d = run_detect(&a, &models).unwrap();
    assert!(d.probabilities.is_empty());
    assert_eq!(d.image_probability, 0.0);
}

#[test]
fn training_is_deterministic() {
    let cfg = PipelineConfig {
        mode: FeatureMode::Hcf,
        ..tiny_config()
    };
    let (analyses, _) = tiny_models(&cfg);
    let (a, _) = train_models(&analyses, &cfg).unwrap();
    let (b, _) = train_models(&analyses, &cfg).unwrap();
    assert_eq!(a.forest.trees, b.forest.trees);
    let mut other = cfg.clone();
    other.seed = 6;
    let (c, _) = train_models(&analyses, &other).unwrap();
    assert_ne!(a.forest.trees, c.forest.trees);
}

#[test]
fn detections_round_trip_on_disk() {
    let cfg = PipelineConfig {
        mode: FeatureMode::Hcf,
        ..tiny_config()
    };
    let (analyses, _) = tiny_models(&cfg);
    let (models, _) = train_models(&analyses, &cfg).unwrap();
    let dets: Vec<ImageDetections> = analyses.iter().map(|a| run_detect(a, &models).unwrap()).collect();
    let dir = manifest_dir();
    write_detections(dir.path(), &dets).unwrap();
    let back = read_detections(dir.path()).unwrap();
    assert_eq!(back.len(), dets.len());
    for (a, b) in dets.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.probabilities, b.probabilities);
        assert_eq!(a.image_probability, b.image_probability);
        assert_eq!(a.detections(), b.detections());
    }

    let gts: Vec<_> = analyses.iter().map(|a| a.ground_truth.clone().unwrap()).collect();
    let (curve, summary) = evaluate_lesions(&back, &gts, &cfg.evaluation).unwrap();
    assert_eq!(summary.cpm, curve.cpm());
    let text = EvaluationSummary {
        mode: Some(FeatureMode::Hcf),
        lesion: Some(summary),
        image: None,
    }
    .to_toml()
    .unwrap();
    assert!(text.contains("mode = \"hcf\"") && text.contains("cpm ="), "{text}");
}

#[test]
fn supervision_follows_annotations() {
    let cfg = tiny_config();
    let s = synthesize(4, 0, &cfg.synth).unwrap();
    let mut img = s.to_loaded("u").unwrap();
    img.lesion_mask = None;
    img.label = None;
    let a = analyze(&img, &cfg, FeatureMode::Hcf).unwrap();
    assert!(!a.is_supervised());
    // unlabeled images are left out of forest training
    let t = feature_table(std::slice::from_ref(&a), FeatureMode::Hcf, None).unwrap();
    assert!(t.labels().is_err());
    assert!(fit_forest(&t, &cfg.forest_config()).is_err());
}
