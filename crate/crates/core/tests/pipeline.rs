use std::sync::OnceLock;

use har_core::dataset::{select_column_set, standardize, synthesize, ActivityLabel, LabeledDataset, NUM_CLASSES};
use har_core::fusion::{
    load_ensemble, predict_fusion, predict_fusion_dataset, save_ensemble, train_fusion, vote, FusionEnsemble,
    MANIFEST_FILE,
};
use har_core::introspect::{
    aggregate, capture, export_heatmap, feature_maps, render_heatmap, sample_windows_per_activity, Aggregation,
};
use har_core::model::{build, evaluate, fit, predict, predict_dataset, predict_window, train, NetworkConfig, TrainedModel};
use har_core::model_io::{load_model, save_model, to_bytes};
use har_core::nn::{Layer, Tensor};
use har_core::occlusion::occlusion_report;
use har_core::HarError;

fn standardized(classes: usize, per_class: usize, seed: u64) -> LabeledDataset {
    standardize(&synthesize(classes, per_class, seed).unwrap(), None).unwrap().0
}

/// Six-class corpus and a briefly trained depth-3 CNN shared by several tests.
fn trained_cnn() -> &'static (LabeledDataset, TrainedModel<f64>) {
    static CELL: OnceLock<(LabeledDataset, TrainedModel<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = standardized(NUM_CLASSES, 6, 21);
        let cfg = NetworkConfig {
            epochs: 4,
            seed: 5,
            ..NetworkConfig::default()
        };
        let model = fit::<f64>(&ds, &cfg).unwrap();
        (ds, model)
    })
}

fn small_ensemble() -> &'static (LabeledDataset, FusionEnsemble<f64>) {
    static CELL: OnceLock<(LabeledDataset, FusionEnsemble<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = standardized(NUM_CLASSES, 34, 22);
        let cfg = NetworkConfig {
            epochs: 1,
            seed: 9,
            ..NetworkConfig::default()
        };
        let ensemble = train_fusion::<f64>(&ds, &cfg).unwrap();
        (ds, ensemble)
    })
}

#[test]
fn separable_pair_is_learned_within_five_epochs() {
    let ds = standardized(2, 50, 7);
    let cfg = NetworkConfig {
        conv_depth: 1,
        epochs: 5,
        seed: 1,
        ..NetworkConfig::default()
    };
    let model = fit::<f64>(&ds, &cfg).unwrap();
    assert_eq!(evaluate(&model, &ds).unwrap().accuracy, 1.0);
    assert_eq!(model.history.len(), 5);
}

#[test]
fn training_is_deterministic_per_seed() {
    let ds = standardized(3, 8, 8);
    let cfg = NetworkConfig {
        conv_depth: 2,
        epochs: 2,
        seed: 77,
        ..NetworkConfig::default()
    };
    let a = to_bytes(&fit::<f64>(&ds, &cfg).unwrap()).unwrap();
    let b = to_bytes(&fit::<f64>(&ds, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = NetworkConfig { seed: 78, ..cfg };
    assert_ne!(a, to_bytes(&fit::<f64>(&ds, &other).unwrap()).unwrap());
}

#[test]
fn separable_training_loss_settles() {
    let ds = standardized(2, 50, 7);
    let cfg = NetworkConfig {
        conv_depth: 1,
        epochs: 15,
        seed: 1,
        ..NetworkConfig::default()
    };
    let model = fit::<f64>(&ds, &cfg).unwrap();
    let losses: Vec<f64> = model.history.iter().map(|h| h.loss).collect();
    for w in losses[5..].windows(2) {
        assert!(w[1] <= w[0], "loss rose after epoch 5: {losses:?}");
    }
}

#[test]
fn zero_epochs_keeps_the_initialization() {
    let ds = standardized(2, 2, 1);
    let cfg = NetworkConfig {
        epochs: 0,
        ..NetworkConfig::default()
    };
    let model = fit::<f64>(&ds, &cfg).unwrap();
    assert!(model.history.is_empty());
    assert_eq!(
        to_bytes(&model).unwrap(),
        to_bytes(&TrainedModel {
            config: cfg.clone(),
            network: build::<f64>(&cfg).unwrap(),
            history: vec![]
        })
        .unwrap()
    );
}

#[test]
fn diverging_training_reports_non_finite_parameters() {
    let ds = standardized(2, 4, 1);
    let cfg = NetworkConfig {
        conv_depth: 1,
        epochs: 3,
        learning_rate: 1e300,
        ..NetworkConfig::default()
    };
    match fit::<f64>(&ds, &cfg) {
        Err(HarError::NonFinite { epoch, .. }) => assert!(epoch < 3),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn fusion_factorizes_through_members() {
    let (ds, ensemble) = small_ensemble();
    assert!(ds.len() >= 200);
    let batched = predict_fusion_dataset(ensemble, ds).unwrap();
    for (i, w) in ds.windows().iter().enumerate().take(200) {
        let [m, m1, m2] = ensemble
            .members()
            .map(|model| predict(model, &select_column_set(w, model.column_subset())).unwrap().0);
        let expected = vote(m, m1, m2);
        assert_eq!(predict_fusion(ensemble, w).unwrap(), expected, "window {i}");
        assert_eq!(batched[i], expected, "window {i}");
    }
}

#[test]
fn ensemble_round_trips_through_a_directory() {
    let (ds, ensemble) = small_ensemble();
    let dir = tempfile::tempdir().unwrap();
    save_ensemble(ensemble, dir.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["members"][1]["columns"], serde_json::json!([3, 4, 5, 6, 7, 8]));
    assert_eq!(manifest["members"][2]["columns"], serde_json::json!([3, 4, 6, 7]));
    let loaded = load_ensemble::<f64>(dir.path()).unwrap();
    assert_eq!(
        predict_fusion_dataset(&loaded, ds).unwrap(),
        predict_fusion_dataset(ensemble, ds).unwrap()
    );
    for (a, b) in loaded.members().iter().zip(ensemble.members()) {
        assert_eq!(to_bytes(*a).unwrap(), to_bytes(b).unwrap());
    }
    std::fs::remove_file(dir.path().join("model_m2.harm")).unwrap();
    assert!(matches!(load_ensemble::<f64>(dir.path()), Err(HarError::MissingFile(_))));
}

/// An all-column model whose head ignores its input and always answers `class`.
fn constant_model(class: ActivityLabel) -> TrainedModel<f64> {
    let cfg = NetworkConfig {
        conv_depth: 1,
        epochs: 0,
        ..NetworkConfig::default()
    };
    let mut network = build::<f64>(&cfg).unwrap();
    for layer in network.layers_mut() {
        if let Layer::Dense(d) = layer {
            d.weight.value.data_mut().iter_mut().for_each(|w| *w = 0.0);
            let mut bias = vec![0.0; NUM_CLASSES];
            bias[class.index()] = 3.0;
            d.bias.value = Tensor::new(vec![NUM_CLASSES], bias).unwrap();
        }
    }
    TrainedModel {
        config: cfg,
        network,
        history: vec![],
    }
}

#[test]
fn constant_model_occlusion_is_trivial() {
    let ds = standardized(NUM_CLASSES, 3, 4);
    let model = constant_model(ActivityLabel::Sitting);
    let report = occlusion_report(&model, &ds).unwrap();
    for a in ActivityLabel::ALL {
        let expected = if a == ActivityLabel::Sitting { 1.0 } else { 0.0 };
        assert!(report.retention[a.index()].iter().all(|&r| r == expected));
        assert_eq!(report.baseline[a.index()], expected);
    }
}

#[test]
fn retention_is_one_exactly_when_nothing_flips() {
    let (ds, model) = trained_cnn();
    let report = occlusion_report(model, ds).unwrap();
    for a in ActivityLabel::ALL {
        for c in 0..9 {
            let r = report.get(a, c);
            assert!((0.0..=1.0).contains(&r));
            let flips = (0..ds.len()).filter(|&i| ds.labels()[i] == a).any(|i| {
                let w = har_core::occlusion::occlude_column(&ds.windows()[i], c).unwrap();
                predict_window(model, &w).unwrap().0 != a
            });
            assert_eq!(r == 1.0, !flips, "{a} column {c}");
        }
    }
}

#[test]
fn occlusion_requires_every_activity() {
    let (_, model) = trained_cnn();
    let two = standardized(2, 3, 1);
    assert!(occlusion_report(model, &two).is_err());
}

#[test]
fn capture_never_changes_predictions() {
    let (ds, model) = trained_cnn();
    for w in ds.windows().iter().take(12) {
        let before = predict_window(model, w).unwrap();
        for layer in 1..=3 {
            let (_, probs) = capture(model, w, layer).unwrap();
            assert_eq!(probs.as_slice(), before.1.as_slice());
        }
        assert_eq!(predict_window(model, w).unwrap(), before);
    }
    assert!(capture(model, &ds.windows()[0], 4).is_err());
    assert!(capture(model, &ds.windows()[0], 0).is_err());
}

#[test]
fn feature_map_shapes_follow_pooling() {
    let (ds, model) = trained_cnn();
    for (layer, t) in [(1, 43), (2, 15), (3, 5)] {
        let fm = feature_maps(model, ds, 3, layer).unwrap();
        assert_eq!(fm.activations.shape(), &[t, 9, 50]);
        assert_eq!(fm.source_label, ds.labels()[3]);
    }
}

#[test]
fn heatmaps_have_documented_geometry() {
    let (ds, model) = trained_cnn();
    let fm = feature_maps(model, ds, 0, 3).unwrap();
    let panel = aggregate(&fm, Aggregation::MeanAbs);
    for t in 0..fm.time() {
        for c in 0..fm.columns() {
            let mean = (0..fm.filters()).map(|f| fm.at(t, c, f).abs()).sum::<f64>() / fm.filters() as f64;
            assert!((panel.get(t, c) - mean).abs() <= 1e-12);
        }
    }
    for scale in [1, 3, 8] {
        let img = render_heatmap(&fm, Aggregation::MeanAbs, scale).unwrap();
        assert_eq!((img.height, img.width), (5 * scale, 9 * scale));
        let grid = render_heatmap(&fm, Aggregation::PerFilterGrid, scale).unwrap();
        assert_eq!((grid.height, grid.width), (7 * 5 * scale, 8 * 9 * scale));
    }

    let dir = tempfile::tempdir().unwrap();
    let paths = export_heatmap(&fm, Aggregation::MeanAbs, 4, dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    let img = render_heatmap(&fm, Aggregation::MeanAbs, 4).unwrap();
    let pgm = std::fs::read(&paths[0]).unwrap();
    assert!(pgm.starts_with(b"P5\n36 20\n255\n"));
    assert!(pgm.ends_with(&img.pixels));
    let png = image::open(&paths[1]).unwrap().to_luma8();
    assert_eq!(png.as_raw(), &img.pixels);
}

#[test]
fn window_sampling_is_seeded_and_class_pure() {
    let (ds, _) = trained_cnn();
    let a = sample_windows_per_activity(ds, 4, 3).unwrap();
    assert_eq!(a, sample_windows_per_activity(ds, 4, 3).unwrap());
    for (label, ids) in &a {
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|&i| ds.labels()[i] == *label));
        let mut unique = ids.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 4);
    }
    assert!(sample_windows_per_activity(ds, 7, 3).is_err());
}

#[test]
fn model_files_round_trip_and_detect_damage() {
    let (ds, model) = trained_cnn();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.harm");
    save_model(model, &path).unwrap();
    let loaded = load_model::<f64>(&path).unwrap();
    assert_eq!(predict_dataset(&loaded, ds).unwrap(), predict_dataset(model, ds).unwrap());
    assert_eq!(loaded.history, model.history);

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_model::<f64>(&path), Err(HarError::Checksum)));
    assert!(matches!(
        load_model::<f64>(&dir.path().join("absent.harm")),
        Err(HarError::MissingFile(_))
    ));
    // A file written for one precision is rejected by the other.
    save_model(model, &path).unwrap();
    assert!(load_model::<f32>(&path).is_err());
}

#[test]
fn single_precision_pipeline_trains() {
    let ds = standardized(2, 10, 3);
    let cfg = NetworkConfig {
        conv_depth: 1,
        epochs: 3,
        seed: 2,
        ..NetworkConfig::default()
    };
    let model = train(build::<f32>(&cfg).unwrap(), &ds, &cfg).unwrap();
    assert!(evaluate(&model, &ds).unwrap().accuracy > 0.5);
}
