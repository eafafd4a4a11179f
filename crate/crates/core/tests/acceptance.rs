//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Criteria 7-10 need the UCI HAR dataset; point `HAR_DATA_ROOT` at the
//! directory containing `train/` and `test/` (or at its parent) to run them.
//! Without it they are reported as SKIP, never as PASS.
//!
//! Runs with `harness = false` so the report is printed even when every
//! criterion passes. Exit status is nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use har_core::dataset::{load_uci_har, standardize, synthesize, ActivityLabel, LabeledDataset, Split, NUM_CLASSES};
use har_core::fusion::{evaluate_fusion, save_ensemble, train_fusion, vote};
use har_core::metrics::{accuracy, compare_report, ConfusionMatrix, REFERENCE_FUSION_CONFUSION};
use har_core::model::{evaluate, fit, predict_window, run_depth_sweep, NetworkConfig, TrainedModel};
use har_core::model_io::{save_model, to_bytes};
use har_core::nn::{cross_entropy, one_hot, softmax, Conv2d, Layer, LayerSpec, MaxPool, Padding, Tensor};
use har_core::occlusion::{
    derive_significant_columns, occlude_column, occlusion_report, REFERENCE_SIGNIFICANT_COLUMNS,
};
use har_core::rng::rng_from;
use rand::Rng as _;

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets
// ---------------------------------------------------------------------------

/// Forward passes against nested-loop references.
const ORACLE_TOL: f64 = 1e-12;
/// Figure-9 accuracy against the tabulated 0.961.
const TABLE_ACCURACY_TOL: f64 = 0.001;
/// Synthetic end-to-end test accuracy floor.
const SYNTHETIC_MIN_ACCURACY: f64 = 0.95;

const CNN_TARGET: (f64, f64) = (0.919, 0.03);
const CNN_LSTM_TARGET: (f64, f64) = (0.951, 0.025);
const FUSION_TARGET: (f64, f64) = (0.961, 0.02);
const SITTING_COL6_MAX: f64 = 0.35;
const WALKING_COL3_MAX: f64 = 0.45;
const LYING_COL0_MIN: f64 = 0.90;
const MIN_TABLE4_AGREEMENT: usize = 4;

/// Synthetic corpus: train and test share class patterns, differ in noise.
const SYNTH_TRAIN_SEED: u64 = 1;
const SYNTH_TEST_SEED: u64 = 2;
const SYNTH_MODEL_SEED: u64 = 0;
/// Seeds for the full-dataset criteria; the second is the documented retry.
const DATA_SEED: u64 = 1;
const DATA_RETRY_SEED: u64 = 2;

const DATA_ENV: &str = "HAR_DATA_ROOT";

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn report(&self, id: u32, name: &str, status: &Status, detail: &str, elapsed: Option<(Duration, Option<Duration>)>) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let timing = match elapsed {
            Some((t, Some(b))) => format!("  [{:.1}s / budget {:.0}s]", t.as_secs_f64(), b.as_secs_f64()),
            Some((t, None)) => format!("  [{:.1}s]", t.as_secs_f64()),
            None => String::new(),
        };
        println!("criterion {id:>2}  {tag}  {name}: {detail}{timing}");
    }

    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        if let Some(b) = budget {
            if elapsed > b {
                pass = false;
                detail.push_str("; over time budget");
            }
        }
        let status = if pass { Status::Pass } else { Status::Fail };
        if !pass {
            self.failures += 1;
        }
        self.report(id, name, &status, &detail, Some((elapsed, budget)));
    }

    fn skip(&self, id: u32, name: &str, why: &str) {
        self.report(id, name, &Status::Skip, why, None);
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn within(value: f64, (target, tol): (f64, f64)) -> bool {
    (value - target).abs() <= tol
}

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

const GRAD_CONFIGS: usize = 20;

/// A one-layer network of the given kind with randomized shape, parameters
/// and (for batch norm) running statistics, its input and its pass mode.
fn gradient_case(kind: usize, case: u64) -> (&'static str, har_core::nn::Network<f64>, Tensor<f64>, Option<u64>) {
    let mut rng = rng_from(0x6772_6164, &[kind as u64, case]);
    let batch = rng.random_range(1..=3);
    let (t, c, f) = (rng.random_range(3..=9), rng.random_range(1..=3), rng.random_range(1..=3));
    let seed = 100 * kind as u64 + case;
    let (name, spec, input, mode): (&str, LayerSpec, Vec<usize>, Option<u64>) = match kind {
        0 => {
            let kernel = [1, 2, 3, 5][rng.random_range(0..4)];
            let padding = if kernel <= t && rng.random_bool(0.5) { Padding::Valid } else { Padding::Same };
            let filters = rng.random_range(1..=4);
            ("conv2d", LayerSpec::Conv2d { kernel, filters, padding }, vec![t, c, f], None)
        }
        1 => {
            let size = rng.random_range(2..=3);
            let t = rng.random_range(1..=10);
            ("maxpool", LayerSpec::MaxPool { size }, vec![t, c, f], None)
        }
        2 => ("relu", LayerSpec::Relu, vec![t, c, f], None),
        3 => {
            let prob = rng.random_range(0.0..0.8);
            ("dropout", LayerSpec::Dropout { prob }, vec![t, c, f], Some(seed))
        }
        4 => {
            // Even cases exercise batch statistics, odd ones running statistics.
            let mode = (case % 2 == 0).then_some(seed);
            ("batchnorm", LayerSpec::BatchNorm, vec![t, c, f], mode)
        }
        5 => {
            let keep_time = rng.random_bool(0.5);
            ("flatten", LayerSpec::Flatten { keep_time }, vec![t, c, f], None)
        }
        6 => {
            let units = rng.random_range(1..=6);
            ("dense", LayerSpec::Dense { units }, vec![rng.random_range(1..=8)], None)
        }
        7 => {
            let hidden = rng.random_range(1..=5);
            let steps = rng.random_range(1..=5);
            ("lstm", LayerSpec::Lstm { hidden }, vec![steps, rng.random_range(1..=4)], None)
        }
        _ => ("softmax", LayerSpec::Softmax, vec![rng.random_range(2..=7)], None),
    };
    let mut net = network(&[spec], &input, seed);
    for layer in net.layers_mut() {
        match layer {
            Layer::BatchNorm(bn) => {
                let n = bn.features();
                bn.gamma.value = rand_tensor(&[n], 0.5, 1.5, &mut rng);
                bn.beta.value = rand_tensor(&[n], -0.5, 0.5, &mut rng);
                bn.running_mean = rand_tensor(&[n], -0.5, 0.5, &mut rng);
                bn.running_var = rand_tensor(&[n], 0.5, 2.0, &mut rng);
            }
            Layer::Lstm(l) => {
                let shape = l.bias.value.shape().to_vec();
                l.bias.value = rand_tensor(&shape, -0.5, 0.5, &mut rng);
            }
            Layer::Dense(l) => {
                let shape = l.bias.value.shape().to_vec();
                l.bias.value = rand_tensor(&shape, -0.5, 0.5, &mut rng);
            }
            Layer::Conv2d(l) => {
                let shape = l.bias.value.shape().to_vec();
                l.bias.value = rand_tensor(&shape, -0.5, 0.5, &mut rng);
            }
            _ => {}
        }
    }
    let mut shape = vec![batch];
    shape.extend(&input);
    let x = rand_tensor(&shape, -2.0, 2.0, &mut rng);
    (name, net, x, mode)
}

fn criterion_gradients() -> Verdict {
    let mut worst = Vec::new();
    let mut pass = true;
    for kind in 0..9 {
        let mut total = GradReport::default();
        let mut name = "";
        for case in 0..GRAD_CONFIGS as u64 {
            let (n, net, x, mode) = gradient_case(kind, case);
            name = n;
            let report = grad_check(&net, &x, mode, &mut rng_from(7, &[kind as u64, case]));
            pass &= report.passes();
            total.merge(report);
        }
        worst.push(format!("{name} {:.1e}", total.max_rel));
    }
    verdict(
        pass,
        format!("9 layer kinds x {GRAD_CONFIGS} configs, max rel error < {GRAD_REL_TOL:e} ({})", worst.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 2. Forward oracles
// ---------------------------------------------------------------------------

const ORACLE_CASES: u64 = 50;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_oracles() -> Verdict {
    let mut worst = [0.0f64; 4];
    for case in 0..ORACLE_CASES {
        let mut rng = rng_from(0x6f72_636c, &[case]);
        let n = rng.random_range(1..=3);
        let t = rng.random_range(1..=12);
        let c = rng.random_range(1..=4);
        let fi = rng.random_range(1..=4);

        let k = rng.random_range(1..=5);
        let fo = rng.random_range(1..=5);
        let valid = k <= t && rng.random_bool(0.5);
        let x = rand_tensor(&[n, t, c, fi], -3.0, 3.0, &mut rng);
        let w = rand_tensor(&[k, fi, fo], -1.0, 1.0, &mut rng);
        let b = rand_tensor(&[fo], -1.0, 1.0, &mut rng);
        let (padding, pad, t_out) = if valid {
            (Padding::Valid, 0, t - k + 1)
        } else {
            (Padding::Same, (k - 1) / 2, t)
        };
        let conv = Conv2d::new(w.clone(), b.clone(), padding).unwrap();
        let got = conv.infer(&x).unwrap();
        worst[0] = worst[0].max(max_abs_diff(got.data(), &naive_conv(&x, &w, &b, pad, t_out)));

        let size = rng.random_range(1..=4);
        let pool = MaxPool::new(size).unwrap();
        worst[1] = worst[1].max(max_abs_diff(pool.infer(&x).unwrap().data(), &naive_pool(&x, size)));

        let classes = rng.random_range(2..=8);
        let z: Vec<f64> = (0..classes).map(|_| rng.random_range(-10.0..10.0)).collect();
        worst[2] = worst[2].max(max_abs_diff(&softmax(&z), &naive_softmax(&z)));

        let rows = rng.random_range(1..=6);
        let mut probs = Vec::new();
        for _ in 0..rows {
            let z: Vec<f64> = (0..classes).map(|_| rng.random_range(-8.0..8.0)).collect();
            probs.extend(naive_softmax(&z));
        }
        let targets: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        let y = one_hot::<f64>(&targets, classes).unwrap();
        let p = Tensor::new(vec![rows, classes], probs).unwrap();
        let ce = cross_entropy(&p, &y).unwrap();
        worst[3] = worst[3].max((ce - naive_cross_entropy(p.data(), y.data(), classes)).abs());
    }
    let pass = worst.iter().all(|&d| d <= ORACLE_TOL);
    verdict(
        pass,
        format!(
            "{ORACLE_CASES} cases each; max |diff| conv {:.1e}, pool {:.1e}, softmax {:.1e}, cross-entropy {:.1e} (tol {ORACLE_TOL:e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Voting law
// ---------------------------------------------------------------------------

/// "Majority if any two agree, else Model-M", by counting.
fn vote_oracle(m: ActivityLabel, m1: ActivityLabel, m2: ActivityLabel) -> ActivityLabel {
    let votes = [m, m1, m2];
    for candidate in votes {
        if votes.iter().filter(|&&v| v == candidate).count() >= 2 {
            return candidate;
        }
    }
    m
}

fn criterion_vote() -> Verdict {
    let mut checked = 0;
    let mut mismatches = 0;
    for m in ActivityLabel::ALL {
        for m1 in ActivityLabel::ALL {
            for m2 in ActivityLabel::ALL {
                checked += 1;
                if vote(m, m1, m2) != vote_oracle(m, m1, m2) {
                    mismatches += 1;
                }
            }
        }
    }
    verdict(
        checked == 216 && mismatches == 0,
        format!("{checked} triples, {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 4. Synthetic end-to-end
// ---------------------------------------------------------------------------

fn synthetic_split(per_class: usize) -> (LabeledDataset, LabeledDataset) {
    let train = synthesize(NUM_CLASSES, per_class, SYNTH_TRAIN_SEED).unwrap();
    let test = synthesize(NUM_CLASSES, per_class, SYNTH_TEST_SEED).unwrap();
    let (train, stats) = standardize(&train, None).unwrap();
    let (test, _) = standardize(&test, Some(&stats)).unwrap();
    (train, test)
}

fn criterion_synthetic() -> Verdict {
    let (train, test) = synthetic_split(10);
    let config = NetworkConfig {
        seed: SYNTH_MODEL_SEED,
        ..NetworkConfig::default()
    };
    let first = fit::<f64>(&train, &config).unwrap();
    let second = fit::<f64>(&train, &config).unwrap();
    let acc = evaluate(&first, &test).unwrap().accuracy;
    let deterministic = to_bytes(&first).unwrap() == to_bytes(&second).unwrap();
    verdict(
        acc >= SYNTHETIC_MIN_ACCURACY && deterministic,
        format!(
            "60/60 windows, depth-3 CNN, {} epochs: test accuracy {acc:.3} (>= {SYNTHETIC_MIN_ACCURACY}), repeat run bit-identical: {deterministic}",
            config.epochs
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Occlusion mechanics
// ---------------------------------------------------------------------------

fn criterion_occlusion_mechanics() -> Verdict {
    let (train, test) = synthetic_split(5);
    let mut problems = Vec::new();

    for (i, w) in test.windows().iter().enumerate().take(12) {
        let col = i % 9;
        let occluded = occlude_column(w, col).unwrap();
        let mut changed_elsewhere = 0;
        for t in 0..128 {
            for c in 0..9 {
                let (a, b) = (w.get(t, c), occluded.get(t, c));
                if c == col {
                    if b.to_bits() != 0f64.to_bits() {
                        problems.push(format!("window {i}: column {col} not zero"));
                    }
                } else if a.to_bits() != b.to_bits() {
                    changed_elsewhere += 1;
                }
            }
        }
        if changed_elsewhere > 0 {
            problems.push(format!("window {i}: {changed_elsewhere} entries outside column {col} changed"));
        }
        if occlude_column(&occluded, col).unwrap() != occluded {
            problems.push(format!("window {i}: occlusion not idempotent"));
        }
    }

    let config = NetworkConfig {
        conv_depth: 1,
        epochs: 5,
        seed: 3,
        ..NetworkConfig::default()
    };
    let model = fit::<f64>(&train, &config).unwrap();
    let report = occlusion_report(&model, &test).unwrap();
    let mut mismatched = 0;
    for a in ActivityLabel::ALL {
        let ids: Vec<usize> = (0..test.len()).filter(|&i| test.labels()[i] == a).collect();
        for c in 0..9 {
            let kept = ids
                .iter()
                .filter(|&&i| {
                    let w = occlude_column(&test.windows()[i], c).unwrap();
                    predict_window(&model, &w).unwrap().0 == a
                })
                .count();
            let oracle = kept as f64 / ids.len() as f64;
            if oracle.to_bits() != report.get(a, c).to_bits() {
                mismatched += 1;
            }
        }
    }
    if mismatched > 0 {
        problems.push(format!("{mismatched} retention cells differ from brute force"));
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("bit-exact, idempotent; report equals brute force on {} windows x 9 columns", test.len())
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// 6. Metrics arithmetic
// ---------------------------------------------------------------------------

fn criterion_metrics() -> Verdict {
    let cm = ConfusionMatrix::from_counts(REFERENCE_FUSION_CONFUSION);
    let trace: u64 = (0..NUM_CLASSES).map(|i| REFERENCE_FUSION_CONFUSION[i][i]).sum();
    let total: u64 = REFERENCE_FUSION_CONFUSION.iter().flatten().sum();
    let acc = accuracy(&cm).unwrap();
    let exact = acc == trace as f64 / total as f64 && trace == 2833 && total == 2947;
    verdict(
        exact && (acc - 0.961).abs() <= TABLE_ACCURACY_TOL,
        format!("accuracy {trace}/{total} = {acc:.4}, tabulated 0.961 (tol {TABLE_ACCURACY_TOL})"),
    )
}

// ---------------------------------------------------------------------------
// 7-10. Full dataset
// ---------------------------------------------------------------------------

fn label_lines(root: &Path, split: &str) -> usize {
    let candidates = [root.join(split), root.join("UCI HAR Dataset").join(split)];
    let dir = candidates.iter().find(|d| d.is_dir()).expect("split directory");
    let text = std::fs::read_to_string(dir.join(format!("y_{split}.txt"))).expect("label file");
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

fn criterion_loader(root: &Path) -> Verdict {
    let test = load_uci_har(root, Split::Test).unwrap();
    let train = load_uci_har(root, Split::Train).unwrap();
    let expected_train = label_lines(root, "train");
    let counts = test.class_counts();
    verdict(
        test.len() == 2947 && counts == [496, 471, 420, 491, 532, 537] && train.len() == expected_train && train.len() == 7352,
        format!("test {} windows {:?}, train {} windows (label file {expected_train})", test.len(), counts, train.len()),
    )
}

struct DataSplits {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn load_standardized(root: &Path) -> DataSplits {
    let train = load_uci_har(root, Split::Train).unwrap();
    let test = load_uci_har(root, Split::Test).unwrap();
    let (train, stats) = standardize(&train, None).unwrap();
    let (test, _) = standardize(&test, Some(&stats)).unwrap();
    DataSplits { train, test }
}

fn criterion_reproduction(data: &DataSplits, cnn_lstm_out: &mut Option<TrainedModel<f64>>) -> Verdict {
    let cnn_cfg = NetworkConfig {
        seed: DATA_SEED,
        ..NetworkConfig::default()
    };
    let lstm_cfg = NetworkConfig {
        seed: DATA_SEED,
        ..NetworkConfig::cnn_lstm()
    };
    let cnn = evaluate(&fit::<f64>(&data.train, &cnn_cfg).unwrap(), &data.test).unwrap();
    let cnn_lstm = fit::<f64>(&data.train, &lstm_cfg).unwrap();
    let lstm_eval = evaluate(&cnn_lstm, &data.test).unwrap();
    let ensemble = train_fusion::<f64>(&data.train, &lstm_cfg).unwrap();
    let fusion = evaluate_fusion(&ensemble, &data.test).unwrap();
    *cnn_lstm_out = Some(cnn_lstm);

    let report = compare_report(
        &[
            ("CNN", cnn.accuracy, cnn.macro_f1),
            ("CNN-LSTM", lstm_eval.accuracy, lstm_eval.macro_f1),
            ("Fusion", fusion.accuracy, fusion.macro_f1),
        ],
        CNN_TARGET.1,
    )
    .unwrap();
    print!("{}", report.to_text());
    let pass = within(cnn.accuracy, CNN_TARGET)
        && within(lstm_eval.accuracy, CNN_LSTM_TARGET)
        && within(fusion.accuracy, FUSION_TARGET)
        && fusion.accuracy >= lstm_eval.accuracy;
    verdict(
        pass,
        format!(
            "seed {DATA_SEED}: CNN {:.3} ({}±{}), CNN-LSTM {:.3} ({}±{}), fusion {:.3} ({}±{}), fusion >= CNN-LSTM: {}",
            cnn.accuracy,
            CNN_TARGET.0,
            CNN_TARGET.1,
            lstm_eval.accuracy,
            CNN_LSTM_TARGET.0,
            CNN_LSTM_TARGET.1,
            fusion.accuracy,
            FUSION_TARGET.0,
            FUSION_TARGET.1,
            fusion.accuracy >= lstm_eval.accuracy
        ),
    )
}

fn criterion_depth_sweep(data: &DataSplits) -> Verdict {
    let mut attempts = Vec::new();
    for seed in [DATA_SEED, DATA_RETRY_SEED] {
        let config = NetworkConfig {
            seed,
            ..NetworkConfig::default()
        };
        let results = run_depth_sweep::<f64>(&data.train, &data.test, &[1, 3, 5], &config).unwrap();
        let acc: Vec<f64> = results.iter().map(|r| r.evaluation.accuracy).collect();
        let ok = acc[1] >= acc[0] && acc[1] >= acc[2];
        attempts.push(format!("seed {seed}: depth1 {:.3} depth3 {:.3} depth5 {:.3}", acc[0], acc[1], acc[2]));
        if ok {
            return verdict(true, attempts.join("; "));
        }
    }
    verdict(false, attempts.join("; "))
}

fn criterion_occlusion_reproduction(data: &DataSplits, model: &TrainedModel<f64>) -> Verdict {
    use ActivityLabel::*;
    let report = occlusion_report(model, &data.test).unwrap();
    print!("{}", report.to_text());
    let sitting = report.get(Sitting, 6);
    let walking = report.get(Walking, 3);
    let lying = report.get(Lying, 0);
    let significant = derive_significant_columns(&report, 0.60, 2).unwrap();
    let agree = significant.agreement(&REFERENCE_SIGNIFICANT_COLUMNS);
    let pass = sitting < SITTING_COL6_MAX
        && walking < WALKING_COL3_MAX
        && lying > LYING_COL0_MIN
        && agree.len() >= MIN_TABLE4_AGREEMENT;
    verdict(
        pass,
        format!(
            "(Sitting,6) {sitting:.3} < {SITTING_COL6_MAX}, (Walking,3) {walking:.3} < {WALKING_COL3_MAX}, (Lying,0) {lying:.3} > {LYING_COL0_MIN}, significant columns agree on {}/6 (>= {MIN_TABLE4_AGREEMENT})",
            agree.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. Reproducibility
// ---------------------------------------------------------------------------

/// Train a CNN and a fusion ensemble, write every artifact under `dir`, and
/// return the metric report text.
fn full_run(dir: &Path, train: &LabeledDataset, test: &LabeledDataset) -> String {
    let config = NetworkConfig {
        epochs: 3,
        seed: 2024,
        ..NetworkConfig::default()
    };
    let cnn = fit::<f64>(train, &config).unwrap();
    save_model(&cnn, &dir.join("cnn.harm")).unwrap();
    let ensemble = train_fusion::<f64>(train, &config).unwrap();
    save_ensemble(&ensemble, &dir.join("ensemble")).unwrap();
    let a = evaluate(&cnn, test).unwrap();
    let b = evaluate_fusion(&ensemble, test).unwrap();
    let report = compare_report(&[("CNN", a.accuracy, a.macro_f1), ("Fusion", b.accuracy, b.macro_f1)], 0.02).unwrap();
    format!("{}{}{}", report.to_text(), a.confusion.to_csv(false), b.confusion.to_csv(false))
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn criterion_reproducibility() -> Verdict {
    let (train, test) = synthetic_split(5);
    let runs: Vec<(tempfile::TempDir, String)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let report = full_run(dir.path(), &train, &test);
            (dir, report)
        })
        .collect();
    let (a, b) = (&runs[0], &runs[1]);
    let files_a = files_under(a.0.path());
    let files_b = files_under(b.0.path());
    let mut identical = files_a.len() == files_b.len() && !files_a.is_empty();
    for (fa, fb) in files_a.iter().zip(&files_b) {
        identical &= fa.strip_prefix(a.0.path()).unwrap() == fb.strip_prefix(b.0.path()).unwrap();
        identical &= std::fs::read(fa).unwrap() == std::fs::read(fb).unwrap();
    }
    let reports_equal = a.1 == b.1;
    verdict(
        identical && reports_equal,
        format!(
            "{} artifact files bit-identical: {identical}; metric reports identical: {reports_equal}",
            files_a.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let mut runner = Runner { failures: 0 };
    runner.run(1, "gradient suite", secs(30), criterion_gradients);
    runner.run(2, "forward oracles", secs(10), criterion_oracles);
    runner.run(3, "voting law", secs(1), criterion_vote);
    runner.run(4, "synthetic end-to-end", secs(120), criterion_synthetic);
    runner.run(5, "occlusion mechanics", secs(30), criterion_occlusion_mechanics);
    runner.run(6, "metrics arithmetic", secs(1), criterion_metrics);

    match std::env::var_os(DATA_ENV).map(PathBuf::from) {
        None => {
            let why = format!("needs the UCI HAR dataset; set {DATA_ENV}");
            runner.skip(7, "dataset loader", &why);
            runner.skip(8, "reference accuracy reproduction", &why);
            runner.skip(9, "depth sweep", &why);
            runner.skip(10, "occlusion reproduction", &why);
        }
        Some(root) => {
            runner.run(7, "dataset loader", secs(10), || criterion_loader(&root));
            let data = load_standardized(&root);
            let mut cnn_lstm = None;
            runner.run(8, "reference accuracy reproduction", None, || {
                criterion_reproduction(&data, &mut cnn_lstm)
            });
            runner.run(9, "depth sweep", None, || criterion_depth_sweep(&data));
            match &cnn_lstm {
                Some(model) => runner.run(10, "occlusion reproduction", None, || {
                    criterion_occlusion_reproduction(&data, model)
                }),
                None => runner.run(10, "occlusion reproduction", None, || {
                    verdict(false, "no trained CNN-LSTM (criterion 8 did not complete)")
                }),
            }
        }
    }

    runner.run(11, "reproducibility", None, criterion_reproducibility);

    if runner.failures > 0 {
        println!("{} criterion(s) failed", runner.failures);
        std::process::exit(1);
    }
}
