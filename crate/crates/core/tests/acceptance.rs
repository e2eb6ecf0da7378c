//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tc4tl_core::angle::{predict_angle, softmax, train_angle, GbcConfig};
use tc4tl_core::config::RunConfig;
use tc4tl_core::distance::{
    aggregate_event, finite_difference_gradients, max_relative_error, predict_rows, DenseNet,
    DistanceModel,
};
use tc4tl_core::domain::{quantize_distance, Channel, DistanceClass, Grain};
use tc4tl_core::ingest::{assemble_rows, FeatureMask, KeyEntry, OutputEntry};
use tc4tl_core::pathloss::{expected_distance, PathLossParams};
use tc4tl_core::pipeline::{
    self, angle_accuracy, generate_split, predict_all, train_angle_stage, train_distance_stage,
    Models, Split,
};
use tc4tl_core::scorer::{ndcf, score_run, CostWeights, ScoreReport, ScoringConfig};
use tc4tl_core::synthgen::{sample_rssi, Corpus};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs `check`, failing it if it exceeds `budget`.
fn criterion(id: u32, name: &str, budget: Duration, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut o = check();
    let elapsed = start.elapsed();
    if elapsed > budget {
        o.pass = false;
        o.detail = format!("{}; over time budget {:?}", o.detail, budget);
    }
    println!(
        "criterion {id} {} {name}: {} [{:.2?}]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed
    );
    o.pass
}

// ---------------------------------------------------------------------------
// 1. nDCF of printed (P_miss, P_fa) pairs

/// (table, row, P_miss, P_fa, printed nDCF)
const PRINTED_ROWS: [(&str, &str, f64, f64, f64); 25] = [
    ("I", "fine 1.20", 0.01, 0.02, 0.02),
    ("I", "fine 1.80", 0.03, 0.01, 0.03),
    ("I", "fine 3.00", 0.01, 0.14, 0.15),
    ("I", "coarse 1.80", 0.01, 0.01, 0.01),
    ("I", "average", 0.04, 0.05, 0.05),
    ("III", "fine 1.20", 0.21, 0.01, 0.21),
    ("III", "fine 1.80", 0.14, 0.07, 0.21),
    ("III", "fine 3.00", 0.17, 0.12, 0.29),
    ("III", "coarse 1.80", 0.05, 0.13, 0.18),
    ("III", "average", 0.14, 0.08, 0.22),
    ("IV", "fine 1.20", 0.00, 0.02, 0.02),
    ("IV", "fine 1.80", 0.03, 0.02, 0.06),
    ("IV", "fine 3.00", 0.02, 0.11, 0.13),
    ("IV", "coarse 1.80", 0.01, 0.00, 0.01),
    ("IV", "average", 0.01, 0.04, 0.06),
    ("V", "fine 1.20", 0.01, 0.01, 0.03),
    ("V", "fine 1.80", 0.03, 0.02, 0.06),
    ("V", "fine 3.00", 0.03, 0.07, 0.10),
    ("V", "coarse 1.80", 0.01, 0.01, 0.02),
    ("V", "average", 0.02, 0.03, 0.04),
    ("VI", "fine 1.20", 0.67, 0.38, 1.05),
    ("VI", "fine 1.80", 0.48, 0.63, 1.12),
    ("VI", "fine 3.00", 0.12, 0.89, 1.02),
    ("VI", "coarse 1.80", 0.39, 0.58, 0.97),
    ("VI", "average", 0.42, 0.62, 1.04),
];

fn printed_table_rows() -> Outcome {
    let mut misses = Vec::new();
    for (table, row, pm, pf, printed) in PRINTED_ROWS {
        let got = ndcf(pm, pf, CostWeights::default());
        if (got - printed).abs() > 0.015 {
            misses.push(format!("table {table} {row}: {got:.2} vs printed {printed:.2}"));
        }
    }
    let ok = PRINTED_ROWS.len() - misses.len();
    let mut detail = format!("{ok}/{} rows within 0.015", PRINTED_ROWS.len());
    if !misses.is_empty() {
        detail.push_str(&format!(" (off: {})", misses.join("; ")));
    }
    outcome(misses.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 2. scorer against a double-loop oracle

#[derive(Debug, PartialEq)]
enum OracleRow {
    Undefined,
    Rates { p_miss: f64, p_fa: f64, ndcf: f64 },
}

fn oracle_score(keys: &[KeyEntry], outputs: &[OutputEntry], config: &ScoringConfig) -> Vec<OracleRow> {
    config
        .thresholds
        .iter()
        .map(|&(grain, d)| {
            let (mut targets, mut misses, mut nontargets, mut fas) = (0u32, 0u32, 0u32, 0u32);
            for k in keys {
                if k.grain != grain {
                    continue;
                }
                for o in outputs {
                    if o.event_id != k.event_id {
                        continue;
                    }
                    let is_target = k.reference.metres() <= d;
                    let says_target = o.predicted_m <= d;
                    match (is_target, says_target) {
                        (true, false) => {
                            targets += 1;
                            misses += 1;
                        }
                        (true, true) => targets += 1,
                        (false, true) => {
                            nontargets += 1;
                            fas += 1;
                        }
                        (false, false) => nontargets += 1,
                    }
                }
            }
            if targets == 0 || nontargets == 0 {
                return OracleRow::Undefined;
            }
            let p_miss = f64::from(misses) / f64::from(targets);
            let p_fa = f64::from(fas) / f64::from(nontargets);
            let w = config.weights;
            OracleRow::Rates {
                p_miss,
                p_fa,
                ndcf: (w.miss * p_miss + w.false_alarm * p_fa) / w.miss.min(w.false_alarm),
            }
        })
        .collect()
}

fn as_oracle_rows(report: &ScoreReport) -> Vec<OracleRow> {
    report
        .rows
        .iter()
        .map(|r| match (&r.rates, r.ndcf) {
            (Ok(rates), Some(n)) => OracleRow::Rates {
                p_miss: rates.p_miss,
                p_fa: rates.p_fa,
                ndcf: n,
            },
            _ => OracleRow::Undefined,
        })
        .collect()
}

fn scorer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = ScoringConfig::default();
    let mut defined_rows = 0;
    for trial in 0..1000 {
        let n = rng.random_range(1..=50);
        let mut keys = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for i in 0..n {
            let grain = if rng.random_bool(0.5) { Grain::Coarse } else { Grain::Fine };
            let classes = grain.classes();
            keys.push(KeyEntry {
                event_id: format!("t{trial}e{i}"),
                reference: classes[rng.random_range(0..classes.len())],
                grain,
            });
            outputs.push(OutputEntry {
                event_id: format!("t{trial}e{i}"),
                predicted_m: DistanceClass::ALL[rng.random_range(0..4)].metres(),
            });
        }
        outputs.shuffle(&mut rng);
        let report = match score_run(&keys, &outputs, &config) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("trial {trial}: {e}")),
        };
        let got = as_oracle_rows(&report);
        let want = oracle_score(&keys, &outputs, &config);
        if got != want {
            return outcome(false, format!("trial {trial}: {got:?} != {want:?}"));
        }
        let defined: Vec<f64> = want
            .iter()
            .filter_map(|r| match r {
                OracleRow::Rates { ndcf, .. } => Some(*ndcf),
                OracleRow::Undefined => None,
            })
            .collect();
        defined_rows += defined.len();
        if defined.len() == want.len() {
            let mean = defined.iter().sum::<f64>() / defined.len() as f64;
            if report.average.map(|a| a.ndcf) != Some(mean) {
                return outcome(false, format!("trial {trial}: average differs"));
            }
        } else if report.average.is_some() {
            return outcome(false, format!("trial {trial}: average over undefined rows"));
        }
    }
    outcome(true, format!("1000 runs identical ({defined_rows} defined rows)"))
}

// ---------------------------------------------------------------------------
// 3. path-loss fixtures

fn path_loss_fixtures() -> Outcome {
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let unit = expected_distance(-52.0, PathLossParams::COARSE);
    let coarse_ten = expected_distance(-78.0, PathLossParams::COARSE);
    let fine_ten = expected_distance(-75.0, PathLossParams::FINE);
    let mut worst_round_trip: f64 = 0.0;
    for class in DistanceClass::ALL {
        for params in [PathLossParams::COARSE, PathLossParams::FINE, PathLossParams::MIDPOINT] {
            let d = class.metres();
            let rssi = sample_rssi(d, params, 0.0).expect("positive distance");
            worst_round_trip = worst_round_trip.max(rel(expected_distance(rssi, params), d));
        }
    }
    let pass = unit == 1.0
        && rel(coarse_ten, 10.0) <= 1e-9
        && rel(fine_ten, 10.0) <= 1e-9
        && worst_round_trip <= 1e-9;
    outcome(
        pass,
        format!(
            "d(-52,coarse)={unit}, d(-78,coarse)={coarse_ten}, d(-75,fine)={fine_ten}, worst round trip {worst_round_trip:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. gradient check

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Encoded width of the default feature set.
    let dim = 37;
    let net = DenseNet::new(dim, &[24, 16, 8], &mut rng);
    let x = ndarray::Array2::from_shape_fn((10, dim), |_| rng.random_range(-2.0..2.0));
    let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..4)).collect();
    let (_, analytic) = net.loss_and_gradients(x.view(), &y);
    let numeric = finite_difference_gradients(&net, x.view(), &y, 1e-5);
    let err = max_relative_error(&analytic, &numeric, 1e-8);
    outcome(err < 1e-4, format!("max relative error {err:.2e} over 10x{dim} batch"))
}

// ---------------------------------------------------------------------------
// 5-7. learned models on generated corpora

struct Experiment {
    config: RunConfig,
    train: Corpus,
    test: Corpus,
    angle: tc4tl_core::angle::AngleModel,
}

impl Experiment {
    fn new(sigma: f64) -> Self {
        let mut config = RunConfig::default();
        config.generator.shadowing_sigma = sigma;
        config.generator.events_per_class = 32;
        config.net.epochs = 200;
        let train = generate_split(&config, Split::Train).expect("train split");
        let test = generate_split(&config, Split::Test).expect("test split");
        let angle = train_angle_stage(&config, &train.events, &train.truths, &pipeline::quiet)
            .expect("stage 1 trains");
        Self {
            config,
            train,
            test,
            angle,
        }
    }

    fn average_ndcf(&self, mask: FeatureMask) -> Result<f64, String> {
        let config = RunConfig {
            feature_mask: mask,
            ..self.config.clone()
        };
        let trained = train_distance_stage(
            &config,
            &self.train.events,
            &self.train.keys,
            Some(&self.angle),
            &pipeline::quiet,
        )
        .map_err(|e| e.to_string())?;
        let models = Models {
            angle: (!mask.angle).then(|| self.angle.clone()),
            schema: trained.schema,
            mask,
            distance: trained.model,
        };
        let outputs = predict_all(&models, &self.test.events, config.look_mode).map_err(|e| e.to_string())?;
        let report = score_run(&self.test.keys, &outputs, &config.scoring).map_err(|e| e.to_string())?;
        report.require_valid().map(|a| a.ndcf).map_err(|e| e.to_string())
    }
}

fn stage_one_learnability(noisy: &Experiment) -> Outcome {
    match angle_accuracy(&noisy.angle, &noisy.test.events, &noisy.test.truths) {
        Ok(acc) => outcome(acc >= 0.95, format!("held-out angle accuracy {acc:.4} (need >= 0.95)")),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn end_to_end(clean: &Experiment, noisy_baseline: &Result<f64, String>) -> Outcome {
    let clean_ndcf = clean.average_ndcf(FeatureMask::none());
    match (clean_ndcf, noisy_baseline) {
        (Ok(c), Ok(n)) => outcome(
            c <= 0.05 && *n <= 0.30,
            format!("avg nDCF sigma=0: {c:.4} (need <= 0.05), sigma=2: {n:.4} (need <= 0.30)"),
        ),
        (c, n) => outcome(false, format!("sigma=0: {c:?}, sigma=2: {n:?}")),
    }
}

fn ablation_direction(noisy: &Experiment, baseline: &Result<f64, String>) -> Outcome {
    let masked = noisy.average_ndcf(FeatureMask::none().with("coarse_grain").expect("known mask"));
    match (baseline, masked) {
        (Ok(b), Ok(m)) => outcome(
            *b <= m,
            format!("avg nDCF all features {b:.4} vs without coarse grain {m:.4}"),
        ),
        (b, m) => outcome(false, format!("baseline {b:?}, masked {m:?}")),
    }
}

// ---------------------------------------------------------------------------
// 8. on-disk determinism

fn snapshot(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").display().to_string();
                out.push((rel, std::fs::read(&path).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn full_run(root: &std::path::Path) -> tc4tl_core::Result<Vec<(String, Vec<u8>)>> {
    let mut config = RunConfig::from_text(
        "gen.events_per_class = 4\ngen.test_events_per_class = 4\ngbc.n_estimators = 20\nnet.hidden_layers = 64, 32\nnet.epochs = 20\n",
    )?;
    config.paths.corpus = root.join("corpus");
    config.paths.models = root.join("models");
    config.paths.reports = root.join("reports");
    pipeline::cmd_gen(&config)?;
    pipeline::cmd_train(&config, &pipeline::quiet)?;
    let predicted = pipeline::cmd_predict(&config, Split::Test)?;
    let layout = pipeline::Layout::new(&config);
    let report = pipeline::cmd_score(&config, &layout.key_path(Split::Test), &predicted.output_path)?;
    pipeline::write_report(&config.paths.reports, "test.score", &report)?;
    Ok(snapshot(root))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    match (full_run(a.path()), full_run(b.path())) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&str> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p != q)
                .map(|(p, _)| p.0.as_str())
                .collect();
            let same = x.len() == y.len() && differing.is_empty();
            outcome(
                same,
                if same {
                    format!("{} files byte-identical across two runs", x.len())
                } else {
                    format!("differences in {differing:?}")
                },
            )
        }
        (x, y) => outcome(false, format!("run failed: {:?} / {:?}", x.err(), y.err())),
    }
}

// ---------------------------------------------------------------------------
// 9. invariants

fn forward_fill_is_causal() -> Result<usize, String> {
    let mut config = RunConfig::default();
    config.generator.events_per_class = 2;
    config.generator.missing_rate = 0.4;
    let corpus = generate_split(&config, Split::Train).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for event in &corpus.events {
        let rows = assemble_rows(event).map_err(|e| e.to_string())?;
        let readings: Vec<_> = event.readings().map(|(_, r)| r).collect();
        for row in &rows {
            for (channel, got) in [
                (Channel::Gyroscope, row.gyro),
                (Channel::MagneticField, row.magnetic_field),
                (Channel::Accelerometer, row.accelerometer),
                (Channel::Attitude, row.attitude),
            ] {
                // Latest reading at or before the row, scanning everything.
                let latest = readings
                    .iter()
                    .filter(|r| r.channel() == channel && r.timestamp() <= row.timestamp)
                    .max_by(|a, b| a.timestamp().total_cmp(&b.timestamp()))
                    .ok_or_else(|| format!("{}: row before first {channel}", event.metadata.event_id))?;
                if latest.triple() != got {
                    return Err(format!(
                        "{} t={}: {channel} {:?} != {:?}",
                        event.metadata.event_id,
                        row.timestamp,
                        got,
                        latest.triple()
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn invariants() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    match forward_fill_is_causal() {
        Ok(n) if n > 0 => {}
        Ok(_) => failures.push("forward fill: nothing checked".to_string()),
        Err(e) => failures.push(format!("forward fill: {e}")),
    }

    for _ in 0..500 {
        let n = rng.random_range(1..30);
        let mut preds: Vec<DistanceClass> =
            (0..n).map(|_| DistanceClass::ALL[rng.random_range(0..4)]).collect();
        let mode = aggregate_event(&preds).expect("non-empty");
        let mut counts: HashMap<DistanceClass, usize> = HashMap::new();
        for p in &preds {
            *counts.entry(*p).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let smallest_top = DistanceClass::ALL
            .into_iter()
            .find(|c| counts.get(c) == Some(&best))
            .expect("some class");
        preds.shuffle(&mut rng);
        if mode != smallest_top || aggregate_event(&preds).ok() != Some(mode) {
            failures.push(format!("mode: {preds:?}"));
            break;
        }
    }
    if aggregate_event(&[DistanceClass::M1_2, DistanceClass::M3_0]).ok() != Some(DistanceClass::M1_2) {
        failures.push("mode tie rule".into());
    }

    for _ in 0..200 {
        let scores: [f64; 8] = std::array::from_fn(|_| rng.random_range(-30.0..30.0));
        let p = softmax(&scores);
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 || p.iter().any(|&v| v < 0.0) {
            failures.push(format!("angle softmax {p:?}"));
            break;
        }
    }
    let net = DenseNet::new(5, &[8], &mut rng);
    let model = DistanceModel {
        net,
        train_loss: Vec::new(),
    };
    let vectors: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..5).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    for p in predict_rows(&model, &vectors).expect("matching dimension") {
        if (p.probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            failures.push(format!("distance softmax {:?}", p.probabilities));
            break;
        }
    }

    for class in DistanceClass::ALL {
        let (lo, hi) = class.band();
        for m in [class.metres(), lo, hi, (lo + hi) / 2.0] {
            if quantize_distance(m).ok() != Some(class) {
                failures.push(format!("quantize {m} -> {:?}", quantize_distance(m)));
            }
        }
        if class.to_string().parse::<DistanceClass>().ok() != Some(class) {
            failures.push(format!("class text round trip {class}"));
        }
    }

    let mut config = RunConfig::default();
    config.generator.events_per_class = 2;
    match generate_split(&config, Split::Train) {
        Ok(corpus) => {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for (event, truth) in corpus.events.iter().zip(&corpus.truths) {
                for row in assemble_rows(event).unwrap_or_default() {
                    if let Some(a) = truth.angle_at(row.timestamp) {
                        rows.push(row);
                        labels.push(a);
                    }
                }
            }
            let gbc = GbcConfig {
                n_estimators: 30,
                ..GbcConfig::default()
            };
            match train_angle(&rows, &labels, &gbc) {
                Ok(model) => {
                    if model.train_loss.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                        failures.push("boosting loss increased".into());
                    }
                    let _ = predict_angle(&model, &rows[0]);
                }
                Err(e) => failures.push(format!("boosting: {e}")),
            }
        }
        Err(e) => failures.push(format!("corpus: {e}")),
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "forward-fill causality, mode rule and permutation invariance, softmax normalization, quantization round trip, boosting loss monotone".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let secs = Duration::from_secs;
    let mut results = vec![
        criterion(1, "printed table rows satisfy nDCF = P_miss + P_fa", secs(1), printed_table_rows),
        criterion(2, "scorer matches brute-force oracle", secs(10), scorer_oracle),
        criterion(3, "path-loss fixtures", secs(1), path_loss_fixtures),
        criterion(4, "distance-model gradient check", secs(5), gradient_check),
    ];

    let setup = Instant::now();
    let noisy = Experiment::new(2.0);
    let setup_time = setup.elapsed();
    results.push(criterion(5, "angle model learnability", secs(120), || {
        let mut o = stage_one_learnability(&noisy);
        o.detail = format!("{} incl. {setup_time:.1?} training", o.detail);
        o
    }));

    let mut noisy_baseline = None;
    results.push(criterion(6, "end-to-end synthetic benchmark", secs(600), || {
        let clean = Experiment::new(0.0);
        let baseline = noisy.average_ndcf(FeatureMask::none());
        let o = end_to_end(&clean, &baseline);
        noisy_baseline = Some(baseline);
        o
    }));
    let baseline = noisy_baseline.expect("criterion 6 ran");
    results.push(criterion(7, "coarse-grain ablation direction", secs(600), || {
        ablation_direction(&noisy, &baseline)
    }));
    results.push(criterion(8, "end-to-end determinism", secs(600), determinism));
    results.push(criterion(9, "module invariants", secs(60), invariants));

    let failed = results.iter().filter(|&&ok| !ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
