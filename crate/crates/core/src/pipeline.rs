//! End-to-end wiring: corpus generation, both training stages, prediction,
//! scoring and the ablation suite. In-memory stages come first; the `cmd_*`
//! functions add the on-disk layout around them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::angle::{predict_angle, train_angle, AngleModel};
use crate::config::{stage_seed, RunConfig};
use crate::distance::{
    aggregate_event, predict_rows, select_look, train_distance_with, DistanceModel, LookMode,
};
use crate::domain::{DistanceClass, EventFile};
use crate::error::{Error, Result};
use crate::fsio::{read_to_string, write_atomic};
use crate::ingest::{
    assemble_rows, fit_schema, parse_event_file, parse_ground_truth, parse_key_file,
    parse_output_file, render_output_file, EncodingSchema, FeatureMask, FeatureRow, KeyEntry,
    OutputEntry,
};
use crate::scorer::{score_run, ScoreReport};
use crate::sidecar::KvDocument;
use crate::synthgen::{
    generate_corpus, write_corpus, Corpus, GeneratorConfig, GroundTruth, WriteOptions,
    EVENTS_DIR, EVENT_EXT,
};

/// Progress sink for long-running stages.
pub type Log<'a> = &'a dyn Fn(&str);

pub fn quiet(_: &str) {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            Split::Train => "tr",
            Split::Dev => "dv",
            Split::Test => "te",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, dev or test)"
            ))),
        }
    }
}

/// Where every artifact lives, relative to the configured roots.
pub struct Layout<'a> {
    config: &'a RunConfig,
}

impl<'a> Layout<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Self { config }
    }

    pub fn split_dir(&self, split: Split) -> PathBuf {
        self.config.paths.corpus.join(split.as_str())
    }

    pub fn events_dir(&self, split: Split) -> PathBuf {
        self.split_dir(split).join(EVENTS_DIR)
    }

    /// Reference distances. The test key sits outside the test directory
    /// since test events are unlabeled.
    pub fn key_path(&self, split: Split) -> PathBuf {
        match split {
            Split::Test => self.config.paths.corpus.join("test_reference.key"),
            _ => self.split_dir(split).join("key.tsv"),
        }
    }

    pub fn truth_path(&self) -> PathBuf {
        self.split_dir(Split::Train).join("angles.tsv")
    }

    pub fn angle_model(&self) -> PathBuf {
        self.config.paths.models.join("angle.model")
    }

    pub fn distance_model(&self) -> PathBuf {
        self.config.paths.models.join("distance.model")
    }

    pub fn output_path(&self, split: Split) -> PathBuf {
        self.config
            .paths
            .reports
            .join(format!("{}.output.tsv", split.as_str()))
    }
}

pub fn split_generator(config: &RunConfig, split: Split) -> GeneratorConfig {
    let events_per_class = match split {
        Split::Train => config.generator.events_per_class,
        Split::Dev => config.dev_events_per_class,
        Split::Test => config.test_events_per_class,
    };
    GeneratorConfig {
        seed: stage_seed(config.seed, &format!("gen.{}", split.as_str())),
        events_per_class,
        labeled: split != Split::Test,
        id_prefix: split.id_prefix().into(),
        ..config.generator.clone()
    }
}

pub fn generate_split(config: &RunConfig, split: Split) -> Result<Corpus> {
    generate_corpus(&split_generator(config, split))
}

/// Trained artifacts needed at prediction time.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    /// Absent when the angle feature is masked.
    pub angle: Option<AngleModel>,
    pub schema: EncodingSchema,
    pub mask: FeatureMask,
    pub distance: DistanceModel,
}

fn event_rows(event: &EventFile, angle: Option<&AngleModel>) -> Result<Vec<FeatureRow>> {
    let mut rows = assemble_rows(event)?;
    if let Some(model) = angle {
        for row in &mut rows {
            row.angle = Some(predict_angle(model, row).angle);
        }
    }
    Ok(rows)
}

/// Rows of every event paired with the true angle at each row's timestamp.
pub fn angle_training_set(
    events: &[EventFile],
    truths: &[GroundTruth],
) -> Result<(Vec<FeatureRow>, Vec<u16>)> {
    let by_id: HashMap<&str, &GroundTruth> =
        truths.iter().map(|t| (t.event_id.as_str(), t)).collect();
    let per_event: Vec<(Vec<FeatureRow>, Vec<u16>)> = events
        .par_iter()
        .map(|event| {
            let id = event.metadata.event_id.as_str();
            let truth = by_id
                .get(id)
                .ok_or_else(|| Error::InvalidData(format!("no angle ground truth for {id}")))?;
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for row in assemble_rows(event)? {
                if let Some(angle) = truth.angle_at(row.timestamp) {
                    labels.push(angle);
                    rows.push(row);
                }
            }
            Ok((rows, labels))
        })
        .collect::<Result<_>>()?;
    let (rows, labels): (Vec<Vec<_>>, Vec<Vec<_>>) = per_event.into_iter().unzip();
    Ok((rows.concat(), labels.concat()))
}

pub fn train_angle_stage(
    config: &RunConfig,
    events: &[EventFile],
    truths: &[GroundTruth],
    log: Log<'_>,
) -> Result<AngleModel> {
    let (rows, labels) = angle_training_set(events, truths)?;
    log(&format!(
        "stage 1: {} rows, {} estimators",
        rows.len(),
        config.gbc.n_estimators
    ));
    let model = train_angle(&rows, &labels, &config.gbc_config())?;
    log(&format!(
        "stage 1: training log-loss {:.4} -> {:.4}",
        model.train_loss.first().copied().unwrap_or(f64::NAN),
        model.train_loss.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(model)
}

/// Row-level angle accuracy against ground truth.
pub fn angle_accuracy(model: &AngleModel, events: &[EventFile], truths: &[GroundTruth]) -> Result<f64> {
    let (rows, labels) = angle_training_set(events, truths)?;
    if rows.is_empty() {
        return Err(Error::InvalidData("no rows to evaluate".into()));
    }
    let hits = rows
        .par_iter()
        .zip(&labels)
        .filter(|(row, &y)| predict_angle(model, row).angle == y)
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTraining {
    pub schema: EncodingSchema,
    pub model: DistanceModel,
    /// Fraction of training rows whose argmax matches the event label.
    pub row_accuracy: f64,
}

pub fn train_distance_stage(
    config: &RunConfig,
    events: &[EventFile],
    keys: &[KeyEntry],
    angle: Option<&AngleModel>,
    log: Log<'_>,
) -> Result<DistanceTraining> {
    let mask = config.feature_mask;
    if !mask.angle && angle.is_none() {
        return Err(Error::Config(
            "the angle feature is enabled but no angle model was given".into(),
        ));
    }
    let angle = if mask.angle { None } else { angle };
    let labels_by_id: HashMap<&str, DistanceClass> =
        keys.iter().map(|k| (k.event_id.as_str(), k.reference)).collect();

    let per_event: Vec<(Vec<FeatureRow>, DistanceClass)> = events
        .par_iter()
        .map(|event| {
            let id = event.metadata.event_id.as_str();
            let label = *labels_by_id
                .get(id)
                .ok_or_else(|| Error::InvalidData(format!("no reference distance for {id}")))?;
            Ok((event_rows(event, angle)?, label))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<FeatureRow> = per_event.iter().flat_map(|(r, _)| r.iter().cloned()).collect();
    let labels: Vec<DistanceClass> = per_event
        .iter()
        .flat_map(|(r, l)| std::iter::repeat_n(*l, r.len()))
        .collect();

    let schema = fit_schema(&rows)?;
    let vectors = rows
        .iter()
        .map(|r| schema.encode_row(r, &mask))
        .collect::<Result<Vec<_>>>()?;
    let net = config.net_config();
    log(&format!(
        "stage 2: {} rows x {} features, mask {mask}, {} epochs",
        vectors.len(),
        schema.dimension(&mask),
        net.epochs
    ));
    let every = (net.epochs / 10).max(1);
    let model = train_distance_with(&vectors, &labels, &net, |epoch, loss| {
        if (epoch + 1) % every == 0 || epoch + 1 == net.epochs {
            log(&format!("stage 2: epoch {}/{} loss {loss:.5}", epoch + 1, net.epochs));
        }
    })?;
    let hits = predict_rows(&model, &vectors)?
        .iter()
        .zip(&labels)
        .filter(|(p, &y)| p.class == y)
        .count();
    let row_accuracy = hits as f64 / labels.len() as f64;
    log(&format!("stage 2: training row accuracy {row_accuracy:.4}"));
    Ok(DistanceTraining {
        schema,
        model,
        row_accuracy,
    })
}

/// Both stages on one labeled corpus.
pub fn train_models(config: &RunConfig, train: &Corpus, log: Log<'_>) -> Result<Models> {
    let angle = if config.feature_mask.angle {
        log("stage 1: skipped (angle masked)");
        None
    } else {
        Some(train_angle_stage(config, &train.events, &train.truths, log)?)
    };
    let trained = train_distance_stage(config, &train.events, &train.keys, angle.as_ref(), log)?;
    Ok(Models {
        angle,
        schema: trained.schema,
        mask: config.feature_mask,
        distance: trained.model,
    })
}

pub fn predict_event(models: &Models, event: &EventFile, look: LookMode) -> Result<DistanceClass> {
    let rows = assemble_rows(event)?;
    let mut rows = select_look(&rows, look).to_vec();
    if rows.is_empty() {
        return Err(Error::EmptyEvent(event.metadata.event_id.clone()));
    }
    if !models.mask.angle {
        let angle = models
            .angle
            .as_ref()
            .ok_or_else(|| Error::Config("angle model missing".into()))?;
        for row in &mut rows {
            row.angle = Some(predict_angle(angle, row).angle);
        }
    }
    let vectors = rows
        .iter()
        .map(|r| models.schema.encode_row(r, &models.mask))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<DistanceClass> = predict_rows(&models.distance, &vectors)?
        .into_iter()
        .map(|p| p.class)
        .collect();
    aggregate_event(&classes)
}

/// Per-event outcome, in input order.
pub fn predict_events(
    models: &Models,
    events: &[EventFile],
    look: LookMode,
) -> Vec<(String, Result<DistanceClass>)> {
    events
        .par_iter()
        .map(|e| (e.metadata.event_id.clone(), predict_event(models, e, look)))
        .collect()
}

/// Like [`predict_events`] but fails on the first event that cannot be
/// predicted. Output is sorted by event id.
pub fn predict_all(models: &Models, events: &[EventFile], look: LookMode) -> Result<Vec<OutputEntry>> {
    let mut out = predict_events(models, events, look)
        .into_iter()
        .map(|(id, r)| {
            r.map(|c| OutputEntry {
                event_id: id,
                predicted_m: c.metres(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    Ok(out)
}

/// Trains on `train`, predicts `test` events and scores against `test_keys`.
pub fn evaluate(
    config: &RunConfig,
    train: &Corpus,
    test_events: &[EventFile],
    test_keys: &[KeyEntry],
    log: Log<'_>,
) -> Result<(Models, ScoreReport)> {
    let models = train_models(config, train, log)?;
    let outputs = predict_all(&models, test_events, config.look_mode)?;
    let report = score_run(test_keys, &outputs, &config.scoring)?;
    Ok((models, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub mask: FeatureMask,
    pub look: LookMode,
    pub report: ScoreReport,
}

/// The seven ablation runs: the full feature set, each single-feature mask,
/// then the full model restricted to the first, last and all looks.
pub fn ablation_plan() -> Vec<(&'static str, FeatureMask, LookMode)> {
    let none = FeatureMask::none();
    let only = |name| none.with(name).expect("known mask");
    vec![
        ("baseline", none, LookMode::Full),
        ("no_coarse_grain", only("coarse_grain"), LookMode::Full),
        ("no_expected_distance", only("expected_distance"), LookMode::Full),
        ("no_angle", only("angle"), LookMode::Full),
        ("look_first", none, LookMode::First),
        ("look_last", none, LookMode::Last),
        ("look_full", none, LookMode::Full),
    ]
}

/// Runs every variant of [`ablation_plan`]. Stage 1 does not depend on the
/// mask, so it is trained once; each mask trains its own Stage 2, and the
/// look variants reuse the unmasked models.
pub fn run_ablation(
    config: &RunConfig,
    train: &Corpus,
    test_events: &[EventFile],
    test_keys: &[KeyEntry],
    log: Log<'_>,
) -> Result<Vec<Variant>> {
    let angle = train_angle_stage(config, &train.events, &train.truths, log)?;
    let mut trained: Vec<(FeatureMask, Models)> = Vec::new();
    let mut variants = Vec::new();
    for (name, mask, look) in ablation_plan() {
        log(&format!("ablation: {name}"));
        let models = match trained.iter().find(|(m, _)| *m == mask) {
            Some((_, models)) => models.clone(),
            None => {
                let masked = RunConfig {
                    feature_mask: mask,
                    ..config.clone()
                };
                let t = train_distance_stage(&masked, &train.events, &train.keys, Some(&angle), log)?;
                let models = Models {
                    angle: (!mask.angle).then(|| angle.clone()),
                    schema: t.schema,
                    mask,
                    distance: t.model,
                };
                trained.push((mask, models.clone()));
                models
            }
        };
        let outputs = predict_all(&models, test_events, look)?;
        let report = score_run(test_keys, &outputs, &config.scoring)?;
        variants.push(Variant {
            name: name.into(),
            mask,
            look,
            report,
        });
    }
    Ok(variants)
}

pub fn render_ablation_summary(variants: &[Variant]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22} {:<18} {:<5} {:>8}", "variant", "mask", "look", "avg nDCF");
    for v in variants {
        let avg = v
            .report
            .average
            .map_or("invalid".to_string(), |a| format!("{:.2}", a.ndcf));
        let _ = writeln!(
            out,
            "{:<22} {:<18} {:<5} {:>8}",
            v.name,
            v.mask.to_string(),
            v.look.to_string(),
            avg
        );
    }
    out
}

// ---------------------------------------------------------------------------
// On-disk commands

pub fn save_angle_model(path: &Path, model: &AngleModel, fingerprint: &str) -> Result<()> {
    let mut doc = KvDocument::new();
    doc.set("fingerprint", fingerprint);
    model.to_kv(&mut doc);
    write_atomic(path, doc.render().as_bytes())
}

fn check_fingerprint(doc: &KvDocument, expected: &str) -> Result<()> {
    let trained = doc.get("fingerprint")?;
    if trained != expected {
        return Err(Error::Fingerprint {
            trained: trained.into(),
            current: expected.into(),
        });
    }
    Ok(())
}

pub fn load_angle_model(path: &Path, fingerprint: &str) -> Result<AngleModel> {
    let doc = KvDocument::parse(&read_to_string(path)?)?;
    check_fingerprint(&doc, fingerprint)?;
    AngleModel::from_kv(&doc)
}

pub fn save_distance_model(
    path: &Path,
    schema: &EncodingSchema,
    mask: FeatureMask,
    model: &DistanceModel,
    fingerprint: &str,
) -> Result<()> {
    let mut doc = KvDocument::new();
    doc.set("fingerprint", fingerprint);
    doc.set("mask", mask);
    schema.to_kv(&mut doc, "schema.");
    model.to_kv(&mut doc);
    write_atomic(path, doc.render().as_bytes())
}

pub fn load_distance_model(
    path: &Path,
    fingerprint: &str,
) -> Result<(EncodingSchema, FeatureMask, DistanceModel)> {
    let doc = KvDocument::parse(&read_to_string(path)?)?;
    check_fingerprint(&doc, fingerprint)?;
    let mask: FeatureMask = doc.get_parsed("mask")?;
    let schema = EncodingSchema::from_kv(&doc, "schema.")?;
    let model = DistanceModel::from_kv(&doc)?;
    let dim = schema.dimension(&mask);
    if model.net.input_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: model.net.input_dim(),
        });
    }
    Ok((schema, mask, model))
}

pub fn load_models(config: &RunConfig) -> Result<Models> {
    let layout = Layout::new(config);
    let fingerprint = config.fingerprint();
    let (schema, mask, distance) = load_distance_model(&layout.distance_model(), &fingerprint)?;
    let angle = if mask.angle {
        None
    } else {
        Some(load_angle_model(&layout.angle_model(), &fingerprint)?)
    };
    Ok(Models {
        angle,
        schema,
        mask,
        distance,
    })
}

/// Parsed events plus the files that failed to parse.
pub type LoadedEvents = (Vec<EventFile>, Vec<(PathBuf, Error)>);

/// Event files of a split directory in file-name order. Unreadable files are
/// returned separately rather than aborting the load.
pub fn load_events(dir: &Path) -> Result<LoadedEvents> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == EVENT_EXT) {
            paths.push(path);
        }
    }
    paths.sort();
    let parsed: Vec<(PathBuf, Result<EventFile>)> = paths
        .into_par_iter()
        .map(|p| {
            let r = std::fs::read(&p)
                .map_err(|e| Error::io(&p, e))
                .and_then(|b| parse_event_file(&b));
            (p, r)
        })
        .collect();
    let mut events = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in parsed {
        match r {
            Ok(e) => events.push(e),
            Err(e) => failures.push((path, e)),
        }
    }
    Ok((events, failures))
}

fn load_clean_events(dir: &Path) -> Result<Vec<EventFile>> {
    let (events, failures) = load_events(dir)?;
    if let Some((path, err)) = failures.into_iter().next() {
        return Err(Error::InvalidData(format!("{}: {err}", path.display())));
    }
    Ok(events)
}

/// Training corpus as written by `cmd_gen`.
pub fn load_training_corpus(config: &RunConfig) -> Result<Corpus> {
    let layout = Layout::new(config);
    Ok(Corpus {
        events: load_clean_events(&layout.events_dir(Split::Train))?,
        keys: parse_key_file(&read_to_string(&layout.key_path(Split::Train))?)?,
        truths: parse_ground_truth(&read_to_string(&layout.truth_path())?)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenSummary {
    pub split: Split,
    pub events: usize,
    pub dir: PathBuf,
}

pub fn cmd_gen(config: &RunConfig) -> Result<Vec<GenSummary>> {
    config.validate()?;
    let layout = Layout::new(config);
    Split::ALL
        .iter()
        .map(|&split| {
            let corpus = generate_split(config, split)?;
            let dir = layout.split_dir(split);
            let key_path = layout.key_path(split);
            let truth_path = layout.truth_path();
            write_corpus(
                &corpus,
                &dir,
                WriteOptions {
                    key_path: Some(&key_path),
                    truth_path: (split == Split::Train).then_some(truth_path.as_path()),
                },
            )?;
            Ok(GenSummary {
                split,
                events: corpus.events.len(),
                dir,
            })
        })
        .collect()
}

pub fn cmd_train_angle(config: &RunConfig, log: Log<'_>) -> Result<AngleModel> {
    config.validate()?;
    let train = load_training_corpus(config)?;
    let model = train_angle_stage(config, &train.events, &train.truths, log)?;
    save_angle_model(&Layout::new(config).angle_model(), &model, &config.fingerprint())?;
    Ok(model)
}

/// Trains Stage 2, reusing the saved angle model unless the angle feature is
/// masked.
pub fn cmd_train_dist(config: &RunConfig, log: Log<'_>) -> Result<DistanceTraining> {
    config.validate()?;
    let layout = Layout::new(config);
    let fingerprint = config.fingerprint();
    let train = load_training_corpus(config)?;
    let angle = if config.feature_mask.angle {
        None
    } else {
        Some(load_angle_model(&layout.angle_model(), &fingerprint)?)
    };
    let trained = train_distance_stage(config, &train.events, &train.keys, angle.as_ref(), log)?;
    save_distance_model(
        &layout.distance_model(),
        &trained.schema,
        config.feature_mask,
        &trained.model,
        &fingerprint,
    )?;
    Ok(trained)
}

pub fn cmd_train(config: &RunConfig, log: Log<'_>) -> Result<DistanceTraining> {
    config.validate()?;
    if config.feature_mask.angle {
        log("stage 1: skipped (angle masked)");
    } else {
        cmd_train_angle(config, log)?;
    }
    cmd_train_dist(config, log)
}

#[derive(Debug)]
pub struct PredictSummary {
    pub output_path: PathBuf,
    pub written: usize,
    /// Event file or id, with the reason it could not be predicted.
    pub failures: Vec<(String, Error)>,
}

pub fn cmd_predict(config: &RunConfig, split: Split) -> Result<PredictSummary> {
    config.validate()?;
    let layout = Layout::new(config);
    let models = load_models(config)?;
    let (events, unreadable) = load_events(&layout.events_dir(split))?;
    let mut failures: Vec<(String, Error)> = unreadable
        .into_iter()
        .map(|(p, e)| (p.display().to_string(), e))
        .collect();
    let mut outputs = Vec::new();
    for (id, result) in predict_events(&models, &events, config.look_mode) {
        match result {
            Ok(class) => outputs.push(OutputEntry {
                event_id: id,
                predicted_m: class.metres(),
            }),
            Err(e) => failures.push((id, e)),
        }
    }
    outputs.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    let output_path = layout.output_path(split);
    write_atomic(&output_path, render_output_file(&outputs).as_bytes())?;
    Ok(PredictSummary {
        output_path,
        written: outputs.len(),
        failures,
    })
}

/// Scores an arbitrary key / output pair. Never touches model artifacts.
pub fn cmd_score(config: &RunConfig, key_path: &Path, output_path: &Path) -> Result<ScoreReport> {
    let keys = parse_key_file(&read_to_string(key_path)?)?;
    let outputs = parse_output_file(&read_to_string(output_path)?)?;
    score_run(&keys, &outputs, &config.scoring)
}

/// Writes `<stem>.txt` and `<stem>.csv` renderings of a report.
pub fn write_report(dir: &Path, stem: &str, report: &ScoreReport) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.txt")), report.render_text().as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.csv")), report.render_csv().as_bytes())
}

/// Runs the ablation suite on the generated train and test splits, writing
/// one report per variant plus `summary.txt` under `reports/ablation`.
pub fn cmd_ablate(config: &RunConfig, log: Log<'_>) -> Result<(Vec<Variant>, PathBuf)> {
    config.validate()?;
    let layout = Layout::new(config);
    let train = load_training_corpus(config)?;
    let test_events = load_clean_events(&layout.events_dir(Split::Test))?;
    let test_keys = parse_key_file(&read_to_string(&layout.key_path(Split::Test))?)?;
    let variants = run_ablation(config, &train, &test_events, &test_keys, log)?;
    let dir = config.paths.reports.join("ablation");
    for v in &variants {
        write_report(&dir, &v.name, &v.report)?;
    }
    let summary = dir.join("summary.txt");
    write_atomic(&summary, render_ablation_summary(&variants).as_bytes())?;
    Ok((variants, summary))
}

/// Re-renders every saved `*.csv` score report under `dir` (recursively) as
/// a two-decimal table.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_csv(dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidData(format!(
            "no score reports under {}",
            dir.display()
        )));
    }
    let mut out = String::new();
    for path in files {
        let text = read_to_string(&path)?;
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let _ = writeln!(out, "== {}", rel.display());
        out.push_str(&render_saved_csv(&text).map_err(|e| match e {
            Error::Parse { line, message } => {
                Error::InvalidData(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })?);
        out.push('\n');
    }
    Ok(out)
}

fn collect_csv(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_csv(&path, files)?;
        } else if path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    Ok(())
}

fn render_saved_csv(text: &str) -> Result<String> {
    let mut lines = text.lines();
    if lines.next() != Some("subset,D,p_miss,p_fa,ndcf") {
        return Err(Error::parse(1, "not a score report"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>5} {:>7} {:>7} {:>7}", "subset", "D", "P_miss", "P_fa", "nDCF");
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(n + 2, "expected 5 fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(n + 2, format!("bad number {s:?}")))
        };
        let d = if f[1].is_empty() {
            String::new()
        } else {
            format!("{:.2}", num(f[1])?)
        };
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>7.2} {:>7.2} {:>7.2}",
            f[0],
            d,
            num(f[2])?,
            num(f[3])?,
            num(f[4])?
        );
    }
    Ok(out)
}
