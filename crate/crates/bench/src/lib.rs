//! Fixtures shared by the benchmarks.

use tc4tl_core::angle::{train_angle, AngleModel, GbcConfig};
use tc4tl_core::domain::DistanceClass;
use tc4tl_core::ingest::{assemble_rows, fit_schema, FeatureMask, FeatureRow, KeyEntry, OutputEntry};
use tc4tl_core::synthgen::{generate_corpus, Corpus, GeneratorConfig};

pub fn corpus(events_per_class: usize) -> Corpus {
    generate_corpus(&GeneratorConfig {
        seed: 11,
        events_per_class,
        ..GeneratorConfig::default()
    })
    .expect("default generator config is valid")
}

/// Rows of every event, without angles.
pub fn rows(corpus: &Corpus) -> Vec<FeatureRow> {
    corpus
        .events
        .iter()
        .flat_map(|e| assemble_rows(e).expect("generated events assemble"))
        .collect()
}

/// Rows with their true angles attached, plus the angle labels.
pub fn labeled_rows(corpus: &Corpus) -> (Vec<FeatureRow>, Vec<u16>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (event, truth) in corpus.events.iter().zip(&corpus.truths) {
        for mut row in assemble_rows(event).expect("generated events assemble") {
            let angle = truth.angle_at(row.timestamp).expect("row inside event");
            row.angle = Some(angle);
            rows.push(row);
            labels.push(angle);
        }
    }
    (rows, labels)
}

pub fn angle_model(rows: &[FeatureRow], labels: &[u16], n_estimators: usize) -> AngleModel {
    let config = GbcConfig {
        n_estimators,
        ..GbcConfig::default()
    };
    train_angle(rows, labels, &config).expect("angle training succeeds")
}

/// Encoded distance-model inputs and row labels.
pub fn encoded(corpus: &Corpus) -> (Vec<Vec<f64>>, Vec<DistanceClass>) {
    let (rows, _) = labeled_rows(corpus);
    let schema = fit_schema(&rows).expect("enough rows");
    let mask = FeatureMask::none();
    let mut labels = Vec::with_capacity(rows.len());
    for (event, key) in corpus.events.iter().zip(&corpus.keys) {
        let n = assemble_rows(event).expect("generated events assemble").len();
        labels.extend(std::iter::repeat_n(key.reference, n));
    }
    let vectors = rows
        .iter()
        .map(|r| schema.encode_row(r, &mask).expect("angle present"))
        .collect();
    (vectors, labels)
}

/// A key of `n` events and an output that predicts one class off.
pub fn scoring_pair(n: usize) -> (Vec<KeyEntry>, Vec<OutputEntry>) {
    let mut keys = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        let (grain, classes) = if i % 3 == 0 {
            let g = tc4tl_core::Grain::Coarse;
            (g, g.classes())
        } else {
            let g = tc4tl_core::Grain::Fine;
            (g, g.classes())
        };
        let reference = classes[i % classes.len()];
        let id = format!("e{i:06}");
        let shifted = DistanceClass::ALL[(reference.index() + i % 2) % 4];
        outputs.push(OutputEntry {
            event_id: id.clone(),
            predicted_m: shifted.metres(),
        });
        keys.push(KeyEntry {
            event_id: id,
            reference,
            grain,
        });
    }
    (keys, outputs)
}
