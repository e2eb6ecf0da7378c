//! Stage 1: multiclass gradient boosting over the receiver's orientation
//! features (attitude and magnetic field), predicting one of eight facing
//! angles.
//!
//! Each round fits one least-squares tree per class to the softmax residual
//! `onehot - p` and adds it with shrinkage. Leaves hold the mean residual;
//! there is no Newton step.

mod tree;

pub use tree::{Node, PresortedData, RegressionTree, TreeParams};

use crate::error::{Error, Result};
use crate::ingest::{FeatureRow, ANGLES};
use crate::sidecar::KvDocument;

pub const N_CLASSES: usize = ANGLES.len();
pub const N_FEATURES: usize = 6;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "attitude_roll",
    "attitude_pitch",
    "attitude_yaw",
    "magnetic_field_x",
    "magnetic_field_y",
    "magnetic_field_z",
];

/// Floor on initial class priors so absent classes keep finite scores.
const PRIOR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GbcConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Recorded with the model. Fitting itself draws no random numbers.
    pub seed: u64,
}

impl Default for GbcConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.2,
            max_depth: 3,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl GbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::Config("gbc.n_estimators must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("gbc.learning_rate must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleModel {
    pub config: GbcConfig,
    /// Normalization of the six orientation features.
    pub means: [f64; N_FEATURES],
    pub stds: [f64; N_FEATURES],
    pub initial_scores: [f64; N_CLASSES],
    /// `trees[round][class]`.
    pub trees: Vec<Vec<RegressionTree>>,
    /// Mean training log-loss before any round and after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnglePrediction {
    pub angle: u16,
    pub probabilities: [f64; N_CLASSES],
}

pub fn angle_class(angle: u16) -> Option<usize> {
    ANGLES.iter().position(|&a| a == angle)
}

/// Softmax, stable under adding a constant to every score.
pub fn softmax(scores: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.map(|s| (s - max).exp());
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// First index of the maximum, so ties go to the smaller angle.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_loss(scores: &[[f64; N_CLASSES]], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[y]
        })
        .sum();
    total / labels.len() as f64
}

pub fn train_angle(rows: &[FeatureRow], labels: &[u16], config: &GbcConfig) -> Result<AngleModel> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidData("no rows to train the angle model".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let classes: Vec<usize> = labels
        .iter()
        .map(|&a| {
            angle_class(a).ok_or_else(|| Error::InvalidData(format!("angle label {a} is not a multiple of 45 in [0, 315]")))
        })
        .collect::<Result<_>>()?;

    let n = rows.len();
    let raw: Vec<[f64; N_FEATURES]> = rows.iter().map(FeatureRow::orientation_features).collect();
    let mut means = [0.0; N_FEATURES];
    let mut stds = [1.0; N_FEATURES];
    for f in 0..N_FEATURES {
        let mean = raw.iter().map(|x| x[f]).sum::<f64>() / n as f64;
        let var = raw.iter().map(|x| (x[f] - mean).powi(2)).sum::<f64>() / n as f64;
        means[f] = mean;
        if var.sqrt() > 0.0 {
            stds[f] = var.sqrt();
        }
    }
    let columns: Vec<Vec<f64>> = (0..N_FEATURES)
        .map(|f| raw.iter().map(|x| (x[f] - means[f]) / stds[f]).collect())
        .collect();
    let data = PresortedData::new(&columns);

    let mut counts = [0usize; N_CLASSES];
    classes.iter().for_each(|&c| counts[c] += 1);
    let initial_scores = counts.map(|c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln());

    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };
    let mut scores = vec![initial_scores; n];
    let mut train_loss = vec![log_loss(&scores, &classes)];
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut residual = vec![0.0; n];
    for _round in 0..config.n_estimators {
        let probs: Vec<[f64; N_CLASSES]> = scores.iter().map(softmax).collect();
        let mut round = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            for i in 0..n {
                let target = if classes[i] == k { 1.0 } else { 0.0 };
                residual[i] = target - probs[i][k];
            }
            round.push(RegressionTree::fit(&data, &residual, params));
        }
        for (i, s) in scores.iter_mut().enumerate() {
            let x: [f64; N_FEATURES] = std::array::from_fn(|f| columns[f][i]);
            for (k, tree) in round.iter().enumerate() {
                s[k] += config.learning_rate * tree.predict(&x);
            }
        }
        let loss = log_loss(&scores, &classes);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("angle model loss became {loss}")));
        }
        train_loss.push(loss);
        trees.push(round);
    }

    Ok(AngleModel {
        config: config.clone(),
        means,
        stds,
        initial_scores,
        trees,
        train_loss,
    })
}

impl AngleModel {
    fn normalize(&self, raw: [f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|f| (raw[f] - self.means[f]) / self.stds[f])
    }

    pub fn scores(&self, row: &FeatureRow) -> [f64; N_CLASSES] {
        let x = self.normalize(row.orientation_features());
        let mut scores = self.initial_scores;
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += self.config.learning_rate * tree.predict(&x);
            }
        }
        scores
    }

    pub fn tree_count(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    pub fn to_kv(&self, doc: &mut KvDocument) {
        let c = &self.config;
        doc.set("angle.features", FEATURE_NAMES.join(" "));
        doc.set_list("angle.classes", &ANGLES);
        doc.set("angle.n_estimators", c.n_estimators);
        doc.set_f64("angle.learning_rate", c.learning_rate);
        doc.set("angle.max_depth", c.max_depth);
        doc.set("angle.min_samples_leaf", c.min_samples_leaf);
        doc.set("angle.seed", c.seed);
        doc.set_f64s("angle.mean", &self.means);
        doc.set_f64s("angle.std", &self.stds);
        doc.set_f64s("angle.initial_scores", &self.initial_scores);
        doc.set_f64s("angle.train_loss", &self.train_loss);
        for (r, round) in self.trees.iter().enumerate() {
            for (k, tree) in round.iter().enumerate() {
                doc.set(format!("angle.tree.{r}.{k}"), tree.to_preorder());
            }
        }
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let features = doc.get("angle.features")?;
        if features != FEATURE_NAMES.join(" ") {
            return Err(Error::Schema(format!(
                "angle model consumes {features:?}, expected {:?}",
                FEATURE_NAMES.join(" ")
            )));
        }
        if doc.get_list::<u16>("angle.classes")? != ANGLES {
            return Err(Error::Schema("angle model has a different class set".into()));
        }
        let config = GbcConfig {
            n_estimators: doc.get_parsed("angle.n_estimators")?,
            learning_rate: doc.get_parsed("angle.learning_rate")?,
            max_depth: doc.get_parsed("angle.max_depth")?,
            min_samples_leaf: doc.get_parsed("angle.min_samples_leaf")?,
            seed: doc.get_parsed("angle.seed")?,
        };
        config.validate()?;
        let fixed = |key: &str| -> Result<[f64; N_FEATURES]> {
            doc.get_list::<f64>(key)?
                .try_into()
                .map_err(|_| Error::Schema(format!("{key} must hold {N_FEATURES} values")))
        };
        let means = fixed("angle.mean")?;
        let stds = fixed("angle.std")?;
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Schema("angle std must be positive".into()));
        }
        let initial_scores: [f64; N_CLASSES] = doc
            .get_list::<f64>("angle.initial_scores")?
            .try_into()
            .map_err(|_| Error::Schema("angle.initial_scores must hold 8 values".into()))?;
        let trees = (0..config.n_estimators)
            .map(|r| {
                (0..N_CLASSES)
                    .map(|k| {
                        RegressionTree::from_preorder(
                            doc.get(&format!("angle.tree.{r}.{k}"))?,
                            N_FEATURES,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            means,
            stds,
            initial_scores,
            trees,
            train_loss: doc.get_list("angle.train_loss")?,
        })
    }
}

pub fn predict_angle(model: &AngleModel, row: &FeatureRow) -> AnglePrediction {
    let probabilities = softmax(&model.scores(row));
    AnglePrediction {
        angle: ANGLES[argmax(&probabilities)],
        probabilities,
    }
}
