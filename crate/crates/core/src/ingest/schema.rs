//! Numeric encoding of feature rows: z-scored numerics followed by one-hot
//! categorical blocks, with statistics fitted on the training split only.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::rows::{FeatureRow, ANGLES};
use crate::pathloss::{expected_distance, PathLossParams};
use crate::sidecar::KvDocument;

/// Reserved bucket for categorical levels absent from the training split.
pub const UNKNOWN: &str = "unknown";

pub type FeatureVector = Vec<f64>;

/// Numeric columns in encoding order. `expected_distance_midpoint` replaces
/// `expected_distance` when the grain is masked.
pub const NUMERIC_FEATURES: [&str; 17] = [
    "gyro_x",
    "gyro_y",
    "gyro_z",
    "magnetic_field_x",
    "magnetic_field_y",
    "magnetic_field_z",
    "accelerometer_x",
    "accelerometer_y",
    "accelerometer_z",
    "attitude_roll",
    "attitude_pitch",
    "attitude_yaw",
    "rssi",
    "tx_power",
    "attenuation",
    "expected_distance",
    "expected_distance_midpoint",
];

fn numeric_value(row: &FeatureRow, name: &str) -> f64 {
    match name {
        "gyro_x" => row.gyro[0],
        "gyro_y" => row.gyro[1],
        "gyro_z" => row.gyro[2],
        "magnetic_field_x" => row.magnetic_field[0],
        "magnetic_field_y" => row.magnetic_field[1],
        "magnetic_field_z" => row.magnetic_field[2],
        "accelerometer_x" => row.accelerometer[0],
        "accelerometer_y" => row.accelerometer[1],
        "accelerometer_z" => row.accelerometer[2],
        "attitude_roll" => row.attitude[0],
        "attitude_pitch" => row.attitude[1],
        "attitude_yaw" => row.attitude[2],
        "rssi" => row.rssi,
        "tx_power" => row.tx_power,
        "attenuation" => row.attenuation,
        "expected_distance" => row.expected_distance,
        "expected_distance_midpoint" => expected_distance(row.rssi, PathLossParams::MIDPOINT),
        other => unreachable!("unknown numeric feature {other}"),
    }
}

/// Features that can be withheld from the distance model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    pub coarse_grain: bool,
    pub expected_distance: bool,
    pub angle: bool,
}

impl FeatureMask {
    pub const NAMES: [&'static str; 3] = ["coarse_grain", "expected_distance", "angle"];

    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str) -> Result<Self> {
        match name {
            "coarse_grain" => self.coarse_grain = true,
            "expected_distance" => self.expected_distance = true,
            "angle" => self.angle = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown mask {other:?}; expected one of {:?}",
                    Self::NAMES
                )))
            }
        }
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::none()
    }

    fn retains_numeric(&self, name: &str) -> bool {
        match name {
            "expected_distance" => !self.expected_distance && !self.coarse_grain,
            "expected_distance_midpoint" => !self.expected_distance && self.coarse_grain,
            _ => true,
        }
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.coarse_grain, "coarse_grain"),
            (self.expected_distance, "expected_distance"),
            (self.angle, "angle"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::none());
        }
        s.split(',').try_fold(Self::none(), |m, name| m.with(name.trim()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NumericStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodingSchema {
    pub numeric: Vec<NumericStat>,
    /// Zero-variance columns removed at fit time.
    pub dropped: Vec<String>,
    pub carry_vocab: Vec<String>,
    pub pose_vocab: Vec<String>,
    pub grain_vocab: Vec<String>,
    pub angle_vocab: Vec<String>,
}

fn vocabulary<'a>(levels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut vocab: Vec<String> = levels
        .filter(|l| *l != UNKNOWN)
        .map(str::to_string)
        .collect();
    vocab.sort();
    vocab.dedup();
    vocab.push(UNKNOWN.to_string());
    vocab
}

fn one_hot(out: &mut FeatureVector, vocab: &[String], level: &str) {
    let hit = vocab
        .iter()
        .position(|v| v == level)
        .unwrap_or(vocab.len() - 1);
    out.extend((0..vocab.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
}

/// Fits normalization statistics (population std) and categorical
/// vocabularies on training rows.
pub fn fit_schema(rows: &[FeatureRow]) -> Result<EncodingSchema> {
    if rows.len() < 2 {
        return Err(Error::Schema(format!(
            "need at least 2 rows to fit a schema, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut numeric = Vec::new();
    let mut dropped = Vec::new();
    for name in NUMERIC_FEATURES {
        let mean = rows.iter().map(|r| numeric_value(r, name)).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|r| (numeric_value(r, name) - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        if std > 1e-12 * mean.abs().max(1.0) {
            numeric.push(NumericStat {
                name: name.to_string(),
                mean,
                std,
            });
        } else {
            dropped.push(name.to_string());
        }
    }
    Ok(EncodingSchema {
        numeric,
        dropped,
        carry_vocab: vocabulary(rows.iter().map(|r| r.carry_location.as_str())),
        pose_vocab: vocabulary(rows.iter().map(|r| r.pose.as_str())),
        grain_vocab: vocabulary(rows.iter().map(|r| r.grain.as_str())),
        angle_vocab: ANGLES
            .iter()
            .map(|&a| angle_level(a))
            .chain([UNKNOWN.to_string()])
            .collect(),
    })
}

fn angle_level(angle: u16) -> String {
    angle.to_string()
}

impl EncodingSchema {
    pub fn numeric_names(&self, mask: &FeatureMask) -> Vec<&str> {
        self.numeric
            .iter()
            .map(|s| s.name.as_str())
            .filter(|n| mask.retains_numeric(n))
            .collect()
    }

    /// Length of the encoded vector under `mask`.
    pub fn dimension(&self, mask: &FeatureMask) -> usize {
        let mut dim = self.numeric_names(mask).len()
            + self.carry_vocab.len()
            + self.pose_vocab.len();
        if !mask.coarse_grain {
            dim += self.grain_vocab.len();
        }
        if !mask.angle {
            dim += self.angle_vocab.len();
        }
        dim
    }

    pub fn stat(&self, name: &str) -> Option<&NumericStat> {
        self.numeric.iter().find(|s| s.name == name)
    }

    pub fn encode_row(&self, row: &FeatureRow, mask: &FeatureMask) -> Result<FeatureVector> {
        let mut out = Vec::with_capacity(self.dimension(mask));
        for stat in self.numeric.iter().filter(|s| mask.retains_numeric(&s.name)) {
            out.push((numeric_value(row, &stat.name) - stat.mean) / stat.std);
        }
        one_hot(&mut out, &self.carry_vocab, row.carry_location.as_str());
        one_hot(&mut out, &self.pose_vocab, row.pose.as_str());
        if !mask.coarse_grain {
            one_hot(&mut out, &self.grain_vocab, row.grain.as_str());
        }
        if !mask.angle {
            let angle = row.angle.ok_or_else(|| {
                Error::Schema("row has no angle but the schema encodes one".into())
            })?;
            one_hot(&mut out, &self.angle_vocab, &angle_level(angle));
        }
        Ok(out)
    }

    pub fn to_kv(&self, doc: &mut KvDocument, prefix: &str) {
        let names: Vec<&str> = self.numeric.iter().map(|s| s.name.as_str()).collect();
        doc.set_list(format!("{prefix}numeric.names"), &names);
        doc.set_f64s(
            format!("{prefix}numeric.mean"),
            &self.numeric.iter().map(|s| s.mean).collect::<Vec<_>>(),
        );
        doc.set_f64s(
            format!("{prefix}numeric.std"),
            &self.numeric.iter().map(|s| s.std).collect::<Vec<_>>(),
        );
        doc.set_list(format!("{prefix}numeric.dropped"), &self.dropped);
        doc.set_list(format!("{prefix}vocab.carry"), &self.carry_vocab);
        doc.set_list(format!("{prefix}vocab.pose"), &self.pose_vocab);
        doc.set_list(format!("{prefix}vocab.grain"), &self.grain_vocab);
        doc.set_list(format!("{prefix}vocab.angle"), &self.angle_vocab);
    }

    pub fn from_kv(doc: &KvDocument, prefix: &str) -> Result<Self> {
        let names: Vec<String> = doc.get_list(&format!("{prefix}numeric.names"))?;
        let means: Vec<f64> = doc.get_list(&format!("{prefix}numeric.mean"))?;
        let stds: Vec<f64> = doc.get_list(&format!("{prefix}numeric.std"))?;
        if names.len() != means.len() || names.len() != stds.len() {
            return Err(Error::Schema("numeric stat lists differ in length".into()));
        }
        if let Some(bad) = names.iter().find(|n| !NUMERIC_FEATURES.contains(&n.as_str())) {
            return Err(Error::Schema(format!("unknown numeric feature {bad:?}")));
        }
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Schema("non-positive std in schema".into()));
        }
        let numeric = names
            .into_iter()
            .zip(means)
            .zip(stds)
            .map(|((name, mean), std)| NumericStat { name, mean, std })
            .collect();
        let vocab = |key: &str| -> Result<Vec<String>> {
            let v: Vec<String> = doc.get_list(&format!("{prefix}vocab.{key}"))?;
            if v.last().map(String::as_str) != Some(UNKNOWN) {
                return Err(Error::Schema(format!("vocabulary {key} lacks the unknown bucket")));
            }
            Ok(v)
        };
        Ok(Self {
            numeric,
            dropped: doc.get_list(&format!("{prefix}numeric.dropped"))?,
            carry_vocab: vocab("carry")?,
            pose_vocab: vocab("pose")?,
            grain_vocab: vocab("grain")?,
            angle_vocab: vocab("angle")?,
        })
    }
}
