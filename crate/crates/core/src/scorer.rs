//! Contact decisions, miss / false-alarm rates and nDCF.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::domain::Grain;
use crate::error::{Error, Result};
use crate::ingest::{KeyEntry, OutputEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Tc4tl,
    NotTc4tl,
}

/// Contact iff the distance is at most `threshold`.
pub fn decide(distance_m: f64, threshold: f64) -> Decision {
    if distance_m <= threshold {
        Decision::Tc4tl
    } else {
        Decision::NotTc4tl
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRates {
    pub p_miss: f64,
    pub p_fa: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

/// Rates over paired reference / hypothesis decisions.
///
/// Fails when the reference has no targets or no non-targets, since one of
/// the two rates is then undefined.
pub fn error_rates(reference: &[Decision], hypothesis: &[Decision]) -> Result<ErrorRates> {
    if reference.len() != hypothesis.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: hypothesis.len(),
        });
    }
    let (mut targets, mut misses, mut nontargets, mut false_alarms) = (0, 0, 0, 0);
    for (r, h) in reference.iter().zip(hypothesis) {
        match r {
            Decision::Tc4tl => {
                targets += 1;
                misses += usize::from(*h == Decision::NotTc4tl);
            }
            Decision::NotTc4tl => {
                nontargets += 1;
                false_alarms += usize::from(*h == Decision::Tc4tl);
            }
        }
    }
    if targets == 0 || nontargets == 0 {
        let reason = if targets == 0 { "no target events" } else { "no non-target events" };
        return Err(Error::Scoring(reason.into()));
    }
    Ok(ErrorRates {
        p_miss: misses as f64 / targets as f64,
        p_fa: false_alarms as f64 / nontargets as f64,
        n_target: targets,
        n_nontarget: nontargets,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub miss: f64,
    pub false_alarm: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            miss: 1.0,
            false_alarm: 1.0,
        }
    }
}

pub fn ndcf(p_miss: f64, p_fa: f64, weights: CostWeights) -> f64 {
    (weights.miss * p_miss + weights.false_alarm * p_fa) / weights.miss.min(weights.false_alarm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoringConfig {
    pub thresholds: Vec<(Grain, f64)>,
    pub weights: CostWeights,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![
                (Grain::Fine, 1.2),
                (Grain::Fine, 1.8),
                (Grain::Fine, 3.0),
                (Grain::Coarse, 1.8),
            ],
            weights: CostWeights::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("scoring.thresholds is empty".into()));
        }
        if self.thresholds.iter().any(|&(_, d)| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Config("scoring thresholds must be positive".into()));
        }
        let w = self.weights;
        if !(w.miss > 0.0 && w.false_alarm > 0.0 && w.miss.is_finite() && w.false_alarm.is_finite()) {
            return Err(Error::Config("scoring weights must be positive".into()));
        }
        Ok(())
    }
}

pub fn subset_name(grain: Grain) -> &'static str {
    match grain {
        Grain::Coarse => "coarse_grain",
        Grain::Fine => "fine_grain",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub subset: Grain,
    pub threshold: f64,
    /// `Err` holds the reason a rate is undefined for this row.
    pub rates: std::result::Result<ErrorRates, String>,
    pub ndcf: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Averages {
    pub p_miss: f64,
    pub p_fa: f64,
    pub ndcf: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    /// Present only when every row is defined.
    pub average: Option<Averages>,
}

impl ScoreReport {
    /// The report, or an error naming the first undefined row.
    pub fn require_valid(&self) -> Result<&Averages> {
        for row in &self.rows {
            if let Err(reason) = &row.rates {
                return Err(Error::UndefinedRate {
                    subset: subset_name(row.subset).into(),
                    threshold: row.threshold,
                    reason: reason.clone(),
                });
            }
        }
        Ok(self.average.as_ref().expect("all rows defined"))
    }

    /// Aligned table, values rounded to two decimals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>5} {:>7} {:>7} {:>7}", "subset", "D", "P_miss", "P_fa", "nDCF");
        for row in &self.rows {
            let name = subset_name(row.subset);
            match (&row.rates, row.ndcf) {
                (Ok(r), Some(n)) => {
                    let _ = writeln!(
                        out,
                        "{name:<14} {:>5.2} {:>7.2} {:>7.2} {:>7.2}",
                        row.threshold, r.p_miss, r.p_fa, n
                    );
                }
                _ => {
                    let reason = row.rates.as_ref().err().map_or("undefined", String::as_str);
                    let _ = writeln!(out, "{name:<14} {:>5.2} invalid ({reason})", row.threshold);
                }
            }
        }
        match &self.average {
            Some(a) => {
                let _ = writeln!(
                    out,
                    "{:<14} {:>5} {:>7.2} {:>7.2} {:>7.2}",
                    "average", "", a.p_miss, a.p_fa, a.ndcf
                );
            }
            None => {
                let _ = writeln!(out, "{:<14} {:>5} invalid", "average", "");
            }
        }
        out
    }

    /// `subset,D,p_miss,p_fa,ndcf` rows at full precision; undefined values
    /// are written as `nan`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("subset,D,p_miss,p_fa,ndcf\n");
        for row in &self.rows {
            let (pm, pf) = match &row.rates {
                Ok(r) => (r.p_miss, r.p_fa),
                Err(_) => (f64::NAN, f64::NAN),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                subset_name(row.subset),
                row.threshold,
                pm,
                pf,
                row.ndcf.unwrap_or(f64::NAN)
            );
        }
        let a = self.average.unwrap_or(Averages {
            p_miss: f64::NAN,
            p_fa: f64::NAN,
            ndcf: f64::NAN,
        });
        let _ = writeln!(out, "average,,{},{},{}", a.p_miss, a.p_fa, a.ndcf);
        out.replace("NaN", "nan")
    }
}

/// Scores a system output against a key.
///
/// Every key id must appear in the output exactly once; output ids not in
/// the key are also rejected.
pub fn score_run(keys: &[KeyEntry], outputs: &[OutputEntry], config: &ScoringConfig) -> Result<ScoreReport> {
    config.validate()?;
    let mut predicted: HashMap<&str, f64> = HashMap::with_capacity(outputs.len());
    let mut duplicates = Vec::new();
    for o in outputs {
        if predicted.insert(o.event_id.as_str(), o.predicted_m).is_some() {
            duplicates.push(o.event_id.clone());
        }
    }
    let mut key_ids: BTreeMap<&str, ()> = BTreeMap::new();
    let mut duplicate_keys = Vec::new();
    for k in keys {
        if key_ids.insert(k.event_id.as_str(), ()).is_some() {
            duplicate_keys.push(k.event_id.clone());
        }
    }
    let mut missing: Vec<String> = keys
        .iter()
        .filter(|k| !predicted.contains_key(k.event_id.as_str()))
        .map(|k| k.event_id.clone())
        .collect();
    let mut extra: Vec<String> = outputs
        .iter()
        .filter(|o| !key_ids.contains_key(o.event_id.as_str()))
        .map(|o| o.event_id.clone())
        .collect();
    if !(duplicates.is_empty() && duplicate_keys.is_empty() && missing.is_empty() && extra.is_empty()) {
        missing.sort();
        extra.sort();
        duplicates.sort();
        duplicates.dedup();
        duplicate_keys.sort();
        duplicate_keys.dedup();
        let mut parts = Vec::new();
        for (label, ids) in [
            ("missing from output", &missing),
            ("duplicated in output", &duplicates),
            ("duplicated in key", &duplicate_keys),
            ("not in key", &extra),
        ] {
            if !ids.is_empty() {
                parts.push(format!("{label}: {}", ids.join(", ")));
            }
        }
        return Err(Error::Scoring(parts.join("; ")));
    }

    let rows: Vec<ScoreRow> = config
        .thresholds
        .iter()
        .map(|&(subset, threshold)| {
            let (reference, hypothesis): (Vec<_>, Vec<_>) = keys
                .iter()
                .filter(|k| k.grain == subset)
                .map(|k| {
                    (
                        decide(k.reference.metres(), threshold),
                        decide(predicted[k.event_id.as_str()], threshold),
                    )
                })
                .unzip();
            let rates = error_rates(&reference, &hypothesis).map_err(|e| match e {
                Error::Scoring(reason) => reason,
                other => other.to_string(),
            });
            let ndcf = rates.as_ref().ok().map(|r| ndcf(r.p_miss, r.p_fa, config.weights));
            ScoreRow {
                subset,
                threshold,
                rates,
                ndcf,
            }
        })
        .collect();

    let average = rows
        .iter()
        .map(|r| r.rates.as_ref().ok().zip(r.ndcf))
        .collect::<Option<Vec<_>>>()
        .map(|defined| {
            let n = defined.len() as f64;
            Averages {
                p_miss: defined.iter().map(|(r, _)| r.p_miss).sum::<f64>() / n,
                p_fa: defined.iter().map(|(r, _)| r.p_fa).sum::<f64>() / n,
                ndcf: defined.iter().map(|(_, d)| d).sum::<f64>() / n,
            }
        });
    Ok(ScoreReport { rows, average })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DistanceClass;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Decision::*;

    fn key(id: &str, d: DistanceClass, grain: Grain) -> KeyEntry {
        KeyEntry {
            event_id: id.into(),
            reference: d,
            grain,
        }
    }

    fn out(id: &str, d: f64) -> OutputEntry {
        OutputEntry {
            event_id: id.into(),
            predicted_m: d,
        }
    }

    fn random_run(rng: &mut ChaCha8Rng, n: usize) -> (Vec<KeyEntry>, Vec<OutputEntry>) {
        let mut keys = Vec::new();
        let mut outputs = Vec::new();
        for i in 0..n {
            let grain = if rng.random_bool(0.5) { Grain::Fine } else { Grain::Coarse };
            let classes = grain.classes();
            let reference = classes[rng.random_range(0..classes.len())];
            keys.push(key(&format!("e{i}"), reference, grain));
            let predicted = DistanceClass::ALL[rng.random_range(0..4)].metres();
            outputs.push(out(&format!("e{i}"), predicted));
        }
        (keys, outputs)
    }

    /// Counts every cell of the confusion matrix with a nested loop over
    /// (key, output) pairs matched by id.
    fn brute_force(keys: &[KeyEntry], outputs: &[OutputEntry], grain: Grain, d: f64) -> Option<(f64, f64)> {
        let (mut tp_miss, mut t, mut fa, mut nt) = (0.0, 0.0, 0.0, 0.0);
        for k in keys {
            for o in outputs {
                if o.event_id != k.event_id || k.grain != grain {
                    continue;
                }
                let ref_contact = k.reference.metres() <= d;
                let hyp_contact = o.predicted_m <= d;
                if ref_contact {
                    t += 1.0;
                    if !hyp_contact {
                        tp_miss += 1.0;
                    }
                } else {
                    nt += 1.0;
                    if hyp_contact {
                        fa += 1.0;
                    }
                }
            }
        }
        (t > 0.0 && nt > 0.0).then(|| (tp_miss / t, fa / nt))
    }

    #[test]
    fn decision_examples() {
        assert_eq!(decide(1.2, 1.8), Tc4tl);
        assert_eq!(decide(3.0, 1.8), NotTc4tl);
        assert_eq!(decide(1.8, 1.8), Tc4tl);
    }

    #[test]
    fn rate_examples() {
        let reference = [vec![Tc4tl; 4], vec![NotTc4tl; 6]].concat();
        let hypothesis = [
            vec![NotTc4tl, Tc4tl, Tc4tl, Tc4tl],
            vec![Tc4tl, Tc4tl, Tc4tl, NotTc4tl, NotTc4tl, NotTc4tl],
        ]
        .concat();
        let r = error_rates(&reference, &hypothesis).unwrap();
        assert_eq!((r.p_miss, r.p_fa), (0.25, 0.5));
        let perfect = error_rates(&reference, &reference).unwrap();
        assert_eq!((perfect.p_miss, perfect.p_fa), (0.0, 0.0));
        assert!(error_rates(&[Tc4tl], &[Tc4tl]).is_err());
        assert!(error_rates(&[NotTc4tl], &[Tc4tl]).is_err());
    }

    #[test]
    fn ndcf_examples() {
        let unit = CostWeights::default();
        assert!((ndcf(0.01, 0.14, unit) - 0.15).abs() < 1e-12);
        assert_eq!(ndcf(0.0, 0.0, unit), 0.0);
        assert!((ndcf(0.17, 0.12, unit) - 0.29).abs() < 1e-12);
        let w = CostWeights {
            miss: 2.0,
            false_alarm: 4.0,
        };
        assert_eq!(ndcf(0.5, 0.25, w), (1.0 + 1.0) / 2.0);
    }

    #[test]
    fn oracle_system_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (keys, _) = random_run(&mut rng, 60);
        let outputs: Vec<_> = keys.iter().map(|k| out(&k.event_id, k.reference.metres())).collect();
        let report = score_run(&keys, &outputs, &ScoringConfig::default()).unwrap();
        for row in &report.rows {
            let r = row.rates.as_ref().unwrap();
            assert_eq!((r.p_miss, r.p_fa, row.ndcf.unwrap()), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn always_closest_is_all_false_alarms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (keys, _) = random_run(&mut rng, 80);
        let outputs: Vec<_> = keys.iter().map(|k| out(&k.event_id, 1.2)).collect();
        let report = score_run(&keys, &outputs, &ScoringConfig::default()).unwrap();
        for row in &report.rows {
            let r = row.rates.as_ref().unwrap();
            assert_eq!((r.p_miss, r.p_fa), (0.0, 1.0));
        }
        assert_eq!(report.average.unwrap().ndcf, 1.0);
    }

    #[test]
    fn matches_brute_force_on_two_hundred_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (keys, outputs) = random_run(&mut rng, 200);
        let config = ScoringConfig::default();
        let report = score_run(&keys, &outputs, &config).unwrap();
        for (row, &(grain, d)) in report.rows.iter().zip(&config.thresholds) {
            let (pm, pf) = brute_force(&keys, &outputs, grain, d).unwrap();
            let r = row.rates.as_ref().unwrap();
            assert_eq!((r.p_miss, r.p_fa), (pm, pf));
        }
    }

    #[test]
    fn undefined_rows_are_marked_not_zeroed() {
        let keys = vec![key("a", DistanceClass::M1_2, Grain::Fine), key("b", DistanceClass::M3_0, Grain::Fine)];
        let outputs = vec![out("a", 1.2), out("b", 3.0)];
        let report = score_run(&keys, &outputs, &ScoringConfig::default()).unwrap();
        // No coarse events at all.
        assert!(report.rows[3].rates.is_err());
        assert!(report.average.is_none());
        assert!(matches!(report.require_valid(), Err(Error::UndefinedRate { .. })));
        assert!(report.render_text().contains("invalid"));
        assert!(report.render_csv().contains("coarse_grain,1.8,nan,nan,nan"));
    }

    #[test]
    fn id_mismatches_are_listed() {
        let keys = vec![key("a", DistanceClass::M1_2, Grain::Fine), key("b", DistanceClass::M3_0, Grain::Fine)];
        let err = score_run(&keys, &[out("a", 1.2)], &ScoringConfig::default()).unwrap_err();
        assert!(err.to_string().contains("missing from output: b"), "{err}");
        let err = score_run(&keys, &[out("a", 1.2), out("b", 1.2), out("b", 3.0)], &ScoringConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("duplicated in output: b"), "{err}");
        let err = score_run(&keys, &[out("a", 1.2), out("b", 1.2), out("c", 3.0)], &ScoringConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("not in key: c"), "{err}");
    }

    #[test]
    fn rendering() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (keys, outputs) = random_run(&mut rng, 50);
        let report = score_run(&keys, &outputs, &ScoringConfig::default()).unwrap();
        let text = report.render_text();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(1).unwrap().starts_with("fine_grain      1.20"));
        let csv = report.render_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "subset,D,p_miss,p_fa,ndcf");
        let fields: Vec<_> = lines[1].split(',').collect();
        let r = report.rows[0].rates.as_ref().unwrap();
        assert_eq!(fields[2].parse::<f64>().unwrap(), r.p_miss);
        assert!(lines[5].starts_with("average,,"));
    }

    proptest! {
        #[test]
        fn unit_weight_ndcf_is_the_sum(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            prop_assert_eq!(ndcf(p, q, CostWeights::default()), p + q);
        }

        #[test]
        fn line_order_does_not_matter(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut keys, mut outputs) = random_run(&mut rng, 40);
            let config = ScoringConfig::default();
            let before = score_run(&keys, &outputs, &config);
            keys.shuffle(&mut rng);
            outputs.shuffle(&mut rng);
            prop_assert_eq!(before.ok(), score_run(&keys, &outputs, &config).ok());
        }

        #[test]
        fn shrinking_predictions_trades_misses_for_false_alarms(seed in any::<u64>(), step in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (keys, outputs) = random_run(&mut rng, 50);
            let smaller: Vec<_> = outputs
                .iter()
                .map(|o| {
                    let idx = DistanceClass::ALL.iter().position(|c| c.metres() == o.predicted_m).unwrap();
                    out(&o.event_id, DistanceClass::ALL[idx.saturating_sub(step)].metres())
                })
                .collect();
            let config = ScoringConfig::default();
            if let (Ok(a), Ok(b)) = (score_run(&keys, &outputs, &config), score_run(&keys, &smaller, &config)) {
                for (x, y) in a.rows.iter().zip(&b.rows) {
                    if let (Ok(x), Ok(y)) = (&x.rates, &y.rates) {
                        prop_assert!(y.p_miss <= x.p_miss);
                        prop_assert!(y.p_fa >= x.p_fa);
                    }
                }
            }
        }
    }
}
