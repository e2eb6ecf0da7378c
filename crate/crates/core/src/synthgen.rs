//! Synthetic event corpora following the collection protocol: a receiver at
//! a fixed marked distance turns through eight 45° orientations, fifteen
//! seconds each, while 4 s looks of IMU and bluetooth samples are recorded.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::domain::{
    CarryLocation, Channel, DistanceClass, EventFile, EventMetadata, Grain, Look, Pose,
    SensorReading,
};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::ingest::{render_ground_truth, render_key_file, serialize_event_file, KeyEntry, ANGLES};
use crate::pathloss::PathLossParams;

pub const SEGMENT_SECONDS: f64 = 15.0;
pub const LOOK_SECONDS: f64 = 4.0;
pub const SEGMENTS: usize = 8;
pub const EVENT_SECONDS: f64 = SEGMENT_SECONDS * SEGMENTS as f64;

/// Horizontal and vertical components of the ambient magnetic field, µT.
const FIELD_HORIZONTAL: f64 = 20.0;
const FIELD_VERTICAL: f64 = -40.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub events_per_class: usize,
    /// Fraction of each class budget generated as coarse-grain events.
    pub grain_mix: f64,
    /// Std of the Gaussian shadowing term on RSSI, dB.
    pub shadowing_sigma: f64,
    /// Samples per second on every channel.
    pub sample_rate: f64,
    pub coarse_params: PathLossParams,
    pub fine_params: PathLossParams,
    /// Weights over `CarryLocation::ALL`.
    pub carry_weights: Vec<f64>,
    /// Weights over `Pose::ALL`.
    pub pose_weights: Vec<f64>,
    /// Gap between the end of one look and the start of the next, seconds.
    pub look_step: f64,
    /// Probability that an IMU sample is withheld.
    pub missing_rate: f64,
    pub yaw_noise: f64,
    pub magnetic_noise: f64,
    /// Write reference distances into event headers.
    pub labeled: bool,
    pub id_prefix: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            events_per_class: 32,
            grain_mix: 0.5,
            shadowing_sigma: 2.0,
            sample_rate: 4.0,
            coarse_params: PathLossParams::COARSE,
            fine_params: PathLossParams::FINE,
            carry_weights: vec![0.3, 0.3, 0.2, 0.15, 0.05],
            pose_weights: vec![0.35, 0.35, 0.25, 0.05],
            look_step: 11.0,
            missing_rate: 0.1,
            yaw_noise: 0.05,
            magnetic_noise: 1.0,
            labeled: true,
            id_prefix: "ev".into(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.events_per_class < 1 {
            return bad("events_per_class must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.grain_mix) {
            return bad("grain_mix must lie in [0, 1]");
        }
        if !(self.shadowing_sigma >= 0.0) || !self.shadowing_sigma.is_finite() {
            return bad("shadowing_sigma must be >= 0");
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return bad("sample_rate must be > 0");
        }
        if !(self.look_step >= 0.0) || !self.look_step.is_finite() {
            return bad("look_step must be >= 0");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)");
        }
        if !(self.yaw_noise >= 0.0) || !(self.magnetic_noise >= 0.0) {
            return bad("noise levels must be >= 0");
        }
        for p in [self.coarse_params, self.fine_params] {
            PathLossParams::new(p.tx_power, p.exponent)?;
        }
        check_weights(&self.carry_weights, CarryLocation::ALL.len(), "carry_weights")?;
        check_weights(&self.pose_weights, Pose::ALL.len(), "pose_weights")?;
        Ok(())
    }

    pub fn params(&self, grain: Grain) -> PathLossParams {
        match grain {
            Grain::Coarse => self.coarse_params,
            Grain::Fine => self.fine_params,
        }
    }

    /// Events per class for each grain: `(coarse, fine)`.
    pub fn grain_split(&self) -> (usize, usize) {
        let coarse = (self.events_per_class as f64 * self.grain_mix).round() as usize;
        (coarse, self.events_per_class - coarse)
    }
}

fn check_weights(w: &[f64], len: usize, name: &str) -> Result<()> {
    if w.len() != len || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config(format!(
            "{name} needs {len} non-negative weights with a positive sum"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleSegment {
    pub start: f64,
    pub end: f64,
    /// Facing angle in degrees.
    pub angle: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub event_id: String,
    pub true_distance: DistanceClass,
    pub segments: Vec<AngleSegment>,
}

impl GroundTruth {
    pub fn angle_at(&self, t: f64) -> Option<u16> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map(|s| s.angle)
    }
}

/// RSSI observed at `distance` metres: `TX - 10 N log10(d) + noise`.
pub fn sample_rssi(distance: f64, params: PathLossParams, noise: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Protocol(format!(
            "distance must be positive, got {distance}"
        )));
    }
    Ok(params.tx_power - 10.0 * params.exponent * distance.log10() + noise)
}

/// Rounds to the 6 fractional digits used on disk, so generated events equal
/// their parsed form exactly.
fn on_disk(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn wrap_angle(rad: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = rad.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

fn carry_tilt(carry: CarryLocation) -> (f64, f64) {
    match carry {
        CarryLocation::Hand => (0.0, 0.6),
        CarryLocation::Pocket => (0.1, 1.4),
        CarryLocation::Shirt => (0.0, 1.5),
        CarryLocation::Purse => (0.3, 0.2),
        CarryLocation::Unknown => (0.0, 0.8),
    }
}

/// (gyroscope std rad/s, accelerometer std g) by pose.
fn motion_noise(pose: Pose) -> (f64, f64) {
    match pose {
        Pose::Sitting => (0.02, 0.02),
        Pose::Standing => (0.05, 0.05),
        Pose::Walking => (0.3, 0.25),
        Pose::Unknown => (0.1, 0.1),
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated non-negative std")
}

/// Generates one event at a fixed distance. The receiver's facing angle
/// steps through the eight orientations; yaw tracks it and the magnetometer
/// sees the ambient field rotated by it, both with small noise.
pub fn generate_event<R: Rng>(
    config: &GeneratorConfig,
    event_id: &str,
    grain: Grain,
    distance: DistanceClass,
    rng: &mut R,
) -> Result<(EventFile, GroundTruth)> {
    if !grain.admits(distance) {
        return Err(Error::Protocol(format!(
            "{grain} events cannot be labeled {distance} m"
        )));
    }
    let params = config.params(grain);
    let carry_dist = WeightedIndex::new(&config.carry_weights)
        .map_err(|e| Error::Config(e.to_string()))?;
    let pose_dist =
        WeightedIndex::new(&config.pose_weights).map_err(|e| Error::Config(e.to_string()))?;
    let carry = CarryLocation::ALL[carry_dist.sample(rng)];
    let pose = Pose::ALL[pose_dist.sample(rng)];

    let (roll0, pitch0) = carry_tilt(carry);
    let (gyro_std, acc_std) = motion_noise(pose);
    let gyro_n = normal(gyro_std);
    let acc_n = normal(acc_std);
    let tilt_n = normal(0.02);
    let yaw_n = normal(config.yaw_noise);
    let mag_n = normal(config.magnetic_noise);
    let rssi_n = normal(config.shadowing_sigma);

    let period = 1.0 / config.sample_rate;
    let segments: Vec<AngleSegment> = (0..SEGMENTS)
        .map(|k| AngleSegment {
            start: SEGMENT_SECONDS * k as f64,
            end: SEGMENT_SECONDS * (k + 1) as f64,
            angle: ANGLES[k],
        })
        .collect();
    let truth = GroundTruth {
        event_id: event_id.to_string(),
        true_distance: distance,
        segments,
    };

    let mut looks = Vec::new();
    let mut look_start = 0.0;
    while look_start < EVENT_SECONDS {
        let mut readings = Vec::new();
        let mut tick = 0usize;
        loop {
            let t0 = look_start + tick as f64 * period;
            // Stay strictly inside the 4 s window, including channel phases.
            if t0 + 0.8 * period >= look_start + LOOK_SECONDS || t0 >= EVENT_SECONDS {
                break;
            }
            let angle = truth.angle_at(t0).expect("inside event");
            let heading = f64::from(angle).to_radians();
            for (c, channel) in Channel::ALL.into_iter().enumerate() {
                let t = on_disk(t0 + 0.2 * period * c as f64);
                let values: Vec<f64> = match channel {
                    Channel::Gyroscope => (0..3).map(|_| gyro_n.sample(rng)).collect(),
                    Channel::Accelerometer => vec![
                        acc_n.sample(rng),
                        acc_n.sample(rng),
                        1.0 + acc_n.sample(rng),
                    ],
                    Channel::Attitude => vec![
                        roll0 + tilt_n.sample(rng),
                        pitch0 + tilt_n.sample(rng),
                        wrap_angle(heading + yaw_n.sample(rng)),
                    ],
                    Channel::MagneticField => vec![
                        FIELD_HORIZONTAL * heading.cos() + mag_n.sample(rng),
                        -FIELD_HORIZONTAL * heading.sin() + mag_n.sample(rng),
                        FIELD_VERTICAL + mag_n.sample(rng),
                    ],
                    Channel::Bluetooth => {
                        let noise = rssi_n.sample(rng);
                        vec![sample_rssi(distance.metres(), params, noise)?.min(0.0)]
                    }
                };
                let withheld =
                    channel != Channel::Bluetooth && rng.random::<f64>() < config.missing_rate;
                if withheld {
                    continue;
                }
                let values: Vec<f64> = values.into_iter().map(on_disk).collect();
                readings.push(SensorReading::new(t, channel, &values)?);
            }
            tick += 1;
        }
        if !readings.is_empty() {
            looks.push(Look {
                index: looks.len() as u32,
                readings,
            });
        }
        look_start += LOOK_SECONDS + config.look_step;
    }

    let event = EventFile {
        metadata: EventMetadata {
            event_id: event_id.to_string(),
            grain,
            tx_power: params.tx_power.round() as i32,
            carry_location: carry,
            pose,
            reference_distance: config.labeled.then_some(distance),
        },
        looks,
    };
    Ok((event, truth))
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub events: Vec<EventFile>,
    pub keys: Vec<KeyEntry>,
    pub truths: Vec<GroundTruth>,
}

/// Balanced corpus: every admissible class of each grain gets the same
/// number of events. Event order is shuffled so ids carry no label signal.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Corpus> {
    config.validate()?;
    let (n_coarse, n_fine) = config.grain_split();
    let mut plan: Vec<(Grain, DistanceClass)> = Vec::new();
    for (grain, n) in [(Grain::Coarse, n_coarse), (Grain::Fine, n_fine)] {
        for &class in grain.classes() {
            plan.extend(std::iter::repeat_n((grain, class), n));
        }
    }
    plan.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let width = plan.len().to_string().len().max(4);
    let generated: Vec<(EventFile, GroundTruth)> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &(grain, class))| {
            let id = format!("{}{:0width$}", config.id_prefix, i);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ i as u64);
            generate_event(config, &id, grain, class, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut corpus = Corpus::default();
    for (event, truth) in generated {
        corpus.keys.push(KeyEntry {
            event_id: event.metadata.event_id.clone(),
            reference: truth.true_distance,
            grain: event.metadata.grain,
        });
        corpus.events.push(event);
        corpus.truths.push(truth);
    }
    Ok(corpus)
}

pub const EVENTS_DIR: &str = "events";
pub const EVENT_EXT: &str = "evt";

#[derive(Clone, Copy, Debug)]
pub struct WriteOptions<'a> {
    /// Where the key file goes; `None` skips it.
    pub key_path: Option<&'a Path>,
    pub truth_path: Option<&'a Path>,
}

/// Writes `dir/events/<id>.evt` for every event plus the optional key and
/// ground-truth files.
pub fn write_corpus(corpus: &Corpus, dir: &Path, options: WriteOptions<'_>) -> Result<()> {
    let events_dir = dir.join(EVENTS_DIR);
    corpus.events.par_iter().try_for_each(|event| {
        let path = events_dir.join(format!("{}.{EVENT_EXT}", event.metadata.event_id));
        write_atomic(&path, serialize_event_file(event).as_bytes())
    })?;
    if let Some(path) = options.key_path {
        write_atomic(path, render_key_file(&corpus.keys).as_bytes())?;
    }
    if let Some(path) = options.truth_path {
        write_atomic(path, render_ground_truth(&corpus.truths).as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::quantize_distance;
    use crate::ingest::{assemble_rows, parse_event_file};
    use crate::pathloss::expected_distance;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            seed,
            events_per_class: 2,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn sample_rssi_fixtures() {
        assert_eq!(sample_rssi(1.0, PathLossParams::COARSE, 0.0).unwrap(), -52.0);
        assert!((sample_rssi(10.0, PathLossParams::COARSE, 0.0).unwrap() + 78.0).abs() < 1e-12);
        assert!((sample_rssi(10.0, PathLossParams::FINE, 0.0).unwrap() + 75.0).abs() < 1e-12);
        assert!(sample_rssi(0.0, PathLossParams::FINE, 0.0).is_err());
        assert!(sample_rssi(-1.0, PathLossParams::FINE, 0.0).is_err());
    }

    #[test]
    fn sample_rssi_inverts_expected_distance() {
        for class in DistanceClass::ALL {
            for p in [PathLossParams::COARSE, PathLossParams::FINE, PathLossParams::MIDPOINT] {
                let d = class.metres();
                let back = expected_distance(sample_rssi(d, p, 0.0).unwrap(), p);
                assert!(((back - d) / d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn event_shape() {
        let cfg = GeneratorConfig {
            seed: 7,
            ..GeneratorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ev, truth) =
            generate_event(&cfg, "x", Grain::Fine, DistanceClass::M1_2, &mut rng).unwrap();
        assert_eq!(truth.true_distance, DistanceClass::M1_2);
        assert_eq!(truth.segments.len(), 8);
        assert!(truth.segments.iter().all(|s| s.end - s.start == 15.0));
        assert_eq!(ev.looks.len(), 8);
        let mut prev = f64::NEG_INFINITY;
        for look in &ev.looks {
            assert!(look.span() <= LOOK_SECONDS);
            let first = look.first_timestamp().unwrap();
            assert!(first > prev);
            prev = first;
        }
        let bt = ev
            .readings()
            .filter(|(_, r)| r.channel() == Channel::Bluetooth)
            .count();
        assert_eq!(bt, 8 * 16);
    }

    #[test]
    fn coarse_rejects_fine_only_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for class in [DistanceClass::M1_2, DistanceClass::M3_0] {
            assert!(matches!(
                generate_event(&small(0), "x", Grain::Coarse, class, &mut rng),
                Err(Error::Protocol(_))
            ));
        }
    }

    #[test]
    fn generated_events_equal_their_parsed_form() {
        let corpus = generate_corpus(&small(7)).unwrap();
        for ev in &corpus.events {
            let text = serialize_event_file(ev);
            let parsed = parse_event_file(text.as_bytes()).unwrap();
            assert_eq!(&parsed, ev);
            assert_eq!(serialize_event_file(&parsed), text);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_corpus(&small(11)).unwrap();
        let b = generate_corpus(&small(11)).unwrap();
        assert_eq!(a.events, b.events);
        let c = generate_corpus(&small(12)).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn balance_contracts() {
        let fine_only = GeneratorConfig {
            events_per_class: 4,
            grain_mix: 0.0,
            ..GeneratorConfig::default()
        };
        let corpus = generate_corpus(&fine_only).unwrap();
        assert_eq!(corpus.events.len(), 16);
        for class in DistanceClass::ALL {
            assert_eq!(corpus.keys.iter().filter(|k| k.reference == class).count(), 4);
        }

        let coarse_only = GeneratorConfig {
            grain_mix: 1.0,
            ..fine_only
        };
        let corpus = generate_corpus(&coarse_only).unwrap();
        assert!(corpus.keys.iter().all(|k| k.grain == Grain::Coarse
            && Grain::Coarse.admits(k.reference)));
        assert_eq!(corpus.keys.len(), corpus.events.len());
    }

    #[test]
    fn noiseless_rows_quantize_to_truth() {
        let cfg = GeneratorConfig {
            shadowing_sigma: 0.0,
            ..small(3)
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for (ev, truth) in corpus.events.iter().zip(&corpus.truths) {
            let rows = assemble_rows(ev).unwrap();
            assert!(!rows.is_empty());
            for row in &rows {
                let d = row.expected_distance.clamp(0.9, 4.5);
                assert_eq!(quantize_distance(d).unwrap(), truth.true_distance);
            }
        }
    }

    #[test]
    fn validation() {
        let mut cfg = GeneratorConfig::default();
        cfg.events_per_class = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.shadowing_sigma = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.sample_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.carry_weights = vec![1.0];
        assert!(cfg.validate().is_err());
    }
}
