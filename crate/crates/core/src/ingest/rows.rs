//! Row assembly: one feature row per bluetooth reading, with every IMU field
//! carried forward from its most recent observation.

use crate::domain::{CarryLocation, Channel, EventFile, Grain, Pose, SensorReading};
use crate::error::{Error, Result};
use crate::pathloss::{attenuation, expected_distance, PathLossParams};

/// Angle labels of the eight receiver orientations, in degrees.
pub const ANGLES: [u16; 8] = [0, 45, 90, 135, 180, 225, 270, 315];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub look_index: u32,
    pub timestamp: f64,
    pub gyro: [f64; 3],
    pub magnetic_field: [f64; 3],
    pub accelerometer: [f64; 3],
    /// Roll, pitch, yaw in radians.
    pub attitude: [f64; 3],
    pub rssi: f64,
    pub tx_power: f64,
    pub carry_location: CarryLocation,
    pub pose: Pose,
    pub grain: Grain,
    /// Log-distance estimate using the constants for `grain`.
    pub expected_distance: f64,
    pub attenuation: f64,
    /// Stage 1 output; `None` until the angle model has run.
    pub angle: Option<u16>,
}

impl FeatureRow {
    /// Attitude followed by magnetic field: the angle model's inputs.
    pub fn orientation_features(&self) -> [f64; 6] {
        let [a, b, c] = self.attitude;
        let [d, e, f] = self.magnetic_field;
        [a, b, c, d, e, f]
    }
}

fn imu_slot(channel: Channel) -> Option<usize> {
    Channel::IMU.iter().position(|&c| c == channel)
}

/// Builds the feature rows of one event.
///
/// Candidate rows sit at bluetooth timestamps. Each IMU field takes the most
/// recent observation at or before the row's timestamp (across look
/// boundaries); rows for which some field has never been observed are
/// dropped.
pub fn assemble_rows(event: &EventFile) -> Result<Vec<FeatureRow>> {
    let meta = &event.metadata;
    let mut readings: Vec<(u32, &SensorReading)> = event.readings().collect();
    if !readings
        .iter()
        .any(|(_, r)| r.channel() == Channel::Bluetooth)
    {
        return Err(Error::EmptyEvent(meta.event_id.clone()));
    }
    // Same-timestamp IMU samples count as "at or before" the bluetooth one.
    readings.sort_by(|(_, a), (_, b)| {
        a.timestamp()
            .total_cmp(&b.timestamp())
            .then_with(|| {
                (a.channel() == Channel::Bluetooth).cmp(&(b.channel() == Channel::Bluetooth))
            })
    });

    let params = PathLossParams::for_grain(meta.grain);
    let tx_power = f64::from(meta.tx_power);
    let mut latest: [Option<[f64; 3]>; 4] = [None; 4];
    let mut rows = Vec::new();

    for (look_index, reading) in readings {
        if let Some(slot) = imu_slot(reading.channel()) {
            latest[slot] = Some(reading.triple());
            continue;
        }
        let [Some(gyro), Some(magnetic_field), Some(accelerometer), Some(attitude)] = latest
        else {
            continue;
        };
        let rssi = reading.components()[0];
        rows.push(FeatureRow {
            look_index,
            timestamp: reading.timestamp(),
            gyro,
            magnetic_field,
            accelerometer,
            attitude,
            rssi,
            tx_power,
            carry_location: meta.carry_location,
            pose: meta.pose,
            grain: meta.grain,
            expected_distance: expected_distance(rssi, params),
            attenuation: attenuation(tx_power, rssi),
            angle: None,
        });
    }
    Ok(rows)
}
