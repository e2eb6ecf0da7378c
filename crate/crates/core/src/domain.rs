//! Domain types shared by every stage of the pipeline.
//!
//! All of these are plain values: once built they are never mutated, so they
//! can be shared across worker threads freely.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Slack applied to band edges so that values which went through a decimal
/// text round trip (6 fractional digits) still land in their band.
pub const BAND_EDGE_TOLERANCE: f64 = 1e-6;

/// The four distance classes of the collection protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistanceClass {
    M1_2,
    M1_8,
    M3_0,
    M4_5,
}

impl DistanceClass {
    pub const ALL: [DistanceClass; 4] = [
        DistanceClass::M1_2,
        DistanceClass::M1_8,
        DistanceClass::M3_0,
        DistanceClass::M4_5,
    ];

    pub fn metres(self) -> f64 {
        match self {
            DistanceClass::M1_2 => 1.2,
            DistanceClass::M1_8 => 1.8,
            DistanceClass::M3_0 => 3.0,
            DistanceClass::M4_5 => 4.5,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Marked-distance band `[low, high]` that collapses onto this class.
    pub fn band(self) -> (f64, f64) {
        match self {
            DistanceClass::M1_2 => (0.9, 1.2),
            DistanceClass::M1_8 => (1.5, 1.8),
            DistanceClass::M3_0 => (2.4, 3.0),
            DistanceClass::M4_5 => (3.6, 4.5),
        }
    }
}

impl fmt::Display for DistanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.metres())
    }
}

impl FromStr for DistanceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let metres: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Protocol(format!("not a distance: {s:?}")))?;
        quantize_distance(metres)
    }
}

/// Maps a marked distance in metres onto its protocol class.
///
/// Values that fall between bands (say 2.0 m) are rejected: the protocol
/// never produces them, so accepting them would hide upstream bugs.
pub fn quantize_distance(metres: f64) -> Result<DistanceClass> {
    DistanceClass::ALL
        .into_iter()
        .find(|class| {
            let (low, high) = class.band();
            metres >= low - BAND_EDGE_TOLERANCE && metres <= high + BAND_EDGE_TOLERANCE
        })
        .ok_or(Error::OutOfProtocolDistance(metres))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grain {
    Coarse,
    Fine,
}

impl Grain {
    pub const ALL: [Grain; 2] = [Grain::Coarse, Grain::Fine];

    pub fn as_str(self) -> &'static str {
        match self {
            Grain::Coarse => "coarse",
            Grain::Fine => "fine",
        }
    }

    /// Reference labels an event of this grain may carry.
    pub fn classes(self) -> &'static [DistanceClass] {
        match self {
            Grain::Coarse => &[DistanceClass::M1_8, DistanceClass::M4_5],
            Grain::Fine => &DistanceClass::ALL,
        }
    }

    pub fn admits(self, class: DistanceClass) -> bool {
        self.classes().contains(&class)
    }
}

impl fmt::Display for Grain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Grain::Coarse),
            "fine" => Ok(Grain::Fine),
            other => Err(Error::Protocol(format!("unknown grain {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Gyroscope,
    MagneticField,
    Accelerometer,
    Attitude,
    Bluetooth,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Gyroscope,
        Channel::MagneticField,
        Channel::Accelerometer,
        Channel::Attitude,
        Channel::Bluetooth,
    ];

    /// Channels forward-filled onto bluetooth timestamps.
    pub const IMU: [Channel; 4] = [
        Channel::Gyroscope,
        Channel::MagneticField,
        Channel::Accelerometer,
        Channel::Attitude,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Gyroscope => "gyroscope",
            Channel::MagneticField => "magnetic_field",
            Channel::Accelerometer => "accelerometer",
            Channel::Attitude => "attitude",
            Channel::Bluetooth => "bluetooth",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Channel::Bluetooth => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Protocol(format!("unknown channel {s:?}")))
    }
}

/// One timestamped sample. Units per channel: gyroscope rad/s, magnetic
/// field µT, accelerometer g, attitude roll/pitch/yaw in rad, bluetooth RSSI
/// in dBm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorReading {
    timestamp: f64,
    channel: Channel,
    values: [f64; 3],
}

impl SensorReading {
    pub fn new(timestamp: f64, channel: Channel, components: &[f64]) -> Result<Self> {
        if components.len() != channel.arity() {
            return Err(Error::Protocol(format!(
                "{channel} takes {} component(s), got {}",
                channel.arity(),
                components.len()
            )));
        }
        if !timestamp.is_finite() || components.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("non-finite reading".into()));
        }
        if channel == Channel::Bluetooth && components[0] > 0.0 {
            return Err(Error::Protocol(format!(
                "RSSI must be <= 0 dBm, got {}",
                components[0]
            )));
        }
        let mut values = [0.0; 3];
        values[..components.len()].copy_from_slice(components);
        Ok(Self {
            timestamp,
            channel,
            values,
        })
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn components(&self) -> &[f64] {
        &self.values[..self.channel.arity()]
    }

    /// Three-axis view; bluetooth readings carry RSSI in slot 0.
    pub fn triple(&self) -> [f64; 3] {
        self.values
    }
}

macro_rules! categorical {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Protocol(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

categorical!(CarryLocation {
    Hand => "hand",
    Pocket => "pocket",
    Shirt => "shirt",
    Purse => "purse",
    Unknown => "unknown",
});

categorical!(Pose {
    Sitting => "sitting",
    Standing => "standing",
    Walking => "walking",
    Unknown => "unknown",
});

#[derive(Clone, Debug, PartialEq)]
pub struct EventMetadata {
    pub event_id: String,
    pub grain: Grain,
    /// Transmitter power in dBm.
    pub tx_power: i32,
    pub carry_location: CarryLocation,
    pub pose: Pose,
    /// Absent for unlabeled test events.
    pub reference_distance: Option<DistanceClass>,
}

/// A recording window of at most four seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Look {
    pub index: u32,
    pub readings: Vec<SensorReading>,
}

impl Look {
    pub fn first_timestamp(&self) -> Option<f64> {
        self.readings.first().map(SensorReading::timestamp)
    }

    pub fn span(&self) -> f64 {
        match (self.readings.first(), self.readings.last()) {
            (Some(a), Some(b)) => b.timestamp() - a.timestamp(),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventFile {
    pub metadata: EventMetadata,
    pub looks: Vec<Look>,
}

impl EventFile {
    pub fn readings(&self) -> impl Iterator<Item = (u32, &SensorReading)> {
        self.looks
            .iter()
            .flat_map(|look| look.readings.iter().map(move |r| (look.index, r)))
    }

    pub fn reading_count(&self) -> usize {
        self.looks.iter().map(|l| l.readings.len()).sum()
    }
}
