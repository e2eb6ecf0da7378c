//! Log-distance path-loss feature math.

use crate::domain::Grain;
use crate::error::{Error, Result};

/// Calibrated 1 m power (dBm) and path-loss exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLossParams {
    pub tx_power: f64,
    pub exponent: f64,
}

impl PathLossParams {
    pub const COARSE: PathLossParams = PathLossParams {
        tx_power: -52.0,
        exponent: 2.6,
    };
    pub const FINE: PathLossParams = PathLossParams {
        tx_power: -54.0,
        exponent: 2.1,
    };
    /// Midpoint of the coarse and fine constants, used when the grain is
    /// hidden from the model.
    pub const MIDPOINT: PathLossParams = PathLossParams {
        tx_power: -53.0,
        exponent: 2.35,
    };

    pub fn new(tx_power: f64, exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !tx_power.is_finite() || !exponent.is_finite() {
            return Err(Error::Config(format!(
                "path-loss exponent must be positive and finite, got {exponent}"
            )));
        }
        Ok(Self { tx_power, exponent })
    }

    pub fn for_grain(grain: Grain) -> Self {
        match grain {
            Grain::Coarse => Self::COARSE,
            Grain::Fine => Self::FINE,
        }
    }
}

/// Distance in metres implied by `rssi` under the log-distance model:
/// `10^((TX - RSSI) / (10 N))`.
pub fn expected_distance(rssi: f64, params: PathLossParams) -> f64 {
    10f64.powf((params.tx_power - rssi) / (10.0 * params.exponent))
}

/// Total loss between transmitter and receiver in dB.
pub fn attenuation(tx_power: f64, rssi: f64) -> f64 {
    tx_power - rssi
}
