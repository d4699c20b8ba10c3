//! Unit-disk radio with discrete transmission power levels and the
//! log-distance RSSI model used for distance estimation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn clamp_to(self, side: f64) -> Position {
        Position {
            x: self.x.clamp(0.0, side),
            y: self.y.clamp(0.0, side),
        }
    }
}

/// Index into [`RadioConfig::levels`], 0 being the lowest power.
pub type LevelIdx = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLevel {
    pub tx_power_dbm: f64,
    pub range_m: f64,
    /// Transmit energy for one full-size packet at this level.
    pub energy_per_packet_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub levels: Vec<PowerLevel>,
    /// Width of the annulus beyond the transmission range where packets are lost.
    pub interference_range_extra_m: f64,
    pub path_loss_exponent: f64,
    pub rx_success_ratio: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            levels: vec![
                PowerLevel {
                    tx_power_dbm: -10.0,
                    range_m: 60.0,
                    energy_per_packet_j: 0.15e-3,
                },
                PowerLevel {
                    tx_power_dbm: -4.0,
                    range_m: 120.0,
                    energy_per_packet_j: 0.45e-3,
                },
                PowerLevel {
                    tx_power_dbm: 0.0,
                    range_m: 180.0,
                    energy_per_packet_j: 1.0e-3,
                },
            ],
            interference_range_extra_m: 20.0,
            path_loss_exponent: 2.0,
            rx_success_ratio: 0.95,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("no power levels configured")]
    NoLevels,
    #[error("power levels must be strictly increasing in tx power and range (level {0})")]
    NotIncreasing(usize),
    #[error("per-packet energy must be non-negative and non-decreasing (level {0})")]
    EnergyNotMonotone(usize),
    #[error("path loss exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("rx success ratio must lie in [0, 1], got {0}")]
    BadSuccessRatio(f64),
    #[error("interference extra range must be non-negative, got {0}")]
    BadInterference(f64),
    #[error("distance {distance} m exceeds the maximum range {max_range} m")]
    Unreachable { distance: f64, max_range: f64 },
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        if self.levels.is_empty() {
            return Err(RadioError::NoLevels);
        }
        for (i, w) in self.levels.windows(2).enumerate() {
            if !(w[1].tx_power_dbm > w[0].tx_power_dbm && w[1].range_m > w[0].range_m) {
                return Err(RadioError::NotIncreasing(i + 1));
            }
            if w[1].energy_per_packet_j < w[0].energy_per_packet_j {
                return Err(RadioError::EnergyNotMonotone(i + 1));
            }
        }
        if self.levels.iter().any(|l| l.range_m <= 0.0) {
            return Err(RadioError::NotIncreasing(0));
        }
        if self.levels[0].energy_per_packet_j < 0.0 {
            return Err(RadioError::EnergyNotMonotone(0));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(RadioError::BadExponent(self.path_loss_exponent));
        }
        if !(0.0..=1.0).contains(&self.rx_success_ratio) {
            return Err(RadioError::BadSuccessRatio(self.rx_success_ratio));
        }
        if !(self.interference_range_extra_m >= 0.0) {
            return Err(RadioError::BadInterference(self.interference_range_extra_m));
        }
        Ok(())
    }

    pub fn max_level(&self) -> LevelIdx {
        self.levels.len() - 1
    }

    pub fn max_range(&self) -> f64 {
        self.levels[self.max_level()].range_m
    }

    pub fn range(&self, level: LevelIdx) -> f64 {
        self.levels[level].range_m
    }

    /// Copy of this config that only keeps the maximum power level.
    pub fn max_only(&self) -> RadioConfig {
        RadioConfig {
            levels: vec![self.levels[self.max_level()].clone()],
            ..self.clone()
        }
    }

    /// Energy to put `bytes` on the air at `level`, scaled from the
    /// full-size packet cost.
    pub fn packet_energy(&self, level: LevelIdx, bytes: u32, full_packet_bytes: u32) -> f64 {
        self.levels[level].energy_per_packet_j * f64::from(bytes) / f64::from(full_packet_bytes)
    }
}

/// Received signal strength under the log-distance model. Distances below
/// 1 m are clamped to 1 m.
pub fn rssi(tx_power_dbm: f64, distance_m: f64, n: f64) -> f64 {
    tx_power_dbm - 10.0 * n * distance_m.max(1.0).log10()
}

/// Inverse of [`rssi`]: `10^((tx - rssi) / (10 n))`.
pub fn estimate_distance(tx_power_dbm: f64, rssi_dbm: f64, n: f64) -> f64 {
    10f64.powf((tx_power_dbm - rssi_dbm) / (10.0 * n))
}

/// Lowest level whose range covers `distance_m` (boundary inclusive).
pub fn min_power_level(distance_m: f64, radio: &RadioConfig) -> Result<LevelIdx, RadioError> {
    radio
        .levels
        .iter()
        .position(|l| distance_m <= l.range_m)
        .ok_or(RadioError::Unreachable {
            distance: distance_m,
            max_range: radio.max_range(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Delivered,
    Lost,
    OutOfRange,
}

/// Geometric reachability without the random success draw.
pub fn reach(distance_m: f64, level: LevelIdx, radio: &RadioConfig) -> Delivery {
    let range = radio.range(level);
    if distance_m <= range {
        Delivery::Delivered
    } else if distance_m <= range + radio.interference_range_extra_m {
        Delivery::Lost
    } else {
        Delivery::OutOfRange
    }
}

/// Outcome of one packet sent over `distance_m` at `level`.
pub fn deliverable<R: Rng + ?Sized>(
    distance_m: f64,
    level: LevelIdx,
    radio: &RadioConfig,
    rng: &mut R,
) -> Delivery {
    match reach(distance_m, level, radio) {
        Delivery::Delivered => {
            if rng.gen_bool(radio.rx_success_ratio) {
                Delivery::Delivered
            } else {
                Delivery::Lost
            }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{rng_stream, StreamId};
    use proptest::prelude::*;

    fn three_levels() -> RadioConfig {
        RadioConfig::default()
    }

    #[test]
    fn rssi_hand_values() {
        assert_eq!(rssi(-3.0, 1.0, 2.0), -3.0);
        assert!((rssi(0.0, 100.0, 2.0) - -40.0).abs() < 1e-12);
        assert!((rssi(0.0, 10.0, 2.0) - -20.0).abs() < 1e-12);
        // sub-meter distances use the 1 m floor
        assert_eq!(rssi(5.0, 0.2, 3.0), 5.0);
    }

    #[test]
    fn distance_hand_values() {
        assert_eq!(estimate_distance(7.0, 7.0, 2.5), 1.0);
        assert!((estimate_distance(0.0, -40.0, 2.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn min_level_scan() {
        let r = three_levels();
        assert_eq!(min_power_level(100.0, &r), Ok(1));
        assert_eq!(min_power_level(60.0, &r), Ok(0));
        assert_eq!(min_power_level(60.0001, &r), Ok(1));
        assert_eq!(min_power_level(180.0, &r), Ok(2));
        assert!(matches!(
            min_power_level(200.0, &r),
            Err(RadioError::Unreachable { .. })
        ));
    }

    #[test]
    fn delivery_regions() {
        let mut r = three_levels();
        r.rx_success_ratio = 1.0;
        let mut rng = rng_stream(1, StreamId::PacketLoss);
        assert_eq!(deliverable(50.0, 0, &r, &mut rng), Delivery::Delivered);
        assert_eq!(deliverable(70.0, 0, &r, &mut rng), Delivery::Lost);
        assert_eq!(deliverable(80.0, 0, &r, &mut rng), Delivery::Lost);
        assert_eq!(deliverable(80.1, 0, &r, &mut rng), Delivery::OutOfRange);
        assert_eq!(deliverable(195.0, 2, &r, &mut rng), Delivery::Lost);
    }

    #[test]
    fn delivery_rate_matches_ratio() {
        let mut r = three_levels();
        r.rx_success_ratio = 0.9;
        let mut rng = rng_stream(99, StreamId::PacketLoss);
        let n = 10_000;
        let ok = (0..n)
            .filter(|_| deliverable(30.0, 0, &r, &mut rng) == Delivery::Delivered)
            .count();
        let rate = ok as f64 / n as f64;
        assert!((rate - 0.9).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn validation_rejects_bad_levels() {
        let mut r = three_levels();
        r.levels.swap(0, 1);
        assert!(r.validate().is_err());
        let mut r = three_levels();
        r.levels[2].energy_per_packet_j = 0.0;
        assert_eq!(r.validate(), Err(RadioError::EnergyNotMonotone(2)));
        let mut r = three_levels();
        r.path_loss_exponent = 0.0;
        assert!(r.validate().is_err());
        assert!(three_levels().validate().is_ok());
    }

    proptest! {
        #[test]
        fn rssi_distance_roundtrip(d in 1.0f64..=180.0, tx in -20.0f64..20.0, n in 1.5f64..4.0) {
            let back = estimate_distance(tx, rssi(tx, d, n), n);
            prop_assert!(((back - d) / d).abs() <= 1e-9);
        }

        #[test]
        fn min_level_monotone(a in 0.0f64..180.0, b in 0.0f64..180.0) {
            let r = three_levels();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(min_power_level(lo, &r).unwrap() <= min_power_level(hi, &r).unwrap());
        }
    }
}
