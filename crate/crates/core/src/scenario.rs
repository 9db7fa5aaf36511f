//! Scenario parameters and the flat key/value config file that carries them.
//!
//! The file is TOML restricted to top-level keys. Keys match the field names
//! below exactly; any key that is left out takes the default scenario value.
//!
//! ```text
//! J_D = 2
//! cellularPowerCapDbm = 28.0
//! d2dDistanceRangeM = [1.0, 20.0]
//! sweepValuesDbm = [24, 26, 28, 30, 32]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts};
use crate::error::{Error, Result};
use crate::structure::FactorGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(rename = "J")]
    pub users: usize,
    #[serde(rename = "K")]
    pub subcarriers: usize,
    #[serde(rename = "N")]
    pub nonzero_dims: usize,
    #[serde(rename = "J_D")]
    pub d2d_pairs: usize,
    #[serde(rename = "noiseDbmPerHz")]
    pub noise_dbm_per_hz: f64,
    #[serde(rename = "bandwidthHz")]
    pub bandwidth_hz: f64,
    #[serde(rename = "cellularPowerCapDbm")]
    pub cellular_power_cap_dbm: f64,
    #[serde(rename = "d2dPowerCapDbm")]
    pub d2d_power_cap_dbm: f64,
    #[serde(rename = "cellularSinrFloorDb")]
    pub cellular_sinr_floor_db: f64,
    #[serde(rename = "d2dSinrFloorDb")]
    pub d2d_sinr_floor_db: f64,
    #[serde(rename = "cellRadiusM")]
    pub cell_radius_m: f64,
    #[serde(rename = "d2dDistanceRangeM")]
    pub d2d_distance_range_m: (f64, f64),
    pub seed: u64,
    /// Multiply reported rates by the bandwidth (bits/s instead of bits/s/Hz).
    #[serde(rename = "reportBitsPerSecond")]
    pub report_bits_per_second: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            users: 6,
            subcarriers: 4,
            nonzero_dims: 2,
            d2d_pairs: 1,
            noise_dbm_per_hz: -174.0,
            bandwidth_hz: 180e3,
            cellular_power_cap_dbm: 30.0,
            d2d_power_cap_dbm: 30.0,
            cellular_sinr_floor_db: 0.0,
            d2d_sinr_floor_db: 10.0,
            cell_radius_m: 500.0,
            d2d_distance_range_m: (1.0, 20.0),
            seed: 1,
            report_bits_per_second: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |field: &'static str, message: String| Err(Error::ConfigRange { field, message });
        if self.subcarriers == 0 {
            return range("K", "must be at least 1".into());
        }
        if self.users == 0 {
            return range("J", "must be at least 1".into());
        }
        if self.nonzero_dims == 0 || self.nonzero_dims > self.subcarriers {
            return range("N", format!("must lie in 1..={}", self.subcarriers));
        }
        if let Err(e) = FactorGraph::build(self.subcarriers, self.users, self.nonzero_dims) {
            return range("J", e.to_string());
        }
        if self.d2d_pairs > self.subcarriers {
            return range("J_D", format!("at most K = {} pairs (one subcarrier each)", self.subcarriers));
        }
        for (field, value) in [
            ("noiseDbmPerHz", self.noise_dbm_per_hz),
            ("cellularPowerCapDbm", self.cellular_power_cap_dbm),
            ("d2dPowerCapDbm", self.d2d_power_cap_dbm),
            ("cellularSinrFloorDb", self.cellular_sinr_floor_db),
            ("d2dSinrFloorDb", self.d2d_sinr_floor_db),
        ] {
            if !value.is_finite() {
                return range(field, "must be finite".into());
            }
        }
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return range("bandwidthHz", "must be positive".into());
        }
        if !(self.cell_radius_m > 0.0) || !self.cell_radius_m.is_finite() {
            return range("cellRadiusM", "must be positive".into());
        }
        let (lo, hi) = self.d2d_distance_range_m;
        if !(lo >= 1.0) || !(hi >= lo) || !hi.is_finite() {
            return range("d2dDistanceRangeM", format!("need 1 <= min <= max, got ({lo}, {hi})"));
        }
        Ok(())
    }

    pub fn factor_graph(&self) -> Result<FactorGraph> {
        FactorGraph::build(self.subcarriers, self.users, self.nonzero_dims)
    }

    /// Thermal noise per subcarrier in watts (`N_0 * B`).
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm_per_hz) * self.bandwidth_hz
    }

    pub fn cellular_power_cap_w(&self) -> f64 {
        dbm_to_watts(self.cellular_power_cap_dbm)
    }

    pub fn d2d_power_cap_w(&self) -> f64 {
        dbm_to_watts(self.d2d_power_cap_dbm)
    }

    pub fn cellular_sinr_floor(&self) -> f64 {
        db_to_linear(self.cellular_sinr_floor_db)
    }

    pub fn d2d_sinr_floor(&self) -> f64 {
        db_to_linear(self.d2d_sinr_floor_db)
    }

    /// Factor converting bits/s/Hz to the configured reporting unit.
    pub fn rate_scale(&self) -> f64 {
        if self.report_bits_per_second {
            self.bandwidth_hz
        } else {
            1.0
        }
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }
}

/// Scenario plus the harness-level keys that may share the same file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    pub sweep_values_dbm: Option<Vec<f64>>,
}

const HARNESS_KEYS: [&str; 1] = ["sweepValuesDbm"];

pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_error(text, &e))?;
    let sweep_values_dbm = match table.remove(HARNESS_KEYS[0]) {
        None => None,
        Some(v) => {
            let values: Vec<f64> = v
                .as_array()
                .and_then(|a| a.iter().map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect())
                .ok_or_else(|| Error::ConfigRange { field: "sweepValuesDbm", message: "expected an array of numbers".into() })?;
            Some(values)
        }
    };
    // parse the raw text when possible so field errors carry a line number
    let scenario: ScenarioConfig = if sweep_values_dbm.is_none() {
        toml::from_str(text)
    } else {
        table.try_into()
    }
    .map_err(|e: toml::de::Error| parse_error(text, &e))?;
    if let Some(values) = &sweep_values_dbm {
        if values.is_empty() {
            return Err(Error::ConfigRange { field: "sweepValuesDbm", message: "must not be empty".into() });
        }
    }
    scenario.validate()?;
    Ok(ConfigFile { scenario, sweep_values_dbm })
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(0);
    let message = e.message().to_string();
    Error::ConfigParse { line, message }
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Reads a scenario; unspecified keys take the default scenario values.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    load_config_file(path).map(|f| f.scenario)
}
