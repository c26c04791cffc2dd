//! Experiment configuration: a flat TOML table with units in the key names.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hamid_core::measurement::SamplingConfig;
use hamid_core::HamiltonianCoeffs;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Characterize,
    TwoAxis,
    Montecarlo,
    Scaling,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Characterize => "characterize",
            Mode::TwoAxis => "two-axis",
            Mode::Montecarlo => "montecarlo",
            Mode::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NE,
    NS,
}

fn default_trials() -> usize {
    500
}

fn default_bins() -> usize {
    20
}

fn default_sweep_axis() -> SweepAxis {
    SweepAxis::NE
}

fn default_scaling_etas() -> Vec<f64> {
    vec![0.0, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub h_r_energy_units: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_k_energy_units: Option<[f64; 3]>,
    pub delta_t_time_units: f64,
    pub n_s: usize,
    pub n_e: u32,
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the true period of `h_r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_predict_r_time_units: Option<f64>,
    /// Defaults to the true period of `h_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_predict_k_time_units: Option<f64>,
    /// Grid of the second-axis and phase records; defaults to the first-axis grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t_k_time_units: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_s_k: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_total_measurements: Vec<u64>,
    #[serde(default = "default_sweep_axis")]
    pub sweep_axis: SweepAxis,
    #[serde(default = "default_scaling_etas")]
    pub scaling_etas: Vec<f64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub analytic: bool,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Canonical serialization, used for report headers and the config hash.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn h_r(&self) -> HamiltonianCoeffs {
        let [x, y, z] = self.h_r_energy_units;
        HamiltonianCoeffs::new(x, y, z)
    }

    pub fn h_k(&self) -> Result<HamiltonianCoeffs, HarnessError> {
        let [x, y, z] = self
            .h_k_energy_units
            .ok_or_else(|| config_err("h_k_energy_units is required for this command"))?;
        Ok(HamiltonianCoeffs::new(x, y, z))
    }

    pub fn sampling_r(&self) -> SamplingConfig {
        SamplingConfig {
            delta_t: self.delta_t_time_units,
            n_s: self.n_s,
            n_e: self.n_e,
            eta: self.eta,
            seed: self.seed,
        }
    }

    pub fn sampling_k(&self) -> SamplingConfig {
        SamplingConfig {
            delta_t: self.delta_t_k_time_units.unwrap_or(self.delta_t_time_units),
            n_s: self.n_s_k.unwrap_or(self.n_s),
            ..self.sampling_r()
        }
    }

    pub fn t_predict_r(&self) -> f64 {
        self.t_predict_r_time_units.unwrap_or_else(|| self.h_r().to_polar().period())
    }

    pub fn t_predict_k(&self) -> Result<f64, HarnessError> {
        match self.t_predict_k_time_units {
            Some(t) => Ok(t),
            None => Ok(self.h_k()?.to_polar().period()),
        }
    }

    /// Checks everything the command `mode` will use.
    pub fn validate(&self, mode: Mode) -> Result<(), HarnessError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(config_err(format!(
                    "config mode '{}' does not match command '{}'",
                    m.name(),
                    mode.name()
                )));
            }
        }
        let h_r = self.h_r();
        if !h_r.is_finite() || h_r.is_trivial() {
            return Err(config_err("h_r_energy_units must be finite and non-zero"));
        }
        self.sampling_r().validate().map_err(|e| config_err(e.to_string()))?;
        self.sampling_r()
            .check_nyquist(self.t_predict_r())
            .map_err(|e| config_err(e.to_string()))?;
        if self.trials < 1 {
            return Err(config_err("trials must be at least 1"));
        }
        if self.histogram_bins < 1 {
            return Err(config_err("histogram_bins must be at least 1"));
        }
        if matches!(mode, Mode::TwoAxis | Mode::Montecarlo) {
            let h_k = self.h_k()?;
            if !h_k.is_finite() || h_k.is_trivial() {
                return Err(config_err("h_k_energy_units must be finite and non-zero"));
            }
            self.sampling_k().validate().map_err(|e| config_err(e.to_string()))?;
            self.sampling_k()
                .check_nyquist(self.t_predict_k()?)
                .map_err(|e| config_err(e.to_string()))?;
        }
        if mode == Mode::Scaling {
            let sweep = &self.sweep_total_measurements;
            if sweep.is_empty() {
                return Err(config_err("sweep_total_measurements is required for scaling"));
            }
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(config_err("sweep_total_measurements must be strictly increasing"));
            }
            for &n_t in sweep {
                self.sweep_point(n_t, self.eta)?;
            }
            if self.scaling_etas.is_empty() {
                return Err(config_err("scaling_etas must not be empty"));
            }
            for &eta in &self.scaling_etas {
                if !(0.0..0.5).contains(&eta) {
                    return Err(config_err(format!("scaling eta {eta} outside [0, 0.5)")));
                }
            }
        }
        Ok(())
    }

    /// Sampling config for one sweep point of `n_t` total measurements.
    pub fn sweep_point(&self, n_t: u64, eta: f64) -> Result<SamplingConfig, HarnessError> {
        let mut cfg = self.sampling_r();
        cfg.eta = eta;
        match self.sweep_axis {
            SweepAxis::NE => {
                let n_s = self.n_s as u64;
                if n_t % n_s != 0 || n_t / n_s == 0 || n_t / n_s > u32::MAX as u64 {
                    return Err(config_err(format!("N_T = {n_t} is not a positive multiple of n_s = {n_s}")));
                }
                cfg.n_e = (n_t / n_s) as u32;
            }
            SweepAxis::NS => {
                let n_e = self.n_e as u64;
                if n_t % n_e != 0 || n_t / n_e < 2 {
                    return Err(config_err(format!("N_T = {n_t} is not a multiple of n_e = {n_e} with n_s >= 2")));
                }
                cfg.n_s = (n_t / n_e) as usize;
            }
        }
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }
}
