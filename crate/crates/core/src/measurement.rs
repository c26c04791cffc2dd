//! Repeated prepare–evolve–measure cycles with single-shot projective
//! measurement in the z basis and a bit-flip readout error.
//!
//! Every time point draws its shots from its own ChaCha stream, keyed by the
//! record seed and the time index, so a record is a pure function of its
//! configuration no matter how the work is scheduled.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bloch::{
    equator_rotation, evolve_state, z_expectation, BlochVector, HamiltonianCoeffs, PolarHamiltonian,
};
use crate::error::{domain, Error, Result};

/// Time grid, ensemble size and readout error of one measurement record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Smallest controllable evolution step.
    pub delta_t: f64,
    /// Number of time points `t_i = i Δt`, `i = 1..=n_s`.
    pub n_s: usize,
    /// Shots per time point.
    pub n_e: u32,
    /// Bit-flip probability of a single readout.
    pub eta: f64,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(domain(format!("delta_t must be positive, got {}", self.delta_t)));
        }
        if self.n_s < 2 {
            return Err(domain(format!("n_s must be at least 2, got {}", self.n_s)));
        }
        if self.n_e < 1 {
            return Err(domain("n_e must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.eta) {
            return Err(domain(format!("eta must lie in [0, 0.5), got {}", self.eta)));
        }
        Ok(())
    }

    /// Longest evolution time `t_ob = n_s Δt`.
    pub fn t_ob(&self) -> f64 {
        self.n_s as f64 * self.delta_t
    }

    /// `N_T = n_e n_s`.
    pub fn total_measurements(&self) -> u64 {
        self.n_e as u64 * self.n_s as u64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta_t
    }

    /// Nyquist guard against a predicted precession period.
    pub fn check_nyquist(&self, t_predict: f64) -> Result<()> {
        if !(t_predict.is_finite() && t_predict > 0.0) {
            return Err(domain(format!("predicted period must be positive, got {t_predict}")));
        }
        if self.delta_t >= t_predict / 2.0 {
            return Err(domain(format!(
                "delta_t = {} violates the Nyquist guard for predicted period {t_predict}",
                self.delta_t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    /// Finite-ensemble shot noise.
    Sampled,
    /// Noise-free expectation values `(1 - 2η) z(t)`.
    Analytic,
}

impl RecordMode {
    fn tag(self) -> &'static str {
        match self {
            RecordMode::Sampled => "sampled",
            RecordMode::Analytic => "analytic",
        }
    }
}

/// Ensemble-averaged z-projections on the grid `t_i = i Δt`, `i = 1..=n_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    times: Vec<f64>,
    z_m: Vec<f64>,
    /// `None` for analytic records, which have no shots.
    counts_plus: Option<Vec<u32>>,
    config: SamplingConfig,
}

impl MeasurementRecord {
    /// Builds a sampled record from raw `+1` counts.
    pub fn from_counts(config: SamplingConfig, counts_plus: Vec<u32>) -> Result<Self> {
        config.validate()?;
        if counts_plus.len() != config.n_s {
            return Err(domain(format!(
                "expected {} time points, got {}",
                config.n_s,
                counts_plus.len()
            )));
        }
        if let Some(c) = counts_plus.iter().find(|&&c| c > config.n_e) {
            return Err(domain(format!("count {c} exceeds ensemble size {}", config.n_e)));
        }
        let n_e = config.n_e as f64;
        let z_m = counts_plus.iter().map(|&c| (2.0 * c as f64 - n_e) / n_e).collect();
        Ok(Self {
            times: grid(&config),
            z_m,
            counts_plus: Some(counts_plus),
            config,
        })
    }

    /// Builds a noise-free record from exact readout expectations.
    pub fn from_expectations(config: SamplingConfig, z_m: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if z_m.len() != config.n_s {
            return Err(domain(format!("expected {} time points, got {}", config.n_s, z_m.len())));
        }
        if z_m.iter().any(|z| !z.is_finite() || z.abs() > 1.0 + 1e-9) {
            return Err(domain("expectation values must lie in [-1, 1]"));
        }
        Ok(Self { times: grid(&config), z_m, counts_plus: None, config })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn z_m(&self) -> &[f64] {
        &self.z_m
    }

    pub fn counts_plus(&self) -> Option<&[u32]> {
        self.counts_plus.as_deref()
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn mode(&self) -> RecordMode {
        if self.counts_plus.is_some() {
            RecordMode::Sampled
        } else {
            RecordMode::Analytic
        }
    }

    pub fn len(&self) -> usize {
        self.z_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_m.is_empty()
    }

    /// Serializes to a comma-separated table with a `#` metadata line.
    ///
    /// Floats are written in shortest round-trip form, so
    /// [`MeasurementRecord::from_table`] reproduces the record bit for bit.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::with_capacity(32 * self.len() + 128);
        let _ = writeln!(
            out,
            "# hamid-record delta_t={} n_s={} n_e={} eta={} seed={} mode={}",
            c.delta_t,
            c.n_s,
            c.n_e,
            c.eta,
            c.seed,
            self.mode().tag()
        );
        out.push_str("time,z_m,counts_plus,n_e\n");
        for i in 0..self.len() {
            let count = match &self.counts_plus {
                Some(counts) => counts[i].to_string(),
                None => "NA".to_string(),
            };
            let _ = writeln!(out, "{},{},{},{}", self.times[i], self.z_m[i], count, c.n_e);
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse(msg);
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# hamid-record"))
            .ok_or_else(|| parse_err("missing '# hamid-record' metadata line".into()))?;
        let mut delta_t = None;
        let mut n_s = None;
        let mut n_e = None;
        let mut eta = None;
        let mut seed = None;
        let mut mode = None;
        for field in meta.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(format!("bad metadata field '{field}'")))?;
            let bad = |_| parse_err(format!("bad value for {key}: '{value}'"));
            match key {
                "delta_t" => delta_t = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "n_s" => n_s = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "n_e" => n_e = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "eta" => eta = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "mode" => {
                    mode = Some(match value {
                        "sampled" => RecordMode::Sampled,
                        "analytic" => RecordMode::Analytic,
                        other => return Err(parse_err(format!("unknown mode '{other}'"))),
                    })
                }
                other => return Err(parse_err(format!("unknown metadata key '{other}'"))),
            }
        }
        let missing = |k: &str| parse_err(format!("metadata lacks {k}"));
        let config = SamplingConfig {
            delta_t: delta_t.ok_or_else(|| missing("delta_t"))?,
            n_s: n_s.ok_or_else(|| missing("n_s"))?,
            n_e: n_e.ok_or_else(|| missing("n_e"))?,
            eta: eta.ok_or_else(|| missing("eta"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        };
        let mode = mode.ok_or_else(|| missing("mode"))?;
        if lines.next().map(str::trim) != Some("time,z_m,counts_plus,n_e") {
            return Err(parse_err("missing column header".into()));
        }

        let mut times = Vec::with_capacity(config.n_s);
        let mut z_m = Vec::with_capacity(config.n_s);
        let mut counts = Vec::with_capacity(config.n_s);
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(parse_err(format!("row {row}: expected 4 columns")));
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| parse_err(format!("row {row}: bad number '{s}'")))
            };
            times.push(num(cols[0])?);
            z_m.push(num(cols[1])?);
            if mode == RecordMode::Sampled {
                counts.push(
                    cols[2]
                        .parse::<u32>()
                        .map_err(|_| parse_err(format!("row {row}: bad count '{}'", cols[2])))?,
                );
            }
            if cols[3].parse::<u32>().ok() != Some(config.n_e) {
                return Err(parse_err(format!("row {row}: n_e column disagrees with metadata")));
            }
        }

        let record = match mode {
            RecordMode::Sampled => Self::from_counts(config, counts)?,
            RecordMode::Analytic => Self::from_expectations(config, z_m.clone())?,
        };
        if record.times != times {
            return Err(parse_err("time column does not match the i·Δt grid".into()));
        }
        if record.z_m != z_m {
            return Err(parse_err("z_m column inconsistent with counts".into()));
        }
        Ok(record)
    }

    /// Keeps only the first `len` time points.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len < 2 || len > self.len() {
            return Err(domain(format!("cannot truncate {} points to {len}", self.len())));
        }
        let mut config = self.config;
        config.n_s = len;
        Ok(Self {
            times: self.times[..len].to_vec(),
            z_m: self.z_m[..len].to_vec(),
            counts_plus: self.counts_plus.as_ref().map(|c| c[..len].to_vec()),
            config,
        })
    }
}

fn grid(config: &SamplingConfig) -> Vec<f64> {
    (1..=config.n_s).map(|i| config.time(i)).collect()
}

/// SplitMix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent child seed, e.g. per Monte Carlo trial or per
/// record within a trial.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// RNG stream for time point `index` of a record seeded with `seed`.
pub fn time_point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One projective z readout of a state with `⟨σ_z⟩ = z_true`, flipped with
/// probability `eta`. Returns `+1` or `-1`.
pub fn sample_shot<R: Rng + ?Sized>(z_true: f64, eta: f64, rng: &mut R) -> Result<i8> {
    if !(z_true.is_finite() && z_true.abs() <= 1.0 + 1e-9) {
        return Err(domain(format!("z expectation {z_true} outside [-1, 1]")));
    }
    if !(0.0..0.5).contains(&eta) {
        return Err(domain(format!("eta must lie in [0, 0.5), got {eta}")));
    }
    let p_up = (0.5 * (1.0 + z_true)).clamp(0.0, 1.0);
    let outcome: i8 = if rng.random::<f64>() < p_up { 1 } else { -1 };
    let flipped = eta > 0.0 && rng.random::<f64>() < eta;
    Ok(if flipped { -outcome } else { outcome })
}

fn sample_profile(profile: &[f64], config: &SamplingConfig) -> Result<MeasurementRecord> {
    config.validate()?;
    let mut counts = Vec::with_capacity(profile.len());
    for (i, &z) in profile.iter().enumerate() {
        let mut rng = time_point_rng(config.seed, i + 1);
        let mut plus = 0u32;
        for _ in 0..config.n_e {
            if sample_shot(z, config.eta, &mut rng)? > 0 {
                plus += 1;
            }
        }
        counts.push(plus);
    }
    MeasurementRecord::from_counts(*config, counts)
}

fn analytic_profile(profile: &[f64], config: &SamplingConfig) -> Result<MeasurementRecord> {
    config.validate()?;
    let visibility = 1.0 - 2.0 * config.eta;
    MeasurementRecord::from_expectations(*config, profile.iter().map(|z| visibility * z).collect())
}

fn record_from_profile(
    profile: Vec<f64>,
    config: &SamplingConfig,
    mode: RecordMode,
) -> Result<MeasurementRecord> {
    match mode {
        RecordMode::Sampled => sample_profile(&profile, config),
        RecordMode::Analytic => analytic_profile(&profile, config),
    }
}

fn first_axis_profile(h: HamiltonianCoeffs, config: &SamplingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if !h.is_finite() || h.is_trivial() {
        return Err(domain("Hamiltonian must be finite and non-trivial"));
    }
    let p = h.to_polar();
    Ok((1..=config.n_s)
        .map(|i| z_expectation(p.omega, p.theta, config.time(i)).clamp(-1.0, 1.0))
        .collect())
}

/// Shot-noise record of `|0⟩` precessing under `h`.
pub fn run_time_series(h: HamiltonianCoeffs, config: &SamplingConfig) -> Result<MeasurementRecord> {
    let profile = first_axis_profile(h, config)?;
    record_from_profile(profile, config, RecordMode::Sampled)
}

/// Noise-free counterpart of [`run_time_series`]: `z_m[i] = (1 - 2η) z(t_i)`.
pub fn analytic_record(h: HamiltonianCoeffs, config: &SamplingConfig) -> Result<MeasurementRecord> {
    let profile = first_axis_profile(h, config)?;
    record_from_profile(profile, config, RecordMode::Analytic)
}

fn phase_profile(
    h_r_est: PolarHamiltonian,
    h_r_true: HamiltonianCoeffs,
    h_k: HamiltonianCoeffs,
    config: &SamplingConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if !h_k.is_finite() || h_k.is_trivial() {
        return Err(domain("second Hamiltonian must be finite and non-trivial"));
    }
    // The pulse length comes from the estimate, the evolution from the truth.
    let pulse = equator_rotation(h_r_est.omega, h_r_est.theta)?;
    let s1 = evolve_state(h_r_true, BlochVector::up(), pulse.time);
    Ok((1..=config.n_s)
        .map(|i| evolve_state(h_k, s1, config.time(i)).z().clamp(-1.0, 1.0))
        .collect())
}

/// Shot-noise record of the second axis: `|0⟩` is pulsed onto the equator
/// about the true first axis for the time computed from its estimate
/// `h_r_est`, then precesses under `h_k`.
pub fn run_phase_series(
    h_r_est: PolarHamiltonian,
    h_r_true: HamiltonianCoeffs,
    h_k: HamiltonianCoeffs,
    config: &SamplingConfig,
) -> Result<MeasurementRecord> {
    let profile = phase_profile(h_r_est, h_r_true, h_k, config)?;
    record_from_profile(profile, config, RecordMode::Sampled)
}

pub fn analytic_phase_record(
    h_r_est: PolarHamiltonian,
    h_r_true: HamiltonianCoeffs,
    h_k: HamiltonianCoeffs,
    config: &SamplingConfig,
) -> Result<MeasurementRecord> {
    let profile = phase_profile(h_r_est, h_r_true, h_k, config)?;
    record_from_profile(profile, config, RecordMode::Analytic)
}
