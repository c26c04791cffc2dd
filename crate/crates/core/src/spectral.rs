//! DFT of measurement records, peak location, noise floor and the
//! minimum-phase-point (MPP) truncation search.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{domain, Error, Result};
use crate::measurement::MeasurementRecord;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT of a record window, normalized by `1/n`.
///
/// Samples are taken to sit on grid points `j = 1..=n`, so
/// `F(ν) = (1/n) Σ_j z_j exp(-2πiνj/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coeffs: Vec<Complex64>,
    delta_t: f64,
}

impl Spectrum {
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Window duration `n Δt`.
    pub fn window(&self) -> f64 {
        self.len() as f64 * self.delta_t
    }

    /// Channel `ν`, with negative channels folded as `F(-ν) = F(n - ν)`.
    pub fn at(&self, nu: isize) -> Complex64 {
        let n = self.len() as isize;
        self.coeffs[nu.rem_euclid(n) as usize]
    }

    pub fn magnitude(&self, nu: isize) -> f64 {
        self.at(nu).norm()
    }

    /// `F(0)`, real for a real record.
    pub fn dc(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Inverse transform back onto the `j = 1..=n` grid.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.len();
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(nu, f)| f * Complex64::from_polar(1.0, 2.0 * PI * nu as f64 / n as f64))
            .collect();
        PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
        buf.iter().map(|c| c.re).collect()
    }

    /// `channel,frequency,real,imag,magnitude`, frequency in cycles per time unit.
    pub fn to_table(&self) -> String {
        let mut out = String::from("channel,frequency,real,imag,magnitude\n");
        let window = self.window();
        for (nu, f) in self.coeffs.iter().enumerate() {
            let _ = writeln!(out, "{nu},{},{},{},{}", nu as f64 / window, f.re, f.im, f.norm());
        }
        out
    }
}

pub fn dft(z: &[f64], delta_t: f64) -> Result<Spectrum> {
    let n = z.len();
    if n < 4 {
        return Err(domain(format!("DFT window needs at least 4 samples, got {n}")));
    }
    if !(delta_t.is_finite() && delta_t > 0.0) {
        return Err(domain(format!("delta_t must be positive, got {delta_t}")));
    }
    let mut buf: Vec<Complex64> = z.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    let scale = 1.0 / n as f64;
    for (nu, f) in buf.iter_mut().enumerate() {
        *f *= Complex64::from_polar(scale, -2.0 * PI * nu as f64 / n as f64);
    }
    Ok(Spectrum { coeffs: buf, delta_t })
}

/// Argmax of `|F(ν)|` over `ν ∈ [1, ⌊n/2⌋ - 1]`, rejecting a maximum on the
/// upper edge of the band.
pub fn peak_channel(spec: &Spectrum) -> Result<usize> {
    let top = spec.len() / 2 - 1;
    if top < 1 {
        return Err(domain("spectrum too short to hold a peak"));
    }
    let mut best = 1;
    let mut best_mag = spec.magnitude(1);
    for nu in 2..=top {
        let mag = spec.magnitude(nu as isize);
        if mag > best_mag {
            best = nu;
            best_mag = mag;
        }
    }
    if best == top && top > 1 {
        return Err(Error::AliasingSuspected(format!(
            "spectral maximum at the band edge, channel {top}"
        )));
    }
    Ok(best)
}

/// Located peak with the noise floor it must clear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub channel: usize,
    pub magnitude: f64,
    pub noise_floor: f64,
}

pub fn find_peak(spec: &Spectrum) -> Result<Peak> {
    let channel = peak_channel(spec)?;
    let magnitude = spec.magnitude(channel as isize);
    let noise_floor = noise_floor(spec, channel);
    let scale = spec.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if magnitude <= 1e-12 * scale.max(1.0) {
        return Err(Error::AliasingSuspected("no precession: spectrum has no peak".into()));
    }
    let threshold = detection_threshold(spec, channel);
    if magnitude < threshold {
        return Err(Error::AliasingSuspected(format!(
            "peak |F| = {magnitude:.3e} below detection threshold {threshold:.3e}"
        )));
    }
    Ok(Peak { channel, magnitude, noise_floor })
}

fn noise_magnitudes(spec: &Spectrum, nu_p: usize) -> Vec<f64> {
    let n = spec.len();
    let mirror = (n - nu_p % n) % n;
    (1..n)
        .filter(|&nu| nu != nu_p && nu != mirror)
        .map(|nu| spec.coeffs[nu].norm())
        .collect()
}

/// Standard deviation of `|F(ν)|` over every channel except `0` and `±ν_p`.
pub fn noise_floor(spec: &Spectrum, nu_p: usize) -> f64 {
    let mags = noise_magnitudes(spec, nu_p);
    if mags.is_empty() {
        return 0.0;
    }
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let var = mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mags.len() as f64;
    var.sqrt()
}

/// False-alarm probability of [`detection_threshold`] over the whole search band.
pub const FALSE_ALARM: f64 = 1e-3;

/// Smallest peak magnitude accepted as a signal at channel `nu_p`.
///
/// The larger of `3δF` and the level a Rayleigh-distributed noise channel
/// exceeds anywhere in the band with probability [`FALSE_ALARM`], the
/// Rayleigh scale being estimated from the mean noise magnitude.
pub fn detection_threshold(spec: &Spectrum, nu_p: usize) -> f64 {
    let mags = noise_magnitudes(spec, nu_p);
    if mags.is_empty() {
        return 0.0;
    }
    let scale = mags.iter().sum::<f64>() / mags.len() as f64 * (2.0 / PI).sqrt();
    let band = (spec.len() / 2).saturating_sub(1).max(1) as f64;
    let rayleigh = scale * (2.0 * (band / FALSE_ALARM).ln()).sqrt();
    rayleigh.max(3.0 * noise_floor(spec, nu_p))
}

/// Leakage test function
/// `P = (2|F_p| - |F_{p-1}| - |F_{p+1}|) / (|F_{p-1}| + |F_{p+1}|)`.
pub fn leakage_test(spec: &Spectrum, nu_p: usize) -> f64 {
    let p = nu_p as isize;
    let centre = spec.magnitude(p);
    let sides = spec.magnitude(p - 1) + spec.magnitude(p + 1);
    // Leakage below 1e-12 of the peak counts as none, so exact-period
    // windows tie instead of ranking by round-off.
    let floor = 1e-12 * centre.max(f64::MIN_POSITIVE);
    (2.0 * centre - sides) / sides.max(floor)
}

/// Outcome of the MPP search over truncations in the last predicted period.
#[derive(Debug, Clone, PartialEq)]
pub struct MppResult {
    /// Chosen window end time.
    pub t_p: f64,
    /// Samples kept, `t_p = samples Δt`.
    pub samples: usize,
    /// Peak channel of the trimmed window: whole periods inside `t_p`.
    pub n_periods: usize,
    /// Candidate window end times.
    pub candidates: Vec<f64>,
    /// `P` at each candidate; NaN where no peak could be located.
    pub p_curve: Vec<f64>,
    /// Interpolated width of the `P` peak, `None` if half maximum is never
    /// crossed inside the search window.
    pub fwhm: Option<f64>,
    pub omega: f64,
    pub delta_omega: f64,
}

impl MppResult {
    /// `t_p,P` table of the search curve.
    pub fn p_table(&self) -> String {
        let mut out = String::from("t_p,P\n");
        for (t, p) in self.candidates.iter().zip(&self.p_curve) {
            let _ = writeln!(out, "{t},{p}");
        }
        out
    }
}

/// Width of the peak of `curve` at `peak` on abscissae `x`, by linear
/// interpolation of the half-maximum crossings.
fn full_width_half_max(x: &[f64], curve: &[f64], peak: usize) -> Option<f64> {
    let half = curve[peak] / 2.0;
    let crossing = |inner: usize, outer: usize| {
        let (pi, po) = (curve[inner], curve[outer]);
        x[inner] + (x[outer] - x[inner]) * (pi - half) / (pi - po)
    };
    let mut left = None;
    let mut i = peak;
    while i > 0 {
        let v = curve[i - 1];
        if !v.is_finite() {
            break;
        }
        if v < half {
            left = Some(crossing(i, i - 1));
            break;
        }
        i -= 1;
    }
    let mut right = None;
    let mut i = peak;
    while i + 1 < curve.len() {
        let v = curve[i + 1];
        if !v.is_finite() {
            break;
        }
        if v < half {
            right = Some(crossing(i, i + 1));
            break;
        }
        i += 1;
    }
    let centre = x[peak];
    match (left, right) {
        (Some(l), Some(r)) => Some(r - l),
        (Some(l), None) => Some(2.0 * (centre - l)),
        (None, Some(r)) => Some(2.0 * (r - centre)),
        (None, None) => None,
    }
}

/// Scans every truncation `t_p ∈ [t_ob - T_predict, t_ob]` on the sample grid
/// and keeps the one maximizing the leakage test `P`.
pub fn mpp_search(record: &MeasurementRecord, t_predict: f64) -> Result<MppResult> {
    let cfg = record.config();
    let dt = cfg.delta_t;
    cfg.check_nyquist(t_predict)?;
    let t_ob = cfg.t_ob();
    if t_ob < 2.0 * t_predict * (1.0 - 1e-12) {
        return Err(domain(format!(
            "record spans {t_ob} time units, less than two predicted periods of {t_predict}"
        )));
    }
    let n_s = record.len();
    let first = (((t_ob - t_predict) / dt) - 1e-9).ceil().max(4.0) as usize;
    if first >= n_s {
        return Err(domain("MPP search window holds fewer than 2 candidates"));
    }

    let z = record.z_m();
    let mut candidates = Vec::with_capacity(n_s - first + 1);
    let mut p_curve = Vec::with_capacity(n_s - first + 1);
    let mut channels = Vec::with_capacity(n_s - first + 1);
    let mut last_err = None;
    for m in first..=n_s {
        candidates.push(m as f64 * dt);
        let spec = dft(&z[..m], dt)?;
        let scale = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        match peak_channel(&spec) {
            Ok(nu) if spec.magnitude(nu as isize) <= 1e-12 * scale => {
                channels.push(nu);
                p_curve.push(f64::NAN);
                last_err = Some(Error::NoPeak("no spectral peak in window".into()));
            }
            Ok(nu) => {
                channels.push(nu);
                p_curve.push(leakage_test(&spec, nu));
            }
            Err(e) => {
                channels.push(0);
                p_curve.push(f64::NAN);
                last_err = Some(e);
            }
        }
    }

    let finite: Vec<usize> = (0..p_curve.len()).filter(|&i| p_curve[i].is_finite()).collect();
    if finite.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::NoPeak("P undefined everywhere".into())));
    }
    let p_max = finite.iter().map(|&i| p_curve[i]).fold(f64::NEG_INFINITY, f64::max);
    let p_min = finite.iter().map(|&i| p_curve[i]).fold(f64::INFINITY, f64::min);
    if p_max <= 0.0 || p_max - p_min <= 1e-12 * p_max.abs() {
        return Err(Error::NoPeak(format!(
            "leakage test has no interior maximum (max {p_max:.3e}, min {p_min:.3e})"
        )));
    }
    let best = *finite
        .iter()
        .rev()
        .find(|&&i| p_curve[i] >= p_max - 1e-12 * p_max.max(1.0))
        .expect("maximum is attained");

    let samples = first + best;
    let t_p = candidates[best];
    let n_periods = channels[best];
    let omega = 2.0 * PI * n_periods as f64 / t_p;
    let fwhm = full_width_half_max(&candidates, &p_curve, best);
    // ω = 2πn/t_p, so a width in t_p maps to ω through |dω/dt_p| = ω/t_p.
    let delta_omega = omega * fwhm.unwrap_or(dt) / t_p;
    Ok(MppResult { t_p, samples, n_periods, candidates, p_curve, fwhm, omega, delta_omega })
}
