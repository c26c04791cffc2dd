//! Inversion of Fourier components into physical parameters.
//!
//! A first-axis record (the state starts at `|0⟩`) yields `η`, `cos θ` and
//! `ω`. A phase record (the state starts on the equator at azimuth `β`)
//! yields the `C` and `D` amplitudes, from which the azimuth `φ` of the
//! second axis relative to the first follows.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::bloch::{equator_rotation, wrap_angle, HamiltonianCoeffs, PolarHamiltonian};
use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;
use crate::spectral::{detection_threshold, dft, mpp_search, noise_floor, peak_channel, MppResult, Spectrum};
use crate::uncertainty::{
    delta_a_phi, delta_a_phi_minus_beta_c, delta_a_phi_minus_beta_d, delta_beta, delta_cd,
    delta_eta, delta_first_axis, delta_second_axis, delta_theta, pair_sigma, Estimate,
};

/// Slack for round-off on top of every statistical clamp band.
const ROUNDOFF: f64 = 1e-9;

/// Non-fatal conditions met while estimating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    /// Raw `η̂ < 0` clamped to 0.
    EtaClamped,
    /// `F0/(1-2η)` slightly negative; `cos θ` set to 0.
    CosThetaClampedLow,
    /// `F0/(1-2η)` slightly above 1; `cos θ` set to 1.
    CosThetaClampedHigh,
    /// `cos θ` at 1: `δθ` is infinite.
    SingularTheta,
    /// `sin` from `cos` at a pole of the pair relation.
    PairDegenerate,
    /// `χ_c` argument outside `[-1, 1]` within its noise band.
    ChiClamped,
    /// `C` or `D` clamped into its physical range.
    AmplitudeClamped,
    /// Branch ratio clamped into `[-1, 1]`.
    BranchClamped,
    /// Sign of the dependent branch component not resolved by the data.
    SignAmbiguous,
    /// C-branch selected but `cos θ_k = 0`; D-branch used instead.
    BranchFallback,
    /// `δA_φ` infinite.
    SingularPhi,
}

impl Flag {
    pub fn name(&self) -> &'static str {
        match self {
            Flag::EtaClamped => "eta_clamped",
            Flag::CosThetaClampedLow => "cos_theta_clamped_low",
            Flag::CosThetaClampedHigh => "cos_theta_clamped_high",
            Flag::SingularTheta => "singular_theta",
            Flag::PairDegenerate => "pair_degenerate",
            Flag::ChiClamped => "chi_clamped",
            Flag::AmplitudeClamped => "amplitude_clamped",
            Flag::BranchClamped => "branch_clamped",
            Flag::SignAmbiguous => "sign_ambiguous",
            Flag::BranchFallback => "branch_fallback",
            Flag::SingularPhi => "singular_phi",
        }
    }
}

fn push_flag(flags: &mut Vec<Flag>, flag: Flag) {
    if !flags.contains(&flag) {
        flags.push(flag);
    }
}

/// Spectrum of the MPP-trimmed window with its peak and noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub mpp: MppResult,
    pub spectrum: Spectrum,
    pub f0: f64,
    pub f_peak: Complex64,
    pub nu_p: usize,
    pub delta_f: f64,
}

/// MPP search, trim and peak extraction shared by both record kinds.
pub fn analyse_record(record: &MeasurementRecord, t_predict: f64) -> Result<SpectralSummary> {
    let full = dft(record.z_m(), record.config().delta_t)?;
    let nu = peak_channel(&full)?;
    let peak = full.magnitude(nu as isize);
    let scale = full.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak <= 1e-12 * scale.max(1.0) || peak < detection_threshold(&full, nu) {
        return Err(Error::DegenerateSignal(format!(
            "no precession resolved: peak |F| = {peak:.3e}"
        )));
    }

    let mpp = mpp_search(record, t_predict)?;
    let spectrum = dft(&record.z_m()[..mpp.samples], record.config().delta_t)?;
    let nu_p = mpp.n_periods;
    let f_peak = spectrum.at(nu_p as isize);
    let delta_f = noise_floor(&spectrum, nu_p);
    let threshold = detection_threshold(&spectrum, nu_p);
    if f_peak.norm() < threshold {
        return Err(Error::DegenerateSignal(format!(
            "peak |F| = {:.3e} below detection threshold {threshold:.3e}",
            f_peak.norm()
        )));
    }
    Ok(SpectralSummary { f0: spectrum.dc(), f_peak, nu_p, delta_f, mpp, spectrum })
}

/// `η̂` and `cos θ̂` from `F(0)` and `|F(ν_p)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisInversion {
    pub eta: f64,
    pub cos_theta: f64,
    pub flags: Vec<Flag>,
}

/// `η = (1 - F0)/2 - |F_p|`, `cos θ = √(F0 / (1 - 2η))`.
pub fn invert_axis(f0: f64, f_peak: f64, delta_f: f64) -> Result<AxisInversion> {
    if !(f0.is_finite() && f_peak.is_finite()) {
        return Err(Error::InconsistentSpectrum("non-finite spectral input".into()));
    }
    if f_peak <= (3.0 * delta_f).max(1e-12) {
        return Err(Error::DegenerateSignal(format!(
            "peak |F| = {f_peak:.3e} indistinguishable from zero (F0 = {f0:.6})"
        )));
    }
    let mut flags = Vec::new();
    let raw = (1.0 - f0) / 2.0 - f_peak;
    if raw >= 0.5 {
        return Err(Error::InconsistentSpectrum(format!("eta estimate {raw} >= 0.5")));
    }
    let eta = if raw < 0.0 {
        push_flag(&mut flags, Flag::EtaClamped);
        0.0
    } else {
        raw
    };
    let ratio = f0 / (1.0 - 2.0 * eta);
    let band = 3.0 * delta_f + ROUNDOFF;
    if ratio < -band || ratio > 1.0 + band {
        return Err(Error::InconsistentSpectrum(format!(
            "F0/(1-2eta) = {ratio} outside [0, 1] by more than 3 noise floors"
        )));
    }
    let cos_theta = if ratio < 0.0 {
        push_flag(&mut flags, Flag::CosThetaClampedLow);
        0.0
    } else if ratio > 1.0 {
        push_flag(&mut flags, Flag::CosThetaClampedHigh);
        1.0
    } else {
        ratio.sqrt()
    };
    Ok(AxisInversion { eta, cos_theta, flags })
}

/// Precession frequency, polar angle and readout error of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisEstimate {
    pub omega: Estimate,
    /// `A_θ`.
    pub cos_theta: Estimate,
    /// `B_θ`.
    pub sin_theta: Estimate,
    /// Folded into `[0, π/2]`.
    pub theta: Estimate,
    pub eta: Estimate,
    pub summary: SpectralSummary,
    pub flags: Vec<Flag>,
}

impl AxisEstimate {
    pub fn delta_f(&self) -> f64 {
        self.summary.delta_f
    }

    pub fn nu_p(&self) -> usize {
        self.summary.nu_p
    }

    pub fn t_p(&self) -> f64 {
        self.summary.mpp.t_p
    }
}

pub fn estimate_axis(record: &MeasurementRecord, t_predict: f64) -> Result<AxisEstimate> {
    let summary = analyse_record(record, t_predict)?;
    axis_from_summary(summary)
}

fn axis_from_summary(summary: SpectralSummary) -> Result<AxisEstimate> {
    let delta_f = summary.delta_f;
    let inv = invert_axis(summary.f0, summary.f_peak.norm(), delta_f)?;
    let mut flags = inv.flags;
    let d_eta = delta_eta(delta_f);
    let ts = delta_theta(summary.f0, inv.eta, delta_f, d_eta);
    if ts.singular {
        push_flag(&mut flags, Flag::SingularTheta);
    }
    let a = inv.cos_theta;
    let b = (1.0 - a * a).max(0.0).sqrt();
    let (delta_b, degenerate) = pair_sigma(a, ts.delta_a);
    if degenerate {
        push_flag(&mut flags, Flag::PairDegenerate);
    }
    Ok(AxisEstimate {
        omega: Estimate::new(summary.mpp.omega, summary.mpp.delta_omega),
        cos_theta: Estimate::new(a, ts.delta_a),
        sin_theta: Estimate::new(b, delta_b),
        theta: Estimate::new(a.acos(), ts.delta_theta),
        eta: Estimate::new(inv.eta, d_eta),
        summary,
        flags,
    })
}

/// Peak component with its phase pinned by the `C[1 - cos] + D sin` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCorrection {
    pub chi_c: f64,
    pub f_c: Complex64,
    pub clamped: bool,
}

/// Sets the phase of `F(ν_p)` so that the constant term of the reconstructed
/// signal equals the negative cosine amplitude: `cos χ_c = -F0 / (2|F_p|)`.
///
/// The sign of `sin χ_c` is taken from the uncorrected component.
pub fn phase_correct(f0: f64, f_peak: Complex64, delta_f: f64) -> Result<PhaseCorrection> {
    let mag = f_peak.norm();
    if !(mag > 0.0 && mag.is_finite() && f0.is_finite()) {
        return Err(Error::PhaseCorrectionFailed(format!("peak component {f_peak} unusable")));
    }
    let arg = -f0 / (2.0 * mag);
    let band = 3.0 * delta_f / (2.0 * mag) + ROUNDOFF;
    if arg.abs() > 1.0 + band {
        return Err(Error::PhaseCorrectionFailed(format!(
            "cos chi_c = {arg} exceeds 1 beyond its noise band {band:.3e}"
        )));
    }
    let clamped = arg.abs() > 1.0;
    let chi = arg.clamp(-1.0, 1.0).acos();
    let chi_c = if f_peak.im < 0.0 { -chi } else { chi };
    Ok(PhaseCorrection { chi_c, f_c: Complex64::from_polar(mag, chi_c), clamped })
}

/// `C = -2 Re F_c / (1 - 2η)`, `D = -2 Im F_c / (1 - 2η)` with `η` from the
/// first axis. Values are clamped into `[-1/2, 1/2]` and `[-1, 1]`.
pub fn estimate_cd(f_c: Complex64, eta: Estimate, delta_f: f64) -> (Estimate, Estimate, bool) {
    let v = 1.0 - 2.0 * eta.value;
    let c_raw = -2.0 * f_c.re / v;
    let d_raw = -2.0 * f_c.im / v;
    let c = c_raw.clamp(-0.5, 0.5);
    let d = d_raw.clamp(-1.0, 1.0);
    let (dc, dd) = delta_cd(c, d, eta.value, delta_f, eta.sigma);
    (Estimate::new(c, dc), Estimate::new(d, dd), c != c_raw || d != d_raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `A_{φ-β} = C / (A_θk B_θk)`.
    C,
    /// `B_{φ-β} = -D / B_θk`.
    D,
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self {
            Branch::C => "C",
            Branch::D => "D",
        }
    }
}

/// Branch choice: C above `θ_k = 3π/8`, D at or below it.
pub fn select_branch(theta_k: f64) -> Branch {
    if theta_k > 3.0 * PI / 8.0 {
        Branch::C
    } else {
        Branch::D
    }
}

/// Azimuth of the second axis and the intermediate `φ - β` components.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEstimate {
    pub branch: Branch,
    /// `A_{φ-β}`.
    pub cos_rel: Estimate,
    /// `B_{φ-β}`.
    pub sin_rel: Estimate,
    /// `A_φ`.
    pub cos_phi: Estimate,
    /// `B_φ`.
    pub sin_phi: Estimate,
    pub phi: Estimate,
    pub flags: Vec<Flag>,
}

fn clamp_ratio(value: f64, sigma: f64, what: &str, flags: &mut Vec<Flag>) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::BranchDomain(format!("{what} is not finite")));
    }
    if value.abs() > 1.0 + 3.0 * sigma + ROUNDOFF {
        return Err(Error::BranchDomain(format!(
            "{what} = {value} exceeds 1 by more than 3 sigma ({sigma:.3e})"
        )));
    }
    if value.abs() > 1.0 {
        push_flag(flags, Flag::BranchClamped);
    }
    Ok(value.clamp(-1.0, 1.0))
}

/// Sign used for the dependent component: `+` when the value is within one
/// sigma of zero.
fn resolved_sign(value: f64, sigma: f64, flags: &mut Vec<Flag>) -> f64 {
    if value.abs() < sigma || value == 0.0 {
        push_flag(flags, Flag::SignAmbiguous);
        1.0
    } else {
        value.signum()
    }
}

/// `φ̂` from `C`, `D`, the second axis polar angle and the equator azimuth
/// `β` (with `δA_β`).
pub fn estimate_phi(
    c: Estimate,
    d: Estimate,
    axis_k: &AxisEstimate,
    beta: f64,
    delta_a_beta: f64,
) -> Result<PhiEstimate> {
    let mut flags = Vec::new();
    let a_k = axis_k.cos_theta;
    let b_k = axis_k.sin_theta;
    let mut branch = select_branch(axis_k.theta.value);
    if branch == Branch::C && a_k.value * b_k.value == 0.0 {
        push_flag(&mut flags, Flag::BranchFallback);
        branch = Branch::D;
    }
    if b_k.value == 0.0 {
        return Err(Error::BranchDomain("second axis has sin theta = 0".into()));
    }

    let (a_rel, da_rel, b_rel, db_rel) = match branch {
        Branch::C => {
            let raw = c.value / (a_k.value * b_k.value);
            let sigma = delta_a_phi_minus_beta_c(raw, c.sigma, a_k.value, a_k.sigma, b_k.value, b_k.sigma);
            let a = clamp_ratio(raw, sigma, "A_(phi-beta)", &mut flags)?;
            let da = delta_a_phi_minus_beta_c(a, c.sigma, a_k.value, a_k.sigma, b_k.value, b_k.sigma);
            // B_{φ-β} carries the sign of -D.
            let sign = resolved_sign(-d.value, d.sigma, &mut flags);
            let b = sign * (1.0 - a * a).max(0.0).sqrt();
            let (db, degenerate) = pair_sigma(a, da);
            if degenerate {
                push_flag(&mut flags, Flag::PairDegenerate);
            }
            (a, da, b, db)
        }
        Branch::D => {
            let raw = -d.value / b_k.value;
            let (_, sigma, _) = delta_a_phi_minus_beta_d(raw, d.sigma, b_k.value, b_k.sigma);
            let b = clamp_ratio(raw, sigma, "B_(phi-beta)", &mut flags)?;
            let (da, db, degenerate) = delta_a_phi_minus_beta_d(b, d.sigma, b_k.value, b_k.sigma);
            if degenerate {
                push_flag(&mut flags, Flag::PairDegenerate);
            }
            let sign = resolved_sign(c.value, c.sigma, &mut flags);
            let a = sign * (1.0 - b * b).max(0.0).sqrt();
            (a, da, b, db)
        }
    };

    let (a_beta, b_beta) = (beta.cos(), beta.sin());
    let cos_phi = a_beta * a_rel - b_beta * b_rel;
    let sin_phi = b_beta * a_rel + a_beta * b_rel;
    let d_cos_phi = delta_a_phi(a_rel, b_rel, da_rel, a_beta, b_beta, delta_a_beta);
    if !d_cos_phi.is_finite() {
        push_flag(&mut flags, Flag::SingularPhi);
    }
    let (d_sin_phi, degenerate) = pair_sigma(cos_phi.clamp(-1.0, 1.0), d_cos_phi);
    if degenerate {
        push_flag(&mut flags, Flag::PairDegenerate);
    }
    let phi = wrap_angle(beta + b_rel.atan2(a_rel));
    let d_phi = if sin_phi.abs() > 0.0 { d_cos_phi / sin_phi.abs() } else { f64::INFINITY };
    Ok(PhiEstimate {
        branch,
        cos_rel: Estimate::new(a_rel, da_rel),
        sin_rel: Estimate::new(b_rel, db_rel),
        cos_phi: Estimate::new(cos_phi, d_cos_phi),
        sin_phi: Estimate::new(sin_phi, d_sin_phi),
        phi: Estimate::new(phi, if d_cos_phi == 0.0 { 0.0 } else { d_phi }),
        flags,
    })
}

/// Everything extracted from the phase record.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    pub c: Estimate,
    pub d: Estimate,
    pub chi_c: f64,
    pub f_c: Complex64,
    /// Equator azimuth `β` with `δA_β` as sigma.
    pub beta: Estimate,
    pub angles: PhiEstimate,
    pub summary: SpectralSummary,
    pub flags: Vec<Flag>,
}

impl PhaseEstimate {
    pub fn phi(&self) -> Estimate {
        self.angles.phi
    }

    pub fn cos_phi(&self) -> Estimate {
        self.angles.cos_phi
    }

    pub fn sin_phi(&self) -> Estimate {
        self.angles.sin_phi
    }
}

/// Equator azimuth reached by pulsing about the estimated first axis, with
/// `δA_β`.
pub fn equator_beta(axis_r: &AxisEstimate) -> Result<Estimate> {
    let pulse = equator_rotation(axis_r.omega.value, axis_r.theta.value)?;
    let sigma = delta_beta(pulse.beta, axis_r.theta.value, axis_r.cos_theta.sigma);
    Ok(Estimate::new(pulse.beta, sigma))
}

/// Analyses a phase record, given both characterized axes.
pub fn estimate_phase(
    record: &MeasurementRecord,
    axis_r: &AxisEstimate,
    axis_k: &AxisEstimate,
    t_predict: f64,
) -> Result<PhaseEstimate> {
    let beta = equator_beta(axis_r)?;
    let summary = analyse_record(record, t_predict)?;
    let corr = phase_correct(summary.f0, summary.f_peak, summary.delta_f)?;
    let mut flags = Vec::new();
    if corr.clamped {
        push_flag(&mut flags, Flag::ChiClamped);
    }
    let (c, d, clamped) = estimate_cd(corr.f_c, axis_r.eta, summary.delta_f);
    if clamped {
        push_flag(&mut flags, Flag::AmplitudeClamped);
    }
    let angles = estimate_phi(c, d, axis_k, beta.value, beta.sigma)?;
    for &f in &angles.flags {
        push_flag(&mut flags, f);
    }
    Ok(PhaseEstimate { c, d, chi_c: corr.chi_c, f_c: corr.f_c, beta, angles, summary, flags })
}

/// Hamiltonian coefficients with their one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianEstimate {
    pub coeffs: HamiltonianCoeffs,
    /// Sigmas of `(h_x, h_y, h_z)`.
    pub sigma: [f64; 3],
}

impl HamiltonianEstimate {
    pub fn polar(&self) -> PolarHamiltonian {
        self.coeffs.to_polar()
    }

    /// `d̂ = 2ĥ`.
    pub fn rotation_vector(&self) -> [f64; 3] {
        let h = self.coeffs.as_array();
        [2.0 * h[0], 2.0 * h[1], 2.0 * h[2]]
    }

    /// `δd = 2δh`.
    pub fn rotation_sigma(&self) -> [f64; 3] {
        [2.0 * self.sigma[0], 2.0 * self.sigma[1], 2.0 * self.sigma[2]]
    }
}

/// First-axis Hamiltonian alone: `H_r = (ω/2)(B_θ σx + A_θ σz)`.
pub fn reconstruct_first_axis(axis_r: &AxisEstimate) -> HamiltonianEstimate {
    let half_w = 0.5 * axis_r.omega.value;
    HamiltonianEstimate {
        coeffs: HamiltonianCoeffs::new(half_w * axis_r.sin_theta.value, 0.0, half_w * axis_r.cos_theta.value),
        sigma: delta_first_axis(axis_r.omega, axis_r.cos_theta, axis_r.sin_theta),
    }
}

/// Both Hamiltonians in the frame where the first axis lies in the x–z plane.
pub fn reconstruct_hamiltonians(
    axis_r: &AxisEstimate,
    axis_k: &AxisEstimate,
    phase: &PhaseEstimate,
) -> (HamiltonianEstimate, HamiltonianEstimate) {
    let h_r = reconstruct_first_axis(axis_r);
    let half_w = 0.5 * axis_k.omega.value;
    let b_k = axis_k.sin_theta.value;
    let h_k = HamiltonianEstimate {
        coeffs: HamiltonianCoeffs::new(
            half_w * b_k * phase.cos_phi().value,
            half_w * b_k * phase.sin_phi().value,
            half_w * axis_k.cos_theta.value,
        ),
        sigma: delta_second_axis(
            axis_k.omega,
            axis_k.cos_theta,
            axis_k.sin_theta,
            phase.cos_phi(),
            phase.sin_phi(),
        ),
    };
    (h_r, h_k)
}

/// One row of the estimate report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub parameter: String,
    pub value: f64,
    pub sigma: f64,
    pub nu_p: usize,
    pub t_p: f64,
    pub delta_f: f64,
    /// `"-"` outside the phase estimate.
    pub branch: &'static str,
}

impl AxisEstimate {
    /// Report rows, parameter names prefixed with `label`.
    pub fn report_rows(&self, label: &str) -> Vec<ReportRow> {
        let row = |name: &str, e: Estimate| ReportRow {
            parameter: format!("{label}.{name}"),
            value: e.value,
            sigma: e.sigma,
            nu_p: self.nu_p(),
            t_p: self.t_p(),
            delta_f: self.delta_f(),
            branch: "-",
        };
        vec![
            row("omega", self.omega),
            row("cos_theta", self.cos_theta),
            row("sin_theta", self.sin_theta),
            row("theta", self.theta),
            row("eta", self.eta),
        ]
    }
}

impl PhaseEstimate {
    pub fn report_rows(&self, label: &str) -> Vec<ReportRow> {
        let branch = self.angles.branch.name();
        let row = |name: &str, e: Estimate| ReportRow {
            parameter: format!("{label}.{name}"),
            value: e.value,
            sigma: e.sigma,
            nu_p: self.summary.nu_p,
            t_p: self.summary.mpp.t_p,
            delta_f: self.summary.delta_f,
            branch,
        };
        vec![
            row("C", self.c),
            row("D", self.d),
            row("chi_c", Estimate::exact(self.chi_c)),
            row("beta", self.beta),
            row("cos_phi_minus_beta", self.angles.cos_rel),
            row("sin_phi_minus_beta", self.angles.sin_rel),
            row("cos_phi", self.angles.cos_phi),
            row("sin_phi", self.angles.sin_phi),
            row("phi", self.angles.phi),
        ]
    }
}
