//! First-order propagation of the spectral noise floor `δF` and the MPP
//! frequency width `δω` into one-sigma uncertainties.
//!
//! Singular geometries report an infinite sigma rather than failing, so that
//! batch runs complete and can count the degenerate trials.

use crate::error::{domain, Result};

/// A value with its predicted one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Non-negative; `f64::INFINITY` marks a singular geometry.
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        debug_assert!(!(sigma < 0.0), "negative sigma {sigma}");
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    pub fn is_singular(&self) -> bool {
        !self.sigma.is_finite()
    }

    /// `|value - truth| <= k sigma`.
    pub fn covers(&self, truth: f64, k: f64) -> bool {
        (self.value - truth).abs() <= k * self.sigma
    }
}

/// `Σ (∂f/∂x_i)² var_i + Σ 2 (∂f/∂x_i)(∂f/∂x_j) cov_ij`.
///
/// `partials` holds `(∂f/∂x_i, var_i)`; `cov_terms` holds `(i, j, cov_ij)`
/// indexing into `partials`.
pub fn propagate_variance(partials: &[(f64, f64)], cov_terms: &[(usize, usize, f64)]) -> f64 {
    let diag: f64 = partials.iter().map(|(d, var)| d * d * var).sum();
    let off: f64 = cov_terms
        .iter()
        .map(|&(i, j, cov)| 2.0 * partials[i].0 * partials[j].0 * cov)
        .sum();
    diag + off
}

/// `δη = (3/2) δF`: `η = (1 - F0)/2 - |F_p|` with `cov(F0, F_p) = δF²`.
pub fn delta_eta(delta_f: f64) -> f64 {
    1.5 * delta_f
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSigma {
    /// Sigma of `A = cos θ`.
    pub delta_a: f64,
    pub delta_theta: f64,
    /// `A` within `1e-9` of 1: `δθ` diverges.
    pub singular: bool,
}

/// Sigmas of `A = √(F0/(1-2η))` and of `θ = arccos A`.
///
/// A negative `F0` (A clamped to zero) is evaluated at `|F0|`.
pub fn delta_theta(f0: f64, eta: f64, delta_f: f64, delta_eta: f64) -> ThetaSigma {
    let v = 1.0 - 2.0 * eta;
    let f0_abs = f0.abs();
    let a = (f0.max(0.0) / v).sqrt();
    let first = if f0_abs > 0.0 {
        (f0_abs / v) * ((delta_f / (2.0 * f0_abs)).powi(2) + (delta_eta / v).powi(2))
    } else if delta_f > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let third = ((v - f0) / v.powi(3)).abs() * delta_f * delta_f;
    let delta_a = (first + third).sqrt();
    if a >= 1.0 - 1e-9 {
        let delta_theta = if delta_a == 0.0 { 0.0 } else { f64::INFINITY };
        return ThetaSigma { delta_a, delta_theta, singular: true };
    }
    ThetaSigma { delta_a, delta_theta: delta_a / (1.0 - a * a).sqrt(), singular: false }
}

/// `δA_β = |B_β / B_θr| δA_θr`, from `δβ ≈ δθ_r`.
pub fn delta_beta(beta: f64, theta_r: f64, delta_a_theta_r: f64) -> f64 {
    (beta.sin() / theta_r.sin()).abs() * delta_a_theta_r
}

/// `(δC, δD)` without the covariance term.
pub fn delta_cd(c: f64, d: f64, eta: f64, delta_f: f64, delta_eta: f64) -> (f64, f64) {
    let v = 1.0 - 2.0 * eta;
    let dc = ((1.5 / v * delta_f).powi(2) + (2.0 * c / v * delta_eta).powi(2)).sqrt();
    let dd = ((2.0 / v * delta_f).powi(2) + (2.0 * d / v * delta_eta).powi(2)).sqrt();
    (dc, dd)
}

/// Sigma of `B = ±√(1 - A²)` from `A δA = B δB`.
///
/// Returns `(δB, degenerate)`; at `B = 0` the relation is singular and
/// `δB = δA` is used instead.
pub fn pair_sigma(a: f64, delta_a: f64) -> (f64, bool) {
    let b = (1.0 - a * a).max(0.0).sqrt();
    if b == 0.0 {
        return (delta_a, true);
    }
    (a.abs() * delta_a / b, false)
}

/// C-branch, `A_{φ-β} = C / (A_θk B_θk)`:
/// `δA² = A²[(δC/C)² + (δA_θk/A_θk)² + (δB_θk/B_θk)²]`.
pub fn delta_a_phi_minus_beta_c(
    a_pmb: f64,
    delta_c: f64,
    a_k: f64,
    delta_a_k: f64,
    b_k: f64,
    delta_b_k: f64,
) -> f64 {
    // A/C = 1/(A_θk B_θk), which stays finite when C = 0.
    let c_term = delta_c / (a_k * b_k);
    (c_term.powi(2) + a_pmb.powi(2) * ((delta_a_k / a_k).powi(2) + (delta_b_k / b_k).powi(2)))
        .sqrt()
}

/// D-branch, `B_{φ-β} = -D / B_θk`:
/// `δB² = B²[(δD/D)² + (δB_θk/B_θk)²]`, then `δA` from the pair relation.
///
/// Returns `(δA_{φ-β}, δB_{φ-β}, degenerate)`.
pub fn delta_a_phi_minus_beta_d(
    b_pmb: f64,
    delta_d: f64,
    b_k: f64,
    delta_b_k: f64,
) -> (f64, f64, bool) {
    let d_term = delta_d / b_k;
    let delta_b = (d_term.powi(2) + b_pmb.powi(2) * (delta_b_k / b_k).powi(2)).sqrt();
    let (delta_a, degenerate) = pair_sigma(b_pmb, delta_b);
    (delta_a, delta_b, degenerate)
}

/// `δA_φ² = (A_x² + B_x² A_β²/B_β²) δA_β² + (A_β² + B_β² A_x²/B_x²) δA_x²`
/// with `x = φ - β`; infinite when `|B_x|` or `|B_β|` is below `1e-6`.
pub fn delta_a_phi(a_pmb: f64, b_pmb: f64, delta_a_pmb: f64, a_beta: f64, b_beta: f64, delta_a_beta: f64) -> f64 {
    if b_pmb.abs() < 1e-6 || b_beta.abs() < 1e-6 {
        return f64::INFINITY;
    }
    let k_beta = a_pmb * a_pmb + b_pmb * b_pmb * a_beta * a_beta / (b_beta * b_beta);
    let k_pmb = a_beta * a_beta + b_beta * b_beta * a_pmb * a_pmb / (b_pmb * b_pmb);
    (k_beta * delta_a_beta * delta_a_beta + k_pmb * delta_a_pmb * delta_a_pmb).sqrt()
}

/// Sigma of a product of independent factors `(value, sigma)`.
///
/// Equivalent to the relative quadrature `(δf/f)² = Σ (δx_i/x_i)²` wherever
/// every factor is nonzero, and still defined when one is zero.
pub fn product_sigma(factors: &[(f64, f64)]) -> f64 {
    let mut var = 0.0;
    for (i, &(_, s)) in factors.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let rest: f64 = factors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &(v, _))| v)
            .product();
        var += (s * rest).powi(2);
    }
    var.sqrt()
}

/// Component sigmas of `H_r = (ω/2)(B_θ σx + A_θ σz)`.
pub fn delta_first_axis(omega: Estimate, cos_theta: Estimate, sin_theta: Estimate) -> [f64; 3] {
    let half_w = (0.5 * omega.value, 0.5 * omega.sigma);
    [
        product_sigma(&[half_w, (sin_theta.value, sin_theta.sigma)]),
        0.0,
        product_sigma(&[half_w, (cos_theta.value, cos_theta.sigma)]),
    ]
}

/// Component sigmas of
/// `H_k = (ω/2)(B_θ A_φ σx + B_θ B_φ σy + A_θ σz)`.
pub fn delta_second_axis(
    omega: Estimate,
    cos_theta: Estimate,
    sin_theta: Estimate,
    cos_phi: Estimate,
    sin_phi: Estimate,
) -> [f64; 3] {
    let half_w = (0.5 * omega.value, 0.5 * omega.sigma);
    let b = (sin_theta.value, sin_theta.sigma);
    [
        product_sigma(&[half_w, b, (cos_phi.value, cos_phi.sigma)]),
        product_sigma(&[half_w, b, (sin_phi.value, sin_phi.sigma)]),
        product_sigma(&[half_w, (cos_theta.value, cos_theta.sigma)]),
    ]
}

/// Relative distance `𝒟` between true and estimated rotation vectors and its
/// predicted uncertainty `δ𝒟`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub dist: f64,
    pub delta_dist: f64,
}

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `𝒟 = |d - d̂| / |d|`, `δ𝒟 = |δd| / |d̂|`.
pub fn distance_metrics(d_true: [f64; 3], d_hat: [f64; 3], delta_d: [f64; 3]) -> Result<DistanceReport> {
    let n_true = norm(d_true);
    let n_hat = norm(d_hat);
    if !(n_true > 0.0 && n_hat > 0.0) {
        return Err(domain("distance undefined for zero-magnitude vectors"));
    }
    let diff = [d_true[0] - d_hat[0], d_true[1] - d_hat[1], d_true[2] - d_hat[2]];
    Ok(DistanceReport { dist: norm(diff) / n_true, delta_dist: norm(delta_d) / n_hat })
}
