//! Closed-system dynamics of a single two-state system on the Bloch sphere.
//!
//! A Hamiltonian `H = h_x σ_x + h_y σ_y + h_z σ_z` generates precession of the
//! Bloch vector about `d = 2(h_x, h_y, h_z)` at angular rate `|d|`, following
//! `ds/dt = d × s`. That sense reproduces `⟨σ_z⟩` for `U(t) = exp(-iHt)` and
//! fixes the sign of the equator azimuth `β` (a quarter turn about `+x` takes
//! `|0⟩` to `(0, -1, 0)`).

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::Vector3;

use crate::error::{domain, Result};

/// Pauli coefficients of a traceless two-state Hamiltonian (ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianCoeffs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl HamiltonianCoeffs {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation vector `d = 2h`.
    pub fn rotation_vector(&self) -> Vector3<f64> {
        Vector3::new(2.0 * self.x, 2.0 * self.y, 2.0 * self.z)
    }

    /// Angular precession frequency `|d|`.
    pub fn omega(&self) -> f64 {
        self.rotation_vector().norm()
    }

    pub fn is_trivial(&self) -> bool {
        self.omega() == 0.0
    }

    pub fn to_polar(&self) -> PolarHamiltonian {
        coeffs_to_polar(*self)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// The same Hamiltonian as precession frequency plus the spherical angles of
/// its axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarHamiltonian {
    pub omega: f64,
    /// Polar angle in `[0, π]`.
    pub theta: f64,
    /// Azimuth in `(-π, π]`; zero at the poles.
    pub phi: f64,
}

impl PolarHamiltonian {
    pub const fn new(omega: f64, theta: f64, phi: f64) -> Self {
        Self { omega, theta, phi }
    }

    pub fn to_coeffs(&self) -> HamiltonianCoeffs {
        polar_to_coeffs(*self)
    }

    /// Precession period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// A point in the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector(pub Vector3<f64>);

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    /// `|0⟩`, the north pole.
    pub fn up() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    /// Unit vector on the equator at azimuth `beta`.
    pub fn equatorial(beta: f64) -> Self {
        Self::new(beta.cos(), beta.sin(), 0.0)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_physical(&self) -> bool {
        self.norm() <= 1.0 + 1e-12
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn coeffs_to_polar(h: HamiltonianCoeffs) -> PolarHamiltonian {
    let d = h.rotation_vector();
    let omega = d.norm();
    if omega == 0.0 {
        return PolarHamiltonian::new(0.0, 0.0, 0.0);
    }
    let theta = (d.z / omega).clamp(-1.0, 1.0).acos();
    let phi = if d.x == 0.0 && d.y == 0.0 {
        0.0
    } else {
        let p = d.y.atan2(d.x);
        // atan2 returns -π for (-0.0, negative); the azimuth range is (-π, π].
        if p <= -PI {
            PI
        } else {
            p
        }
    };
    PolarHamiltonian::new(omega, theta, phi)
}

pub fn polar_to_coeffs(p: PolarHamiltonian) -> HamiltonianCoeffs {
    let half = 0.5 * p.omega;
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    HamiltonianCoeffs::new(half * st * cp, half * st * sp, half * ct)
}

/// Rotates `s0` about `d̂` by `|d| t` (Rodrigues' formula).
pub fn evolve_state(h: HamiltonianCoeffs, s0: BlochVector, t: f64) -> BlochVector {
    let d = h.rotation_vector();
    let omega = d.norm();
    if omega == 0.0 || t == 0.0 {
        return s0;
    }
    let axis = d / omega;
    let (sin_a, cos_a) = (omega * t).sin_cos();
    let s = s0.0;
    let rotated = s * cos_a + axis.cross(&s) * sin_a + axis * axis.dot(&s) * (1.0 - cos_a);
    BlochVector(rotated)
}

/// `z(t) = cos(ωt) sin²θ + cos²θ` for a system prepared in `|0⟩`.
pub fn z_expectation(omega: f64, theta: f64, t: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    (omega * t).cos() * st * st + ct * ct
}

/// Coefficients `(C, D)` of the second-axis signal
/// `z(t) = C[1 - cos(ω_k t)] + D sin(ω_k t)` for a system prepared at
/// azimuth `beta` on the equator.
///
/// `C = ½ sin(2θ_k) cos(φ - β)` and `D = sin(θ_k) sin(β - φ)`; the sign of `D`
/// follows from precession in the `d × s` sense.
pub fn phase_signal_coefficients(theta_k: f64, phi: f64, beta: f64) -> (f64, f64) {
    let c = 0.5 * (2.0 * theta_k).sin() * (phi - beta).cos();
    let d = theta_k.sin() * (beta - phi).sin();
    (c, d)
}

pub fn z_phi_expectation(omega_k: f64, theta_k: f64, phi: f64, beta: f64, t: f64) -> f64 {
    let (c, d) = phase_signal_coefficients(theta_k, phi, beta);
    let (s, co) = (omega_k * t).sin_cos();
    c * (1.0 - co) + d * s
}

/// Pulse that carries `|0⟩` onto the equator by precession about the first
/// axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquatorRotation {
    /// Pulse duration.
    pub time: f64,
    /// Azimuth of the resulting equatorial state.
    pub beta: f64,
}

/// Duration of the equator pulse about an axis at polar angle `theta_r` and
/// the azimuth `β` at which it leaves the state.
///
/// Only axes with `θ_r ∈ [π/4, 3π/4]` reach the equator; others need a
/// multi-pulse scheme and are rejected.
pub fn equator_rotation(omega_r: f64, theta_r: f64) -> Result<EquatorRotation> {
    const EDGE_TOL: f64 = 1e-12;
    if !(omega_r.is_finite() && omega_r > 0.0) {
        return Err(domain(format!("equator rotation needs ω_r > 0, got {omega_r}")));
    }
    if !(theta_r >= FRAC_PI_4 - EDGE_TOL && theta_r <= 3.0 * FRAC_PI_4 + EDGE_TOL) {
        return Err(domain(format!(
            "θ_r = {theta_r} outside [π/4, 3π/4]; a single pulse cannot reach the equator"
        )));
    }
    let c2 = (2.0 * theta_r).cos();
    let cos_angle = ((c2 + 1.0) / (c2 - 1.0)).clamp(-1.0, 1.0);
    let time = cos_angle.acos() / omega_r;
    let axis = polar_to_coeffs(PolarHamiltonian::new(omega_r, theta_r, 0.0));
    let s1 = evolve_state(axis, BlochVector::up(), time);
    Ok(EquatorRotation { time, beta: s1.y().atan2(s1.x()) })
}
