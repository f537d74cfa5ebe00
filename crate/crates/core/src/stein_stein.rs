//! Stein–Stein model: closed-form minimizers of the small-noise control
//! problem and the asymptotic local-variance slopes in the wings.
//!
//! The model is `dY = -½ Z² dt + Z dB¹`, `dZ = (a + bZ) dt + c dB²` with
//! `d<B¹, B²> = ρ dt`.

use serde::{Deserialize, Serialize};

use crate::control::AffineControlSystem;
use crate::error::{Error, Result};
use crate::roots::{bisect, scan_sign_change};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinSteinParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub z0: f64,
}

impl SteinSteinParams {
    /// Validates the supported regime: `c > 0`, `-1 < ρ ≤ 0`, `b ≤ 0`.
    pub fn new(a: f64, b: f64, c: f64, rho: f64, z0: f64) -> Result<Self> {
        if ![a, b, c, rho, z0].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite Stein-Stein parameter".into(),
            ));
        }
        if c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "vol-of-vol c must be positive, got {c}"
            )));
        }
        if rho <= -1.0 || rho >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "correlation must lie in (-1, 1), got {rho}"
            )));
        }
        if b > 0.0 {
            return Err(Error::Regime(format!(
                "mean reversion b = {b} must be <= 0"
            )));
        }
        if rho > 0.0 {
            return Err(Error::Regime(format!(
                "correlation rho = {rho} must be <= 0"
            )));
        }
        Ok(Self { a, b, c, rho, z0 })
    }

    /// `a = 0, b = -0.5, c = 0.4, ρ = -0.75, z0 = 0.244`.
    pub fn figure() -> Self {
        Self {
            a: 0.0,
            b: -0.5,
            c: 0.4,
            rho: -0.75,
            z0: 0.244,
        }
    }

    pub fn control_system(&self, regime: Regime) -> SteinSteinSystem {
        SteinSteinSystem {
            b: self.b,
            c: self.c,
            rho: self.rho,
            regime,
        }
    }
}

/// Which wing of the smile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wing {
    Plus,
    Minus,
}

impl Wing {
    pub fn sign(self) -> f64 {
        match self {
            Wing::Plus => 1.0,
            Wing::Minus => -1.0,
        }
    }

    pub fn of(y: f64) -> Self {
        if y < 0.0 {
            Wing::Minus
        } else {
            Wing::Plus
        }
    }

    pub fn both() -> [Wing; 2] {
        [Wing::Plus, Wing::Minus]
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "maturity must be positive, got {t}"
        )));
    }
    Ok(())
}

/// `p(r, ±1) = [(1 + 2ρb/c) ± sqrt((1 + 2ρb/c)² + 4(1-ρ²)(b²/c² + r²/(c²t²)))] / (2(1-ρ²))`.
pub fn p_of(r: f64, wing: Wing, params: &SteinSteinParams, t: f64) -> f64 {
    let SteinSteinParams { b, c, rho, .. } = *params;
    let one_m = 1.0 - rho * rho;
    let base = 1.0 + 2.0 * rho * b / c;
    let disc = base * base + 4.0 * one_m * (b * b / (c * c) + r * r / (c * c * t * t));
    (base + wing.sign() * disc.sqrt()) / (2.0 * one_m)
}

/// `g(r) = r cos r - t (b + ρ c p(r)) sin r`, whose first positive zero is `r̄`.
pub fn root_function(r: f64, wing: Wing, params: &SteinSteinParams, t: f64) -> f64 {
    let p = p_of(r, wing, params, t);
    r * r.cos() - t * (params.b + params.rho * params.c * p) * r.sin()
}

const RBAR_SCAN: usize = 10_000;
const RBAR_TOL: f64 = 1e-12;

/// Smallest strictly positive zero of [`root_function`]: scanned on `(0, π]`,
/// widened by `π` at a time up to `8π`.
pub fn rbar(wing: Wing, params: &SteinSteinParams, t: f64) -> Result<f64> {
    check_time(t)?;
    let g = |r: f64| root_function(r, wing, params, t);
    for k in 1..=8 {
        if let Some((a, b)) = scan_sign_change(&g, 0.0, k as f64 * PI, k * RBAR_SCAN) {
            return Ok(if a == b {
                a
            } else {
                bisect(&g, a, b, RBAR_TOL)
            });
        }
    }
    Err(Error::RootBracketing {
        what: "r-bar",
        lo: 0.0,
        hi: 8.0 * PI,
    })
}

/// `q(±1)`. The radicand is reported in the error if it is not positive.
pub fn q_of(wing: Wing, params: &SteinSteinParams, t: f64) -> Result<f64> {
    let r = rbar(wing, params, t)?;
    q_at(r, wing, params, t)
}

fn q_at(r: f64, wing: Wing, params: &SteinSteinParams, t: f64) -> Result<f64> {
    let SteinSteinParams { b, c, rho, .. } = *params;
    let y = wing.sign();
    let p = p_of(r, wing, params, t);
    let bt = b + rho * c * p;
    let bracket = (c * c * (2.0 * p - 1.0) - 2.0 * rho * c * bt) * (2.0 * r - (2.0 * r).sin())
        + 2.0 * rho * c * r * (1.0 - (2.0 * r).cos()) / t;
    let radicand = 2.0 * r.powi(3) * y / (t.powi(3) * bracket);
    if !(radicand > 0.0 && radicand.is_finite()) {
        return Err(Error::FormulaDomain {
            what: "q",
            details: format!(
                "radicand {radicand:e} (r = {r}, p = {p}, b~ = {bt}, bracket = {bracket:e}, y = {y})"
            ),
        });
    }
    Ok(2.0 / c * radicand.sqrt())
}

/// The symmetric pair `z_t^±(y) = ± q(y) c² t sin(r̄)/r̄` with
/// `q(y) = q(sign y) sqrt(|y|)`.
pub fn minimizers_z(y: f64, params: &SteinSteinParams, t: f64) -> Result<(f64, f64)> {
    if y == 0.0 || !y.is_finite() {
        return Err(Error::InvalidInput(format!(
            "target must be finite and nonzero, got {y}"
        )));
    }
    let w = wing_slope(Wing::of(y), params, t)?;
    let z = w.z_t * y.abs().sqrt();
    Ok((z, -z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingAsymptotics {
    pub wing: Wing,
    pub t: f64,
    pub rbar: f64,
    pub p_val: f64,
    pub q_val: f64,
    /// `|z_t(±1)|`.
    pub z_t: f64,
    /// `lim σ²_loc(t, y) / |y|` as `y → ±∞`.
    pub slope: f64,
}

impl WingAsymptotics {
    pub fn sign(&self) -> f64 {
        self.wing.sign()
    }

    /// `(q c² t sin r̄ / r̄)²` from the stored fields.
    pub fn recomputed_slope(&self, c: f64) -> f64 {
        (self.q_val * c * c * self.t * self.rbar.sin() / self.rbar).powi(2)
    }
}

pub fn wing_slope(wing: Wing, params: &SteinSteinParams, t: f64) -> Result<WingAsymptotics> {
    let r = rbar(wing, params, t)?;
    let p_val = p_of(r, wing, params, t);
    let q_val = q_at(r, wing, params, t)?;
    let z_t = (q_val * params.c * params.c * t * r.sin() / r).abs();
    Ok(WingAsymptotics {
        wing,
        t,
        rbar: r,
        p_val,
        q_val,
        z_t,
        slope: z_t * z_t,
    })
}

/// Asymptotic regime of the limiting control system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `θ = 0`: drift `(-½ z², b z)`.
    SmallNoise,
    /// `θ = 2`: no drift.
    SmallTime,
}

impl Regime {
    pub fn from_theta(theta: u32) -> Result<Self> {
        match theta {
            0 => Ok(Regime::SmallNoise),
            2 => Ok(Regime::SmallTime),
            _ => Err(Error::InvalidInput(format!(
                "theta must be 0 or 2, got {theta}"
            ))),
        }
    }

    pub fn theta(self) -> u32 {
        match self {
            Regime::SmallNoise => 0,
            Regime::SmallTime => 2,
        }
    }
}

/// Limiting controlled system in `(y, z)` with diffusion columns built from
/// the lower Cholesky factor `[[ρ, sqrt(1-ρ²)], [1, 0]]`:
/// `σ₁ = (ρ z, c)`, `σ₂ = (sqrt(1-ρ²) z, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinSteinSystem {
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub regime: Regime,
}

pub fn make_control_system(params: &SteinSteinParams, theta: u32) -> Result<SteinSteinSystem> {
    Ok(params.control_system(Regime::from_theta(theta)?))
}

impl AffineControlSystem for SteinSteinSystem {
    fn state_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let z = x[1];
        match self.regime {
            Regime::SmallNoise => {
                out[0] = -0.5 * z * z;
                out[1] = self.b * z;
            }
            Regime::SmallTime => {
                out[0] = 0.0;
                out[1] = 0.0;
            }
        }
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        if self.regime == Regime::SmallNoise {
            out[1] = -x[1];
            out[3] = self.b;
        }
    }
    fn diffusion(&self, j: usize, x: &[f64], out: &mut [f64]) {
        let z = x[1];
        if j == 0 {
            out[0] = self.rho * z;
            out[1] = self.c;
        } else {
            out[0] = (1.0 - self.rho * self.rho).sqrt() * z;
            out[1] = 0.0;
        }
    }
    fn diffusion_jacobian(&self, j: usize, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[1] = if j == 0 {
            self.rho
        } else {
            (1.0 - self.rho * self.rho).sqrt()
        };
    }
}
