//! Heston moment explosion, critical exponents and the asymptotic slope of
//! the local variance, together with the cross-check against the Stein–Stein
//! closed forms.
//!
//! Model: `dY = -½ V dt + sqrt(V) dB¹`, `dV = (q + κV) dt + ξ sqrt(V) dB²`,
//! `d<B¹, B²> = ρ dt`, with `κ < 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, scan_sign_change};
use crate::stein_stein::{p_of, wing_slope, SteinSteinParams, Wing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub q_lvl: f64,
    pub kappa: f64,
    pub xi: f64,
    pub v0: f64,
    pub rho: f64,
}

impl HestonParams {
    pub fn new(q_lvl: f64, kappa: f64, xi: f64, v0: f64, rho: f64) -> Result<Self> {
        if ![q_lvl, kappa, xi, v0, rho].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Heston parameter".into()));
        }
        if kappa >= 0.0 {
            return Err(Error::Regime(format!("kappa = {kappa} must be negative")));
        }
        if xi <= 0.0 || v0 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "xi and v0 must be positive, got xi = {xi}, v0 = {v0}"
            )));
        }
        if q_lvl < 0.0 {
            return Err(Error::InvalidInput(format!(
                "q must be nonnegative, got {q_lvl}"
            )));
        }
        if rho <= -1.0 || rho > 0.0 {
            return Err(Error::Regime(format!("rho = {rho} must lie in (-1, 0]")));
        }
        Ok(Self {
            q_lvl,
            kappa,
            xi,
            v0,
            rho,
        })
    }

    /// `q = c²`, `κ = 2b`, `ξ = 2c`, `v0 = z0²`; only meaningful when `a = 0`.
    pub fn from_stein_stein(p: &SteinSteinParams) -> Result<Self> {
        if p.a != 0.0 {
            return Err(Error::Precondition(format!(
                "Stein-Stein model is a Heston model only for a = 0, got a = {}",
                p.a
            )));
        }
        Self::new(p.c * p.c, 2.0 * p.b, 2.0 * p.c, p.z0 * p.z0, p.rho)
    }
}

/// `-Δ(s) = ξ² s(s-1) - (κ + ρξs)²`.
pub fn delta_neg(s: f64, params: &HestonParams) -> f64 {
    let HestonParams { kappa, xi, rho, .. } = *params;
    xi * xi * s * (s - 1.0) - (kappa + rho * xi * s).powi(2)
}

/// Roots `s1 < 0 < s2` of `-Δ`.
pub fn critical_roots(params: &HestonParams) -> Result<(f64, f64)> {
    let HestonParams { kappa, xi, rho, .. } = *params;
    let a = xi * xi * (1.0 - rho * rho);
    let b = -xi * xi - 2.0 * kappa * rho * xi;
    let c = -kappa * kappa;
    let disc = b * b - 4.0 * a * c;
    if !(a > 0.0) || disc < 0.0 {
        return Err(Error::Regime(format!(
            "-Delta has no real roots (disc = {disc:e})"
        )));
    }
    // cancellation-free pair
    let qv = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = (qv / a, c / qv);
    let (s1, s2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    if !(s1 < 0.0 && s2 > 0.0) {
        return Err(Error::Regime(format!(
            "expected s1 < 0 < s2, got {s1}, {s2}"
        )));
    }
    Ok((s1, s2))
}

/// Explosion time `T*(s)` of `E[e^{sY_T}]`, for `-Δ(s) > 0`:
/// `2/sqrt(-Δ) (arctan(sqrt(-Δ)/χ) + π)` if `χ = κ + ρξs < 0`, and
/// `2/sqrt(-Δ) arctan(sqrt(-Δ)/χ)` if `χ > 0`; continuous through `χ = 0`.
pub fn explosion_time(s: f64, params: &HestonParams) -> Result<f64> {
    let dn = delta_neg(s, params);
    if !(dn > 0.0) {
        return Err(Error::Domain {
            what: "explosion time",
            details: format!("-Delta({s}) = {dn:e} must be positive"),
        });
    }
    let d = dn.sqrt();
    let chi = params.kappa + params.rho * params.xi * s;
    // atan2 selects the branch in (0, π): π + arctan(d/χ) for χ < 0, π/2 at χ = 0
    Ok(2.0 / d * d.atan2(chi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponent {
    pub s: f64,
    pub wing: Wing,
    pub t: f64,
}

fn critical_exponent(wing: Wing, t: f64, params: &HestonParams) -> Result<CriticalExponent> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "maturity must be positive, got {t}"
        )));
    }
    let (s1, s2) = critical_roots(params)?;
    let (edge, dir) = match wing {
        Wing::Plus => (s2, 1.0),
        Wing::Minus => (s1, -1.0),
    };
    // T* decreases from +∞ at the edge to 0 at infinity along `dir`
    let f = |s: f64| match explosion_time(s, params) {
        Ok(ts) => ts - t,
        Err(_) => f64::INFINITY,
    };
    let mut width = 1.0 + edge.abs();
    let mut far = edge + dir * width;
    let mut iter = 0;
    while f(far) > 0.0 {
        width *= 2.0;
        far = edge + dir * width;
        iter += 1;
        if iter > 200 {
            return Err(Error::RootBracketing {
                what: "critical exponent",
                lo: edge,
                hi: far,
            });
        }
    }
    let s = bisect(&f, edge, far, 0.0);
    Ok(CriticalExponent { s, wing, t })
}

/// `s_+(t)`: the solution of `T*(s) = t` on `(s2, ∞)`.
pub fn critical_exponent_plus(t: f64, params: &HestonParams) -> Result<CriticalExponent> {
    critical_exponent(Wing::Plus, t, params)
}

/// `s_-(t)`: the solution of `T*(s) = t` on `(-∞, s1)`.
pub fn critical_exponent_minus(t: f64, params: &HestonParams) -> Result<CriticalExponent> {
    critical_exponent(Wing::Minus, t, params)
}

pub fn critical_exponent_for(
    wing: Wing,
    t: f64,
    params: &HestonParams,
) -> Result<CriticalExponent> {
    critical_exponent(wing, t, params)
}

/// Inverse of `s ↦ R(s) = (t/2) sqrt(-Δ(s))` on `(s2, ∞)`.
pub fn s_of_r(r: f64, params: &HestonParams, t: f64) -> f64 {
    let HestonParams { kappa, xi, rho, .. } = *params;
    let one_m = 1.0 - rho * rho;
    let base = 1.0 + 2.0 * rho * kappa / xi;
    let disc =
        base * base + 4.0 * one_m * (kappa * kappa / (xi * xi) + 4.0 * r * r / (xi * xi * t * t));
    (base + disc.sqrt()) / (2.0 * one_m)
}

/// `R(s) = (t/2) sqrt(-Δ(s))`.
pub fn r_of_s(s: f64, params: &HestonParams, t: f64) -> f64 {
    0.5 * t * delta_neg(s, params).max(0.0).sqrt()
}

/// Smallest positive root of `R cos R - (t/2)(κ + ρξ s(R)) sin R`.
pub fn root_r(t: f64, params: &HestonParams) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "maturity must be positive, got {t}"
        )));
    }
    let HestonParams { kappa, xi, rho, .. } = *params;
    let g = |r: f64| r * r.cos() - 0.5 * t * (kappa + rho * xi * s_of_r(r, params, t)) * r.sin();
    // in the supported regime the root lies in (π/2, π), inside the first window
    for k in 1..=8 {
        if let Some((a, b)) = scan_sign_change(&g, 0.0, k as f64 * PI, k * 10_000) {
            return Ok(if a == b { a } else { bisect(&g, a, b, 1e-14) });
        }
    }
    Err(Error::RootBracketing {
        what: "R root",
        lo: 0.0,
        hi: 8.0 * PI,
    })
}

fn shifted_b(s: f64, b: f64, c: f64, rho: f64) -> f64 {
    s * rho * c + b
}

/// First polynomial of the slope formula exactly as printed:
/// `T c² s(s-1)K - 2 b̄ K + 4ρc [c² s(s-1) - b̄²]` with
/// `b̄ = sρc + b`, `K = c²(2s-1) - 2ρc b̄`.
pub fn r1_poly(s: f64, b: f64, c: f64, rho: f64, t: f64) -> f64 {
    let bb = shifted_b(s, b, c, rho);
    let k = c * c * (2.0 * s - 1.0) - 2.0 * rho * c * bb;
    t * c * c * s * (s - 1.0) * k - 2.0 * bb * k + 4.0 * rho * c * (c * c * s * (s - 1.0) - bb * bb)
}

/// The first polynomial with the two trailing terms halved:
/// `c² [T s(s-1)K - (2s-1) b̄ + 2ρc s(s-1)]`. This is the form under which the
/// Heston and Stein–Stein slopes coincide.
pub fn r1_poly_reduced(s: f64, b: f64, c: f64, rho: f64, t: f64) -> f64 {
    let bb = shifted_b(s, b, c, rho);
    let k = c * c * (2.0 * s - 1.0) - 2.0 * rho * c * bb;
    c * c * (t * s * (s - 1.0) * k - (2.0 * s - 1.0) * bb + 2.0 * rho * c * s * (s - 1.0))
}

/// `R₂(s) = 2c² s(s-1) [c² s(s-1) - b̄²]`.
pub fn r2_poly(s: f64, b: f64, c: f64, rho: f64) -> f64 {
    let bb = shifted_b(s, b, c, rho);
    2.0 * c * c * s * (s - 1.0) * (c * c * s * (s - 1.0) - bb * bb)
}

fn slope_from(num: f64, s: f64, r1: f64) -> Result<f64> {
    let den = s * (s - 1.0) * r1;
    if den.abs() < 1e-14 {
        return Err(Error::FormulaDomain {
            what: "Heston slope",
            details: format!("degenerate denominator s(s-1)R1 = {den:e} at s = {s}"),
        });
    }
    Ok(2.0 * num / den)
}

/// Heston asymptotic local-variance slope `|2R₂(s_±)/(s_±(s_±-1)R₁(s_±))|`
/// at the Stein–Stein-mapped parameters, using [`r1_poly_reduced`].
///
/// The ratio carries the sign of `y`, so it is multiplied by the wing sign.
pub fn hest_slope(wing: Wing, t: f64, ss: &SteinSteinParams) -> Result<f64> {
    let hp = HestonParams::from_stein_stein(ss)?;
    let s = critical_exponent_for(wing, t, &hp)?.s;
    let v = slope_from(
        r2_poly(s, ss.b, ss.c, ss.rho),
        s,
        r1_poly_reduced(s, ss.b, ss.c, ss.rho, t),
    )?;
    Ok(wing.sign() * v)
}

/// Same as [`hest_slope`] but with the printed [`r1_poly`].
pub fn hest_slope_printed(wing: Wing, t: f64, ss: &SteinSteinParams) -> Result<f64> {
    let hp = HestonParams::from_stein_stein(ss)?;
    let s = critical_exponent_for(wing, t, &hp)?.s;
    let v = slope_from(
        r2_poly(s, ss.b, ss.c, ss.rho),
        s,
        r1_poly(s, ss.b, ss.c, ss.rho, t),
    )?;
    Ok(wing.sign() * v)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WingConsistency {
    pub wing: Wing,
    /// `s_±(t)` from the explosion time.
    pub s_crit: f64,
    /// `r̄(±1)` from the Stein–Stein root equation.
    pub rbar: f64,
    /// `p(r̄, ±1)`, which should equal `s_crit`.
    pub p_at_rbar: f64,
    /// `R(s_±) = (t/2) sqrt(-Δ(s_±))`, which should equal `rbar`.
    pub r_of_s_crit: f64,
    pub slope_stein_stein: f64,
    pub slope_heston: f64,
    /// Slope from the printed first polynomial, for reference.
    pub slope_heston_printed: f64,
    pub rel_slope: f64,
    pub rel_exponent: f64,
    pub rel_root: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub t: f64,
    pub tol: f64,
    pub heston: HestonParams,
    /// Smallest positive root of the Heston root equation.
    pub root_r: f64,
    /// `|root_r - r̄(1)|` relative.
    pub rel_root_r: f64,
    /// `|2 root_r - r̄(1)|`. Since `root_r = r̄(1)` this is `r̄(1)` up to
    /// rounding; reported for reference, not part of `pass`.
    pub doubled_root_gap: f64,
    /// `(r̄² - r̄ sin r̄ cos r̄)/sin² r̄`.
    pub trig_lhs: f64,
    /// `t² c² s_+(s_+-1) - t b̄`, `b̄ = b + ρ c s_+`.
    pub trig_rhs: f64,
    pub rel_trig: f64,
    pub wings: Vec<WingConsistency>,
    pub pass: bool,
}

/// Compares the Stein–Stein wing slopes with the Heston ones at the mapped
/// parameters, along with the root and exponent identities linking them.
pub fn consistency_check(ss: &SteinSteinParams, t: f64, tol: f64) -> Result<ConsistencyReport> {
    let hp = HestonParams::from_stein_stein(ss)?;
    let mut wings = Vec::with_capacity(2);
    for wing in Wing::both() {
        let w = wing_slope(wing, ss, t)?;
        let s_crit = critical_exponent_for(wing, t, &hp)?.s;
        let p_at_rbar = p_of(w.rbar, wing, ss, t);
        let r_of_s_crit = r_of_s(s_crit, &hp, t);
        let slope_heston = hest_slope(wing, t, ss)?;
        let slope_heston_printed = hest_slope_printed(wing, t, ss)?;
        let rel_slope = rel_diff(w.slope, slope_heston);
        let rel_exponent = rel_diff(s_crit, p_at_rbar);
        let rel_root = rel_diff(r_of_s_crit, w.rbar);
        let pass = rel_slope <= tol && rel_exponent <= tol && rel_root <= tol;
        wings.push(WingConsistency {
            wing,
            s_crit,
            rbar: w.rbar,
            p_at_rbar,
            r_of_s_crit,
            slope_stein_stein: w.slope,
            slope_heston,
            slope_heston_printed,
            rel_slope,
            rel_exponent,
            rel_root,
            pass,
        });
    }
    let plus = &wings[0];
    let rr = root_r(t, &hp)?;
    let rel_root_r = rel_diff(rr, plus.rbar);
    let doubled_root_gap = (2.0 * rr - plus.rbar).abs();
    let r = plus.rbar;
    let trig_lhs = (r * r - r * r.sin() * r.cos()) / r.sin().powi(2);
    let s = plus.s_crit;
    let bbar = ss.b + ss.rho * ss.c * s;
    let trig_rhs = t * t * ss.c * ss.c * s * (s - 1.0) - t * bbar;
    let rel_trig = rel_diff(trig_lhs, trig_rhs);
    let pass = wings.iter().all(|w| w.pass) && rel_root_r <= tol && rel_trig <= tol;
    Ok(ConsistencyReport {
        t,
        tol,
        heston: hp,
        root_r: rr,
        rel_root_r,
        doubled_root_gap,
        trig_lhs,
        trig_rhs,
        rel_trig,
        wings,
        pass,
    })
}
