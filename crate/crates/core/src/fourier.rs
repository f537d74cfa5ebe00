//! Heston characteristic function, damped Fourier pricing of out-of-the-money
//! options and the Dupire local variance by finite differences of prices.
//!
//! Spot is normalized to `S_0 = 1`, rates are zero and `k` is log-strike.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heston::{critical_exponent_minus, critical_exponent_plus, HestonParams};
use crate::quadrature::GaussLegendre;
use crate::roots::golden_section_min;
use crate::stein_stein::{wing_slope, SteinSteinParams, Wing};

/// Characteristic function `u ↦ E[exp(i u Y_t)]` of the Heston log-price at a
/// fixed maturity, in the formulation where the complex logarithm stays on
/// its principal branch for all `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonCf {
    pub params: HestonParams,
    pub t: f64,
    /// `s_+(t)`: `E[e^{sY_t}]` is finite exactly for `s ∈ (s_minus, s_plus)`.
    pub s_plus: f64,
    pub s_minus: f64,
}

impl HestonCf {
    pub fn new(params: HestonParams, t: f64) -> Result<Self> {
        let s_plus = critical_exponent_plus(t, &params)?.s;
        let s_minus = critical_exponent_minus(t, &params)?.s;
        Ok(Self {
            params,
            t,
            s_plus,
            s_minus,
        })
    }

    /// `ln E[exp(i u Y_t)]`. Requires `-Im(u) ∈ (s_minus, s_plus)`.
    pub fn log_cf(&self, u: Complex64) -> Result<Complex64> {
        let moment = -u.im;
        if !(moment > self.s_minus && moment < self.s_plus) {
            return Err(Error::StripViolation {
                im: u.im,
                lo: -self.s_plus,
                hi: -self.s_minus,
            });
        }
        Ok(self.log_cf_unchecked(u))
    }

    fn log_cf_unchecked(&self, u: Complex64) -> Complex64 {
        let HestonParams {
            q_lvl,
            kappa,
            xi,
            v0,
            rho,
        } = self.params;
        let t = self.t;
        let iu = Complex64::i() * u;
        // mean-reversion speed in the usual positive convention
        let k = -kappa;
        let beta = k - rho * xi * iu;
        let d = (beta * beta + xi * xi * (iu + u * u)).sqrt();
        let g = (beta - d) / (beta + d);
        let e = (-d * t).exp();
        let big_d = (beta - d) / (xi * xi) * (1.0 - e) / (1.0 - g * e);
        let big_c = q_lvl / (xi * xi) * ((beta - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        big_c + big_d * v0
    }

    pub fn cf(&self, u: Complex64) -> Result<Complex64> {
        Ok(self.log_cf(u)?.exp())
    }

    /// `ln E[e^{sY_t}]` for real `s` inside the strip.
    pub fn log_mgf(&self, s: f64) -> Result<f64> {
        Ok(self.log_cf(Complex64::new(0.0, -s))?.re)
    }
}

/// Numerical settings for pricing and the Dupire stencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierSettings {
    /// Maturity bump relative to `t`.
    pub dt_rel: f64,
    /// Log-strike bump.
    pub dk: f64,
    /// Total Gauss–Legendre nodes on the truncated frequency interval.
    pub quad_nodes: usize,
    /// Largest admissible truncation frequency.
    pub quad_cutoff: f64,
}

impl Default for FourierSettings {
    fn default() -> Self {
        Self {
            dt_rel: 1e-3,
            dk: 5e-3,
            quad_nodes: 4096,
            quad_cutoff: 1e5,
        }
    }
}

impl FourierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_rel > 0.0 && self.dt_rel < 1.0) {
            return Err(Error::InvalidInput(format!(
                "relative maturity bump must lie in (0, 1), got {}",
                self.dt_rel
            )));
        }
        if !(self.dk > 0.0 && self.dk.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dk must be positive, got {}",
                self.dk
            )));
        }
        if self.quad_nodes < 256 {
            return Err(Error::InvalidInput(format!(
                "need at least 256 quadrature nodes, got {}",
                self.quad_nodes
            )));
        }
        if !(self.quad_cutoff > 0.0 && self.quad_cutoff.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "quadrature cutoff must be positive, got {}",
                self.quad_cutoff
            )));
        }
        Ok(())
    }
}

/// Maturities and log-moneyness nodes for a local-variance surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingGrid {
    pub t_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    pub settings: FourierSettings,
}

impl PricingGrid {
    pub fn new(t_nodes: Vec<f64>, y_nodes: Vec<f64>, settings: FourierSettings) -> Result<Self> {
        settings.validate()?;
        if t_nodes.is_empty() || y_nodes.is_empty() {
            return Err(Error::InvalidInput("empty pricing grid".into()));
        }
        if !t_nodes.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput("maturities must be positive".into()));
        }
        if !y_nodes.iter().all(|y| y.is_finite()) || y_nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "log-moneyness nodes must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self {
            t_nodes,
            y_nodes,
            settings,
        })
    }
}

/// Which out-of-the-money option is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    /// Call for `k ≥ 0`, put for `k < 0`.
    pub fn out_of_the_money(k: f64) -> Self {
        if k < 0.0 {
            OptionKind::Put
        } else {
            OptionKind::Call
        }
    }
}

/// Admissible damping interval: `(0, s_+ - 1)` for calls, `(s_- - 1, -1)` for puts.
fn damping_interval(cf: &HestonCf, kind: OptionKind) -> Result<(f64, f64)> {
    let (lo, hi) = match kind {
        OptionKind::Call => (0.0, cf.s_plus - 1.0),
        OptionKind::Put => (cf.s_minus - 1.0, -1.0),
    };
    if !(hi > lo) {
        return Err(Error::Regime(format!(
            "empty damping interval ({lo}, {hi}) at t = {}",
            cf.t
        )));
    }
    Ok((lo, hi))
}

/// `-αk + ln M(α+1) - ln(α(α+1))`: the log of the damped integrand at zero
/// frequency, whose minimizer is the real saddle point.
fn saddle_objective(cf: &HestonCf, k: f64, alpha: f64) -> f64 {
    match cf.log_mgf(alpha + 1.0) {
        Ok(lm) => -alpha * k + lm - (alpha * (alpha + 1.0)).ln(),
        Err(_) => f64::INFINITY,
    }
}

fn saddle_for(cf: &HestonCf, k: f64, kind: OptionKind) -> Result<f64> {
    let (lo, hi) = damping_interval(cf, kind)?;
    let margin = 1e-6 * (hi - lo);
    let a = golden_section_min(
        &|x| saddle_objective(cf, k, x),
        lo + margin,
        hi - margin,
        1e-8,
    );
    if !(a > lo + 1e-6 * (hi - lo).min(1.0) && a < hi - 1e-6 * (hi - lo).min(1.0)) {
        return Err(Error::Quadrature(format!(
            "saddle damping {a} at the edge of ({lo}, {hi})"
        )));
    }
    Ok(a)
}

/// Damping `α*` for the out-of-the-money option at log-strike `k`. At `k = 0`
/// the fixed value `min(0.75, (s_+ - 1)/2)` is used.
pub fn saddle_damping(t: f64, k: f64, params: &HestonParams) -> Result<f64> {
    let cf = HestonCf::new(*params, t)?;
    if k == 0.0 {
        let (_, hi) = damping_interval(&cf, OptionKind::Call)?;
        return Ok(0.75f64.min(0.5 * hi));
    }
    saddle_for(&cf, k, OptionKind::out_of_the_money(k))
}

/// Log-price of an out-of-the-money option with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtmPrice {
    pub kind: OptionKind,
    pub log_price: f64,
    pub alpha: f64,
    pub cutoff: f64,
}

/// Prices `kind` at log-strike `k` as
/// `e^{-αk} M(α+1)/(α(α+1)) · (1/π) ∫_0^W Re[e^{-iωk} φ(ω - i(α+1)) α(α+1)
/// / (M(α+1)(α+iω)(α+1+iω))] dω` and returns the logarithm.
///
/// The truncation `W` grows geometrically until the normalized integrand
/// envelope falls below `1e-13`.
pub fn log_otm_price_with(
    cf: &HestonCf,
    k: f64,
    kind: OptionKind,
    settings: &FourierSettings,
) -> Result<OtmPrice> {
    let alpha = saddle_for(cf, k, kind)?;
    let beta = alpha + 1.0;
    let log_m = cf.log_mgf(beta)?;
    let a1 = alpha * beta;
    let integrand = |w: f64| -> Result<f64> {
        let u = Complex64::new(w, -beta);
        let lc = cf.log_cf(u)? - log_m + Complex64::new(0.0, -w * k);
        let den = Complex64::new(alpha, w) * Complex64::new(beta, w);
        Ok((lc.exp() * a1 / den).re)
    };
    let envelope = |w: f64| -> Result<f64> {
        let u = Complex64::new(w, -beta);
        let lc = cf.log_cf(u)? - log_m;
        let den = Complex64::new(alpha, w) * Complex64::new(beta, w);
        Ok(lc.re.exp() * a1.abs() / den.norm())
    };
    let mut cutoff = 1.0;
    while envelope(cutoff)? > 1e-13 {
        cutoff *= 1.5;
        if cutoff > settings.quad_cutoff {
            return Err(Error::Quadrature(format!(
                "integrand tail {:e} above threshold at cutoff {}",
                envelope(settings.quad_cutoff)?,
                settings.quad_cutoff
            )));
        }
    }
    let rule = GaussLegendre::new(32);
    let panels = settings.quad_nodes.div_ceil(32);
    let width = cutoff / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let (a, b) = (i as f64 * width, (i + 1) as f64 * width);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            total += w * half * integrand(mid + half * x)?;
        }
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Quadrature(format!(
            "non-positive normalized integral {total:e} at k = {k}"
        )));
    }
    let log_price = -alpha * k + log_m - a1.ln() + (total / std::f64::consts::PI).ln();
    Ok(OtmPrice {
        kind,
        log_price,
        alpha,
        cutoff,
    })
}

/// Log of the out-of-the-money price at `(t, k)` with default settings.
pub fn log_otm_price(t: f64, k: f64, params: &HestonParams) -> Result<f64> {
    let cf = HestonCf::new(*params, t)?;
    Ok(log_otm_price_with(
        &cf,
        k,
        OptionKind::out_of_the_money(k),
        &FourierSettings::default(),
    )?
    .log_price)
}

/// Normalized call price `C(t, K)/S_0`, `K = e^k`.
pub fn call_price_with(
    t: f64,
    k: f64,
    params: &HestonParams,
    settings: &FourierSettings,
) -> Result<f64> {
    settings.validate()?;
    let cf = HestonCf::new(*params, t)?;
    let kind = OptionKind::out_of_the_money(k);
    let p = log_otm_price_with(&cf, k, kind, settings)?.log_price.exp();
    Ok(match kind {
        OptionKind::Call => p,
        OptionKind::Put => p + 1.0 - k.exp(),
    })
}

pub fn call_price(t: f64, k: f64, params: &HestonParams) -> Result<f64> {
    call_price_with(t, k, params, &FourierSettings::default())
}

/// Dupire local variance at `(t, y)`, `σ² = ∂_t C / (½ (∂_kk C - ∂_k C))`.
///
/// The derivatives are central differences of `L = ln P` for the
/// out-of-the-money price `P` chosen by the sign of `y` (the put-call parity
/// term drops out of both numerator and denominator):
/// `σ² = 2 L_t / (L_kk + L_k² - L_k)`. Differencing the logarithm keeps the
/// stencil accurate where `P` varies over many orders of magnitude.
pub fn dupire_localvar_with(
    t: f64,
    y: f64,
    params: &HestonParams,
    settings: &FourierSettings,
) -> Result<f64> {
    settings.validate()?;
    let dt = settings.dt_rel * t;
    let dk = settings.dk;
    let kind = OptionKind::out_of_the_money(y);
    let cf_mid = HestonCf::new(*params, t)?;
    let cf_up = HestonCf::new(*params, t + dt)?;
    let cf_dn = HestonCf::new(*params, t - dt)?;
    let lp = |cf: &HestonCf, k: f64| -> Result<f64> {
        Ok(log_otm_price_with(cf, k, kind, settings)?.log_price)
    };
    let l0 = lp(&cf_mid, y)?;
    let l_t = (lp(&cf_up, y)? - lp(&cf_dn, y)?) / (2.0 * dt);
    let (k_up, k_dn) = (lp(&cf_mid, y + dk)?, lp(&cf_mid, y - dk)?);
    let l_k = (k_up - k_dn) / (2.0 * dk);
    let l_kk = (k_up - 2.0 * l0 + k_dn) / (dk * dk);
    // both sides divided by P
    let numerator = l_t;
    let denominator = 0.5 * (l_kk + l_k * l_k - l_k);
    if !(denominator > 1e-14) {
        return Err(Error::VanishingDensity {
            numerator,
            denominator,
        });
    }
    Ok(numerator / denominator)
}

pub fn dupire_localvar(t: f64, y: f64, params: &HestonParams) -> Result<f64> {
    dupire_localvar_with(t, y, params, &FourierSettings::default())
}

/// One point of a ratio curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalVolPoint {
    pub t: f64,
    pub y: f64,
    pub local_var: f64,
    /// Asymptotic slope of the wing containing `y`.
    pub slope: f64,
    /// `local_var / (|y| slope)`.
    pub ratio: f64,
}

impl LocalVolPoint {
    pub fn recomputed_ratio(&self) -> f64 {
        self.local_var / (self.y.abs() * self.slope)
    }
}

/// Local variance of the Stein–Stein model (through its Heston representation)
/// at `(t, y)`, normalized by the wing asymptote `|y| · slope(sign y)`.
pub fn ratio_point(
    t: f64,
    y: f64,
    ss: &SteinSteinParams,
    settings: &FourierSettings,
) -> Result<LocalVolPoint> {
    if y == 0.0 {
        return Err(Error::InvalidInput("ratio undefined at y = 0".into()));
    }
    let hp = HestonParams::from_stein_stein(ss)?;
    let slope = wing_slope(Wing::of(y), ss, t)?.slope;
    let local_var = dupire_localvar_with(t, y, &hp, settings)?;
    Ok(LocalVolPoint {
        t,
        y,
        local_var,
        slope,
        ratio: local_var / (y.abs() * slope),
    })
}

/// [`ratio_point`] over `y_grid`, in grid order; each point carries its own
/// result so a failure does not discard the rest of the curve.
pub fn ratio_curve(
    t: f64,
    y_grid: &[f64],
    ss: &SteinSteinParams,
    settings: &FourierSettings,
) -> Result<Vec<Result<LocalVolPoint>>> {
    HestonParams::from_stein_stein(ss)?;
    settings.validate()?;
    Ok(y_grid
        .par_iter()
        .map(|&y| ratio_point(t, y, ss, settings))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_cf(t: f64) -> HestonCf {
        HestonCf::new(
            HestonParams::from_stein_stein(&SteinSteinParams::figure()).unwrap(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn normalization_and_martingale() {
        for t in [0.25, 1.0, 10.0] {
            let cf = figure_cf(t);
            let one = cf.cf(Complex64::new(0.0, 0.0)).unwrap();
            assert!((one - 1.0).norm() < 1e-14);
            let m = cf.cf(Complex64::new(0.0, -1.0)).unwrap();
            assert!((m - 1.0).norm() < 1e-10, "t = {t}: {m}");
        }
    }

    #[test]
    fn strip_is_enforced() {
        let cf = figure_cf(1.0);
        let err = cf.cf(Complex64::new(0.3, -cf.s_plus - 0.1)).unwrap_err();
        assert!(matches!(err, Error::StripViolation { .. }));
        assert!(cf.cf(Complex64::new(0.3, -cf.s_minus + 0.1)).is_err());
    }

    #[test]
    fn conjugate_symmetry() {
        let cf = figure_cf(1.0);
        let u = Complex64::new(1.7, -2.0);
        let a = cf.cf(u).unwrap();
        let b = cf.cf(Complex64::new(-u.re, u.im)).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn zero_strike_default_damping() {
        let hp = HestonParams::from_stein_stein(&SteinSteinParams::figure()).unwrap();
        assert_eq!(saddle_damping(1.0, 0.0, &hp).unwrap(), 0.75);
    }

    #[test]
    fn settings_validation() {
        let s = FourierSettings {
            quad_nodes: 100,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert!(PricingGrid::new(vec![1.0], vec![1.0, 0.5], FourierSettings::default()).is_err());
        assert!(PricingGrid::new(vec![], vec![1.0], FourierSettings::default()).is_err());
    }
}
