//! Convergence tables for the conditional-law limits of the Stein–Stein model.

use serde::{Deserialize, Serialize};

use super::{kernel_conditional, kernel_conditional_variance, reference_bandwidth, simulate};
use super::{SimConfig, SvDynamics};
use crate::control::{multi_start_shoot, ShootingProblem};
use crate::error::{Error, Result};
use crate::stein_stein::{minimizers_z, Regime, SteinSteinParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McStatus {
    Ok,
    NoSupport,
}

impl McStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            McStatus::Ok => "ok",
            McStatus::NoSupport => "no_support",
        }
    }
}

/// One row of a convergence table. Estimates are `NaN` when the row has no
/// kernel support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    /// `t` for small-time tables, `ε` for small-noise tables.
    pub eps_or_t: f64,
    /// Kernel estimate of `E[Z² | Y = y]`.
    pub estimate: f64,
    pub std_err: f64,
    pub prediction: f64,
    pub abs_error: f64,
    pub effective_n: f64,
    /// Kernel estimate of `Var[|Z| | Y = y]`.
    pub cond_var: f64,
    pub cond_var_std_err: f64,
    pub bandwidth: f64,
    pub status: McStatus,
}

impl McRow {
    fn no_support(eps_or_t: f64, prediction: f64, bandwidth: f64) -> Self {
        Self {
            eps_or_t,
            estimate: f64::NAN,
            std_err: f64::NAN,
            prediction,
            abs_error: f64::NAN,
            effective_n: 0.0,
            cond_var: f64::NAN,
            cond_var_std_err: f64::NAN,
            bandwidth,
            status: McStatus::NoSupport,
        }
    }
}

/// Discretization of the shooting problem that produces the small-time
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeShooting {
    pub steps: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SmallTimeShooting {
    fn default() -> Self {
        Self {
            steps: 1000,
            n_starts: 32,
            seed: 7,
        }
    }
}

fn check_decreasing(what: &str, list: &[f64]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidInput(format!("empty {what} list")));
    }
    if !list.iter().all(|v| *v > 0.0 && v.is_finite()) || list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(format!(
            "{what} list must be positive and strictly decreasing"
        )));
    }
    Ok(())
}

fn table_row(
    pop: &super::SamplePopulation,
    y: f64,
    eps_or_t: f64,
    prediction: f64,
    bandwidth: f64,
) -> Result<McRow> {
    let est = match kernel_conditional(pop, y, |z| z * z, bandwidth) {
        Ok(e) => e,
        Err(Error::NoSupport { .. }) => {
            return Ok(McRow::no_support(eps_or_t, prediction, bandwidth))
        }
        Err(e) => return Err(e),
    };
    let var = kernel_conditional_variance(pop, y, f64::abs, bandwidth)?;
    Ok(McRow {
        eps_or_t,
        estimate: est.value,
        std_err: est.std_err,
        prediction,
        abs_error: (est.value - prediction).abs(),
        effective_n: est.effective_n,
        cond_var: var.value,
        cond_var_std_err: var.std_err,
        bandwidth,
        status: McStatus::Ok,
    })
}

/// `z*(y)²` for the driftless limit started at `(0, z0)` with horizon 1:
/// `z0²` at `y = 0`, otherwise the terminal `z` of the least-action extremal.
pub fn small_time_prediction(
    params: &SteinSteinParams,
    y: f64,
    shooting: &SmallTimeShooting,
) -> Result<f64> {
    if y == 0.0 {
        return Ok(params.z0 * params.z0);
    }
    let system = params.control_system(Regime::SmallTime);
    let problem = ShootingProblem::new(vec![0.0, params.z0], vec![y], 1.0, shooting.steps)?;
    let sols = multi_start_shoot(&system, &problem, shooting.n_starts, shooting.seed)?;
    let best = sols.first().ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    Ok(best.terminal().x[1].powi(2))
}

/// Estimates `E[Z_t² | Y_t = y]` in the original model for each `t` in
/// `t_list`, sampled as the `θ = 2` system with `ε = sqrt(t)` at horizon 1,
/// against `z*(y)²`. The bandwidth is the reference rule of each population.
pub fn small_time_check(
    params: &SteinSteinParams,
    y: f64,
    t_list: &[f64],
    config: &SimConfig,
    shooting: &SmallTimeShooting,
) -> Result<Vec<McRow>> {
    if !(params.z0 > 0.0) {
        return Err(Error::Precondition(format!(
            "small-time check needs z0 > 0, got {}",
            params.z0
        )));
    }
    if !y.is_finite() {
        return Err(Error::InvalidInput("non-finite conditioning level".into()));
    }
    check_decreasing("maturity", t_list)?;
    config.validate()?;
    let prediction = small_time_prediction(params, y, shooting)?;
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let eps = t.sqrt();
        let cfg = SimConfig {
            eps,
            theta: 2,
            ..*config
        };
        let pop = simulate(&SvDynamics::small_time(params, eps), 1.0, &cfg)?;
        let h = reference_bandwidth(&pop)?;
        rows.push(table_row(&pop, y, t, prediction, h)?);
    }
    Ok(rows)
}

/// Estimates `E[(Z^ε_t)² | Y^ε_t = y]` for the rescaled model
/// `β(z) = aε + bz`, `z0 ↦ ε z0`, `θ = 0`, against the closed-form `z_t(y)²`.
///
/// The bandwidth is `bandwidth_scale · ε`; by default the scale is the
/// reference rule of the first population divided by the first `ε`.
pub fn small_noise_check(
    params: &SteinSteinParams,
    y: f64,
    t: f64,
    eps_list: &[f64],
    config: &SimConfig,
    bandwidth_scale: Option<f64>,
) -> Result<Vec<McRow>> {
    if !(y != 0.0 && y.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "conditioning level must be nonzero, got {y}"
        )));
    }
    check_decreasing("eps", eps_list)?;
    config.validate()?;
    if let Some(s) = bandwidth_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bandwidth scale must be positive, got {s}"
            )));
        }
    }
    let (z_star, _) = minimizers_z(y, params, t)?;
    let prediction = z_star * z_star;
    let mut scale = bandwidth_scale;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = SimConfig {
            eps,
            theta: 0,
            ..*config
        };
        let pop = simulate(&SvDynamics::small_noise(params, eps), t, &cfg)?;
        let s = match scale {
            Some(s) => s,
            None => {
                let s = reference_bandwidth(&pop)? / eps;
                scale = Some(s);
                s
            }
        };
        rows.push(table_row(&pop, y, eps, prediction, s * eps)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_level_prediction_is_start() {
        let p = SteinSteinParams::figure();
        let z = small_time_prediction(&p, 0.0, &SmallTimeShooting::default()).unwrap();
        assert_eq!(z, p.z0 * p.z0);
    }

    #[test]
    fn lists_must_decrease() {
        assert!(check_decreasing("eps", &[0.5, 0.5]).is_err());
        assert!(check_decreasing("eps", &[]).is_err());
        assert!(check_decreasing("eps", &[0.5, -0.1]).is_err());
        assert!(check_decreasing("eps", &[0.5, 0.25]).is_ok());
    }
}
