//! JSON run configuration and its validation into typed plans.

use serde::Deserialize;
use volwings::control::{LinearSystem, ShootingProblem};
use volwings::fourier::FourierSettings;
use volwings::heston::HestonParams;
use volwings::mc::SimConfig;
use volwings::stein_stein::{Regime, SteinSteinParams};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stein_stein: Option<SteinSteinBlock>,
    pub heston: Option<HestonBlock>,
    pub grid: Option<GridBlock>,
    pub fourier: Option<FourierBlock>,
    pub sim: Option<SimBlock>,
    pub shoot: Option<ShootBlock>,
    pub tolerances: Option<ToleranceBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinSteinBlock {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub z0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonBlock {
    pub q: f64,
    pub kappa: f64,
    pub xi: f64,
    pub v0: f64,
    pub rho: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub t: Vec<f64>,
    #[serde(default)]
    pub y: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierBlock {
    pub dt_rel: Option<f64>,
    pub dk: Option<f64>,
    pub quad_nodes: Option<usize>,
    pub quad_cutoff: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub mode: String,
    pub y: Option<f64>,
    pub t: Option<f64>,
    pub t_list: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    pub bandwidth_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    pub n: usize,
    pub l: usize,
    pub drift_matrix: Vec<f64>,
    pub drift_offset: Vec<f64>,
    pub diffusion_matrices: Vec<Vec<f64>>,
    pub diffusion_offsets: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootBlock {
    /// `small_noise`, `small_time` or `linear`.
    pub system: String,
    pub linear: Option<LinearBlock>,
    pub x0: Option<Vec<f64>>,
    pub target: Vec<f64>,
    pub t: Option<f64>,
    pub steps: Option<usize>,
    pub n_starts: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    pub consistency: Option<f64>,
}

/// Flags that override file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

pub enum ShootSystem {
    SteinStein(volwings::stein_stein::SteinSteinSystem),
    Linear(LinearSystem),
}

pub enum FigureModel {
    SteinStein(SteinSteinParams),
    Heston(HestonParams),
}

pub enum McPlan {
    SmallTime {
        params: SteinSteinParams,
        y: f64,
        t_list: Vec<f64>,
        config: SimConfig,
    },
    SmallNoise {
        params: SteinSteinParams,
        y: f64,
        t: f64,
        eps_list: Vec<f64>,
        config: SimConfig,
        bandwidth_scale: Option<f64>,
    },
}

pub enum Plan {
    Wings {
        params: SteinSteinParams,
        t: Vec<f64>,
    },
    Consistency {
        params: SteinSteinParams,
        t: Vec<f64>,
        tol: f64,
    },
    Shoot {
        system: ShootSystem,
        problem: ShootingProblem,
        n_starts: usize,
        seed: u64,
    },
    Figure {
        model: FigureModel,
        t: Vec<f64>,
        y: Vec<f64>,
        settings: FourierSettings,
    },
    Mc(McPlan),
}

type Invalid = String;

fn stein_stein(cfg: &RunConfig) -> Result<SteinSteinParams, Invalid> {
    if cfg.heston.is_some() {
        return Err("this command takes a stein_stein block, not a heston block".into());
    }
    let b = cfg
        .stein_stein
        .as_ref()
        .ok_or("missing stein_stein block")?;
    SteinSteinParams::new(b.a, b.b, b.c, b.rho, b.z0).map_err(|e| e.to_string())
}

fn maturities(cfg: &RunConfig) -> Result<Vec<f64>, Invalid> {
    let g = cfg.grid.as_ref().ok_or("missing grid block")?;
    if g.t.is_empty() {
        return Err("grid.t is empty".into());
    }
    if let Some(t) = g.t.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(format!("grid.t must be positive, got {t}"));
    }
    Ok(g.t.clone())
}

fn fourier_settings(cfg: &RunConfig) -> Result<FourierSettings, Invalid> {
    let mut s = FourierSettings::default();
    if let Some(f) = &cfg.fourier {
        s.dt_rel = f.dt_rel.unwrap_or(s.dt_rel);
        s.dk = f.dk.unwrap_or(s.dk);
        s.quad_nodes = f.quad_nodes.unwrap_or(s.quad_nodes);
        s.quad_cutoff = f.quad_cutoff.unwrap_or(s.quad_cutoff);
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn wings(cfg: &RunConfig) -> Result<Plan, Invalid> {
    Ok(Plan::Wings {
        params: stein_stein(cfg)?,
        t: maturities(cfg)?,
    })
}

fn consistency(cfg: &RunConfig) -> Result<Plan, Invalid> {
    let params = stein_stein(cfg)?;
    HestonParams::from_stein_stein(&params).map_err(|e| e.to_string())?;
    let tol = cfg
        .tolerances
        .as_ref()
        .and_then(|t| t.consistency)
        .unwrap_or(1e-6);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(format!(
            "tolerances.consistency must be positive, got {tol}"
        ));
    }
    Ok(Plan::Consistency {
        params,
        t: maturities(cfg)?,
        tol,
    })
}

fn shoot(cfg: &RunConfig, ov: Overrides) -> Result<Plan, Invalid> {
    let b = cfg.shoot.as_ref().ok_or("missing shoot block")?;
    let (system, default_x0) = match b.system.as_str() {
        "small_noise" | "small_time" => {
            let p = stein_stein(cfg)?;
            let (regime, z) = if b.system == "small_noise" {
                (Regime::SmallNoise, 0.0)
            } else {
                (Regime::SmallTime, p.z0)
            };
            (
                ShootSystem::SteinStein(p.control_system(regime)),
                Some(vec![0.0, z]),
            )
        }
        "linear" => {
            let l = b
                .linear
                .as_ref()
                .ok_or("shoot.system = linear needs a shoot.linear block")?;
            let sys = LinearSystem::new(
                l.n,
                l.l,
                l.drift_matrix.clone(),
                l.drift_offset.clone(),
                l.diffusion_matrices.clone(),
                l.diffusion_offsets.clone(),
            )
            .map_err(|e| e.to_string())?;
            (ShootSystem::Linear(sys), None)
        }
        other => {
            return Err(format!(
                "unknown shoot.system {other:?} (expected small_noise, small_time or linear)"
            ))
        }
    };
    let x0 =
        b.x0.clone()
            .or(default_x0)
            .ok_or("shoot.x0 is required for linear systems")?;
    let problem = ShootingProblem::new(
        x0,
        b.target.clone(),
        b.t.unwrap_or(1.0),
        b.steps.unwrap_or(1000),
    )
    .map_err(|e| e.to_string())?;
    match &system {
        ShootSystem::SteinStein(s) => problem.check_against(s),
        ShootSystem::Linear(s) => problem.check_against(s),
    }
    .map_err(|e| e.to_string())?;
    let n_starts = b.n_starts.unwrap_or(32);
    if n_starts == 0 {
        return Err("shoot.n_starts must be at least 1".into());
    }
    Ok(Plan::Shoot {
        system,
        problem,
        n_starts,
        seed: ov.seed.or(b.seed).unwrap_or(7),
    })
}

fn figure(cfg: &RunConfig) -> Result<Plan, Invalid> {
    let model = match (&cfg.stein_stein, &cfg.heston) {
        (Some(_), Some(_)) => return Err("give either a stein_stein or a heston block".into()),
        (None, Some(h)) => FigureModel::Heston(
            HestonParams::new(h.q, h.kappa, h.xi, h.v0, h.rho).map_err(|e| e.to_string())?,
        ),
        _ => {
            let p = stein_stein(cfg)?;
            HestonParams::from_stein_stein(&p).map_err(|e| e.to_string())?;
            FigureModel::SteinStein(p)
        }
    };
    let t = maturities(cfg)?;
    let y = cfg.grid.as_ref().map(|g| g.y.clone()).unwrap_or_default();
    if y.is_empty() {
        return Err("grid.y is empty".into());
    }
    if let Some(v) = y.iter().find(|v| !(**v != 0.0 && v.is_finite())) {
        return Err(format!(
            "grid.y entries must be finite and nonzero, got {v}"
        ));
    }
    Ok(Plan::Figure {
        model,
        t,
        y,
        settings: fourier_settings(cfg)?,
    })
}

fn mc(cfg: &RunConfig, ov: Overrides) -> Result<Plan, Invalid> {
    let params = stein_stein(cfg)?;
    let s = cfg.sim.as_ref().ok_or("missing sim block")?;
    let mut config = SimConfig {
        n_paths: s.n_paths.unwrap_or(100_000),
        n_steps: s.n_steps.unwrap_or(200),
        seed: ov.seed.or(s.seed).unwrap_or(1),
        eps: 1.0,
        theta: 0,
    };
    let decreasing = |what: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>, Invalid> {
        let v = v.clone().ok_or(format!("sim.{what} is required"))?;
        if v.is_empty()
            || !v.iter().all(|x| *x > 0.0 && x.is_finite())
            || v.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(format!(
                "sim.{what} must be nonempty, positive and strictly decreasing"
            ));
        }
        Ok(v)
    };
    let plan = match s.mode.as_str() {
        "small_time" => {
            if params.z0 <= 0.0 {
                return Err(format!("small_time mode needs z0 > 0, got {}", params.z0));
            }
            config.theta = 2;
            McPlan::SmallTime {
                params,
                y: s.y.unwrap_or(0.0),
                t_list: decreasing("t_list", &s.t_list)?,
                config,
            }
        }
        "small_noise" => {
            let y = s.y.unwrap_or(1.0);
            if !(y != 0.0 && y.is_finite()) {
                return Err(format!("small_noise mode needs y != 0, got {y}"));
            }
            let t = s.t.unwrap_or(1.0);
            if !(t > 0.0 && t.is_finite()) {
                return Err(format!("sim.t must be positive, got {t}"));
            }
            if let Some(h) = s.bandwidth_scale {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(format!("sim.bandwidth_scale must be positive, got {h}"));
                }
            }
            McPlan::SmallNoise {
                params,
                y,
                t,
                eps_list: decreasing("eps_list", &s.eps_list)?,
                config,
                bandwidth_scale: s.bandwidth_scale,
            }
        }
        other => {
            return Err(format!(
                "unknown sim.mode {other:?} (expected small_time or small_noise)"
            ))
        }
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(Plan::Mc(plan))
}

/// Validates `cfg` for `command` without running anything.
pub fn plan(command: &str, cfg: &RunConfig, ov: Overrides) -> Result<Plan, Invalid> {
    match command {
        "wings" => wings(cfg),
        "consistency" => consistency(cfg),
        "shoot" => shoot(cfg, ov),
        "figure" => figure(cfg),
        "mc" => mc(cfg, ov),
        other => Err(format!("unknown command {other:?}")),
    }
}
