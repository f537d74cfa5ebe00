//! Execution of validated plans.

use volwings::control::{
    multi_start_shoot, AffineControlSystem, ShootingProblem, ShootingSolution,
};
use volwings::fourier::{dupire_localvar_with, ratio_point, FourierSettings};
use volwings::heston::{consistency_check, HestonParams};
use volwings::mc::{small_noise_check, small_time_check, McRow, SmallTimeShooting};
use volwings::stein_stein::{wing_slope, SteinSteinParams, Wing};

use crate::config::{FigureModel, McPlan, Plan, ShootSystem};
use crate::output::{Cell, Table};

/// Result of running a plan: tables to emit and the exit status.
pub struct Outcome {
    pub table: Table,
    pub trajectory: Option<Table>,
    pub passed: bool,
}

pub fn run(plan: &Plan) -> Result<Outcome, String> {
    match plan {
        Plan::Wings { params, t } => wings(params, t),
        Plan::Consistency { params, t, tol } => consistency(params, t, *tol),
        Plan::Shoot {
            system,
            problem,
            n_starts,
            seed,
        } => match system {
            ShootSystem::SteinStein(s) => shoot(s, problem, *n_starts, *seed),
            ShootSystem::Linear(s) => shoot(s, problem, *n_starts, *seed),
        },
        Plan::Figure {
            model,
            t,
            y,
            settings,
        } => figure(model, t, y, settings),
        Plan::Mc(p) => mc(p),
    }
}

fn wings(params: &SteinSteinParams, ts: &[f64]) -> Result<Outcome, String> {
    let mut table = Table::new(&["t", "sign", "rbar", "p", "q", "z_t", "slope"]);
    for &t in ts {
        for w in Wing::both() {
            let a = wing_slope(w, params, t)
                .map_err(|e| format!("t = {t}, sign = {}: {e}", w.sign()))?;
            table.push(vec![
                t.into(),
                (w.sign() as i64).into(),
                a.rbar.into(),
                a.p_val.into(),
                a.q_val.into(),
                a.z_t.into(),
                a.slope.into(),
            ]);
        }
    }
    Ok(Outcome {
        table,
        trajectory: None,
        passed: true,
    })
}

fn consistency(params: &SteinSteinParams, ts: &[f64], tol: f64) -> Result<Outcome, String> {
    let mut table = Table::new(&[
        "t",
        "sign",
        "s_crit",
        "rbar",
        "p_at_rbar",
        "r_of_s_crit",
        "slope_stein_stein",
        "slope_heston",
        "rel_slope",
        "rel_exponent",
        "rel_root",
        "root_r",
        "rel_root_r",
        "rel_trig",
        "status",
    ]);
    let mut passed = true;
    for &t in ts {
        let rep = consistency_check(params, t, tol).map_err(|e| format!("t = {t}: {e}"))?;
        passed &= rep.pass;
        for w in &rep.wings {
            table.push(vec![
                t.into(),
                (w.wing.sign() as i64).into(),
                w.s_crit.into(),
                w.rbar.into(),
                w.p_at_rbar.into(),
                w.r_of_s_crit.into(),
                w.slope_stein_stein.into(),
                w.slope_heston.into(),
                w.rel_slope.into(),
                w.rel_exponent.into(),
                w.rel_root.into(),
                rep.root_r.into(),
                rep.rel_root_r.into(),
                rep.rel_trig.into(),
                (w.pass && rep.rel_root_r <= tol && rep.rel_trig <= tol).into(),
            ]);
        }
    }
    Ok(Outcome {
        table,
        trajectory: None,
        passed,
    })
}

fn shoot<S: AffineControlSystem>(
    system: &S,
    problem: &ShootingProblem,
    n_starts: usize,
    seed: u64,
) -> Result<Outcome, String> {
    let sols = multi_start_shoot(system, problem, n_starts, seed).map_err(|e| e.to_string())?;
    let n = system.state_dim();
    let mut header = vec!["index".to_string()];
    header.extend((0..n).map(|i| format!("p0_{i}")));
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend(["action".to_string(), "residual".to_string()]);
    let mut table = Table::new(&header);

    let mut th = vec!["index".to_string(), "step".to_string(), "time".to_string()];
    th.extend((0..n).map(|i| format!("x_{i}")));
    th.extend((0..n).map(|i| format!("p_{i}")));
    let mut traj = Table::new(&th);

    for (k, sol) in sols.iter().enumerate() {
        table.push(solution_row(k, sol));
        let tr = &sol.trajectory;
        for (i, s) in tr.states.iter().enumerate() {
            let mut row: Vec<Cell> = vec![k.into(), i.into(), tr.time(i).into()];
            row.extend(s.x.iter().map(|v| Cell::from(*v)));
            row.extend(s.p.iter().map(|v| Cell::from(*v)));
            traj.push(row);
        }
    }
    Ok(Outcome {
        passed: !sols.is_empty(),
        table,
        trajectory: Some(traj),
    })
}

fn solution_row(k: usize, sol: &ShootingSolution) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![k.into()];
    row.extend(sol.p0.iter().map(|v| Cell::from(*v)));
    row.extend(sol.terminal().x.iter().map(|v| Cell::from(*v)));
    row.push(sol.action.into());
    row.push(sol.residual_norm.into());
    row
}

fn figure(
    model: &FigureModel,
    ts: &[f64],
    ys: &[f64],
    settings: &FourierSettings,
) -> Result<Outcome, String> {
    use rayon::prelude::*;

    let points: Vec<(f64, f64)> = ts
        .iter()
        .flat_map(|&t| ys.iter().map(move |&y| (t, y)))
        .collect();
    let results: Vec<Result<[f64; 3], String>> = points
        .par_iter()
        .map(|&(t, y)| match model {
            FigureModel::SteinStein(p) => ratio_point(t, y, p, settings)
                .map(|q| [q.local_var, q.slope, q.ratio])
                .map_err(|e| e.to_string()),
            FigureModel::Heston(h) => local_var_only(t, y, h, settings),
        })
        .collect();

    let mut table = Table::new(&["t", "y", "local_var", "slope", "ratio"]);
    for ((t, y), r) in points.iter().zip(results) {
        match r {
            Ok([lv, slope, ratio]) => table.push(vec![
                (*t).into(),
                (*y).into(),
                lv.into(),
                slope.into(),
                ratio.into(),
            ]),
            Err(e) => eprintln!("skipping t = {t}, y = {y}: {e}"),
        }
    }
    Ok(Outcome {
        passed: !table.rows.is_empty(),
        table,
        trajectory: None,
    })
}

fn local_var_only(
    t: f64,
    y: f64,
    params: &HestonParams,
    settings: &FourierSettings,
) -> Result<[f64; 3], String> {
    let lv = dupire_localvar_with(t, y, params, settings).map_err(|e| e.to_string())?;
    Ok([lv, f64::NAN, f64::NAN])
}

fn mc(plan: &McPlan) -> Result<Outcome, String> {
    let rows = match plan {
        McPlan::SmallTime {
            params,
            y,
            t_list,
            config,
        } => small_time_check(params, *y, t_list, config, &SmallTimeShooting::default()),
        McPlan::SmallNoise {
            params,
            y,
            t,
            eps_list,
            config,
            bandwidth_scale,
        } => small_noise_check(params, *y, *t, eps_list, config, *bandwidth_scale),
    }
    .map_err(|e| e.to_string())?;
    Ok(Outcome {
        table: mc_table(&rows),
        trajectory: None,
        passed: true,
    })
}

fn mc_table(rows: &[McRow]) -> Table {
    let mut table = Table::new(&[
        "eps_or_t",
        "estimate",
        "std_err",
        "prediction",
        "abs_error",
        "effective_n",
        "cond_var",
        "cond_var_std_err",
        "bandwidth",
        "status",
    ]);
    for r in rows {
        table.push(vec![
            r.eps_or_t.into(),
            r.estimate.into(),
            r.std_err.into(),
            r.prediction.into(),
            r.abs_error.into(),
            r.effective_n.into(),
            r.cond_var.into(),
            r.cond_var_std_err.into(),
            r.bandwidth.into(),
            r.status.as_str().into(),
        ]);
    }
    table
}
