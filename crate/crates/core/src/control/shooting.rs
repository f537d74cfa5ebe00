//! Shooting for point-to-subspace problems.
//!
//! Given `x0`, a horizon `t` and a target `y ∈ R^l`, we look for an initial
//! costate `p0` such that the extremal through `(x0, p0)` satisfies
//! `x_t^{1..l} = y` and the transversality condition `p_t^{l+1..n} = 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hamiltonian_flow, HamiltonianState};
use super::{integrate_hamiltonian, norm, AffineControlSystem, FieldCache, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::quadrature::uniform_simpson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingProblem {
    pub x0: Vec<f64>,
    pub y_target: Vec<f64>,
    pub t: f64,
    pub steps: usize,
}

impl ShootingProblem {
    pub fn new(x0: Vec<f64>, y_target: Vec<f64>, t: f64, steps: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {t}"
            )));
        }
        if steps < 16 {
            return Err(Error::InvalidInput(format!(
                "need at least 16 steps, got {steps}"
            )));
        }
        if !x0.iter().chain(&y_target).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite initial state or target".into(),
            ));
        }
        Ok(Self {
            x0,
            y_target,
            t,
            steps,
        })
    }

    /// Checks the state and target lengths against `system`.
    pub fn check_against<S: AffineControlSystem + ?Sized>(&self, system: &S) -> Result<()> {
        check_len("initial state", &self.x0, system.state_dim())?;
        check_len("target", &self.y_target, system.target_dim())
    }

    fn tolerance(&self, opts: &ShootingOptions) -> f64 {
        opts.tolerance * (1.0 + norm(&self.y_target))
    }
}

/// Newton iteration controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingOptions {
    pub max_iterations: usize,
    /// Convergence when `residual_norm <= tolerance * (1 + |y_target|)`.
    pub tolerance: f64,
    /// Forward-difference step relative to `1 + |p0|`.
    pub fd_step: f64,
    pub max_halvings: usize,
    /// Singular-value ratio below which the shooting Jacobian is rejected.
    pub rank_tolerance: f64,
    /// Multi-start guesses have components `±10^u`, `u` uniform on this range.
    pub guess_log10_range: (f64, f64),
    /// Relative distance under which two converged `p0` are the same extremal.
    pub dedup_tolerance: f64,
    /// Drop multi-start extremals that fail the second-order test of
    /// [`SecondOrder::is_local_minimizer`].
    pub local_minimizers_only: bool,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-9,
            fd_step: 1e-6,
            max_halvings: 30,
            rank_tolerance: 1e-13,
            guess_log10_range: (-1.0, 1.5),
            dedup_tolerance: 1e-6,
            local_minimizers_only: true,
        }
    }
}

/// One converged extremal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub p0: Vec<f64>,
    pub trajectory: Trajectory,
    /// `½ ∫ Σ_j ḣ_j(s)² ds` by composite Simpson on the trajectory grid.
    pub action: f64,
    pub residual_norm: f64,
    /// `ḣ_j(s_i) = <σ_j(x_{s_i}), p_{s_i}>`, one row per grid node.
    pub hdot: Vec<Vec<f64>>,
}

impl ShootingSolution {
    /// Integrates the extremal through `(problem.x0, p0)` and packages it,
    /// regardless of whether the boundary conditions hold.
    pub fn from_initial_costate<S: AffineControlSystem + ?Sized>(
        system: &S,
        problem: &ShootingProblem,
        p0: &[f64],
    ) -> Result<Self> {
        problem.check_against(system)?;
        let trajectory = hamiltonian_flow(system, &problem.x0, p0, problem.t, problem.steps)?;
        let end = trajectory.last();
        let residual_norm =
            boundary_residual(system.target_dim(), &problem.y_target, &end.x, &end.p)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut cache = FieldCache::new(system);
        let d = system.control_dim();
        let hdot: Vec<Vec<f64>> = trajectory
            .states
            .iter()
            .map(|st| {
                cache.load_fields(&st.x);
                (0..d).map(|j| cache.control_rate(j, &st.p)).collect()
            })
            .collect();
        let energy: Vec<f64> = hdot
            .iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let action = 0.5 * uniform_simpson(&energy, trajectory.dt());
        Ok(Self {
            p0: p0.to_vec(),
            trajectory,
            action,
            residual_norm,
            hdot,
        })
    }

    pub fn terminal(&self) -> &HamiltonianState {
        self.trajectory.last()
    }

    pub fn t(&self) -> f64 {
        self.trajectory.t
    }
}

fn boundary_residual(l: usize, y: &[f64], x_end: &[f64], p_end: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = x_end[..l].iter().zip(y).map(|(a, b)| a - b).collect();
    r.extend_from_slice(&p_end[l..]);
    r
}

fn residual<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    p0: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = system.state_dim();
    let end = integrate_hamiltonian(system, &problem.x0, p0, problem.t, problem.steps, |_, _| {})?;
    let r = boundary_residual(system.target_dim(), &problem.y_target, &end[..n], &end[n..]);
    let size = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((r, size))
}

/// Damped Newton shooting from `p0_guess` with default options.
pub fn shoot<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    p0_guess: &[f64],
) -> Result<ShootingSolution> {
    shoot_with(system, problem, p0_guess, &ShootingOptions::default())
}

pub fn shoot_with<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    p0_guess: &[f64],
    opts: &ShootingOptions,
) -> Result<ShootingSolution> {
    problem.check_against(system)?;
    let n = system.state_dim();
    check_len("costate guess", p0_guess, n)?;
    if !p0_guess.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite costate guess".into()));
    }
    let tol = problem.tolerance(opts);
    let mut p = p0_guess.to_vec();
    let (mut f, mut r) = match residual(system, problem, &p) {
        Ok(v) => v,
        Err(Error::Divergence { .. }) => {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };

    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut trial = vec![0.0; n];
    for iteration in 0..opts.max_iterations {
        if r <= tol {
            return ShootingSolution::from_initial_costate(system, problem, &p);
        }
        let h = opts.fd_step * (1.0 + norm(&p));
        for k in 0..n {
            trial.copy_from_slice(&p);
            trial[k] += h;
            let (fk, _) = residual(system, problem, &trial).map_err(|_| Error::NoConvergence {
                iterations: iteration,
                residual: r,
            })?;
            for i in 0..n {
                jac[(i, k)] = (fk[i] - f[i]) / h;
            }
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if !(ratio > opts.rank_tolerance) {
            return Err(Error::RankDeficient { ratio });
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let step = svd
            .solve(&rhs, 0.0)
            .map_err(|_| Error::RankDeficient { ratio })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for k in 0..n {
                trial[k] = p[k] + lambda * step[k];
            }
            if let Ok((ft, rt)) = residual(system, problem, &trial) {
                if rt < r {
                    p.copy_from_slice(&trial);
                    f = ft;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iteration + 1,
                residual: r,
            });
        }
    }
    if r <= tol {
        return ShootingSolution::from_initial_costate(system, problem, &p);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: r,
    })
}

/// Second-order information along one extremal, from central differences of
/// the flow in `p0` with step `1e-5 (1 + |p0|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrder {
    /// Grid times in `(0, t]` at which `det ∂x_s/∂p0` changes sign.
    pub conjugate_times: Vec<f64>,
    /// `∂p_t/∂x_t` restricted to the unconstrained coordinates `l+1..n`,
    /// row-major; the Hessian of the action in the free terminal state.
    pub free_hessian: Vec<f64>,
    pub free_dim: usize,
}

impl SecondOrder {
    /// No conjugate point and a positive definite free Hessian.
    pub fn is_local_minimizer(&self) -> bool {
        if !self.conjugate_times.is_empty() {
            return false;
        }
        let m = self.free_dim;
        if m == 0 {
            return true;
        }
        let h = DMatrix::from_row_slice(m, m, &self.free_hessian);
        let sym = (&h + h.transpose()) * 0.5;
        sym.cholesky().is_some()
    }
}

pub fn second_order<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    p0: &[f64],
) -> Result<SecondOrder> {
    problem.check_against(system)?;
    let n = system.state_dim();
    let l = system.target_dim();
    check_len("costate", p0, n)?;
    let steps = problem.steps;
    let h = 1e-5 * (1.0 + norm(p0));
    // dx[i][r * n + k] = ∂x_r/∂p0_k at node i
    let mut dx = vec![vec![0.0; n * n]; steps + 1];
    let mut dp_end = DMatrix::<f64>::zeros(n, n);
    let mut trial = p0.to_vec();
    for k in 0..n {
        for (sign, w) in [(1.0, 0.5 / h), (-1.0, -0.5 / h)] {
            trial[k] = p0[k] + sign * h;
            let end =
                integrate_hamiltonian(system, &problem.x0, &trial, problem.t, steps, |i, y| {
                    for r in 0..n {
                        dx[i][r * n + k] += w * y[r];
                    }
                })?;
            for r in 0..n {
                dp_end[(r, k)] += w * end[n + r];
            }
        }
        trial[k] = p0[k];
    }
    let dt = problem.t / steps as f64;
    let mut conjugate_times = Vec::new();
    let mut last = 0.0f64;
    for (i, m) in dx.iter().enumerate().skip(1) {
        let d = DMatrix::from_row_slice(n, n, m).determinant();
        if d != 0.0 {
            if last != 0.0 && (d > 0.0) != (last > 0.0) {
                conjugate_times.push(i as f64 * dt);
            }
            last = d;
        }
    }
    let m = n - l;
    let mut free_hessian = vec![f64::NAN; m * m];
    if let Some(inv) = DMatrix::from_row_slice(n, n, &dx[steps]).try_inverse() {
        let p = dp_end * inv;
        for r in 0..m {
            for c in 0..m {
                free_hessian[r * m + c] = p[(l + r, l + c)];
            }
        }
    }
    Ok(SecondOrder {
        conjugate_times,
        free_hessian,
        free_dim: m,
    })
}

/// Deterministic pseudo-random initial costates for `multi_start_shoot`.
pub(crate) fn start_guesses(
    n: usize,
    n_starts: usize,
    seed: u64,
    range: (f64, f64),
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_starts)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mag = 10f64.powf(rng.random_range(range.0..range.1));
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect()
        })
        .collect()
}

/// Shoots from `n_starts` seeded guesses and returns the distinct converged
/// extremals sorted by action. Starts that fail are dropped, as are extremals
/// that are not local minimizers when `local_minimizers_only` is set.
pub fn multi_start_shoot<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<ShootingSolution>> {
    multi_start_shoot_with(system, problem, n_starts, seed, &ShootingOptions::default())
}

pub fn multi_start_shoot_with<S: AffineControlSystem + ?Sized>(
    system: &S,
    problem: &ShootingProblem,
    n_starts: usize,
    seed: u64,
    opts: &ShootingOptions,
) -> Result<Vec<ShootingSolution>> {
    if n_starts == 0 {
        return Err(Error::InvalidInput("need at least one start".into()));
    }
    problem.check_against(system)?;
    let guesses = start_guesses(system.state_dim(), n_starts, seed, opts.guess_log10_range);
    let converged: Vec<ShootingSolution> = guesses
        .par_iter()
        .map(|g| {
            let sol = shoot_with(system, problem, g, opts).ok()?;
            if opts.local_minimizers_only {
                match second_order(system, problem, &sol.p0) {
                    Ok(so) if so.is_local_minimizer() => {}
                    _ => return None,
                }
            }
            Some(sol)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut distinct: Vec<ShootingSolution> = Vec::new();
    for sol in converged {
        let duplicate = distinct.iter().any(|d| {
            let diff: f64 =
                d.p0.iter()
                    .zip(&sol.p0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
            diff <= opts.dedup_tolerance * norm(&d.p0).max(norm(&sol.p0)).max(1.0)
        });
        if !duplicate {
            distinct.push(sol);
        }
    }
    distinct.sort_by(|a, b| a.action.total_cmp(&b.action));
    Ok(distinct)
}
