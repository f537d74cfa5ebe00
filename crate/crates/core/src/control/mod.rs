//! Affine control systems and their Hamiltonian extremals.
//!
//! A system `dx = b0(x) dt + Σ_j σ_j(x) dh_j` is described through the
//! [`AffineControlSystem`] trait. The Hamiltonian
//! `H(x, p) = <b0(x), p> + ½ Σ_j <σ_j(x), p>²` generates the extremals used
//! to solve point-to-subspace control problems by shooting
//! with [`shoot`].

mod action;
mod malliavin;
mod shooting;

pub use action::action_of_control;
pub use malliavin::{is_elliptic_somewhere, malliavin_matrix, MalliavinMatrix, RANK_TOLERANCE};
pub use shooting::{
    multi_start_shoot, multi_start_shoot_with, second_order, shoot, shoot_with, SecondOrder,
    ShootingOptions, ShootingProblem, ShootingSolution,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Controlled differential system with drift `b0` and `d` diffusion columns.
///
/// Jacobians are written row-major into `n * n` slices:
/// `out[i * n + k] = ∂f_i / ∂x_k`.
pub trait AffineControlSystem: Send + Sync {
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Number of leading coordinates fixed by the target subspace (`l`).
    fn target_dim(&self) -> usize;
    /// Number of diffusion columns `d`.
    fn control_dim(&self) -> usize;

    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, j: usize, x: &[f64], out: &mut [f64]);
    fn diffusion_jacobian(&self, j: usize, x: &[f64], out: &mut [f64]);
}

/// Affine-in-state system: `b0(x) = A x + a`, `σ_j(x) = M_j x + c_j`.
///
/// Matrices are row-major `n * n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    n: usize,
    l: usize,
    drift_matrix: Vec<f64>,
    drift_offset: Vec<f64>,
    diffusion_matrices: Vec<Vec<f64>>,
    diffusion_offsets: Vec<Vec<f64>>,
}

impl LinearSystem {
    pub fn new(
        n: usize,
        l: usize,
        drift_matrix: Vec<f64>,
        drift_offset: Vec<f64>,
        diffusion_matrices: Vec<Vec<f64>>,
        diffusion_offsets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 || l == 0 || l > n {
            return Err(Error::InvalidInput(format!(
                "need 1 <= l <= n, got n = {n}, l = {l}"
            )));
        }
        if diffusion_offsets.is_empty() || diffusion_matrices.len() != diffusion_offsets.len() {
            return Err(Error::InvalidInput(format!(
                "need d >= 1 diffusion columns with one matrix each, got {} offsets and {} matrices",
                diffusion_offsets.len(),
                diffusion_matrices.len()
            )));
        }
        check_len("drift matrix", &drift_matrix, n * n)?;
        check_len("drift offset", &drift_offset, n)?;
        for (m, c) in diffusion_matrices.iter().zip(&diffusion_offsets) {
            check_len("diffusion matrix", m, n * n)?;
            check_len("diffusion offset", c, n)?;
        }
        let finite = drift_matrix
            .iter()
            .chain(&drift_offset)
            .chain(diffusion_matrices.iter().flatten())
            .chain(diffusion_offsets.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite system coefficient".into()));
        }
        Ok(Self {
            n,
            l,
            drift_matrix,
            drift_offset,
            diffusion_matrices,
            diffusion_offsets,
        })
    }

    /// Driftless system with constant diffusion columns.
    pub fn constant_diffusion(l: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map(Vec::len).unwrap_or(0);
        let d = columns.len();
        Self::new(
            n,
            l,
            vec![0.0; n * n],
            vec![0.0; n],
            vec![vec![0.0; n * n]; d],
            columns,
        )
    }
}

fn affine_apply(m: &[f64], c: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        out[i] = c[i] + (0..n).map(|k| m[i * n + k] * x[k]).sum::<f64>();
    }
}

impl AffineControlSystem for LinearSystem {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn target_dim(&self) -> usize {
        self.l
    }
    fn control_dim(&self) -> usize {
        self.diffusion_offsets.len()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        affine_apply(&self.drift_matrix, &self.drift_offset, x, out);
    }
    fn drift_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.drift_matrix);
    }
    fn diffusion(&self, j: usize, x: &[f64], out: &mut [f64]) {
        affine_apply(
            &self.diffusion_matrices[j],
            &self.diffusion_offsets[j],
            x,
            out,
        );
    }
    fn diffusion_jacobian(&self, j: usize, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.diffusion_matrices[j]);
    }
}

/// A point `(x, p)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl HamiltonianState {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Self {
        Self { x, p }
    }
}

/// States of a flow sampled on the uniform grid `s_i = i * t / steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: f64,
    pub states: Vec<HamiltonianState>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn dt(&self) -> f64 {
        self.t / self.steps().max(1) as f64
    }

    pub fn first(&self) -> &HamiltonianState {
        &self.states[0]
    }

    pub fn last(&self) -> &HamiltonianState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }
}

/// Cached evaluation of `b0`, `σ_j` and their Jacobians at one state.
pub(crate) struct FieldCache<'a, S: AffineControlSystem + ?Sized> {
    pub sys: &'a S,
    pub n: usize,
    pub d: usize,
    pub b: Vec<f64>,
    pub jb: Vec<f64>,
    pub sig: Vec<f64>,
    pub jsig: Vec<f64>,
}

impl<'a, S: AffineControlSystem + ?Sized> FieldCache<'a, S> {
    pub fn new(sys: &'a S) -> Self {
        let n = sys.state_dim();
        let d = sys.control_dim();
        Self {
            sys,
            n,
            d,
            b: vec![0.0; n],
            jb: vec![0.0; n * n],
            sig: vec![0.0; d * n],
            jsig: vec![0.0; d * n * n],
        }
    }

    pub fn load_fields(&mut self, x: &[f64]) {
        let n = self.n;
        self.sys.drift(x, &mut self.b);
        for j in 0..self.d {
            self.sys.diffusion(j, x, &mut self.sig[j * n..(j + 1) * n]);
        }
    }

    pub fn load_all(&mut self, x: &[f64]) {
        let n = self.n;
        self.load_fields(x);
        self.sys.drift_jacobian(x, &mut self.jb);
        for j in 0..self.d {
            self.sys
                .diffusion_jacobian(j, x, &mut self.jsig[j * n * n..(j + 1) * n * n]);
        }
    }

    pub fn sigma(&self, j: usize) -> &[f64] {
        &self.sig[j * self.n..(j + 1) * self.n]
    }

    pub fn sigma_jacobian(&self, j: usize) -> &[f64] {
        &self.jsig[j * self.n * self.n..(j + 1) * self.n * self.n]
    }

    /// `<σ_j(x), p>` for the currently loaded `x`.
    pub fn control_rate(&self, j: usize, p: &[f64]) -> f64 {
        dot(self.sigma(j), p)
    }

    /// Hamiltonian vector field `(∂_p H, −∂_x H)` at `(x, p)`.
    pub fn hamiltonian_rhs(&mut self, x: &[f64], p: &[f64], dx: &mut [f64], dp: &mut [f64]) {
        let n = self.n;
        self.load_all(x);
        dx.copy_from_slice(&self.b);
        for (k, v) in dp.iter_mut().enumerate() {
            *v = -(0..n).map(|i| self.jb[i * n + k] * p[i]).sum::<f64>();
        }
        for j in 0..self.d {
            let a = self.control_rate(j, p);
            let s = &self.sig[j * n..(j + 1) * n];
            let js = &self.jsig[j * n * n..(j + 1) * n * n];
            for i in 0..n {
                dx[i] += a * s[i];
            }
            for k in 0..n {
                dp[k] -= a * (0..n).map(|i| js[i * n + k] * p[i]).sum::<f64>();
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Classic fourth-order Runge–Kutta stepper with reusable stage buffers.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` from `s` to `s + h`. The closure receives the stage time,
    /// the stage state and the output derivative.
    pub fn step<F>(&mut self, f: &mut F, s: f64, y: &mut [f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let dim = y.len();
        f(s, y, &mut self.k1);
        for i in 0..dim {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(s + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..dim {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(s + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..dim {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(s + h, &self.tmp, &mut self.k4);
        for i in 0..dim {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn check_state<S: AffineControlSystem + ?Sized>(system: &S, x: &[f64], p: &[f64]) -> Result<()> {
    let n = system.state_dim();
    check_len("state x", x, n)?;
    check_len("costate p", p, n)?;
    if !x.iter().chain(p).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite phase-space state".into()));
    }
    Ok(())
}

/// `H(x, p) = <b0(x), p> + ½ Σ_j <σ_j(x), p>²`.
pub fn hamiltonian_eval<S: AffineControlSystem + ?Sized>(
    system: &S,
    state: &HamiltonianState,
) -> Result<f64> {
    check_state(system, &state.x, &state.p)?;
    let mut cache = FieldCache::new(system);
    cache.load_fields(&state.x);
    let quad: f64 = (0..cache.d)
        .map(|j| cache.control_rate(j, &state.p).powi(2))
        .sum();
    Ok(dot(&cache.b, &state.p) + 0.5 * quad)
}

/// Integrates the Hamiltonian system with `steps` RK4 steps and calls
/// `visit(i, y)` for every grid node, `y = [x; p]`.
pub(crate) fn integrate_hamiltonian<S, V>(
    system: &S,
    x0: &[f64],
    p0: &[f64],
    t: f64,
    steps: usize,
    mut visit: V,
) -> Result<Vec<f64>>
where
    S: AffineControlSystem + ?Sized,
    V: FnMut(usize, &[f64]),
{
    let n = system.state_dim();
    let mut cache = FieldCache::new(system);
    let mut rk = Rk4::new(2 * n);
    let mut y = Vec::with_capacity(2 * n);
    y.extend_from_slice(x0);
    y.extend_from_slice(p0);
    let h = t / steps as f64;
    let mut rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let (x, p) = y.split_at(n);
        let (dx, dp) = dy.split_at_mut(n);
        cache.hamiltonian_rhs(x, p, dx, dp);
    };
    visit(0, &y);
    for i in 0..steps {
        rk.step(&mut rhs, i as f64 * h, &mut y, h);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                time: (i + 1) as f64 * h,
            });
        }
        visit(i + 1, &y);
    }
    Ok(y)
}

/// RK4 integration of `(ẋ, ṗ) = (∂_p H, −∂_x H)` from `(x0, p0)` over
/// `[0, t]`, returning `steps + 1` states.
pub fn hamiltonian_flow<S: AffineControlSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    p0: &[f64],
    t: f64,
    steps: usize,
) -> Result<Trajectory> {
    check_state(system, x0, p0)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {t}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidInput(
            "need at least one integration step".into(),
        ));
    }
    let n = system.state_dim();
    let mut states = Vec::with_capacity(steps + 1);
    integrate_hamiltonian(system, x0, p0, t, steps, |_, y| {
        states.push(HamiltonianState::new(y[..n].to_vec(), y[n..].to_vec()));
    })?;
    Ok(Trajectory { t, states })
}

/// Lie bracket `[σ_i, σ_j]^k = Σ_m σ_i^m ∂_m σ_j^k − σ_j^m ∂_m σ_i^k` at `x`.
pub fn lie_bracket<S: AffineControlSystem + ?Sized>(
    system: &S,
    i: usize,
    j: usize,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = system.state_dim();
    check_len("state x", x, n)?;
    let d = system.control_dim();
    if i >= d || j >= d {
        return Err(Error::InvalidInput(format!(
            "column index out of range (d = {d})"
        )));
    }
    let mut cache = FieldCache::new(system);
    cache.load_all(x);
    let (si, sj) = (cache.sigma(i), cache.sigma(j));
    let (ji, jj) = (cache.sigma_jacobian(i), cache.sigma_jacobian(j));
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|m| si[m] * jj[k * n + m] - sj[m] * ji[k * n + m])
                .sum()
        })
        .collect())
}

/// Largest relative discrepancy between the analytic Jacobians of `system`
/// and central finite differences at `x`.
pub fn jacobian_discrepancy<S: AffineControlSystem + ?Sized>(system: &S, x: &[f64]) -> f64 {
    let n = system.state_dim();
    let d = system.control_dim();
    let mut worst: f64 = 0.0;
    let mut analytic = vec![0.0; n * n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut compare = |eval: &dyn Fn(&[f64], &mut [f64]), jac: &[f64]| {
        let scale = jac.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let h = 1e-6 * (1.0 + x[k].abs());
            xp[k] = x[k] + h;
            eval(&xp, &mut plus);
            xp[k] = x[k] - h;
            eval(&xp, &mut minus);
            xp[k] = x[k];
            for i in 0..n {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                worst = worst.max((fd - jac[i * n + k]).abs() / scale);
            }
        }
    };
    system.drift_jacobian(x, &mut analytic);
    compare(&|y, o| system.drift(y, o), &analytic);
    for j in 0..d {
        system.diffusion_jacobian(j, x, &mut analytic);
        compare(&|y, o| system.diffusion(j, y, o), &analytic);
    }
    worst
}
