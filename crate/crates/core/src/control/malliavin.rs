use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{AffineControlSystem, FieldCache, Rk4, ShootingSolution, Trajectory};
use crate::error::{Error, Result};
use crate::quadrature::uniform_simpson;

/// Relative singular-value threshold for numerical full rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

const DET_FLOOR: f64 = 1e-300;

/// Deterministic Malliavin covariance `C` of the endpoint map along one control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalliavinMatrix {
    /// Row-major `n × n`.
    pub entries: Vec<f64>,
    pub n: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `λ_max / λ_min`, infinite when `C` is numerically singular.
    pub condition_estimate: f64,
}

impl MalliavinMatrix {
    fn from_entries(n: usize, entries: Vec<f64>) -> Self {
        let m = DMatrix::from_row_slice(n, n, &entries);
        let mut eigenvalues: Vec<f64> =
            SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let lmax = eigenvalues[n - 1];
        let lmin = eigenvalues[0];
        let condition_estimate = if lmax > 0.0 && lmin > RANK_TOLERANCE * lmax {
            lmax / lmin
        } else {
            f64::INFINITY
        };
        Self {
            entries,
            n,
            eigenvalues,
            condition_estimate,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn is_invertible(&self) -> bool {
        self.condition_estimate.is_finite()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

fn det(n: usize, a: &[f64]) -> f64 {
    DMatrix::from_row_slice(n, n, a).determinant()
}

/// Re-integrates the extremal of `solution` together with the tangent flow
/// `Φ' = JΦ` and its inverse `Ψ' = −ΨJ`, `J = ∇b0 + Σ_j ḣ_j ∇σ_j`, and
/// assembles `C = Φ_t (∫ Σ_l (Ψ_s σ_l)(Ψ_s σ_l)ᵀ ds) Φ_tᵀ` by Simpson's rule
/// on the trajectory grid.
pub fn malliavin_matrix<S: AffineControlSystem + ?Sized>(
    system: &S,
    solution: &ShootingSolution,
) -> Result<MalliavinMatrix> {
    let n = system.state_dim();
    let d = system.control_dim();
    let traj = &solution.trajectory;
    let steps = traj.steps();
    if steps == 0 {
        return Err(Error::InvalidInput("trajectory has no steps".into()));
    }
    let h = traj.dt();
    let nn = n * n;
    // y = [x, p, Φ, Ψ]
    let dim = 2 * n + 2 * nn;
    let mut y = vec![0.0; dim];
    y[..n].copy_from_slice(&traj.first().x);
    y[n..2 * n].copy_from_slice(&traj.first().p);
    for i in 0..n {
        y[2 * n + i * n + i] = 1.0;
        y[2 * n + nn + i * n + i] = 1.0;
    }

    let mut cache = FieldCache::new(system);
    let mut jac = vec![0.0; nn];
    let mut rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let (xp, mats) = y.split_at(2 * n);
        let (x, p) = xp.split_at(n);
        let (dxp, dmats) = dy.split_at_mut(2 * n);
        let (dx, dp) = dxp.split_at_mut(n);
        cache.hamiltonian_rhs(x, p, dx, dp);
        jac.copy_from_slice(&cache.jb);
        for j in 0..d {
            let a = cache.control_rate(j, p);
            for (e, s) in jac.iter_mut().zip(cache.sigma_jacobian(j)) {
                *e += a * s;
            }
        }
        let (phi, psi) = mats.split_at(nn);
        let (dphi, dpsi) = dmats.split_at_mut(nn);
        for r in 0..n {
            for c in 0..n {
                dphi[r * n + c] = (0..n).map(|k| jac[r * n + k] * phi[k * n + c]).sum();
                dpsi[r * n + c] = -(0..n).map(|k| psi[r * n + k] * jac[k * n + c]).sum::<f64>();
            }
        }
    };

    // integrand samples, one n×n block per node
    let mut samples = vec![vec![0.0; steps + 1]; nn];
    let mut sigma_cache = FieldCache::new(system);
    let mut v = vec![0.0; n];
    let mut record = |i: usize, y: &[f64], samples: &mut Vec<Vec<f64>>| {
        sigma_cache.load_fields(&y[..n]);
        let psi = &y[2 * n + nn..];
        for l in 0..d {
            let s = sigma_cache.sigma(l);
            for r in 0..n {
                v[r] = (0..n).map(|k| psi[r * n + k] * s[k]).sum();
            }
            for r in 0..n {
                for c in 0..n {
                    samples[r * n + c][i] += v[r] * v[c];
                }
            }
        }
    };
    record(0, &y, &mut samples);
    let mut rk = Rk4::new(dim);
    for i in 0..steps {
        rk.step(&mut rhs, i as f64 * h, &mut y, h);
        let time = (i + 1) as f64 * h;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { time });
        }
        let dphi = det(n, &y[2 * n..2 * n + nn]);
        if dphi.abs() < DET_FLOOR {
            return Err(Error::FlowDegeneracy { time, det: dphi });
        }
        record(i + 1, &y, &mut samples);
    }

    let inner: Vec<f64> = samples.iter().map(|s| uniform_simpson(s, h)).collect();
    let phi = DMatrix::from_row_slice(n, n, &y[2 * n..2 * n + nn]);
    let g = DMatrix::from_row_slice(n, n, &inner);
    let c = &phi * g * phi.transpose();
    let mut entries = vec![0.0; nn];
    for r in 0..n {
        for col in 0..n {
            entries[r * n + col] = 0.5 * (c[(r, col)] + c[(col, r)]);
        }
    }
    Ok(MalliavinMatrix::from_entries(n, entries))
}

/// True iff the diffusion columns span `R^n` at some node of `trajectory`.
pub fn is_elliptic_somewhere<S: AffineControlSystem + ?Sized>(
    system: &S,
    trajectory: &Trajectory,
) -> bool {
    let n = system.state_dim();
    let d = system.control_dim();
    if d < n {
        return false;
    }
    let mut cache = FieldCache::new(system);
    trajectory.states.iter().any(|st| {
        cache.load_fields(&st.x);
        let m = DMatrix::from_fn(n, d, |r, c| cache.sigma(c)[r]);
        let sv = m.singular_values();
        let smax = sv.max();
        smax > 0.0 && sv.min() > RANK_TOLERANCE * smax
    })
}
