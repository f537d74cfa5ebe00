use super::{AffineControlSystem, FieldCache, Rk4};
use crate::error::{check_len, Error, Result};
use crate::quadrature::trapezoid;

/// Drives `dx = b0(x) ds + Σ_j σ_j(x) ḣ_j(s) ds` from `x0` over `[0, t]` with the
/// control sampled on a uniform grid (`hdot.len() - 1` intervals, linear
/// interpolation between nodes). Returns the endpoint and `½ ∫ |ḣ|² ds`.
pub fn action_of_control<S: AffineControlSystem + ?Sized>(
    system: &S,
    hdot: &[Vec<f64>],
    x0: &[f64],
    t: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = system.state_dim();
    let d = system.control_dim();
    check_len("initial state", x0, n)?;
    if hdot.len() < 2 {
        return Err(Error::InvalidInput(
            "control needs at least two grid nodes".into(),
        ));
    }
    for row in hdot {
        check_len("control sample", row, d)?;
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {t}"
        )));
    }
    let steps = hdot.len() - 1;
    let h = t / steps as f64;
    let mut cache = FieldCache::new(system);
    let mut rk = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut u = vec![0.0; d];
    for i in 0..steps {
        let (lo, hi) = (&hdot[i], &hdot[i + 1]);
        let s0 = i as f64 * h;
        let mut rhs = |s: f64, y: &[f64], dy: &mut [f64]| {
            let w = ((s - s0) / h).clamp(0.0, 1.0);
            for j in 0..d {
                u[j] = (1.0 - w) * lo[j] + w * hi[j];
            }
            cache.load_fields(y);
            dy.copy_from_slice(&cache.b);
            for j in 0..d {
                let sj = cache.sigma(j);
                for k in 0..n {
                    dy[k] += u[j] * sj[k];
                }
            }
        };
        rk.step(&mut rhs, s0, &mut x, h);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                time: (i + 1) as f64 * h,
            });
        }
    }
    let energy: Vec<f64> = hdot
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum())
        .collect();
    Ok((x, 0.5 * trapezoid(&energy, h)))
}
