//! Small dense Levenberg-Marquardt driver with a numeric Jacobian, sized for
//! the 3-4 parameter fits in this crate.

use crate::error::{Error, Result};
use crate::linalg::{invert_spd, solve_spd, Mat};
use crate::real::Real;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<R> {
    pub max_iter: usize,
    pub ftol: R,
    pub xtol: R,
    pub lambda0: R,
}

impl<R: Real> Default for LmOptions<R> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: R::of(1e-12),
            xtol: R::of(1e-10),
            lambda0: R::of(1e-3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit<R> {
    pub params: Vec<R>,
    pub ssq: R,
    pub iterations: usize,
    /// Parameter covariance ssq/(m−n)·(JᵀJ)⁻¹ when m > n and JᵀJ invertible.
    pub covariance: Option<Mat<R>>,
}

fn sum_sq<R: Real>(r: &[R]) -> R {
    r.iter().fold(R::zero(), |acc, &x| acc + x * x)
}

/// Minimize ‖r(p)‖² over p, starting from `p0`.
pub fn least_squares<R: Real, F>(
    mut residuals: F,
    n_resid: usize,
    p0: &[R],
    opts: LmOptions<R>,
) -> Result<LmFit<R>>
where
    F: FnMut(&[R], &mut [R]) -> Result<()>,
{
    let n_par = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![R::zero(); n_resid];
    residuals(&p, &mut r)?;
    let mut ssq = sum_sq(&r);
    let mut lambda = opts.lambda0;
    let mut jac = vec![vec![R::zero(); n_par]; n_resid];
    let mut r_hi = vec![R::zero(); n_resid];
    let mut r_lo = vec![R::zero(); n_resid];
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        // central-difference Jacobian
        for j in 0..n_par {
            let h = R::of(1e-6) * p[j].abs().max(R::one());
            let keep = p[j];
            p[j] = keep + h;
            residuals(&p, &mut r_hi)?;
            p[j] = keep - h;
            residuals(&p, &mut r_lo)?;
            p[j] = keep;
            for i in 0..n_resid {
                jac[i][j] = (r_hi[i] - r_lo[i]) / (R::two() * h);
            }
        }
        let mut normal = Mat::zeros(n_par);
        let mut grad = vec![R::zero(); n_par];
        for i in 0..n_resid {
            for a in 0..n_par {
                grad[a] = grad[a] + jac[i][a] * r[i];
                for b in a..n_par {
                    normal.add_to(a, b, jac[i][a] * jac[i][b]);
                }
            }
        }
        for a in 0..n_par {
            for b in 0..a {
                normal.set(a, b, normal.get(b, a));
            }
        }

        let grad_small = grad.iter().all(|g| g.abs() < R::of(1e-14) * (ssq + R::one()));
        if grad_small {
            break;
        }

        let mut stepped = false;
        while lambda < R::of(1e12) {
            let mut damped = normal.clone();
            for a in 0..n_par {
                let d = normal.get(a, a).max(R::of(1e-30));
                damped.add_to(a, a, lambda * d);
            }
            let rhs: Vec<R> = grad.iter().map(|&g| -g).collect();
            let delta = match solve_spd(&damped, &rhs) {
                Ok(d) => d,
                Err(_) => {
                    lambda = lambda * R::of(8.0);
                    continue;
                }
            };
            let trial: Vec<R> = p.iter().zip(&delta).map(|(&a, &d)| a + d).collect();
            let mut r_trial = vec![R::zero(); n_resid];
            if residuals(&trial, &mut r_trial).is_err() {
                lambda = lambda * R::of(8.0);
                continue;
            }
            let ssq_trial = sum_sq(&r_trial);
            if ssq_trial.is_finite() && ssq_trial < ssq {
                let step = delta.iter().fold(R::zero(), |m, d| m.max(d.abs()));
                let improved = ssq - ssq_trial;
                p = trial;
                r = r_trial;
                ssq = ssq_trial;
                lambda = (lambda * R::of(0.25)).max(R::of(1e-12));
                stepped = true;
                if improved <= opts.ftol * ssq.max(R::of(1e-300)) || step <= opts.xtol {
                    iterations = opts.max_iter; // converged, leave the outer loop
                }
                break;
            }
            lambda = lambda * R::of(8.0);
        }
        if !stepped {
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
    }

    if !ssq.is_finite() {
        return Err(Error::FitDiverged {
            iterations,
            ssq: ssq.to_f64_lossy(),
        });
    }

    // covariance at the solution
    let covariance = if n_resid > n_par {
        let mut normal = Mat::zeros(n_par);
        for j in 0..n_par {
            let h = R::of(1e-6) * p[j].abs().max(R::one());
            let keep = p[j];
            p[j] = keep + h;
            residuals(&p, &mut r_hi)?;
            p[j] = keep - h;
            residuals(&p, &mut r_lo)?;
            p[j] = keep;
            for i in 0..n_resid {
                jac[i][j] = (r_hi[i] - r_lo[i]) / (R::two() * h);
            }
        }
        for i in 0..n_resid {
            for a in 0..n_par {
                for b in a..n_par {
                    normal.add_to(a, b, jac[i][a] * jac[i][b]);
                }
            }
        }
        for a in 0..n_par {
            for b in 0..a {
                normal.set(a, b, normal.get(b, a));
            }
        }
        let dof = R::of((n_resid - n_par) as f64);
        invert_spd(&normal)
            .ok()
            .map(|inv| inv.scale(ssq / dof))
    } else {
        None
    };

    Ok(LmFit {
        params: p,
        ssq,
        iterations,
        covariance,
    })
}
