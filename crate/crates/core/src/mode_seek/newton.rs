use nalgebra::{DVector, SymmetricEigen};

use super::{
    classify_stationary, log_density_derivatives, ms_step, ModeStatus, ModeTrace, MsConfig,
};
use crate::data::log_sum_exp;
use crate::error::Result;
use crate::kde::KdeModel;

const MAX_REJECTIONS: usize = 20;

fn log_density(model: &KdeModel, x: &[f64]) -> f64 {
    let logs: Vec<f64> = (0..model.len())
        .map(|n| model.weights()[n].ln() - 0.5 * model.scaled_sq_dist(x, n))
        .collect();
    log_sum_exp(&logs)
}

/// Mean-shift iterations until the Hessian is negative definite, then
/// modified Newton steps on `log p` with eigenvalue flooring and halving
/// backtracking. A trial step must raise the density and stay in the
/// concave region; twenty rejected trials fall back to a plain mean-shift
/// step. Stops when `||grad p|| < tol p(x)`.
pub fn find_mode_newton(model: &KdeModel, x0: &[f64], cfg: &MsConfig) -> Result<ModeTrace> {
    cfg.validate()?;
    model.require_gaussian("Newton mode finding")?;
    model.data().check_point(x0)?;
    let mut x = x0.to_vec();
    let mut path = cfg.record_path.then(|| vec![x.clone()]);
    let mut newton = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (grad, hess_log) = log_density_derivatives(model, &x)?;
        if grad.norm() < cfg.tol {
            let status = classify_stationary(model, &x)?;
            return Ok(ModeTrace {
                start: x0.to_vec(),
                mode: x,
                iterations,
                status,
                path,
            });
        }
        if !newton {
            newton = is_concave(&grad, &hess_log);
        }
        iterations += 1;
        let accepted = if newton {
            newton_step(model, &x, &grad, hess_log)
        } else {
            None
        };
        x = match accepted {
            Some(next) => next,
            None => ms_step(model, &x)?,
        };
        if let Some(p) = path.as_mut() {
            p.push(x.clone());
        }
    }
    Ok(ModeTrace {
        start: x0.to_vec(),
        mode: x,
        iterations,
        status: ModeStatus::MaxIter,
        path,
    })
}

/// Negative definite `H / p`, the region where Newton steps are trusted.
fn is_concave(grad: &DVector<f64>, hess_log: &nalgebra::DMatrix<f64>) -> bool {
    let mut h_over_p = hess_log.clone();
    h_over_p.ger(1.0, grad, grad, 1.0);
    h_over_p.symmetric_eigenvalues().iter().all(|v| *v < 0.0)
}

fn newton_step(
    model: &KdeModel,
    x: &[f64],
    grad: &DVector<f64>,
    hess_log: nalgebra::DMatrix<f64>,
) -> Option<Vec<f64>> {
    let floor = -1e-8 * hess_log.norm();
    let eig = SymmetricEigen::new(hess_log);
    let v = &eig.eigenvectors;
    let inv: DVector<f64> = eig.eigenvalues.map(|l| 1.0 / l.min(floor));
    // direction = -H^-1 g with the floored spectrum
    let coords = v.transpose() * grad;
    let direction = -(v * coords.component_mul(&inv));
    let base = log_density(model, x);
    // Cap the step at one bandwidth so a step cannot hop into another basin.
    let mut t = (model.bandwidth().min() / direction.norm()).min(1.0);
    for _ in 0..MAX_REJECTIONS {
        let trial: Vec<f64> = x
            .iter()
            .zip(direction.iter())
            .map(|(a, d)| a + t * d)
            .collect();
        if log_density(model, &trial) >= base && stays_concave(model, &trial) {
            return Some(trial);
        }
        t *= 0.5;
    }
    None
}

fn stays_concave(model: &KdeModel, x: &[f64]) -> bool {
    match log_density_derivatives(model, x) {
        Ok((g, h)) => is_concave(&g, &h),
        Err(_) => false,
    }
}
