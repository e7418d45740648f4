//! Exact maximization of a quadratic model over a Euclidean ball.
//!
//! Solves `max_{‖ε‖≤ρ} bᵀε + ½ εᵀHε` through the eigendecomposition of `H`
//! and a bisection on the secular equation, including the hard case.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct TrustRegionSolution {
    pub step: DVector<f64>,
    pub value: f64,
    /// Multiplier of the ball constraint; zero for an interior solution.
    pub multiplier: f64,
    pub hard_case: bool,
}

fn model(b: &DVector<f64>, h: &DMatrix<f64>, e: &DVector<f64>) -> f64 {
    b.dot(e) + 0.5 * e.dot(&(h * e))
}

pub fn maximize_quadratic_on_ball(b: &DVector<f64>, h: &DMatrix<f64>, rho: f64) -> Result<TrustRegionSolution> {
    let d = b.len();
    if h.nrows() != d || h.ncols() != d {
        return Err(invalid("Hessian and gradient dimensions differ"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("radius must be finite and >= 0"));
    }
    if rho == 0.0 {
        return Ok(TrustRegionSolution { step: DVector::zeros(d), value: 0.0, multiplier: 0.0, hard_case: false });
    }
    // maximizing bᵀε + ½εᵀHε is minimizing gᵀε + ½εᵀAε with g = −b, A = −H
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(-sym);
    let lam = eig.eigenvalues.clone();
    let q = eig.eigenvectors.clone();
    let g_hat = q.transpose() * (-b);
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = lam.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let eig_tol = 1e-12 * scale;
    let gnorm = g_hat.norm();
    let grad_tol = 1e-14 * gnorm.max(1e-300);

    let step_norm = |shift: f64| -> f64 {
        g_hat.iter().zip(lam.iter()).map(|(gi, li)| (gi / (li + shift)).powi(2)).sum::<f64>().sqrt()
    };
    let step_at = |shift: f64| -> DVector<f64> {
        let coeffs = DVector::from_iterator(d, g_hat.iter().zip(lam.iter()).map(|(gi, li)| -gi / (li + shift)));
        &q * coeffs
    };

    // interior solution: A positive definite with an unconstrained minimizer inside the ball
    if lam_min > eig_tol && step_norm(0.0) <= rho {
        let step = step_at(0.0);
        let value = model(b, h, &step);
        return Ok(TrustRegionSolution { step, value, multiplier: 0.0, hard_case: false });
    }

    let lo = (-lam_min).max(0.0);
    let bottom: Vec<usize> = (0..d).filter(|&i| lam[i] <= lam_min + eig_tol).collect();
    let orthogonal_to_bottom = bottom.iter().all(|&i| g_hat[i].abs() <= grad_tol.max(1e-300));

    if orthogonal_to_bottom {
        // norm of the pseudo-inverse step at the smallest admissible shift
        let mut partial = DVector::zeros(d);
        for i in 0..d {
            if !bottom.contains(&i) {
                partial[i] = -g_hat[i] / (lam[i] + lo);
            }
        }
        let pnorm = partial.norm();
        if pnorm <= rho && lam_min <= eig_tol {
            let tau = (rho * rho - pnorm * pnorm).max(0.0).sqrt();
            partial[bottom[0]] += tau;
            let step = &q * partial;
            let value = model(b, h, &step);
            return Ok(TrustRegionSolution { step, value, multiplier: lo, hard_case: true });
        }
    }

    // ‖ε(shift)‖ decreases in shift; at lo + ‖g‖/ρ it is at most ρ
    let mut a = lo;
    let mut z = lo + gnorm / rho + eig_tol;
    for _ in 0..400 {
        let mid = 0.5 * (a + z);
        if mid <= a || mid >= z {
            break;
        }
        if step_norm(mid) > rho {
            a = mid;
        } else {
            z = mid;
        }
    }
    let mut step = step_at(z);
    // remove the bisection's residual gap to the boundary
    let n = step.norm();
    if n > 0.0 {
        step *= rho / n;
    }
    let value = model(b, h, &step);
    Ok(TrustRegionSolution { step, value, multiplier: z, hard_case: false })
}
