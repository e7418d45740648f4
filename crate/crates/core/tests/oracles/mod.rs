//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the solver under test for the quantity it checks.

#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dgsam_core::objectives::DomainObjective;
use dgsam_core::{ParamVec, Result};
use nalgebra::DMatrix;

/// Wraps an objective and counts gradient calls.
pub struct Counting {
    pub inner: Arc<dyn DomainObjective>,
    pub calls: Arc<AtomicU64>,
}

impl Counting {
    pub fn wrap(inner: Arc<dyn DomainObjective>, calls: Arc<AtomicU64>) -> Arc<dyn DomainObjective> {
        Arc::new(Self { inner, calls })
    }
}

impl DomainObjective for Counting {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        self.inner.loss(theta)
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(theta)
    }

    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.inner.hvp(theta, v)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn shifted(theta: &[f64], dir: &[f64], h: f64) -> ParamVec {
    ParamVec::new(theta.iter().zip(dir).map(|(t, d)| t + h * d).collect()).unwrap()
}

/// Central-difference gradient, coordinate by coordinate.
pub fn fd_gradient(obj: &dyn DomainObjective, theta: &ParamVec) -> Vec<f64> {
    let t = theta.as_slice();
    let d = t.len();
    (0..d)
        .map(|i| {
            let h = 1e-5 * t[i].abs().max(1.0);
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            (obj.loss(&shifted(t, &e, h)) - obj.loss(&shifted(t, &e, -h))) / (2.0 * h)
        })
        .collect()
}

/// Central difference of the analytic gradient along `v`.
pub fn fd_hvp(obj: &dyn DomainObjective, theta: &ParamVec, v: &[f64]) -> Vec<f64> {
    let t = theta.as_slice();
    let h = 1e-5 * norm(t).max(1.0) / norm(v).max(1e-300);
    let gp = obj.gradient(&shifted(t, v, h)).unwrap();
    let gm = obj.gradient(&shifted(t, v, -h)).unwrap();
    gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// `‖a − b‖ / max(‖b‖, 1e-6)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-6)
}

/// Sharpness of a two-dimensional loss by exhaustive search of the disk.
///
/// Uses a square lattice of about `n` points clipped to the disk plus `n / 10` boundary points.
pub fn disk_grid_sharpness(obj: &dyn DomainObjective, theta: &ParamVec, rho: f64, n: usize) -> f64 {
    assert_eq!(theta.dim(), 2);
    let t = theta.as_slice();
    let base = obj.loss(theta);
    let side = ((n as f64) * 4.0 / std::f64::consts::PI).sqrt().ceil() as usize;
    let mut best = 0.0_f64;
    let mut eval = |dx: f64, dy: f64| {
        let p = ParamVec::new(vec![t[0] + dx, t[1] + dy]).unwrap();
        best = best.max(obj.loss(&p) - base);
    };
    for a in 0..side {
        for b in 0..side {
            let dx = rho * (2.0 * a as f64 / (side - 1) as f64 - 1.0);
            let dy = rho * (2.0 * b as f64 / (side - 1) as f64 - 1.0);
            if dx * dx + dy * dy <= rho * rho {
                eval(dx, dy);
            }
        }
    }
    let ring = (n / 10).max(64);
    for k in 0..ring {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / ring as f64;
        eval(rho * phi.cos(), rho * phi.sin());
    }
    best
}

pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).filter(|(qi, _)| **qi > 0.0).map(|(qi, pi)| qi * (qi / pi).ln()).sum()
}

pub fn tv(q: &[f64], p: &[f64]) -> f64 {
    0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `W1` between two distributions on the real line via the CDF formula.
pub fn w1_line(x: &[f64], q: &[f64], p: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let (mut fq, mut fp, mut total) = (0.0, 0.0, 0.0);
    for w in idx.windows(2) {
        fq += q[w[0]];
        fp += p[w[0]];
        total += (fq - fp).abs() * (x[w[1]] - x[w[0]]);
    }
    total
}

/// Maximizes `Σ q_j ℓ_j` over the 3-simplex subject to `feasible(q)`.
///
/// A 0.001 lattice locates the optimum, then three rounds of local lattices
/// around the incumbent shrink the step by 50 each round.
pub fn simplex_brute_force(losses: &[f64; 3], feasible: impl Fn(&[f64]) -> bool) -> f64 {
    let value = |q: &[f64]| q.iter().zip(losses).map(|(a, b)| a * b).sum::<f64>();
    let mut best = f64::NEG_INFINITY;
    let mut arg = [0.0; 2];
    let consider = |a: f64, b: f64, best: &mut f64, arg: &mut [f64; 2]| {
        if a < 0.0 || b < 0.0 || a + b > 1.0 {
            return;
        }
        let q = [a, b, 1.0 - a - b];
        if feasible(&q) {
            let v = value(&q);
            if v > *best {
                *best = v;
                *arg = [a, b];
            }
        }
    };
    let n = 1000;
    for i in 0..=n {
        for j in 0..=(n - i) {
            consider(i as f64 / n as f64, j as f64 / n as f64, &mut best, &mut arg);
        }
    }
    let mut step = 1.0 / n as f64;
    for _ in 0..3 {
        let center = arg;
        let fine = step / 50.0;
        for i in -100i32..=100 {
            for j in -100i32..=100 {
                consider(center[0] + i as f64 * fine, center[1] + j as f64 * fine, &mut best, &mut arg);
            }
        }
        step = fine;
    }
    best
}

/// `T_min`, `ρ̄`, `γ̄` computed directly from the stated formulas.
pub fn convergence_calculator(l: f64, m: [f64; 4], s: f64, eps: f64) -> (f64, f64, f64) {
    let [m1, m2, m3, m4] = m;
    let e2 = eps * eps;
    let lead = 12.0 * m4 / (e2 * s);
    let mut t_arms = vec![1.0];
    if m1 > 0.0 {
        t_arms.push(24.0 * m1 * m4 * s * l / e2);
    }
    if m2 > 0.0 {
        t_arms.push(4.0 * m2 * l);
    }
    if m3 > 0.0 {
        t_arms.push(12.0 * m3 * s * l);
    }
    let mut t = (lead * t_arms.iter().cloned().fold(0.0, f64::max)).ceil();
    let gamma_at = |t: f64| {
        let mut arms = vec![1.0];
        if m1 > 0.0 {
            arms.push(1.0 / (s * (2.0 * m1 * l * t).sqrt()));
        }
        if m2 > 0.0 {
            arms.push(1.0 / (4.0 * m2 * l));
        }
        if m3 > 0.0 {
            arms.push(e2 / (12.0 * m3 * s * l));
        }
        arms.into_iter().fold(f64::INFINITY, f64::min)
    };
    let mut gamma = gamma_at(t);
    for _ in 0..3 {
        let need = (lead / gamma).ceil();
        if need <= t {
            break;
        }
        t = need;
        gamma = gamma_at(t);
    }
    let rho = [1.0, e2 / 12.0, eps / (2.0 * (6.0 * l).sqrt())].into_iter().fold(f64::INFINITY, f64::min) / (s * l);
    (t, rho, gamma)
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}
