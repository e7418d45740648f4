//! Worst-case expected loss over a divergence ball around a finite-support distribution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::ParamVec;
use crate::objectives::FiniteSupportStatLoss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// `KL(q‖p)`, candidate first.
    Kl,
    /// `½ Σ |q_j − p_j|`.
    Tv,
    /// Optimal transport cost under the ground metric.
    W1,
}

impl Divergence {
    pub const ALL: [Divergence; 3] = [Divergence::Kl, Divergence::Tv, Divergence::W1];

    pub fn name(self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::Tv => "tv",
            Divergence::W1 => "w1",
        }
    }
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "tv" => Ok(Divergence::Tv),
            "w1" | "wasserstein" => Ok(Divergence::W1),
            other => Err(invalid(format!("unknown divergence {other:?}"))),
        }
    }
}

/// Radius in parameter space whose sharpness dominates a divergence ball of size `delta`.
pub fn rho_of_delta(m: f64, g: f64, l_x: f64, divergence: Divergence, delta: f64) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(invalid(format!("G must be positive, got {g}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must be finite and >= 0, got {delta}")));
    }
    let (num, what) = match divergence {
        Divergence::Kl => (m * (delta / 2.0).sqrt(), m),
        Divergence::Tv => (m * delta, m),
        Divergence::W1 => (l_x * delta, l_x),
    };
    if !(what >= 0.0 && what.is_finite()) {
        return Err(invalid("bound constants must be finite and >= 0"));
    }
    Ok(num / g)
}

/// Divergence ball `{q : Div(q‖p) ≤ δ}` around a domain's base distribution.
#[derive(Debug, Clone)]
pub struct UncertaintySet {
    pub base: FiniteSupportStatLoss,
    pub divergence: Divergence,
    pub delta: f64,
    /// Ground metric between atoms, used by W1.
    pub metric: DMatrix<f64>,
}

impl UncertaintySet {
    /// Uses the Euclidean metric between atoms.
    pub fn new(base: FiniteSupportStatLoss, divergence: Divergence, delta: f64) -> Result<Self> {
        let metric = base.ground_metric();
        Self::with_metric(base, divergence, delta, metric)
    }

    pub fn with_metric(
        base: FiniteSupportStatLoss,
        divergence: Divergence,
        delta: f64,
        metric: DMatrix<f64>,
    ) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(invalid(format!("delta must be finite and >= 0, got {delta}")));
        }
        let m = base.num_atoms();
        if metric.nrows() != m || metric.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, found: metric.nrows() });
        }
        if metric.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("ground metric entries must be finite and >= 0"));
        }
        Ok(Self { base, divergence, delta, metric })
    }

    /// `Div(q‖p)`; W1 is computed exactly by the transport solver.
    pub fn divergence_of(&self, q: &[f64]) -> Result<f64> {
        let p = self.base.probs();
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
        }
        Ok(match self.divergence {
            Divergence::Kl => kl(q, p),
            Divergence::Tv => 0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            Divergence::W1 => transport_cost(p, q, &self.metric),
        })
    }

    pub fn contains(&self, q: &[f64]) -> Result<bool> {
        Ok(self.divergence_of(q)? <= self.delta + 1e-10)
    }
}

pub(crate) fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// Exact `W1(p, q)`: successive shortest paths on the dense transportation problem.
pub(crate) fn transport_cost(p: &[f64], q: &[f64], metric: &DMatrix<f64>) -> f64 {
    let m = p.len();
    // min-cost flow with successive shortest paths on residual capacities
    let mut supply: Vec<f64> = p.to_vec();
    let mut demand: Vec<f64> = q.to_vec();
    let mut flow = DMatrix::<f64>::zeros(m, m);
    let mut cost = 0.0;
    let eps = 1e-15;
    loop {
        let remaining: f64 = supply.iter().filter(|s| **s > eps).sum();
        if remaining <= 1e-13 {
            break;
        }
        // Bellman–Ford over nodes 0..m (sources) and m..2m (sinks)
        let n = 2 * m + 2;
        let (src, snk) = (2 * m, 2 * m + 1);
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n];
        dist[src] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for i in 0..m {
                if supply[i] > eps && dist[src] < dist[i] {
                    dist[i] = dist[src];
                    prev[i] = Some(src);
                    changed = true;
                }
            }
            for i in 0..m {
                if dist[i].is_finite() {
                    for j in 0..m {
                        let nd = dist[i] + metric[(i, j)];
                        if nd < dist[m + j] - 1e-15 {
                            dist[m + j] = nd;
                            prev[m + j] = Some(i);
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..m {
                if dist[m + j].is_finite() {
                    for i in 0..m {
                        if flow[(i, j)] > eps {
                            let nd = dist[m + j] - metric[(i, j)];
                            if nd < dist[i] - 1e-15 {
                                dist[i] = nd;
                                prev[i] = Some(m + j);
                                changed = true;
                            }
                        }
                    }
                    if demand[j] > eps && dist[m + j] < dist[snk] - 1e-15 {
                        dist[snk] = dist[m + j];
                        prev[snk] = Some(m + j);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[snk].is_finite() {
            break;
        }
        // walk back to find the bottleneck
        let mut path = vec![snk];
        let mut node = snk;
        while let Some(pn) = prev[node] {
            path.push(pn);
            node = pn;
            if node == src || path.len() > 4 * n {
                break;
            }
        }
        path.reverse();
        let mut amount = f64::INFINITY;
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == src {
                amount = amount.min(supply[b]);
            } else if b == snk {
                amount = amount.min(demand[a - m]);
            } else if a < m && b >= m {
                // forward arcs are uncapacitated
            } else if a >= m && b < m {
                amount = amount.min(flow[(b, a - m)]);
            }
        }
        if !(amount > eps) || !amount.is_finite() {
            break;
        }
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == src {
                supply[b] -= amount;
            } else if b == snk {
                demand[a - m] -= amount;
            } else if a < m && b >= m {
                flow[(a, b - m)] += amount;
                cost += amount * metric[(a, b - m)];
            } else if a >= m && b < m {
                flow[(b, a - m)] -= amount;
                cost -= amount * metric[(b, a - m)];
            }
        }
    }
    cost
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub value: f64,
    /// Achieving distribution over the base atoms.
    pub distribution: Vec<f64>,
    /// Divergence of the achieving distribution from the base.
    pub divergence: f64,
}

/// `sup_{q ∈ U} E_q[ℓ(θ, ·)]` and an achieving `q`.
pub fn worst_case_risk(uset: &UncertaintySet, theta: &ParamVec) -> Result<WorstCase> {
    let losses = uset.base.pointwise_losses(theta)?;
    let p = uset.base.probs();
    let q = if uset.delta == 0.0 {
        p.to_vec()
    } else {
        match uset.divergence {
            Divergence::Kl => kl_tilt(&losses, p, uset.delta)?,
            Divergence::Tv => tv_greedy(&losses, p, uset.delta),
            Divergence::W1 => w1_dual(&losses, p, &uset.metric, uset.delta).distribution,
        }
    };
    let value = q.iter().zip(&losses).map(|(a, b)| a * b).sum();
    let divergence = match uset.divergence {
        Divergence::W1 if uset.delta > 0.0 => w1_dual(&losses, p, &uset.metric, uset.delta).cost,
        _ => uset.divergence_of(&q)?,
    };
    Ok(WorstCase { value, distribution: q, divergence })
}

/// Exponential tilting `q ∝ p·exp(βℓ)` with `β` chosen so `KL(q‖p) = δ`.
fn kl_tilt(losses: &[f64], p: &[f64], delta: f64) -> Result<Vec<f64>> {
    let live: Vec<usize> = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
    let top = live.iter().map(|&j| losses[j]).fold(f64::NEG_INFINITY, f64::max);
    let spread = live.iter().map(|&j| (losses[j] - top).abs()).fold(0.0, f64::max);
    let tie = 1e-14 * top.abs().max(spread).max(1.0);
    let argmax: Vec<usize> = live.iter().copied().filter(|&j| losses[j] >= top - tie).collect();
    let mass: f64 = argmax.iter().map(|&j| p[j]).sum();
    // the tilt approaches p restricted to the argmax set, at KL = −ln p(A)
    if -mass.ln() <= delta {
        let mut q = vec![0.0; p.len()];
        for &j in &argmax {
            q[j] = p[j] / mass;
        }
        return Ok(q);
    }
    let tilt = |beta: f64| -> (Vec<f64>, f64) {
        let w: Vec<f64> =
            (0..p.len()).map(|j| if p[j] > 0.0 { p[j] * (beta * (losses[j] - top)).exp() } else { 0.0 }).collect();
        let z: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|v| v / z).collect();
        let k = kl(&q, p);
        (q, k)
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / spread.max(1e-300);
    let mut expansions = 0;
    while tilt(hi).1 < delta {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 2000 || !hi.is_finite() {
            return Err(Error::Bisection { lo, hi });
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tilt(mid).1 <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (q, k) = tilt(lo);
    if (k - delta).abs() > 1e-9 * delta.max(1.0) && tilt(hi).1 - k > 1e-9 {
        return Err(Error::Bisection { lo, hi });
    }
    Ok(q)
}

/// Moves `min(δ, 1 − p_max)` mass from the lowest-loss atoms onto one argmax atom.
fn tv_greedy(losses: &[f64], p: &[f64], delta: f64) -> Vec<f64> {
    let m = p.len();
    let best = (0..m).fold(0, |b, j| if losses[j] > losses[b] { j } else { b });
    let mut q = p.to_vec();
    let mut budget = delta.min(1.0 - p[best]).max(0.0);
    let mut order: Vec<usize> = (0..m).filter(|&j| j != best).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    for j in order {
        if budget <= 0.0 {
            break;
        }
        let take = q[j].min(budget);
        q[j] -= take;
        q[best] += take;
        budget -= take;
    }
    q
}

pub(crate) struct TransportSolution {
    pub distribution: Vec<f64>,
    pub cost: f64,
}

/// Exact W1 worst case through the dual `min_λ≥0 λδ + Σ_i p_i max_j (ℓ_j − λ d_ij)`.
///
/// The dual is piecewise linear; its minimum sits at a breakpoint. The primal plan
/// mixes the least-cost and most-cost maximizer choices at that breakpoint so the
/// transport budget is met exactly.
pub(crate) fn w1_dual(losses: &[f64], p: &[f64], d: &DMatrix<f64>, delta: f64) -> TransportSolution {
    let m = p.len();
    let dual = |lambda: f64| -> f64 {
        lambda * delta
            + (0..m)
                .filter(|&i| p[i] > 0.0)
                .map(|i| p[i] * (0..m).map(|j| losses[j] - lambda * d[(i, j)]).fold(f64::NEG_INFINITY, f64::max))
                .sum::<f64>()
    };
    let mut candidates = vec![0.0];
    for i in 0..m {
        if p[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            for k in (j + 1)..m {
                let dd = d[(i, j)] - d[(i, k)];
                if dd != 0.0 {
                    let lam = (losses[j] - losses[k]) / dd;
                    if lam > 0.0 && lam.is_finite() {
                        candidates.push(lam);
                    }
                }
            }
        }
    }
    let (lambda, _) = candidates
        .iter()
        .map(|&l| (l, dual(l)))
        .fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });

    let scale = losses.iter().map(|v| v.abs()).fold(1.0, f64::max) * (1.0 + lambda);
    let mut low = vec![0usize; m];
    let mut high = vec![0usize; m];
    for i in 0..m {
        let vals: Vec<f64> = (0..m).map(|j| losses[j] - lambda * d[(i, j)]).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..m).filter(|&j| vals[j] >= top - 1e-12 * scale).collect();
        low[i] = *ties.iter().min_by(|&&a, &&b| d[(i, a)].total_cmp(&d[(i, b)])).unwrap();
        high[i] = *ties.iter().max_by(|&&a, &&b| d[(i, a)].total_cmp(&d[(i, b)])).unwrap();
    }
    let cost_of = |choice: &[usize]| -> f64 { (0..m).map(|i| p[i] * d[(i, choice[i])]).sum() };
    let (c_low, c_high) = (cost_of(&low), cost_of(&high));
    // weight on the high-cost plan that spends exactly δ
    let alpha = if c_high > c_low { ((delta - c_low) / (c_high - c_low)).clamp(0.0, 1.0) } else { 0.0 };
    let mut q = vec![0.0; m];
    for i in 0..m {
        q[low[i]] += (1.0 - alpha) * p[i];
        q[high[i]] += alpha * p[i];
    }
    TransportSolution { distribution: q, cost: (1.0 - alpha) * c_low + alpha * c_high }
}
