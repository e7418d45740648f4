//! Differentiable per-domain objectives and the multi-domain problem built from them.
//!
//! A [`MultiDomainProblem`] holds `S` domain objectives over one shared
//! parameter space. Its total loss is the arithmetic mean of the domain
//! losses, accumulated left to right so repeated evaluations are bit-identical.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::numeric::{default_fd_step, ParamVec, SeededRng};

pub mod fake_flat;
pub mod mlp;
pub mod quadratic;
pub mod stat_loss;

pub use fake_flat::{build_fake_flat, FakeFlatLandscape, FakeFlatParams};
pub use mlp::{DatasetConfig, DomainData, MlpArchitecture, MlpObjective, SyntheticDomainDataset};
pub use quadratic::{QuadraticDomain, QuadraticDomainEnsemble};
pub use stat_loss::{FiniteSupportStatLoss, LossConstants, PointLoss};

/// One domain's loss `L_i(theta)` with its derivatives.
///
/// `loss` may return a non-finite value; callers that aggregate domains turn
/// that into an error naming the domain.
pub trait DomainObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &ParamVec) -> f64;

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec>;

    /// Hessian-vector product. Defaults to a central difference of gradients.
    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        fd_hvp(self, theta, v)
    }

    /// Whether `hvp` is computed analytically rather than by differencing.
    fn has_analytic_hvp(&self) -> bool {
        false
    }

    /// Number of samples backing this objective, `None` for analytic objectives.
    fn data_size(&self) -> Option<usize> {
        None
    }

    /// Restriction of a dataset-backed objective to the given sample indices.
    fn subset(&self, _indices: &[usize]) -> Option<Box<dyn DomainObjective + '_>> {
        None
    }

    /// Dense Hessian assembled column by column from `hvp`, then symmetrized.
    fn hessian(&self, theta: &ParamVec) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.hvp(theta, &ParamVec::basis(d, j))?;
            for i in 0..d {
                h[(i, j)] = col[i];
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// Central-difference Hessian-vector product `(g(θ+hv) - g(θ-hv)) / 2h`.
pub fn fd_hvp<O: DomainObjective + ?Sized>(
    obj: &O,
    theta: &ParamVec,
    v: &ParamVec,
) -> Result<ParamVec> {
    let vn = v.norm2();
    if vn == 0.0 {
        return Ok(ParamVec::zeros(theta.dim()));
    }
    let h = default_fd_step(theta) / vn;
    let gp = obj.gradient(&theta.axpy(h, v)?)?;
    let gm = obj.gradient(&theta.axpy(-h, v)?)?;
    gp.sub(&gm)?.scale(0.5 / h)
}

/// A per-domain minibatch drawn for one optimizer iteration.
pub enum Minibatch<'a> {
    /// Analytic objective evaluated in full; there is no data to subsample.
    Full(&'a dyn DomainObjective),
    Subset { indices: Vec<usize>, objective: Box<dyn DomainObjective + 'a> },
}

impl<'a> Minibatch<'a> {
    pub fn objective(&self) -> &dyn DomainObjective {
        match self {
            Minibatch::Full(o) => *o,
            Minibatch::Subset { objective, .. } => objective.as_ref(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Minibatch::Full(_))
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match self {
            Minibatch::Full(_) => None,
            Minibatch::Subset { indices, .. } => Some(indices),
        }
    }
}

/// Draws a uniform without-replacement minibatch of `batch_size` samples.
///
/// Analytic objectives ignore `batch_size` and come back whole, flagged deterministic.
pub fn sample_domain_minibatch<'a>(
    objective: &'a dyn DomainObjective,
    rng: &mut SeededRng,
    batch_size: usize,
) -> Result<Minibatch<'a>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be >= 1"));
    }
    let Some(n) = objective.data_size() else {
        return Ok(Minibatch::Full(objective));
    };
    if batch_size > n {
        return Err(Error::BatchTooLarge { batch_size, domain_size: n });
    }
    let mut indices = rng.sample_without_replacement(n, batch_size);
    indices.sort_unstable();
    let sub = objective
        .subset(&indices)
        .ok_or_else(|| invalid("objective reports a data size but cannot be subset"))?;
    Ok(Minibatch::Subset { indices, objective: sub })
}

/// `S >= 1` domain objectives sharing one parameter space.
#[derive(Clone)]
pub struct MultiDomainProblem {
    domains: Vec<Arc<dyn DomainObjective>>,
    dim: usize,
}

impl std::fmt::Debug for MultiDomainProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiDomainProblem")
            .field("num_domains", &self.domains.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl MultiDomainProblem {
    pub fn new(domains: Vec<Arc<dyn DomainObjective>>) -> Result<Self> {
        let first = domains.first().ok_or_else(|| invalid("a problem needs at least one domain"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(invalid("domain dimension must be >= 1"));
        }
        for d in &domains {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: d.dim() });
            }
        }
        Ok(Self { domains, dim })
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self, i: usize) -> &dyn DomainObjective {
        self.domains[i].as_ref()
    }

    pub fn domains(&self) -> &[Arc<dyn DomainObjective>] {
        &self.domains
    }

    fn check_dim(&self, theta: &ParamVec) -> Result<()> {
        if theta.dim() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: theta.dim() })
        }
    }

    pub fn domain_loss(&self, i: usize, theta: &ParamVec) -> Result<f64> {
        self.check_dim(theta)?;
        let l = self.domains[i].loss(theta);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFiniteDomain { domain: i, quantity: "loss" })
        }
    }

    pub fn domain_losses(&self, theta: &ParamVec) -> Result<Vec<f64>> {
        (0..self.num_domains()).map(|i| self.domain_loss(i, theta)).collect()
    }

    pub fn domain_gradient(&self, i: usize, theta: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        self.domains[i]
            .gradient(theta)
            .map_err(|_| Error::NonFiniteDomain { domain: i, quantity: "gradient" })
    }

    pub fn domain_gradients(&self, theta: &ParamVec) -> Result<Vec<ParamVec>> {
        (0..self.num_domains()).map(|i| self.domain_gradient(i, theta)).collect()
    }

    /// Mean of the domain losses.
    pub fn total_loss(&self, theta: &ParamVec) -> Result<f64> {
        let losses = self.domain_losses(theta)?;
        Ok(mean(&losses))
    }

    /// Mean of the domain gradients.
    pub fn total_gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        ParamVec::mean(&self.domain_gradients(theta)?)
    }

    /// Hessian-vector product of the total loss.
    pub fn total_hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let parts = self
            .domains
            .iter()
            .map(|d| d.hvp(theta, v))
            .collect::<Result<Vec<_>>>()?;
        ParamVec::mean(&parts)
    }
}

/// Total loss `L_s(theta)`.
pub fn total_loss(problem: &MultiDomainProblem, theta: &ParamVec) -> Result<f64> {
    problem.total_loss(theta)
}

/// Total gradient `∇L_s(theta)`.
pub fn total_gradient(problem: &MultiDomainProblem, theta: &ParamVec) -> Result<ParamVec> {
    problem.total_gradient(theta)
}

/// Left-to-right arithmetic mean.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

/// The total loss of a problem viewed as a single objective.
pub struct TotalObjective<'a>(pub &'a MultiDomainProblem);

impl DomainObjective for TotalObjective<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        self.0.total_loss(theta).unwrap_or(f64::NAN)
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.0.total_gradient(theta)
    }

    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.0.total_hvp(theta, v)
    }

    fn has_analytic_hvp(&self) -> bool {
        self.0.domains.iter().all(|d| d.has_analytic_hvp())
    }
}
