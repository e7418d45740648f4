//! Loss evaluations on a two-dimensional slice of parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::MultiDomainProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub u: f64,
    pub v: f64,
    pub loss_total: f64,
    pub domain_losses: Vec<f64>,
    /// False when any loss at this cell was non-finite.
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub resolution: usize,
    pub half_width: f64,
    pub dir1: Vec<f64>,
    pub dir2: Vec<f64>,
    /// Row-major over `v`, then `u`.
    pub cells: Vec<GridCell>,
}

impl LandscapeGrid {
    pub fn cell(&self, iu: usize, iv: usize) -> &GridCell {
        &self.cells[iv * self.resolution + iu]
    }
}

/// Two orthonormal directions drawn from the generator.
pub fn random_plane(rng: &mut SeededRng, dim: usize) -> Result<(ParamVec, ParamVec)> {
    if dim < 2 {
        return Err(invalid("a plane needs at least two dimensions"));
    }
    loop {
        let a = rng.normal_vec(dim);
        let b = rng.normal_vec(dim);
        if let Ok(pair) = orthonormalize(&a, &b) {
            return Ok(pair);
        }
    }
}

fn orthonormalize(a: &ParamVec, b: &ParamVec) -> Result<(ParamVec, ParamVec)> {
    let e1 = a.normalized(1e-12).ok_or_else(|| invalid("first direction is zero"))?;
    let b_perp = b.axpy(-e1.dot(b)?, &e1)?;
    let e2 = b_perp
        .normalized(1e-10 * b.norm2().max(1e-300))
        .ok_or_else(|| invalid("directions are parallel"))?;
    Ok((e1, e2))
}

/// Evaluates every domain loss and the total at `center + u·e1 + v·e2` over a square grid.
pub fn landscape_grid(
    problem: &MultiDomainProblem,
    center: &ParamVec,
    dir1: &ParamVec,
    dir2: &ParamVec,
    half_width: f64,
    resolution: usize,
) -> Result<LandscapeGrid> {
    if resolution < 2 {
        return Err(invalid("grid resolution must be >= 2"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(invalid("half width must be positive"));
    }
    for v in [center, dir1, dir2] {
        if v.dim() != problem.dim() {
            return Err(Error::DimensionMismatch { expected: problem.dim(), found: v.dim() });
        }
    }
    let (e1, e2) = orthonormalize(dir1, dir2)?;
    let coord = |i: usize| -half_width + 2.0 * half_width * i as f64 / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for iv in 0..resolution {
        for iu in 0..resolution {
            let (u, v) = (coord(iu), coord(iv));
            let point: Vec<f64> =
                center.iter().zip(e1.iter()).zip(e2.iter()).map(|((c, a), b)| c + u * a + v * b).collect();
            let point = ParamVec::from_vec_unchecked(point);
            let domain_losses: Vec<f64> = problem.domains().iter().map(|d| d.loss(&point)).collect();
            let finite = domain_losses.iter().all(|l| l.is_finite());
            let loss_total = if finite { crate::objectives::mean(&domain_losses) } else { f64::NAN };
            cells.push(GridCell { u, v, loss_total, domain_losses, finite });
        }
    }
    Ok(LandscapeGrid {
        resolution,
        half_width,
        dir1: e1.into_vec(),
        dir2: e2.into_vec(),
        cells,
    })
}
