//! Small tanh MLP with softmax cross-entropy on synthetic 2-D domains.
//!
//! Parameters are flattened layer by layer: the weight matrix (row-major,
//! `out × in`) followed by the bias. Hessian-vector products use the
//! forward-over-reverse R-operator, so they are exact up to rounding.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DomainObjective, MultiDomainProblem};
use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub num_domains: usize,
    pub points_per_domain: usize,
    /// Distance between the two class means.
    pub separation: f64,
    pub noise: f64,
    /// Rotation of domain `i` is `i · rotation_step` radians.
    pub rotation_step: f64,
    /// Domain `i` is translated by `i · shift_step` along the first axis.
    pub shift_step: f64,
    /// Generate one extra held-out domain further along the rotation sequence.
    pub unseen_domain: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_domains: 3,
            points_per_domain: 500,
            separation: 3.0,
            noise: 0.8,
            rotation_step: 0.5,
            shift_step: 0.5,
            unseen_domain: false,
        }
    }
}

/// Labeled points of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub input_dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl DomainData {
    pub fn new(input_dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || inputs.len() != input_dim * labels.len() {
            return Err(invalid("inputs must hold input_dim values per label"));
        }
        if labels.is_empty() {
            return Err(invalid("a domain needs at least one point"));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "domain inputs".into() });
        }
        Ok(Self { input_dim, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.input_dim..(n + 1) * self.input_dim]
    }

    pub fn label(&self, n: usize) -> usize {
        self.labels[n]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomainDataset {
    pub config: DatasetConfig,
    pub domains: Vec<Arc<DomainData>>,
    pub unseen: Option<Arc<DomainData>>,
}

impl SyntheticDomainDataset {
    pub fn generate(config: DatasetConfig, rng: &mut SeededRng) -> Result<Self> {
        if config.num_domains == 0 || config.points_per_domain == 0 {
            return Err(invalid("dataset needs at least one domain and one point per domain"));
        }
        if !(config.noise >= 0.0 && config.separation.is_finite() && config.noise.is_finite()) {
            return Err(invalid("noise must be non-negative and finite"));
        }
        let domains = (0..config.num_domains)
            .map(|i| blob_domain(&config, i, rng).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let unseen = if config.unseen_domain {
            Some(Arc::new(blob_domain(&config, config.num_domains, rng)?))
        } else {
            None
        };
        Ok(Self { config, domains, unseen })
    }

    /// Training domains as a multi-domain problem.
    pub fn problem(&self, arch: &MlpArchitecture) -> Result<MultiDomainProblem> {
        let domains: Vec<Arc<dyn DomainObjective>> = self
            .domains
            .iter()
            .map(|d| MlpObjective::new(arch.clone(), d.clone()).map(|o| Arc::new(o) as Arc<dyn DomainObjective>))
            .collect::<Result<_>>()?;
        MultiDomainProblem::new(domains)
    }

    pub fn unseen_objective(&self, arch: &MlpArchitecture) -> Result<Option<MlpObjective>> {
        self.unseen.as_ref().map(|d| MlpObjective::new(arch.clone(), d.clone())).transpose()
    }
}

fn blob_domain(config: &DatasetConfig, index: usize, rng: &mut SeededRng) -> Result<DomainData> {
    let phi = index as f64 * config.rotation_step;
    let (s, c) = phi.sin_cos();
    let shift = index as f64 * config.shift_step;
    let half = config.separation / 2.0;
    let n = config.points_per_domain;
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let label = k % 2;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        inputs.push(sign * half * c + shift + config.noise * rng.normal());
        inputs.push(sign * half * s + config.noise * rng.normal());
        labels.push(label);
    }
    DomainData::new(2, inputs, labels)
}

/// Layer widths, input first and class count last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layers: Vec<usize>,
}

impl Default for MlpArchitecture {
    fn default() -> Self {
        Self { layers: vec![2, 16, 16, 2] }
    }
}

impl MlpArchitecture {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(invalid("architecture needs at least two positive layer widths"));
        }
        if *layers.last().unwrap() < 2 {
            return Err(invalid("output layer needs at least two classes"));
        }
        Ok(Self { layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layers.last().unwrap()
    }

    /// Offsets of each layer's weights and biases in the flat vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.layers.len() - 1);
        let mut pos = 0;
        for w in self.layers.windows(2) {
            out.push((pos, pos + w[0] * w[1]));
            pos += w[0] * w[1] + w[1];
        }
        out
    }

    /// Gaussian weights with variance `1/fan_in`, zero biases.
    pub fn init(&self, rng: &mut SeededRng) -> ParamVec {
        let mut v = Vec::with_capacity(self.num_params());
        for w in self.layers.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            v.extend((0..w[0] * w[1]).map(|_| scale * rng.normal()));
            v.extend(std::iter::repeat_n(0.0, w[1]));
        }
        ParamVec::from_vec_unchecked(v)
    }
}

/// Mean cross-entropy of the MLP over a domain or a subset of it.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    arch: MlpArchitecture,
    offsets: Vec<(usize, usize)>,
    data: Arc<DomainData>,
    indices: Option<Vec<usize>>,
}

struct Forward {
    /// Activations `a_0 = x, a_1, …, a_{L-1}`.
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
    loss: f64,
}

impl MlpObjective {
    pub fn new(arch: MlpArchitecture, data: Arc<DomainData>) -> Result<Self> {
        if data.input_dim != arch.input_dim() {
            return Err(Error::DimensionMismatch { expected: arch.input_dim(), found: data.input_dim });
        }
        if let Some(bad) = data.labels.iter().find(|l| **l >= arch.num_classes()) {
            return Err(invalid(format!("label {bad} out of range for {} classes", arch.num_classes())));
        }
        let offsets = arch.offsets();
        Ok(Self { arch, offsets, data, indices: None })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn data(&self) -> &DomainData {
        &self.data
    }

    fn samples(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        match &self.indices {
            Some(ix) => Box::new(ix.iter().copied()),
            None => Box::new(0..self.data.len()),
        }
    }

    fn count(&self) -> usize {
        self.indices.as_ref().map_or(self.data.len(), Vec::len)
    }

    fn weights<'a>(&self, theta: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let (w, b) = self.offsets[l];
        let out = self.arch.layers[l + 1];
        (&theta[w..b], &theta[b..b + out])
    }

    fn forward(&self, theta: &[f64], n: usize) -> Forward {
        let depth = self.arch.layers.len() - 1;
        let mut acts = vec![self.data.input(n).to_vec()];
        let mut logits = Vec::new();
        for l in 0..depth {
            let (w, b) = self.weights(theta, l);
            let a = &acts[l];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(r, bias)| bias + dot(&w[r * a.len()..(r + 1) * a.len()], a))
                .collect();
            if l + 1 < depth {
                acts.push(z.iter().map(|v| v.tanh()).collect());
            } else {
                logits = z;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let y = self.data.label(n);
        let loss = total.ln() + max - logits[y];
        Forward { acts, probs, loss }
    }

    /// Class probabilities for every sample in the domain.
    pub fn softmax_outputs(&self, theta: &ParamVec) -> Result<Vec<Vec<f64>>> {
        self.check_dim(theta)?;
        Ok(self.samples().map(|n| self.forward(theta.as_slice(), n).probs).collect())
    }

    /// Fraction of samples whose most probable class is the label.
    pub fn accuracy(&self, theta: &ParamVec) -> Result<f64> {
        self.check_dim(theta)?;
        let correct = self
            .samples()
            .filter(|&n| {
                let p = self.forward(theta.as_slice(), n).probs;
                let arg = (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best });
                arg == self.data.label(n)
            })
            .count();
        Ok(correct as f64 / self.count() as f64)
    }

    fn check_dim(&self, theta: &ParamVec) -> Result<()> {
        if theta.dim() != self.arch.num_params() {
            return Err(Error::DimensionMismatch { expected: self.arch.num_params(), found: theta.dim() });
        }
        Ok(())
    }

    /// Backward pass for one sample, accumulating `scale · ∇ℓ_n` into `grad`.
    /// With `dir`, also accumulates `scale · ∇²ℓ_n · dir` into `rgrad`.
    fn backward(&self, theta: &[f64], n: usize, scale: f64, grad: &mut [f64], rop: Option<(&[f64], &mut [f64])>) {
        let depth = self.arch.layers.len() - 1;
        let fw = self.forward(theta, n);
        let y = self.data.label(n);
        let mut delta: Vec<f64> = fw.probs.iter().enumerate().map(|(k, p)| scale * (p - f64::from(k == y))).collect();

        let (dir, rgrad) = match rop {
            Some((d, r)) => (Some(d), Some(r)),
            None => (None, None),
        };

        // forward R-pass: R(a_l) and R(z_L)
        let mut r_acts: Vec<Vec<f64>> = Vec::new();
        let mut r_delta: Vec<f64> = Vec::new();
        if let Some(v) = dir {
            r_acts.push(vec![0.0; self.arch.layers[0]]);
            let mut r_logits = Vec::new();
            for l in 0..depth {
                let (w, _) = self.weights(theta, l);
                let (vw, vb) = self.weights(v, l);
                let a = &fw.acts[l];
                let ra = &r_acts[l];
                let k = a.len();
                let rz: Vec<f64> = (0..vb.len())
                    .map(|r| vb[r] + dot(&vw[r * k..(r + 1) * k], a) + dot(&w[r * k..(r + 1) * k], ra))
                    .collect();
                if l + 1 < depth {
                    let next = &fw.acts[l + 1];
                    r_acts.push(rz.iter().zip(next).map(|(r, a)| (1.0 - a * a) * r).collect());
                } else {
                    r_logits = rz;
                }
            }
            let mean = dot(&fw.probs, &r_logits);
            r_delta = fw.probs.iter().zip(&r_logits).map(|(p, rz)| scale * p * (rz - mean)).collect();
        }

        let mut rgrad = rgrad;
        for l in (0..depth).rev() {
            let (wo, bo) = self.offsets[l];
            let a = &fw.acts[l];
            let k = a.len();
            for (r, d) in delta.iter().enumerate() {
                for c in 0..k {
                    grad[wo + r * k + c] += d * a[c];
                }
                grad[bo + r] += d;
            }
            if let (Some(rg), Some(v)) = (rgrad.as_deref_mut(), dir) {
                let ra = &r_acts[l];
                for r in 0..delta.len() {
                    for c in 0..k {
                        rg[wo + r * k + c] += r_delta[r] * a[c] + delta[r] * ra[c];
                    }
                    rg[bo + r] += r_delta[r];
                }
                if l > 0 {
                    let (w, _) = self.weights(theta, l);
                    let (vw, _) = self.weights(v, l);
                    let wt_delta = transpose_mul(w, &delta, k);
                    let vwt_delta = transpose_mul(vw, &delta, k);
                    let wt_rdelta = transpose_mul(w, &r_delta, k);
                    r_delta = (0..k)
                        .map(|c| {
                            let s = 1.0 - a[c] * a[c];
                            (vwt_delta[c] + wt_rdelta[c]) * s - 2.0 * wt_delta[c] * a[c] * ra[c]
                        })
                        .collect();
                }
            }
            if l > 0 {
                let (w, _) = self.weights(theta, l);
                let back = transpose_mul(w, &delta, k);
                delta = back.iter().zip(a).map(|(b, a)| b * (1.0 - a * a)).collect();
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Wᵀ d` for row-major `W` with `cols` columns.
fn transpose_mul(w: &[f64], d: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, dr) in d.iter().enumerate() {
        for (o, wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += wv * dr;
        }
    }
    out
}

impl DomainObjective for MlpObjective {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        if self.check_dim(theta).is_err() {
            return f64::NAN;
        }
        let total: f64 = self.samples().map(|n| self.forward(theta.as_slice(), n).loss).sum();
        total / self.count() as f64
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let scale = 1.0 / self.count() as f64;
        let mut g = vec![0.0; self.dim()];
        for n in self.samples() {
            self.backward(theta.as_slice(), n, scale, &mut g, None);
        }
        ParamVec::from_vec_checked(g, "MLP gradient")
    }

    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        self.check_dim(v)?;
        let scale = 1.0 / self.count() as f64;
        let mut g = vec![0.0; self.dim()];
        let mut hv = vec![0.0; self.dim()];
        for n in self.samples() {
            self.backward(theta.as_slice(), n, scale, &mut g, Some((v.as_slice(), &mut hv)));
        }
        ParamVec::from_vec_checked(hv, "MLP Hessian-vector product")
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }

    fn data_size(&self) -> Option<usize> {
        Some(self.count())
    }

    fn subset(&self, indices: &[usize]) -> Option<Box<dyn DomainObjective + '_>> {
        let base: Vec<usize> = self.samples().collect();
        let picked: Option<Vec<usize>> = indices.iter().map(|i| base.get(*i).copied()).collect();
        let picked = picked.filter(|p| !p.is_empty())?;
        Some(Box::new(Self { indices: Some(picked), ..self.clone() }))
    }
}
