//! Builds the configured problem and resolves evaluation points.

use std::path::Path;
use std::sync::Arc;

use dgsam_core::objectives::{
    build_fake_flat, DomainObjective, FakeFlatLandscape, MlpArchitecture, MultiDomainProblem, QuadraticDomain,
    QuadraticDomainEnsemble, SyntheticDomainDataset,
};
use dgsam_core::{ParamVec, SeededRng};
use serde::{Deserialize, Serialize};

use crate::config::{InitSpec, ProblemSpec};
use crate::error::{HarnessError, Result};
use crate::output::{num, OutputSink};

pub enum Family {
    FakeFlat(FakeFlatLandscape),
    Quadratic { anchor: ParamVec, problem: MultiDomainProblem },
    Mlp { dataset: SyntheticDomainDataset, arch: MlpArchitecture, problem: MultiDomainProblem },
}

pub struct BuiltProblem {
    pub family: Family,
    pub unseen: Option<Arc<dyn DomainObjective>>,
}

/// Final parameters of one run, as written by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub optimizer: String,
    pub seed: u64,
    pub iterations: usize,
    pub grad_evals: u64,
    pub status: String,
    pub final_theta: Vec<f64>,
}

impl BuiltProblem {
    pub fn build(spec: &ProblemSpec) -> Result<Self> {
        let built = match spec {
            ProblemSpec::FakeFlat { landscape } => {
                Self { family: Family::FakeFlat(build_fake_flat(*landscape)?), unseen: None }
            }
            ProblemSpec::Quadratic { dim, domains, lambda_min, lambda_max, seed } => {
                if *dim == 0 || *domains == 0 || !(0.0 <= *lambda_min && lambda_min <= lambda_max) {
                    return Err(HarnessError::Config(
                        "quadratic problem needs dim, domains >= 1 and 0 <= lambda_min <= lambda_max".into(),
                    ));
                }
                let mut rng = SeededRng::new(*seed);
                let anchor = rng.normal_vec(*dim);
                let ens = QuadraticDomainEnsemble::random_shared_minimum(
                    &mut rng,
                    anchor.clone(),
                    *domains,
                    *lambda_min,
                    *lambda_max,
                )?;
                Self { family: Family::Quadratic { anchor, problem: ens.problem() }, unseen: None }
            }
            ProblemSpec::Diagonal { eigenvalues } => {
                if eigenvalues.is_empty() {
                    return Err(HarnessError::Config("diagonal problem needs at least one eigenvalue".into()));
                }
                let q: Arc<dyn DomainObjective> = Arc::new(QuadraticDomain::from_diag(eigenvalues));
                let problem = MultiDomainProblem::new(vec![q])?;
                Self { family: Family::Quadratic { anchor: ParamVec::zeros(eigenvalues.len()), problem }, unseen: None }
            }
            ProblemSpec::Mlp { dataset, layers, data_seed } => {
                let arch = MlpArchitecture::new(layers.clone())?;
                let data = SyntheticDomainDataset::generate(dataset.clone(), &mut SeededRng::new(*data_seed))?;
                let problem = data.problem(&arch)?;
                let unseen = data.unseen_objective(&arch)?.map(|o| Arc::new(o) as Arc<dyn DomainObjective>);
                Self { family: Family::Mlp { dataset: data, arch, problem }, unseen }
            }
        };
        Ok(built)
    }

    pub fn problem(&self) -> &MultiDomainProblem {
        match &self.family {
            Family::FakeFlat(ff) => ff.problem(),
            Family::Quadratic { problem, .. } | Family::Mlp { problem, .. } => problem,
        }
    }

    pub fn num_domains(&self) -> usize {
        self.problem().num_domains()
    }

    /// Resolves a point; random choices draw from `seed`.
    pub fn point(&self, spec: &InitSpec, seed: u64, config_dir: &Path) -> Result<ParamVec> {
        let dim = self.problem().dim();
        let theta = match (spec, &self.family) {
            (InitSpec::Default, Family::FakeFlat(_)) => {
                let mut rng = SeededRng::new(seed);
                ParamVec::new(vec![rng.uniform_range(-4.0, 4.0), rng.uniform_range(-4.0, 4.0)])?
            }
            (InitSpec::Default, Family::Quadratic { anchor, .. }) => {
                anchor.add(&SeededRng::with_stream(seed, 1).unit_sphere(dim))?
            }
            (InitSpec::Default, Family::Mlp { arch, .. }) => arch.init(&mut SeededRng::with_stream(seed, 1)),
            (InitSpec::Uniform { low, high }, _) => {
                if !(low < high) {
                    return Err(HarnessError::Config("uniform init needs low < high".into()));
                }
                let mut rng = SeededRng::new(seed);
                ParamVec::new((0..dim).map(|_| rng.uniform_range(*low, *high)).collect())?
            }
            (InitSpec::Point { values }, _) => ParamVec::from_slice(values)?,
            (InitSpec::FlatMinimum, Family::FakeFlat(ff)) => ff.r1.clone(),
            (InitSpec::FakeMinimum, Family::FakeFlat(ff)) => ff.r2.clone(),
            (InitSpec::FlatMinimum | InitSpec::FakeMinimum, _) => {
                return Err(HarnessError::Config("flat and fake minima exist only for the fake_flat family".into()))
            }
            (InitSpec::Checkpoint { path }, _) => {
                let path = config_dir.join(path);
                let text = std::fs::read(&path)
                    .map_err(|e| HarnessError::Config(format!("checkpoint {}: {e}", path.display())))?;
                let cp: Checkpoint = serde_json::from_slice(&text)
                    .map_err(|e| HarnessError::Config(format!("checkpoint {}: {e}", path.display())))?;
                ParamVec::new(cp.final_theta)?
            }
        };
        if theta.dim() != dim {
            return Err(HarnessError::Config(format!("point has {} parameters, problem has {dim}", theta.dim())));
        }
        Ok(theta)
    }

    /// Writes `dataset.csv` for dataset-backed problems; the held-out domain takes the next index.
    pub fn export_dataset(&self, sink: &mut OutputSink) -> Result<()> {
        let Family::Mlp { dataset, .. } = &self.family else { return Ok(()) };
        let d = dataset.domains.first().map_or(0, |x| x.input(0).len());
        let mut header = vec!["domain".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.push("label".into());
        let mut rows = Vec::new();
        for (i, data) in dataset.domains.iter().chain(dataset.unseen.iter()).enumerate() {
            for n in 0..data.len() {
                let mut row = vec![i.to_string()];
                row.extend(data.input(n).iter().map(|v| num(*v)));
                row.push(data.label(n).to_string());
                rows.push(row);
            }
        }
        sink.write_csv("dataset.csv", &header, &rows)?;
        Ok(())
    }
}
