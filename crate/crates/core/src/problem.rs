//! Per-sample evaluation of any model on a configured problem.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorReport};
use crate::fem::qoi::{dot, qoi_load};
use crate::fem::{build_mesh, Discretization, Field, Physics, ProblemSpec, QoiSpec};
use crate::homogenize::{build_coefficient_field, scaled_qoi_global, CoefficientField, MaterialPair, ModelSpec, Moduli};
use crate::media::{
    area_weighted, partition_blocks, sample_microstructure, BlockPartition, Domain, InclusionGenParams, Microstructure,
    DEFAULT_FRACTION_QUADRATURE,
};

/// QoI value and solve cost of one model on one microstructure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub q: f64,
    pub work: u64,
}

/// What model selection and MLMC need from a problem.
pub trait ModelEvaluator: Sync {
    fn num_blocks(&self) -> usize;
    /// Homogenized models below the blockwise one, coarsest first, ending with
    /// the model whose indicators drive block marking.
    fn hierarchy(&self) -> Vec<ModelSpec>;
    fn evaluate(&self, model: &ModelSpec, seed: u64) -> Result<Sample>;
    /// Surrogate sample plus its block indicators (index `id - 1`).
    fn evaluate_with_indicators(&self, model: &ModelSpec, seed: u64) -> Result<(Sample, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub domain: Domain,
    pub block_edge: f64,
    pub inclusions: InclusionGenParams,
    pub material: MaterialPair,
    /// `(segment index, flux or traction)` on Neumann segments.
    pub neumann: Vec<(usize, [f64; 2])>,
    pub qoi: QoiSpec,
    pub h_coarse: f64,
    pub h_fine: f64,
    #[serde(default = "default_q")]
    pub fraction_quadrature: usize,
    /// Price the globally homogenized model by rescaling one fixed solve.
    #[serde(default = "default_true")]
    pub global_shortcut: bool,
}

fn default_q() -> usize {
    DEFAULT_FRACTION_QUADRATURE
}

fn default_true() -> bool {
    true
}

impl ProblemConfig {
    pub fn physics(&self) -> Physics {
        if self.material.is_scalar() {
            Physics::ScalarDiffusion
        } else {
            Physics::PlaneStrain
        }
    }
}

struct ModelDisc {
    disc: Discretization,
    load: Vec<f64>,
    qoi: Vec<f64>,
}

pub struct Problem {
    pub config: ProblemConfig,
    pub partition: Arc<BlockPartition>,
    pub spec: ProblemSpec,
    cache: Mutex<HashMap<ModelSpec, Arc<ModelDisc>>>,
    fixed: OnceLock<(f64, f64)>,
}

/// Coarse models for the scalar problem on a tensor partition: the global
/// model, the nested quadrilateral levels, then the blockwise model. Other
/// problems start directly at the blockwise model.
pub fn coarse_hierarchy(partition: &BlockPartition, pair: &MaterialPair) -> Vec<ModelSpec> {
    if partition.len() == 1 && pair.is_scalar() {
        return vec![ModelSpec::GlobalHomogenized];
    }
    if !pair.is_scalar() || !partition.is_tensor() {
        return vec![ModelSpec::BlockwiseHomogenized];
    }
    let levels = partition.coarse_cell_edges().len();
    let mut out = vec![ModelSpec::GlobalHomogenized];
    out.extend((0..levels).map(|level| ModelSpec::CoarseMeshHomogenized { level }));
    out.push(ModelSpec::BlockwiseHomogenized);
    out
}

impl Problem {
    pub fn new(config: ProblemConfig) -> Result<Problem> {
        config.material.validate()?;
        config.qoi.validate()?;
        let partition = Arc::new(partition_blocks(&config.domain, config.block_edge)?);
        config.inclusions.validate(partition.edge)?;
        let spec = ProblemSpec {
            physics: config.physics(),
            body: None,
            neumann: config.neumann.clone(),
        };
        spec.validate(&config.domain.segments)?;
        if config.fraction_quadrature == 0 {
            return Err(Error::InvalidArgument("fraction quadrature must be positive".into()));
        }
        let problem = Problem {
            config,
            partition,
            spec,
            cache: Mutex::new(HashMap::new()),
            fixed: OnceLock::new(),
        };
        // fail early on inconsistent mesh sizes or QoI regions
        problem.discretization(&ModelSpec::FineScale)?;
        Ok(problem)
    }

    pub fn physics(&self) -> Physics {
        self.config.physics()
    }

    pub fn microstructure(&self, seed: u64) -> Result<Microstructure> {
        sample_microstructure(&self.partition, &self.config.inclusions, seed)
    }

    fn discretization(&self, model: &ModelSpec) -> Result<Arc<ModelDisc>> {
        if let Some(d) = self.cache.lock().unwrap().get(model) {
            return Ok(Arc::clone(d));
        }
        let mesh = Arc::new(build_mesh(&self.partition, model, self.config.h_coarse, self.config.h_fine)?);
        let disc = Discretization::new(Arc::clone(&mesh), self.physics());
        let load = self.spec.load(&mesh);
        let qoi = qoi_load(&mesh, self.physics(), &self.config.qoi)?;
        let md = Arc::new(ModelDisc { disc, load, qoi });
        Ok(Arc::clone(self.cache.lock().unwrap().entry(model.clone()).or_insert(md)))
    }

    pub fn mesh(&self, model: &ModelSpec) -> Result<Arc<crate::fem::Mesh>> {
        Ok(Arc::clone(&self.discretization(model)?.disc.mesh))
    }

    /// Unconstrained dof count of a model's mesh.
    pub fn dofs(&self, model: &ModelSpec) -> Result<u64> {
        Ok(self.discretization(model)?.disc.work_units())
    }

    fn uses_shortcut(&self, model: &ModelSpec) -> bool {
        *model == ModelSpec::GlobalHomogenized && self.config.global_shortcut && self.config.material.is_scalar()
    }

    /// QoI of the global model solved once with the matrix conductivity.
    fn fixed_solution(&self) -> Result<(f64, f64)> {
        if let Some(v) = self.fixed.get() {
            return Ok(*v);
        }
        let MaterialPair::Scalar { kappa_m, .. } = self.config.material else {
            return Err(Error::NotApplicable("no scaling shortcut for elasticity"));
        };
        let md = self.discretization(&ModelSpec::GlobalHomogenized)?;
        let n = md.disc.mesh.num_elements();
        let coeff = CoefficientField::uniform(self.config.material, Moduli::Scalar(kappa_m), n);
        let k = md.disc.assemble(&coeff)?;
        let u = md.disc.solve(&k, &md.load)?;
        let v = (dot(&md.qoi, &u.values), kappa_m);
        Ok(*self.fixed.get_or_init(|| v))
    }

    /// Effective conductivity from the whole-domain inclusion fraction.
    pub fn global_effective(&self, micro: &Microstructure) -> Result<f64> {
        let fr = micro.block_inclusion_fractions(self.config.fraction_quadrature);
        let phi = area_weighted(&self.partition, &fr, self.partition.blocks.iter().map(|b| b.id));
        match self.config.material.effective(phi)? {
            Moduli::Scalar(k) => Ok(k),
            Moduli::Elastic(_) => Err(Error::NotApplicable("no scalar effective coefficient for elasticity")),
        }
    }

    pub fn coefficient(&self, model: &ModelSpec, micro: &Microstructure, mesh: &crate::fem::Mesh) -> Result<CoefficientField> {
        build_coefficient_field(model, micro, mesh, &self.config.material, self.config.fraction_quadrature)
    }

    /// Primal solution of `model` on its own mesh.
    pub fn solve(&self, model: &ModelSpec, micro: &Microstructure) -> Result<(Field, CoefficientField, u64)> {
        let md = self.discretization(model)?;
        let coeff = self.coefficient(model, micro, &md.disc.mesh)?;
        let k = md.disc.assemble(&coeff)?;
        let u = md.disc.solve(&k, &md.load)?;
        Ok((u, coeff, md.disc.work_units()))
    }

    pub fn qoi_of(&self, model: &ModelSpec, field: &Field) -> Result<f64> {
        Ok(dot(&self.discretization(model)?.qoi, &field.values))
    }

    pub fn evaluate_micro(&self, model: &ModelSpec, micro: &Microstructure) -> Result<Sample> {
        if self.uses_shortcut(model) {
            let (q_fix, k_fix) = self.fixed_solution()?;
            let k_eff = self.global_effective(micro)?;
            return Ok(Sample {
                q: scaled_qoi_global(&self.config.material, q_fix, k_fix, k_eff)?,
                work: 1,
            });
        }
        let (u, _, work) = self.solve(model, micro)?;
        Ok(Sample {
            q: self.qoi_of(model, &u)?,
            work,
        })
    }

    /// The global model by an actual solve, bypassing the scaling shortcut.
    pub fn evaluate_direct(&self, model: &ModelSpec, seed: u64) -> Result<Sample> {
        let micro = self.microstructure(seed).map_err(|e| e.at_sample(seed, model))?;
        let (u, _, work) = self.solve(model, &micro).map_err(|e| e.at_sample(seed, model))?;
        Ok(Sample {
            q: self.qoi_of(model, &u)?,
            work,
        })
    }

    /// Surrogate primal and adjoint on the model mesh, the fine coefficient on
    /// that mesh, and the estimator report.
    pub fn estimate_micro(
        &self,
        model: &ModelSpec,
        micro: &Microstructure,
        bounds_s: Option<f64>,
    ) -> Result<(Sample, EstimatorReport)> {
        let md = self.discretization(model)?;
        let mesh = &md.disc.mesh;
        let surr = self.coefficient(model, micro, mesh)?;
        let fine = self.coefficient(&ModelSpec::FineScale, micro, mesh)?;
        let k = md.disc.assemble(&surr)?;
        let u0 = md.disc.solve(&k, &md.load)?;
        let w0 = md.disc.solve(&k, &md.qoi)?;
        let rep = estimate(&u0, &w0, &fine, &surr, self.partition.len(), bounds_s)?;
        let sample = Sample {
            q: dot(&md.qoi, &u0.values),
            work: md.disc.work_units(),
        };
        Ok((sample, rep))
    }
}

impl ModelEvaluator for Problem {
    fn num_blocks(&self) -> usize {
        self.partition.len()
    }

    fn hierarchy(&self) -> Vec<ModelSpec> {
        let mut h = coarse_hierarchy(&self.partition, &self.config.material);
        // with h_coarse equal to the block edge the finest coarse level is the blockwise model
        let same = (self.config.h_coarse - self.partition.edge).abs() <= 1e-9 * self.partition.edge;
        if same && h.len() >= 3 {
            let finest = h.len() - 2;
            if matches!(h[finest], ModelSpec::CoarseMeshHomogenized { .. }) {
                h.remove(finest);
            }
        }
        h
    }

    fn evaluate(&self, model: &ModelSpec, seed: u64) -> Result<Sample> {
        let micro = self.microstructure(seed).map_err(|e| e.at_sample(seed, model))?;
        self.evaluate_micro(model, &micro).map_err(|e| e.at_sample(seed, model))
    }

    fn evaluate_with_indicators(&self, model: &ModelSpec, seed: u64) -> Result<(Sample, Vec<f64>)> {
        let micro = self.microstructure(seed).map_err(|e| e.at_sample(seed, model))?;
        let (mut sample, rep) = self.estimate_micro(model, &micro, None).map_err(|e| e.at_sample(seed, model))?;
        if self.uses_shortcut(model) {
            // keep the pilot QoI consistent with the values MLMC will draw
            sample = self.evaluate_micro(model, &micro).map_err(|e| e.at_sample(seed, model))?;
        }
        Ok((sample, rep.eta_blocks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::media::InclusionGenParams;

    fn small() -> Problem {
        Problem::new(ProblemConfig {
            domain: Domain::heat_rectangle(0.4, 0.2),
            block_edge: 0.05,
            inclusions: InclusionGenParams::bernoulli(0.5, 0.05),
            material: MaterialPair::Scalar { kappa_m: 100.0, kappa_i: 10000.0 },
            neumann: vec![(2, [1600.0, 0.0])],
            qoi: QoiSpec::BlockAverageGradientComponent { region: Rect::new(0.1, 0.05, 0.2, 0.15), axis: 1 },
            h_coarse: 0.05,
            h_fine: 0.0125,
            fraction_quadrature: 32,
            global_shortcut: true,
        })
        .unwrap()
    }

    #[test]
    fn hierarchy_drops_duplicate_level() {
        let p = small();
        assert_eq!(
            p.hierarchy(),
            vec![
                ModelSpec::GlobalHomogenized,
                ModelSpec::CoarseMeshHomogenized { level: 0 },
                ModelSpec::CoarseMeshHomogenized { level: 1 },
                ModelSpec::BlockwiseHomogenized
            ]
        );
    }

    #[test]
    fn shortcut_matches_direct_solve() {
        let p = small();
        for seed in 0..3 {
            let a = p.evaluate(&ModelSpec::GlobalHomogenized, seed).unwrap();
            let b = p.evaluate_direct(&ModelSpec::GlobalHomogenized, seed).unwrap();
            assert_eq!(a.work, 1);
            assert!((a.q - b.q).abs() <= 1e-10 * b.q.abs());
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let p = small();
        let a = p.evaluate(&ModelSpec::FineScale, 11).unwrap();
        let b = p.evaluate(&ModelSpec::FineScale, 11).unwrap();
        assert_eq!(a, b);
    }
}
