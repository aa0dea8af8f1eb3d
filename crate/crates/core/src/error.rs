use thiserror::Error;

use crate::homogenize::ModelSpec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("block edge {edge} does not tile extent {extent}")]
    NonTilingEdge { edge: f64, extent: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid inclusion parameters: {0}")]
    InvalidParams(String),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("unknown region: block {0}")]
    UnknownRegion(usize),
    #[error("invalid volume fractions ({phi_m}, {phi_i})")]
    InvalidFractions { phi_m: f64, phi_i: f64 },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("Poisson ratio {0} outside (-1, 0.5)")]
    InvalidPoisson(f64),
    #[error("mesh does not resolve model {0}")]
    MeshSpecMismatch(ModelSpec),
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("mesh sizes are not nested: {0}")]
    NonNestedSizes(String),
    #[error("boundary facet ({0}, {1}) - ({2}, {3}) has no boundary tag")]
    UntaggedBoundary(f64, f64, f64, f64),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("singular system: no Dirichlet degrees of freedom")]
    SingularSystem,
    #[error("quantity of interest region is not resolved by the mesh: {0}")]
    RegionUnresolved(String),
    #[error("fields or coefficients live on different meshes")]
    MeshMismatch,
    #[error("degenerate combination u0 + theta w0 in the two-sided bounds")]
    DegenerateCombination,
    #[error("bias {bias} is not below the tolerance {tol}")]
    BiasExceedsTolerance { bias: f64, tol: f64 },
    #[error("{available} models available, {requested} levels requested")]
    NotEnoughModels { available: usize, requested: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample with seed {seed:#018x} on model {model} failed: {source}")]
    Sample {
        seed: u64,
        model: String,
        #[source]
        source: Box<Error>,
    },
    #[error("level {level}, sample {index}: {source}")]
    Level {
        level: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_sample(self, seed: u64, model: &ModelSpec) -> Error {
        Error::Sample {
            seed,
            model: model.to_string(),
            source: Box::new(self),
        }
    }

    /// True if the failure originates in the linear solver.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::SolverDiverged { .. } | Error::SingularSystem => true,
            Error::Sample { source, .. } | Error::Level { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}
