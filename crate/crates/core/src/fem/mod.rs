//! Linear finite elements for scalar diffusion and plane-strain elasticity.

pub mod mesh;
pub mod qoi;
pub mod solver;
pub mod space;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{from_barycentric, Point, DUNAVANT7};
use crate::homogenize::CoefficientField;
use crate::media::BoundaryKind;

pub use mesh::{build_mesh, BoundaryFacet, ElementGeom, Hanging, Mesh};
pub use qoi::{qoi_load, QoiSpec};
pub use solver::{pcg, CsrMatrix, SolverSettings};
pub use space::{AssemblyPlan, DofMap, Physics};

pub type BodyLoad = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Loads and boundary data of the boundary value problem. Dirichlet data are
/// homogeneous; Neumann data are constant per tagged segment.
#[derive(Clone)]
pub struct ProblemSpec {
    pub physics: Physics,
    pub body: Option<BodyLoad>,
    /// `(segment index, flux or traction)`; scalar problems read the first entry.
    pub neumann: Vec<(usize, [f64; 2])>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("physics", &self.physics)
            .field("body", &self.body.as_ref().map(|_| "<fn>"))
            .field("neumann", &self.neumann)
            .finish()
    }
}

impl ProblemSpec {
    pub fn validate(&self, segments: &[crate::media::BoundarySegment]) -> Result<()> {
        for &(k, _) in &self.neumann {
            match segments.get(k) {
                Some(s) if s.kind == BoundaryKind::Neumann => {}
                Some(s) => {
                    return Err(Error::InvalidArgument(format!(
                        "Neumann data on segment {k}, which is tagged {:?}",
                        s.kind
                    )))
                }
                None => return Err(Error::InvalidArgument(format!("no boundary segment {k}"))),
            }
        }
        Ok(())
    }

    /// Full-dof load vector `F(v)`.
    pub fn load(&self, mesh: &Mesh) -> Vec<f64> {
        let ncomp = self.physics.components();
        let mut f = vec![0.0; mesh.num_vertices() * ncomp];
        for facet in &mesh.boundary {
            let Some(seg) = facet.segment else { continue };
            for &(k, val) in &self.neumann {
                if k == seg {
                    let [a, b] = facet.vertices;
                    let len = mesh.vertices[a as usize].dist(mesh.vertices[b as usize]);
                    for v in [a, b] {
                        for c in 0..ncomp {
                            f[v as usize * ncomp + c] += 0.5 * len * val[c];
                        }
                    }
                }
            }
        }
        if let Some(body) = &self.body {
            for e in 0..mesh.num_elements() {
                let [a, b, c] = mesh.corners(e);
                let t = mesh.triangles[e];
                let area = mesh.geom[e].area;
                for (l, w) in &DUNAVANT7 {
                    let val = body(from_barycentric(l, a, b, c));
                    for k in 0..3 {
                        for comp in 0..ncomp {
                            f[t[k] as usize * ncomp + comp] += w * area * l[k] * val[comp];
                        }
                    }
                }
            }
        }
        f
    }
}

/// A discrete field: full-dof values (`vertex * ncomp + component`).
#[derive(Clone, Debug)]
pub struct Field {
    pub mesh: Arc<Mesh>,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn same_mesh(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

/// Everything about one mesh that does not depend on the coefficients.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub physics: Physics,
    pub dofs: DofMap,
    pub plan: AssemblyPlan,
    pub settings: SolverSettings,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>, physics: Physics) -> Discretization {
        let dofs = DofMap::new(&mesh, physics);
        let plan = AssemblyPlan::new(&mesh, &dofs, physics);
        Discretization {
            mesh,
            physics,
            dofs,
            plan,
            settings: SolverSettings::default(),
        }
    }

    pub fn check(&self, coeff: &CoefficientField) -> Result<()> {
        if coeff.len() != self.mesh.num_elements() {
            return Err(Error::MeshMismatch);
        }
        let scalar = self.physics == Physics::ScalarDiffusion;
        if coeff.pair.is_scalar() != scalar {
            return Err(Error::NotApplicable("material pair does not match the physics"));
        }
        Ok(())
    }

    pub fn assemble(&self, coeff: &CoefficientField) -> Result<CsrMatrix> {
        self.check(coeff)?;
        if self.dofs.dirichlet.iter().all(|d| !d) {
            return Err(Error::SingularSystem);
        }
        Ok(self.plan.assemble(coeff))
    }

    /// Solves `K x = load` on the free dofs and expands to a full field.
    pub fn solve(&self, matrix: &CsrMatrix, load: &[f64]) -> Result<Field> {
        let rhs = self.dofs.condense(load);
        let (x, _) = pcg(matrix, &rhs, &self.settings)?;
        Ok(Field {
            mesh: Arc::clone(&self.mesh),
            ncomp: self.physics.components(),
            values: self.dofs.expand(&x),
        })
    }

    pub fn work_units(&self) -> u64 {
        self.dofs.nfree as u64
    }
}

pub fn solve_primal(mesh: &Arc<Mesh>, coeff: &CoefficientField, prob: &ProblemSpec) -> Result<Field> {
    let disc = Discretization::new(Arc::clone(mesh), prob.physics);
    let k = disc.assemble(coeff)?;
    disc.solve(&k, &prob.load(mesh))
}

/// Adjoint solution: `B(v, w) = Q(v)` for all `v`; `B` is symmetric, so this is
/// the primal solve with the QoI load.
pub fn solve_adjoint(mesh: &Arc<Mesh>, coeff: &CoefficientField, physics: Physics, qoi: &QoiSpec) -> Result<Field> {
    let disc = Discretization::new(Arc::clone(mesh), physics);
    let k = disc.assemble(coeff)?;
    disc.solve(&k, &qoi_load(mesh, physics, qoi)?)
}

pub fn evaluate_qoi(field: &Field, qoi: &QoiSpec) -> Result<f64> {
    let physics = if field.ncomp == 1 { Physics::ScalarDiffusion } else { Physics::PlaneStrain };
    let l = qoi_load(&field.mesh, physics, qoi)?;
    Ok(qoi::dot(&l, &field.values))
}

/// Number of unconstrained dofs.
pub fn work_units(mesh: &Mesh, physics: Physics) -> u64 {
    DofMap::new(mesh, physics).nfree as u64
}
