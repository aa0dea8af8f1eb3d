//! Verification studies shared by the test suites: manufactured solutions for
//! the discretization, and estimator checks against reference solves on one mesh.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::estimator::{estimate, residual_functional, EstimatorReport};
use crate::fem::qoi::{dot, qoi_load};
use crate::fem::{build_mesh, Discretization, Field, Physics, ProblemSpec};
use crate::geometry::{from_barycentric, Point, Rect, DUNAVANT7};
use crate::homogenize::{CoefficientField, Lame, MaterialPair, ModelSpec, Moduli};
use crate::media::{partition_blocks, Domain};
use crate::problem::Problem;

/// Errors of the manufactured solution on a sequence of uniform meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub h: Vec<f64>,
    pub l2: Vec<f64>,
    pub h1: Vec<f64>,
}

fn rates(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

impl ConvergenceStudy {
    pub fn l2_orders(&self) -> Vec<f64> {
        rates(&self.h, &self.l2)
    }

    pub fn h1_orders(&self) -> Vec<f64> {
        rates(&self.h, &self.h1)
    }
}

const KAPPA: f64 = 3.0;
const LAME: Lame = Lame { lambda: 2.0, mu: 1.0 };

fn exact(p: Point) -> (f64, [f64; 2]) {
    let (sx, cx) = (PI * p.x).sin_cos();
    let (sy, cy) = (PI * p.y).sin_cos();
    (sx * sy, [PI * cx * sy, PI * sx * cy])
}

/// `-div(A grad u) = f` on the unit square with `u = sin(pi x) sin(pi y)`
/// (both displacement components in plane strain) and zero boundary values.
fn body(physics: Physics) -> impl Fn(Point) -> [f64; 2] + Send + Sync {
    move |p| {
        let (sx, cx) = (PI * p.x).sin_cos();
        let (sy, cy) = (PI * p.y).sin_cos();
        let pi2 = PI * PI;
        match physics {
            Physics::ScalarDiffusion => [2.0 * pi2 * KAPPA * sx * sy, 0.0],
            Physics::PlaneStrain => {
                let (l, m) = (LAME.lambda, LAME.mu);
                let f = -(l + m) * pi2 * (cx * cy - sx * sy) + 2.0 * m * pi2 * sx * sy;
                [f, f]
            }
        }
    }
}

/// Solves the manufactured problem on uniform meshes of size `hs`.
pub fn manufactured_study(physics: Physics, hs: &[f64]) -> Result<ConvergenceStudy> {
    let partition = partition_blocks(&Domain::clamped_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0)), 0.5)?;
    let (pair, moduli) = match physics {
        Physics::ScalarDiffusion => (MaterialPair::Scalar { kappa_m: KAPPA, kappa_i: KAPPA }, Moduli::Scalar(KAPPA)),
        Physics::PlaneStrain => (
            MaterialPair::Elastic { matrix: LAME, inclusion: LAME, d: 2 },
            Moduli::Elastic(LAME),
        ),
    };
    let spec = ProblemSpec {
        physics,
        body: Some(Arc::new(body(physics))),
        neumann: Vec::new(),
    };
    let mut out = ConvergenceStudy { h: Vec::new(), l2: Vec::new(), h1: Vec::new() };
    for &h in hs {
        let mesh = Arc::new(build_mesh(&partition, &ModelSpec::FineScale, 0.5, h)?);
        let disc = Discretization::new(Arc::clone(&mesh), physics);
        let coeff = CoefficientField::uniform(pair, moduli, mesh.num_elements());
        let k = disc.assemble(&coeff)?;
        let u = disc.solve(&k, &spec.load(&mesh))?;
        let (l2, h1) = errors(&u);
        out.h.push(h);
        out.l2.push(l2);
        out.h1.push(h1);
    }
    Ok(out)
}

fn errors(u: &Field) -> (f64, f64) {
    let mesh = &u.mesh;
    let nc = u.ncomp;
    let (mut l2, mut h1) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let t = mesh.triangles[e];
        let [a, b, c] = mesh.corners(e);
        let g = &mesh.geom[e];
        for comp in 0..nc {
            let nodal = t.map(|v| u.values[v as usize * nc + comp]);
            let grad = (0..3).fold([0.0, 0.0], |acc, k| {
                [acc[0] + nodal[k] * g.grads[k][0], acc[1] + nodal[k] * g.grads[k][1]]
            });
            for (lam, w) in &DUNAVANT7 {
                let (ue, ge) = exact(from_barycentric(lam, a, b, c));
                let uh: f64 = (0..3).map(|k| lam[k] * nodal[k]).sum();
                l2 += w * g.area * (uh - ue).powi(2);
                h1 += w * g.area * ((grad[0] - ge[0]).powi(2) + (grad[1] - ge[1]).powi(2));
            }
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Surrogate and fine-scale solves of one sample on the fine-scale mesh.
#[derive(Clone, Debug)]
pub struct EstimatorCheck {
    /// `Q(u) - Q(u0)` from the two primal solves.
    pub q_error: f64,
    /// `int (A - A0) grad u0 . grad w` with the fine-scale adjoint `w`.
    pub residual: f64,
    pub report: EstimatorReport,
}

/// Solves `model` and the fine-scale problem for `seed` on the fine-scale mesh
/// and evaluates the estimator there.
pub fn estimator_check(problem: &Problem, model: &ModelSpec, seed: u64, bounds_s: Option<f64>) -> Result<EstimatorCheck> {
    let micro = problem.microstructure(seed)?;
    let mesh = problem.mesh(&ModelSpec::FineScale)?;
    let physics = problem.physics();
    let disc = Discretization::new(Arc::clone(&mesh), physics);
    let fine = problem.coefficient(&ModelSpec::FineScale, &micro, &mesh)?;
    let surr = problem.coefficient(model, &micro, &mesh)?;
    let load = problem.spec.load(&mesh);
    let qoi = qoi_load(&mesh, physics, &problem.config.qoi)?;
    let k_fine = disc.assemble(&fine)?;
    let k_surr = disc.assemble(&surr)?;
    let u = disc.solve(&k_fine, &load)?;
    let w = disc.solve(&k_fine, &qoi)?;
    let u0 = disc.solve(&k_surr, &load)?;
    let w0 = disc.solve(&k_surr, &qoi)?;
    Ok(EstimatorCheck {
        q_error: dot(&qoi, &u.values) - dot(&qoi, &u0.values),
        residual: residual_functional(&u0, &w, &fine, &surr)?,
        report: estimate(&u0, &w0, &fine, &surr, problem.partition.len(), bounds_s)?,
    })
}
