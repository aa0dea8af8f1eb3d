//! Goal-oriented estimates of the modeling error `Q(u) - Q(u0)`.
//!
//! All integrands are evaluated per element and per material eigenvalue: the
//! fine coefficient enters through its element arithmetic and harmonic means,
//! which makes the element integrals exact for the staircase coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::space::mode_products;
use crate::fem::{Field, Physics};
use crate::homogenize::CoefficientField;
use crate::stats::pairwise_sum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eta_low: f64,
    pub eta_upp: f64,
    pub s: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub zeta_upp: f64,
    pub xi_upp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub eta_est: f64,
    /// Indicator of block `id` at index `id - 1`.
    pub eta_blocks: Vec<f64>,
    pub bounds: Option<Bounds>,
    pub samples: usize,
}

/// Element-integrated quantities needed by every estimator.
#[derive(Clone, Copy, Debug, Default)]
struct Integrals {
    /// `R_g(v) = int (A - A0) grad g . grad v` for (u,u), (u,w), (w,w).
    r: [f64; 3],
    /// Fine energy products `B(., .)` for (u,u), (u,w), (w,w).
    b: [f64; 3],
    /// `int A I0 grad . I0 grad` for (u,u), (u,w), (w,w).
    z: [f64; 3],
}

fn physics_of(f: &Field) -> Physics {
    if f.ncomp == 1 {
        Physics::ScalarDiffusion
    } else {
        Physics::PlaneStrain
    }
}

fn check(u0: &Field, w0: &Field, fine: &CoefficientField, surr: &CoefficientField) -> Result<()> {
    let n = u0.mesh.num_elements();
    if !u0.same_mesh(w0) || u0.ncomp != w0.ncomp || fine.len() != n || surr.len() != n {
        return Err(Error::MeshMismatch);
    }
    Ok(())
}

/// Walks the elements where the two coefficients differ.
fn for_each_element(
    u0: &Field,
    w0: &Field,
    fine: &CoefficientField,
    surr: &CoefficientField,
    mut f: impl FnMut(usize, f64, [f64; 2], [f64; 2], [f64; 2], usize, [[f64; 2]; 3]),
) {
    let mesh = &u0.mesh;
    let physics = physics_of(u0);
    for e in 0..mesh.num_elements() {
        if fine.same_at(surr, e) {
            continue;
        }
        let (arith, harm, n) = fine.mode_means(e);
        let (a0, _, _) = surr.mode_means(e);
        let p = [
            mode_products(mesh, e, physics, &u0.values, &u0.values),
            mode_products(mesh, e, physics, &u0.values, &w0.values),
            mode_products(mesh, e, physics, &w0.values, &w0.values),
        ];
        f(e, mesh.geom[e].area, arith, harm, a0, n, p);
    }
}

/// `R_g(v) = int (A - A0) grad g . grad v` (scalar) or its elastic analog.
pub fn residual_functional(g: &Field, v: &Field, fine: &CoefficientField, surr: &CoefficientField) -> Result<f64> {
    check(g, v, fine, surr)?;
    let mut terms = Vec::new();
    for_each_element(g, v, fine, surr, |_, area, arith, _, a0, n, p| {
        terms.push(area * (0..n).map(|k| (arith[k] - a0[k]) * p[1][k]).sum::<f64>());
    });
    Ok(pairwise_sum(&terms))
}

/// Per-element integrand of the approximate estimator: `-a0 (1 - a0/a) grad u0 . grad w0`
/// integrated, with `1/a` averaged over the element.
fn eta_element(area: f64, harm: [f64; 2], a0: [f64; 2], n: usize, p_uw: [f64; 2]) -> f64 {
    area * (0..n).map(|k| -a0[k] * (1.0 - a0[k] / harm[k]) * p_uw[k]).sum::<f64>()
}

/// Block indicators (index `id - 1`) of the approximate estimator.
pub fn local_indicators(
    u0: &Field,
    w0: &Field,
    fine: &CoefficientField,
    surr: &CoefficientField,
    num_blocks: usize,
) -> Result<Vec<f64>> {
    check(u0, w0, fine, surr)?;
    let mut per_block: Vec<Vec<f64>> = vec![Vec::new(); num_blocks];
    let blocks = &u0.mesh.element_block;
    for_each_element(u0, w0, fine, surr, |e, area, _, harm, a0, n, p| {
        per_block[blocks[e] as usize - 1].push(eta_element(area, harm, a0, n, p[1]));
    });
    Ok(per_block.iter().map(|t| pairwise_sum(t)).collect())
}

/// Sum of the block indicators.
pub fn eta_est(u0: &Field, w0: &Field, fine: &CoefficientField, surr: &CoefficientField, num_blocks: usize) -> Result<f64> {
    Ok(pairwise_sum(&local_indicators(u0, w0, fine, surr, num_blocks)?))
}

fn integrals(u0: &Field, w0: &Field, fine: &CoefficientField, surr: &CoefficientField) -> Integrals {
    let mut r = [Vec::new(), Vec::new(), Vec::new()];
    let mut z = [Vec::new(), Vec::new(), Vec::new()];
    for_each_element(u0, w0, fine, surr, |_, area, arith, harm, a0, n, p| {
        for pair in 0..3 {
            let mut rr = 0.0;
            let mut zz = 0.0;
            for k in 0..n {
                rr += (arith[k] - a0[k]) * p[pair][k];
                // (A - A0)^2 / A = (A - A0) - A0 (1 - A0/A)
                zz += ((arith[k] - a0[k]) - a0[k] * (1.0 - a0[k] / harm[k])) * p[pair][k];
            }
            r[pair].push(area * rr);
            z[pair].push(area * zz);
        }
    });
    // the fine energy products need every element
    let mesh = &u0.mesh;
    let physics = physics_of(u0);
    let mut b = [Vec::new(), Vec::new(), Vec::new()];
    for e in 0..mesh.num_elements() {
        let (arith, _, n) = fine.mode_means(e);
        let fields = [(&u0.values, &u0.values), (&u0.values, &w0.values), (&w0.values, &w0.values)];
        for (pair, (x, y)) in fields.iter().enumerate() {
            let p = mode_products(mesh, e, physics, x, y);
            b[pair].push(mesh.geom[e].area * (0..n).map(|k| arith[k] * p[k]).sum::<f64>());
        }
    }
    Integrals {
        r: r.each_ref().map(|t| pairwise_sum(t)),
        b: b.each_ref().map(|t| pairwise_sum(t)),
        z: z.each_ref().map(|t| pairwise_sum(t)),
    }
}

/// Two-sided bounds on `Q(u) - Q(u0)` for one sample.
///
/// `u0`, `w0` are the surrogate primal and adjoint solutions; `fine` is the
/// fine-scale coefficient on the same mesh. The bounds enclose the error of the
/// fine-scale discrete solutions on that mesh.
pub fn two_sided_bounds(
    u0: &Field,
    w0: &Field,
    fine: &CoefficientField,
    surr: &CoefficientField,
    s: f64,
) -> Result<Bounds> {
    check(u0, w0, fine, surr)?;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("s = {s} must be finite and nonzero")));
    }
    let it = integrals(u0, w0, fine, surr);
    let [r_uu, r_uw, r_ww] = it.r;
    let [b_uu, b_uw, b_ww] = it.b;
    let [z_uu, z_uw, z_ww] = it.z;
    let lower = |sign: f64| -> Result<(f64, f64)> {
        // a = R_g(u0), b = R_g(w0) for g = s u0 +- w0 / s
        let a = s * r_uu + sign * r_uw / s;
        let b = s * r_uw + sign * r_ww / s;
        if a == 0.0 && b == 0.0 {
            return Ok((0.0, 0.0));
        }
        let den = b_uw * b - b_ww * a;
        if den == 0.0 {
            return Err(Error::DegenerateCombination);
        }
        let theta = (b_uw * a - b_uu * b) / den;
        let norm2 = b_uu + 2.0 * theta * b_uw + theta * theta * b_ww;
        if !(norm2 > 0.0) {
            return Err(Error::DegenerateCombination);
        }
        Ok(((a + theta * b).abs() / norm2.sqrt(), theta))
    };
    let (low_p, theta_plus) = lower(1.0)?;
    let (low_m, theta_minus) = lower(-1.0)?;
    let upp2 = |sign: f64| (s * s * z_uu + z_ww / (s * s) + sign * 2.0 * z_uw).max(0.0);
    let (upp_p2, upp_m2) = (upp2(1.0), upp2(-1.0));
    Ok(Bounds {
        eta_low: 0.25 * low_p * low_p - 0.25 * upp_m2 - r_uw,
        eta_upp: 0.25 * upp_p2 - 0.25 * low_m * low_m - r_uw,
        s,
        theta_plus,
        theta_minus,
        zeta_upp: z_uu.max(0.0).sqrt(),
        xi_upp: z_ww.max(0.0).sqrt(),
    })
}

/// Indicators, their sum and optionally the two-sided bounds for one sample.
pub fn estimate(
    u0: &Field,
    w0: &Field,
    fine: &CoefficientField,
    surr: &CoefficientField,
    num_blocks: usize,
    bounds_s: Option<f64>,
) -> Result<EstimatorReport> {
    let eta_blocks = local_indicators(u0, w0, fine, surr, num_blocks)?;
    let bounds = bounds_s.map(|s| two_sided_bounds(u0, w0, fine, surr, s)).transpose()?;
    Ok(EstimatorReport {
        eta_est: pairwise_sum(&eta_blocks),
        eta_blocks,
        bounds,
        samples: 1,
    })
}

/// Averages of per-sample reports; indicators are averaged in magnitude.
pub fn average_abs_indicators(reports: &[EstimatorReport]) -> Vec<f64> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    (0..first.eta_blocks.len())
        .map(|k| {
            let xs: Vec<f64> = reports.iter().map(|r| r.eta_blocks[k].abs()).collect();
            crate::stats::mean(&xs)
        })
        .collect()
}
