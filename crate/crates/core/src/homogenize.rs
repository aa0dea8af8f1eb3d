//! Hashin-Shtrikman effective moduli and elementwise coefficient fields.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::geometry::Point;
use crate::media::{area_weighted, Microstructure};

const FRACTION_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

/// The two phases of the medium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaterialPair {
    Scalar { kappa_m: f64, kappa_i: f64 },
    Elastic { matrix: Lame, inclusion: Lame, d: usize },
}

/// Material parameters of one element or phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Moduli {
    Scalar(f64),
    Elastic(Lame),
}

impl Moduli {
    /// Eigenvalues of the material tensor: `[kappa]`, or the volumetric
    /// `2(lambda + mu)` and deviatoric `2 mu` values in plane strain.
    pub fn modes(&self) -> ([f64; 2], usize) {
        match *self {
            Moduli::Scalar(k) => ([k, 0.0], 1),
            Moduli::Elastic(l) => ([2.0 * (l.lambda + l.mu), 2.0 * l.mu], 2),
        }
    }
}

impl MaterialPair {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MaterialPair::Scalar { kappa_m, kappa_i } => {
                if !(kappa_m > 0.0 && kappa_i > 0.0) {
                    return Err(Error::InvalidMaterial(format!(
                        "conductivities must be positive, got ({kappa_m}, {kappa_i})"
                    )));
                }
            }
            MaterialPair::Elastic { matrix, inclusion, d } => {
                if d != 2 && d != 3 {
                    return Err(Error::InvalidMaterial(format!("dimension {d} not in {{2, 3}}")));
                }
                for l in [matrix, inclusion] {
                    let k = l.lambda + 2.0 * l.mu / d as f64;
                    if !(l.mu > 0.0 && k > 0.0) {
                        return Err(Error::InvalidMaterial(format!(
                            "need mu > 0 and bulk modulus > 0, got {l:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, MaterialPair::Scalar { .. })
    }

    pub fn matrix(&self) -> Moduli {
        match *self {
            MaterialPair::Scalar { kappa_m, .. } => Moduli::Scalar(kappa_m),
            MaterialPair::Elastic { matrix, .. } => Moduli::Elastic(matrix),
        }
    }

    pub fn inclusion(&self) -> Moduli {
        match *self {
            MaterialPair::Scalar { kappa_i, .. } => Moduli::Scalar(kappa_i),
            MaterialPair::Elastic { inclusion, .. } => Moduli::Elastic(inclusion),
        }
    }

    /// Homogenized moduli for inclusion fraction `phi_i`.
    pub fn effective(&self, phi_i: f64) -> Result<Moduli> {
        let phi_m = 1.0 - phi_i;
        Ok(match *self {
            MaterialPair::Scalar { kappa_m, kappa_i } => {
                Moduli::Scalar(hs_scalar(kappa_m, kappa_i, phi_m, phi_i)?)
            }
            MaterialPair::Elastic { .. } => {
                let e = hs_elastic(self, phi_m, phi_i)?;
                Moduli::Elastic(Lame { lambda: e.lambda, mu: e.mu })
            }
        })
    }
}

fn check_fractions(phi_m: f64, phi_i: f64) -> Result<()> {
    let ok = (0.0..=1.0).contains(&phi_m)
        && (0.0..=1.0).contains(&phi_i)
        && (phi_m + phi_i - 1.0).abs() <= FRACTION_EPS;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidFractions { phi_m, phi_i })
    }
}

/// One Hashin-Shtrikman-type bound: `arith - (a_m - a_i)^2 phi_m phi_i / (a_i phi_m + a_m phi_i + shift)`.
fn hs_bound(a_m: f64, a_i: f64, phi_m: f64, phi_i: f64, shift: f64) -> f64 {
    let arith = a_m * phi_m + a_i * phi_i;
    let d = a_m - a_i;
    arith - d * d * phi_m * phi_i / (a_i * phi_m + a_m * phi_i + shift)
}

/// Lower bound when the matrix is the poorer conductor, upper bound otherwise.
pub fn hs_scalar(kappa_m: f64, kappa_i: f64, phi_m: f64, phi_i: f64) -> Result<f64> {
    check_fractions(phi_m, phi_i)?;
    if !(kappa_m > 0.0 && kappa_i > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "conductivities must be positive, got ({kappa_m}, {kappa_i})"
        )));
    }
    let shift = if kappa_m <= kappa_i {
        kappa_m.min(kappa_i)
    } else {
        kappa_m.max(kappa_i)
    };
    Ok(hs_bound(kappa_m, kappa_i, phi_m, phi_i, shift))
}

/// Both scalar bounds `(lower, upper)`, independent of which phase is the matrix.
pub fn hs_scalar_bounds(kappa_m: f64, kappa_i: f64, phi_m: f64, phi_i: f64) -> Result<(f64, f64)> {
    hs_scalar(kappa_m, kappa_i, phi_m, phi_i)?;
    let (lo, hi) = (kappa_m.min(kappa_i), kappa_m.max(kappa_i));
    Ok((
        hs_bound(kappa_m, kappa_i, phi_m, phi_i, lo),
        hs_bound(kappa_m, kappa_i, phi_m, phi_i, hi),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticEffective {
    pub bulk: f64,
    pub mu: f64,
    pub lambda: f64,
}

fn shear_shift(k: f64, mu: f64, d: f64) -> f64 {
    mu * (d * k / 2.0 + (d + 1.0) * (d - 2.0) * mu / d) / (k + 2.0 * mu)
}

/// Bulk and shear bounds, each on the side selected by which phase is stiffer
/// in that modulus; `lambda = K - 2 mu / d`.
pub fn hs_elastic(pair: &MaterialPair, phi_m: f64, phi_i: f64) -> Result<ElasticEffective> {
    let MaterialPair::Elastic { matrix, inclusion, d } = *pair else {
        return Err(Error::NotApplicable("elastic bounds need an elastic material pair"));
    };
    pair.validate()?;
    check_fractions(phi_m, phi_i)?;
    let df = d as f64;
    let bulk = |l: Lame| l.lambda + 2.0 * l.mu / df;
    let (k_m, k_i) = (bulk(matrix), bulk(inclusion));
    let (mu_m, mu_i) = (matrix.mu, inclusion.mu);
    let (k_min, k_max) = (k_m.min(k_i), k_m.max(k_i));
    let (mu_min, mu_max) = (mu_m.min(mu_i), mu_m.max(mu_i));
    let c = 2.0 * (df - 1.0) / df;
    let k_shift = if k_m <= k_i { c * mu_min } else { c * mu_max };
    let mu_shift = if mu_m <= mu_i {
        shear_shift(k_min, mu_min, df)
    } else {
        shear_shift(k_max, mu_max, df)
    };
    let k_eff = hs_bound(k_m, k_i, phi_m, phi_i, k_shift);
    let mu_eff = hs_bound(mu_m, mu_i, phi_m, phi_i, mu_shift);
    Ok(ElasticEffective {
        bulk: k_eff,
        mu: mu_eff,
        lambda: k_eff - 2.0 * mu_eff / df,
    })
}

pub fn lame_from_e_nu(e: f64, nu: f64) -> Result<Lame> {
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::InvalidPoisson(nu));
    }
    if !(e > 0.0) {
        return Err(Error::InvalidMaterial(format!("Young's modulus {e} must be positive")));
    }
    Ok(Lame {
        lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        mu: e / (2.0 * (1.0 + nu)),
    })
}

/// The globally homogenized QoI from one fixed solve: `q_fix kappa_fix / kappa_eff`.
pub fn scaled_qoi_global(pair: &MaterialPair, q_fix: f64, kappa_fix: f64, kappa_eff: f64) -> Result<f64> {
    if !pair.is_scalar() {
        return Err(Error::NotApplicable("no scaling shortcut for elasticity"));
    }
    if !(kappa_eff > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa_eff = {kappa_eff} must be positive")));
    }
    Ok(q_fix * kappa_fix / kappa_eff)
}

/// One surrogate (or the fine-scale model).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    GlobalHomogenized,
    /// Index into the nested coarse cell sizes, 0 = coarsest.
    CoarseMeshHomogenized { level: usize },
    BlockwiseHomogenized,
    BlockwiseRefined { refined: BTreeSet<usize> },
    FineScale,
}

impl ModelSpec {
    /// Blockwise model with `refined` resolved; an empty set gives the plain blockwise model.
    pub fn refined(refined: BTreeSet<usize>) -> ModelSpec {
        if refined.is_empty() {
            ModelSpec::BlockwiseHomogenized
        } else {
            ModelSpec::BlockwiseRefined { refined }
        }
    }

    pub fn refined_blocks(&self) -> Option<&BTreeSet<usize>> {
        match self {
            ModelSpec::BlockwiseRefined { refined } => Some(refined),
            _ => None,
        }
    }

    pub fn is_resolved(&self, block: usize) -> bool {
        match self {
            ModelSpec::FineScale => true,
            ModelSpec::BlockwiseRefined { refined } => refined.contains(&block),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::GlobalHomogenized => "global",
            ModelSpec::CoarseMeshHomogenized { .. } => "coarse",
            ModelSpec::BlockwiseHomogenized => "blockwise",
            ModelSpec::BlockwiseRefined { .. } => "refined",
            ModelSpec::FineScale => "fine",
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::CoarseMeshHomogenized { level } => write!(f, "coarse{level}"),
            ModelSpec::BlockwiseRefined { refined } => write!(f, "refined{}", refined.len()),
            other => f.write_str(other.kind()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ElementCoefficient {
    /// Fine-scale staircase coefficient; the value is the fraction of the
    /// element's fine sub-triangles whose centroid lies in an inclusion.
    Resolved(f64),
    Homogenized(Moduli),
}

/// Per-element coefficients aligned with one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub pair: MaterialPair,
    elements: Vec<ElementCoefficient>,
}

impl CoefficientField {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Uniform field, mostly for tests and the fixed solve of the scaling shortcut.
    pub fn uniform(pair: MaterialPair, moduli: Moduli, n: usize) -> Self {
        CoefficientField {
            pair,
            elements: vec![ElementCoefficient::Homogenized(moduli); n],
        }
    }

    /// Field with a prescribed inclusion fraction per element.
    pub fn from_fractions(pair: MaterialPair, fractions: &[f64]) -> Self {
        CoefficientField {
            pair,
            elements: fractions.iter().map(|&f| ElementCoefficient::Resolved(f)).collect(),
        }
    }

    pub fn is_resolved(&self, e: usize) -> bool {
        matches!(self.elements[e], ElementCoefficient::Resolved(_))
    }

    /// Element-averaged moduli, which is what the stiffness matrix sees.
    pub fn moduli(&self, e: usize) -> Moduli {
        match self.elements[e] {
            ElementCoefficient::Homogenized(m) => m,
            ElementCoefficient::Resolved(f) => mix(self.pair.matrix(), self.pair.inclusion(), f),
        }
    }

    /// Arithmetic and harmonic element means of each material eigenvalue, and
    /// the number of eigenvalues (1 scalar, 2 elastic).
    pub fn mode_means(&self, e: usize) -> ([f64; 2], [f64; 2], usize) {
        match self.elements[e] {
            ElementCoefficient::Homogenized(m) => {
                let (a, n) = m.modes();
                (a, a, n)
            }
            ElementCoefficient::Resolved(f) => {
                let (am, n) = self.pair.matrix().modes();
                let (ai, _) = self.pair.inclusion().modes();
                let mut arith = [0.0; 2];
                let mut harm = [0.0; 2];
                for k in 0..n {
                    arith[k] = (1.0 - f) * am[k] + f * ai[k];
                    harm[k] = if f == 0.0 {
                        am[k]
                    } else if f == 1.0 {
                        ai[k]
                    } else {
                        1.0 / ((1.0 - f) / am[k] + f / ai[k])
                    };
                }
                (arith, harm, n)
            }
        }
    }

    /// True where both fields hold the same coefficient.
    pub fn same_at(&self, other: &CoefficientField, e: usize) -> bool {
        self.moduli(e) == other.moduli(e) && {
            let (a, h, _) = self.mode_means(e);
            let (b, g, _) = other.mode_means(e);
            a == b && h == g
        }
    }
}

fn mix(m: Moduli, i: Moduli, f: f64) -> Moduli {
    match (m, i) {
        (Moduli::Scalar(a), Moduli::Scalar(b)) => Moduli::Scalar(if f == 0.0 {
            a
        } else if f == 1.0 {
            b
        } else {
            (1.0 - f) * a + f * b
        }),
        (Moduli::Elastic(a), Moduli::Elastic(b)) => {
            if f == 0.0 {
                Moduli::Elastic(a)
            } else if f == 1.0 {
                Moduli::Elastic(b)
            } else {
                Moduli::Elastic(Lame {
                    lambda: (1.0 - f) * a.lambda + f * b.lambda,
                    mu: (1.0 - f) * a.mu + f * b.mu,
                })
            }
        }
        _ => unreachable!("material pair mixes physics"),
    }
}

/// Inclusion fraction of an element, counted over the centroids of the fine
/// triangles it contains (exactly the staircase rule on the fine lattice).
fn resolved_fraction(mesh: &Mesh, e: usize, micro: &Microstructure) -> f64 {
    let geo = mesh.element_quad(e);
    let h = mesh.fine_size;
    let n = (geo.size / h).round() as usize;
    if n <= 1 {
        let c = mesh.centroid(e);
        return if micro.is_inclusion(c) { 1.0 } else { 0.0 };
    }
    let (x0, y0) = (geo.origin.x, geo.origin.y);
    let mut hits = 0usize;
    let mut total = 0usize;
    for j in 0..n {
        for i in 0..n {
            let lower = Point::new(x0 + (i as f64 + 2.0 / 3.0) * h, y0 + (j as f64 + 1.0 / 3.0) * h);
            let upper = Point::new(x0 + (i as f64 + 1.0 / 3.0) * h, y0 + (j as f64 + 2.0 / 3.0) * h);
            // lower triangle of the element holds the fine cells on or below its diagonal
            let candidates: &[(Point, bool)] = if geo.lower {
                &[(lower, i >= j), (upper, i > j)]
            } else {
                &[(lower, i < j), (upper, i <= j)]
            };
            for &(p, inside) in candidates {
                if inside {
                    total += 1;
                    if micro.is_inclusion(p) {
                        hits += 1;
                    }
                }
            }
        }
    }
    hits as f64 / total as f64
}

/// Elementwise coefficients of `spec` for one microstructure on `mesh`.
///
/// `mesh` may be finer than the model needs (e.g. a shared fine mesh) but no
/// element may straddle two homogenization regions.
pub fn build_coefficient_field(
    spec: &ModelSpec,
    micro: &Microstructure,
    mesh: &Mesh,
    pair: &MaterialPair,
    q: usize,
) -> Result<CoefficientField> {
    pair.validate()?;
    let part = &micro.partition;
    let n = mesh.triangles.len();
    let block_fr = || micro.block_inclusion_fractions(q);
    let mismatch = || Error::MeshSpecMismatch(spec.clone());
    let mut elements = Vec::with_capacity(n);
    match spec {
        ModelSpec::GlobalHomogenized => {
            let fr = block_fr();
            let phi = area_weighted(part, &fr, part.blocks.iter().map(|b| b.id));
            let m = pair.effective(phi)?;
            elements.resize(n, ElementCoefficient::Homogenized(m));
        }
        ModelSpec::CoarseMeshHomogenized { level } => {
            let edges = part.coarse_cell_edges();
            let &cell = edges.get(*level).ok_or_else(mismatch)?;
            let fr = block_fr();
            let origin = part.origin();
            let (nx, ny) = part.grid_dims();
            let ratio = (cell / part.edge).round() as usize;
            let (cx, cy) = (nx / ratio, ny / ratio);
            let mut values = Vec::with_capacity(cx * cy);
            for j in 0..cy {
                for i in 0..cx {
                    let ids = (0..ratio).flat_map(|b| (0..ratio).map(move |a| (i * ratio + a, j * ratio + b)));
                    let ids: Vec<usize> = ids
                        .filter_map(|(bi, bj)| {
                            let p = Point::new(
                                origin.x + (bi as f64 + 0.5) * part.edge,
                                origin.y + (bj as f64 + 0.5) * part.edge,
                            );
                            part.block_at(p)
                        })
                        .collect();
                    values.push(pair.effective(area_weighted(part, &fr, ids.into_iter()))?);
                }
            }
            for e in 0..n {
                let geo = mesh.element_quad(e);
                if geo.size > cell * (1.0 + 1e-9) {
                    return Err(mismatch());
                }
                let c = mesh.centroid(e);
                let i = (((c.x - origin.x) / cell).floor() as usize).min(cx - 1);
                let j = (((c.y - origin.y) / cell).floor() as usize).min(cy - 1);
                elements.push(ElementCoefficient::Homogenized(values[j * cx + i]));
            }
        }
        ModelSpec::BlockwiseHomogenized | ModelSpec::BlockwiseRefined { .. } | ModelSpec::FineScale => {
            if let Some(refined) = spec.refined_blocks() {
                if let Some(&bad) = refined.iter().find(|&&id| id == 0 || id > part.len()) {
                    return Err(Error::UnknownRegion(bad));
                }
            }
            let fr = if matches!(spec, ModelSpec::FineScale) { Vec::new() } else { block_fr() };
            let mut block_values: Vec<Option<Moduli>> = vec![None; part.len()];
            for e in 0..n {
                let block = mesh.element_block[e] as usize;
                if mesh.element_quad(e).size > part.edge * (1.0 + 1e-9) {
                    return Err(mismatch());
                }
                if spec.is_resolved(block) {
                    elements.push(ElementCoefficient::Resolved(resolved_fraction(mesh, e, micro)));
                } else {
                    let slot = &mut block_values[block - 1];
                    let m = match slot {
                        Some(m) => *m,
                        None => *slot.insert(pair.effective(fr[block - 1])?),
                    };
                    elements.push(ElementCoefficient::Homogenized(m));
                }
            }
        }
    }
    Ok(CoefficientField { pair: *pair, elements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(hs_scalar(100.0, 10000.0, 1.0, 0.0).unwrap(), 100.0);
        assert_eq!(hs_scalar(100.0, 10000.0, 0.0, 1.0).unwrap(), 10000.0);
        // scripted evaluation: 2575 - 9900^2 * 0.1875 / (10000*0.75 + 100*0.25 + 100)
        assert_relative_eq!(hs_scalar(100.0, 10000.0, 0.75, 0.25).unwrap(), 164.918_032_786_885_3, max_relative = 1e-12);
        assert!(matches!(hs_scalar(1.0, 2.0, 0.5, 0.6), Err(Error::InvalidFractions { .. })));
    }

    #[test]
    fn lame_examples() {
        let l = lame_from_e_nu(1000.0, 0.2).unwrap();
        assert_relative_eq!(l.lambda, 277.78, epsilon = 5e-3);
        assert_relative_eq!(l.mu, 416.67, epsilon = 5e-3);
        let l = lame_from_e_nu(100.0, 0.2).unwrap();
        assert_relative_eq!(l.lambda, 27.78, epsilon = 5e-3);
        assert_relative_eq!(l.mu, 41.67, epsilon = 5e-3);
        let l = lame_from_e_nu(3.0, 0.0).unwrap();
        assert_eq!((l.lambda, l.mu), (0.0, 1.5));
        assert!(matches!(lame_from_e_nu(1.0, 0.5), Err(Error::InvalidPoisson(_))));
    }

    fn stiff_inclusions() -> MaterialPair {
        MaterialPair::Elastic {
            matrix: lame_from_e_nu(100.0, 0.2).unwrap(),
            inclusion: lame_from_e_nu(1000.0, 0.2).unwrap(),
            d: 2,
        }
    }

    #[test]
    fn elastic_half_fraction_value() {
        // independent evaluation, plane strain d = 2:
        // K_M = 69.444.., K_I = 694.44.., mu_min = 41.666.., H_min = mu K / (K + 2 mu)
        let lm = lame_from_e_nu(100.0, 0.2).unwrap();
        let li = lame_from_e_nu(1000.0, 0.2).unwrap();
        let (km, ki) = (lm.lambda + lm.mu, li.lambda + li.mu);
        let k_ref = 0.5 * (km + ki) - (km - ki).powi(2) * 0.25 / (0.5 * ki + 0.5 * km + lm.mu);
        let h_min = lm.mu * km / (km + 2.0 * lm.mu);
        let mu_ref = 0.5 * (lm.mu + li.mu) - (lm.mu - li.mu).powi(2) * 0.25 / (0.5 * li.mu + 0.5 * lm.mu + h_min);
        let e = hs_elastic(&stiff_inclusions(), 0.5, 0.5).unwrap();
        assert_relative_eq!(e.bulk, k_ref, max_relative = 1e-14);
        assert_relative_eq!(e.mu, mu_ref, max_relative = 1e-14);
        assert_relative_eq!(e.bulk, 151.411_657_559_198_6, max_relative = 1e-10);
        assert_relative_eq!(e.mu, 87.468_193_384_223_95, max_relative = 1e-10);
        assert_relative_eq!(e.lambda, e.bulk - e.mu, max_relative = 1e-14);
    }

    #[test]
    fn elastic_endpoints_and_identical_phases() {
        let pair = stiff_inclusions();
        let MaterialPair::Elastic { matrix, inclusion, .. } = pair else { unreachable!() };
        let e = hs_elastic(&pair, 1.0, 0.0).unwrap();
        assert_eq!(e.mu, matrix.mu);
        assert_relative_eq!(e.lambda, matrix.lambda, max_relative = 1e-14);
        let e = hs_elastic(&pair, 0.0, 1.0).unwrap();
        assert_eq!(e.mu, inclusion.mu);
        let same = MaterialPair::Elastic { matrix, inclusion: matrix, d: 2 };
        let e = hs_elastic(&same, 0.3, 0.7).unwrap();
        assert_relative_eq!(e.mu, matrix.mu, max_relative = 1e-14);
        assert_relative_eq!(e.lambda, matrix.lambda, max_relative = 1e-13);
    }

    #[test]
    fn scaling_shortcut() {
        let pair = MaterialPair::Scalar { kappa_m: 1.0, kappa_i: 2.0 };
        assert_eq!(scaled_qoi_global(&pair, 2.0, 100.0, 200.0).unwrap(), 1.0);
        assert_eq!(scaled_qoi_global(&pair, 2.5, 7.0, 7.0).unwrap(), 2.5);
        assert!(matches!(
            scaled_qoi_global(&stiff_inclusions(), 1.0, 1.0, 1.0),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn monotone_toward_stiffer_phase() {
        for (km, ki) in [(100.0, 10000.0), (50.0, 1.0)] {
            let vals: Vec<f64> = (0..=100)
                .map(|i| {
                    let phi = i as f64 / 100.0;
                    hs_scalar(km, ki, 1.0 - phi, phi).unwrap()
                })
                .collect();
            for w in vals.windows(2) {
                if ki > km {
                    assert!(w[1] >= w[0]);
                } else {
                    assert!(w[1] <= w[0]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn scalar_sandwich(km in 1e-2f64..1e4, ki in 1e-2f64..1e4, phi in 0.0f64..=1.0) {
            let (pm, pi) = (1.0 - phi, phi);
            let harm = 1.0 / (pm / km + pi / ki);
            let arith = pm * km + pi * ki;
            let lo_shift = km.min(ki);
            let hi_shift = km.max(ki);
            let hsl = hs_bound(km, ki, pm, pi, lo_shift);
            let hsu = hs_bound(km, ki, pm, pi, hi_shift);
            let tol = 1e-12 * arith;
            prop_assert!(harm <= hsl + tol);
            prop_assert!(hsl <= hsu + tol);
            prop_assert!(hsu <= arith + tol);
            let eff = hs_scalar(km, ki, pm, pi).unwrap();
            prop_assert!(eff >= km.min(ki) - tol && eff <= km.max(ki) + tol);
        }

        #[test]
        fn elastic_within_phase_range(
            em in 1.0f64..1e3, ei in 1.0f64..1e3, nu_m in -0.5f64..0.45, nu_i in -0.5f64..0.45, phi in 0.0f64..=1.0
        ) {
            let pair = MaterialPair::Elastic {
                matrix: lame_from_e_nu(em, nu_m).unwrap(),
                inclusion: lame_from_e_nu(ei, nu_i).unwrap(),
                d: 2,
            };
            let MaterialPair::Elastic { matrix, inclusion, .. } = pair else { unreachable!() };
            let e = hs_elastic(&pair, 1.0 - phi, phi).unwrap();
            let (km, ki) = (matrix.lambda + matrix.mu, inclusion.lambda + inclusion.mu);
            let tol = 1e-10 * (km.max(ki) + matrix.mu.max(inclusion.mu));
            prop_assert!(e.bulk >= km.min(ki) - tol && e.bulk <= km.max(ki) + tol);
            prop_assert!(e.mu >= matrix.mu.min(inclusion.mu) - tol && e.mu <= matrix.mu.max(inclusion.mu) + tol);
            let harm = 1.0 / ((1.0 - phi) / km + phi / ki);
            let arith = (1.0 - phi) * km + phi * ki;
            prop_assert!(e.bulk >= harm - tol && e.bulk <= arith + tol);
        }
    }
}
