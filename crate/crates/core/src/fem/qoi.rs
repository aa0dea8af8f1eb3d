//! Linear quantities of interest as load vectors over the full dofs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::Mesh;
use crate::fem::space::Physics;
use crate::geometry::{clip_to_rect, fan, from_barycentric, triangle_area, Point, Rect, DUNAVANT7};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QoiSpec {
    /// Mean of the (scalar) solution over a rectangle.
    BlockAverageSolution { region: Rect },
    /// Mean of `du/dx_axis` (scalar) or `eps_axis,axis` (elasticity) over a rectangle.
    BlockAverageGradientComponent { region: Rect, axis: usize },
    /// `(1/A) int chi tr eps(u)` with the cos^2 cutoff around `center`.
    MollifiedStrainTrace { center: Point, radius: f64 },
}

impl QoiSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            QoiSpec::BlockAverageSolution { region } | QoiSpec::BlockAverageGradientComponent { region, .. } => {
                if !(region.width() > 0.0 && region.height() > 0.0) {
                    return Err(Error::RegionUnresolved(format!("empty region {region:?}")));
                }
                if let QoiSpec::BlockAverageGradientComponent { axis, .. } = self {
                    if *axis > 1 {
                        return Err(Error::InvalidArgument(format!("axis {axis} is not 0 or 1")));
                    }
                }
            }
            QoiSpec::MollifiedStrainTrace { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(format!("mollifier radius {radius} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Cutoff: 1 within `r`, `cos^2(pi/2 (d - r)/r)` up to `2r`, 0 beyond.
pub fn mollifier(x: Point, center: Point, r: f64) -> f64 {
    let d = x.dist(center);
    if d <= r {
        1.0
    } else if d <= 2.0 * r {
        (0.5 * PI * (d - r) / r).cos().powi(2)
    } else {
        0.0
    }
}

/// Full-dof vector `l` with `Q(u) = l . u` for every discrete field `u` on `mesh`.
///
/// Region means are integrated exactly by clipping elements to the region and
/// normalized by the covered area, which must equal the region area.
pub fn qoi_load(mesh: &Mesh, physics: Physics, qoi: &QoiSpec) -> Result<Vec<f64>> {
    qoi.validate()?;
    let ncomp = physics.components();
    let mut load = vec![0.0; mesh.num_vertices() * ncomp];
    match qoi {
        QoiSpec::BlockAverageSolution { region } => {
            if physics != Physics::ScalarDiffusion {
                return Err(Error::NotApplicable("solution averages are defined for scalar problems"));
            }
            let mut covered = 0.0;
            for e in 0..mesh.num_elements() {
                let [a, b, c] = mesh.corners(e);
                let t = mesh.triangles[e];
                let clipped = clip_to_rect(&[a, b, c], region);
                for tri in fan(&clipped) {
                    let area = triangle_area(tri[0], tri[1], tri[2]);
                    covered += area;
                    let cen = crate::geometry::centroid(tri[0], tri[1], tri[2]);
                    let bary = crate::geometry::barycentric(cen, a, b, c);
                    for k in 0..3 {
                        load[t[k] as usize] += area * bary[k];
                    }
                }
            }
            normalize(&mut load, covered, region)?;
        }
        QoiSpec::BlockAverageGradientComponent { region, axis } => {
            let mut covered = 0.0;
            for e in 0..mesh.num_elements() {
                let corners = mesh.corners(e);
                let clipped = clip_to_rect(&corners, region);
                let area: f64 = fan(&clipped).map(|t| triangle_area(t[0], t[1], t[2])).sum();
                if area == 0.0 {
                    continue;
                }
                covered += area;
                let g = &mesh.geom[e];
                let t = mesh.triangles[e];
                for k in 0..3 {
                    let comp = if ncomp == 1 { 0 } else { *axis };
                    load[t[k] as usize * ncomp + comp] += area * g.grads[k][*axis];
                }
            }
            normalize(&mut load, covered, region)?;
        }
        QoiSpec::MollifiedStrainTrace { center, radius } => {
            if physics != Physics::PlaneStrain {
                return Err(Error::NotApplicable("strain trace needs a displacement field"));
            }
            let mut total = 0.0;
            for e in 0..mesh.num_elements() {
                let [a, b, c] = mesh.corners(e);
                let near = [a, b, c].iter().map(|p| p.dist(*center)).fold(f64::INFINITY, f64::min);
                let diam = a.dist(b).max(b.dist(c)).max(c.dist(a));
                if near > 2.0 * radius + diam {
                    continue;
                }
                let g = &mesh.geom[e];
                let weight: f64 = DUNAVANT7
                    .iter()
                    .map(|(l, w)| w * g.area * mollifier(from_barycentric(l, a, b, c), *center, *radius))
                    .sum();
                if weight == 0.0 {
                    continue;
                }
                total += weight;
                let t = mesh.triangles[e];
                for k in 0..3 {
                    load[2 * t[k] as usize] += weight * g.grads[k][0];
                    load[2 * t[k] as usize + 1] += weight * g.grads[k][1];
                }
            }
            if !(total > 0.0) {
                return Err(Error::RegionUnresolved(format!("cutoff around {center:?} misses the mesh")));
            }
            load.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(load)
}

fn normalize(load: &mut [f64], covered: f64, region: &Rect) -> Result<()> {
    if (covered - region.area()).abs() > 1e-9 * region.area() {
        return Err(Error::RegionUnresolved(format!(
            "region {region:?} is not inside the meshed domain (covered area {covered})"
        )));
    }
    let inv = 1.0 / region.area();
    load.iter_mut().for_each(|x| *x *= inv);
    Ok(())
}

/// Integral of the mollifier over the meshed domain (7-point rule per element).
pub fn mollifier_area(mesh: &Mesh, center: Point, radius: f64) -> f64 {
    (0..mesh.num_elements())
        .map(|e| {
            let [a, b, c] = mesh.corners(e);
            DUNAVANT7
                .iter()
                .map(|(l, w)| w * mesh.geom[e].area * mollifier(from_barycentric(l, a, b, c), center, radius))
                .sum::<f64>()
        })
        .sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
