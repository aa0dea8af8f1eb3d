//! Quadtree meshes on the block lattice.
//!
//! All meshes of one partition live on the integer lattice of spacing
//! `h_fine`. Every block (or coarse cell) is a quadtree root refined to the
//! size its model requires, then 2:1 balanced; each leaf square becomes two
//! triangles split along the lower-left to upper-right diagonal. Vertices in
//! the middle of a larger neighbor's side are hanging and constrained to the
//! average of that side's endpoints.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{centroid, Point};
use crate::homogenize::ModelSpec;
use crate::media::{BlockPartition, BoundaryKind};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hanging {
    pub slave: u32,
    pub masters: [u32; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFacet {
    pub vertices: [u32; 2],
    pub kind: BoundaryKind,
    /// Index of the tagged domain segment, `None` on the fillet arc.
    pub segment: Option<usize>,
}

/// The leaf square a triangle was cut from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementQuad {
    pub origin: Point,
    pub size: f64,
    /// Lower-right half `(v00, v10, v11)` or upper-left half `(v00, v11, v01)`.
    pub lower: bool,
}

/// Area and constant gradients of the barycentric shape functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeom {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Leaf {
    i: u32,
    j: u32,
    s: u32,
    block: u32,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub hanging: Vec<Hanging>,
    /// Block id (1-based) containing each element's centroid.
    pub element_block: Vec<u32>,
    pub boundary: Vec<BoundaryFacet>,
    pub fine_size: f64,
    pub spec: ModelSpec,
    pub geom: Vec<ElementGeom>,
    origin: Point,
    leaves: Vec<Leaf>,
}

fn power_of_two_ratio(big: f64, small: f64) -> Option<u32> {
    let r = big / small;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * r || n > u32::MAX as f64 {
        return None;
    }
    let n = n as u32;
    n.is_power_of_two().then_some(n)
}

/// Builds the mesh model `spec` is solved on.
///
/// Homogenized regions get elements of size `h_coarse`, resolved blocks
/// `h_fine`; coarse hierarchy levels use their cell size. Cells of the fillet
/// block crossing the arc are always resolved to `h_fine`, so the staircase
/// geometry is the same for every model.
pub fn build_mesh(partition: &BlockPartition, spec: &ModelSpec, h_coarse: f64, h_fine: f64) -> Result<Mesh> {
    let edge = partition.edge;
    let nested = |msg: String| Error::NonNestedSizes(msg);
    if !(h_fine > 0.0 && h_fine <= h_coarse * (1.0 + 1e-12)) {
        return Err(nested(format!("need 0 < h_fine <= h_coarse, got ({h_fine}, {h_coarse})")));
    }
    let b = power_of_two_ratio(edge, h_fine)
        .ok_or_else(|| nested(format!("block edge {edge} is not h_fine = {h_fine} times a power of two")))?;
    let hc = power_of_two_ratio(edge, h_coarse)
        .ok_or_else(|| nested(format!("block edge {edge} is not h_coarse = {h_coarse} times a power of two")))?;
    let coarse_units = b / hc;
    if let Some(refined) = spec.refined_blocks() {
        if let Some(&bad) = refined.iter().find(|&&id| id == 0 || id > partition.len()) {
            return Err(Error::UnknownRegion(bad));
        }
    }
    let (nbx, nby) = partition.grid_dims();
    let (nx, ny) = (nbx as u32 * b, nby as u32 * b);
    let unit = h_fine;
    let origin = partition.origin();
    let fillet = partition.domain.fillet.clone();
    let fillet_block = partition.blocks.iter().find(|bl| bl.fillet).map(|bl| bl.id as u32);

    let lattice_of = |p: Point| {
        (
            ((p.x - origin.x) / unit).round() as u32,
            ((p.y - origin.y) / unit).round() as u32,
        )
    };

    // roots and their target sizes
    let mut roots: Vec<(Leaf, u32)> = Vec::new();
    let cell_size = match spec {
        ModelSpec::CoarseMeshHomogenized { level } => {
            let edges = partition.coarse_cell_edges();
            Some(*edges.get(*level).ok_or_else(|| Error::MeshSpecMismatch(spec.clone()))?)
        }
        ModelSpec::GlobalHomogenized if partition.is_tensor() => Some(partition.coarse_cell_edges()[0]),
        _ => None,
    };
    if let Some(cell) = cell_size {
        let c = (cell / edge).round() as u32 * b;
        for j in 0..ny / c {
            for i in 0..nx / c {
                let ctr = Point::new(
                    origin.x + ((i * c) as f64 + 0.5 * c as f64) * unit,
                    origin.y + ((j * c) as f64 + 0.5 * c as f64) * unit,
                );
                let block = partition.block_at(ctr).ok_or(Error::MeshSpecMismatch(spec.clone()))? as u32;
                roots.push((Leaf { i: i * c, j: j * c, s: c, block }, c));
            }
        }
    } else {
        for bl in &partition.blocks {
            let (i, j) = lattice_of(Point::new(bl.rect.x0, bl.rect.y0));
            let target = if spec.is_resolved(bl.id) { 1 } else { coarse_units };
            roots.push((Leaf { i, j, s: b, block: bl.id as u32 }, target));
        }
    }

    #[derive(PartialEq)]
    enum Arc {
        Inside,
        Outside,
        Cut,
    }
    let arc_state = |l: &Leaf| -> Arc {
        let (Some(f), Some(fb)) = (&fillet, fillet_block) else {
            return Arc::Outside;
        };
        if l.block != fb {
            return Arc::Outside;
        }
        let x0 = origin.x + l.i as f64 * unit;
        let y0 = origin.y + l.j as f64 * unit;
        let s = l.s as f64 * unit;
        let (cx, cy) = (f.center.x, f.center.y);
        let dx = (x0 - cx).max(0.0).max(cx - (x0 + s));
        let dy = (y0 - cy).max(0.0).max(cy - (y0 + s));
        let dmin = dx.hypot(dy);
        let fx = (x0 - cx).abs().max((x0 + s - cx).abs());
        let fy = (y0 - cy).abs().max((y0 + s - cy).abs());
        let dmax = fx.hypot(fy);
        let r = f.radius;
        let tol = 1e-12 * r;
        if dmax <= r + tol {
            Arc::Inside
        } else if dmin >= r - tol {
            Arc::Outside
        } else {
            Arc::Cut
        }
    };
    let in_cutout = |l: &Leaf| {
        let f = fillet.as_ref().expect("fillet cell without fillet");
        let c = Point::new(
            origin.x + (l.i as f64 + 0.5 * l.s as f64) * unit,
            origin.y + (l.j as f64 + 0.5 * l.s as f64) * unit,
        );
        f.in_cutout(c)
    };
    let children = |l: &Leaf| {
        let h = l.s / 2;
        [(0, 0), (h, 0), (0, h), (h, h)].map(|(a, c)| Leaf { i: l.i + a, j: l.j + c, s: h, block: l.block })
    };

    let mut leaves: Vec<Leaf> = Vec::new();
    let mut stack: Vec<(Leaf, u32)> = roots.into_iter().rev().collect();
    while let Some((l, target)) = stack.pop() {
        match arc_state(&l) {
            Arc::Inside => continue,
            Arc::Cut if l.s > 1 => {
                stack.extend(children(&l).into_iter().rev().map(|c| (c, target)));
                continue;
            }
            Arc::Cut => {
                if !in_cutout(&l) {
                    leaves.push(l);
                }
                continue;
            }
            Arc::Outside => {}
        }
        if l.s > target {
            stack.extend(children(&l).into_iter().rev().map(|c| (c, target)));
        } else {
            leaves.push(l);
        }
    }

    // 2:1 balance, and no leaf side that is only partly on the boundary
    let idx = |i: u32, j: u32| (j as usize) * (nx as usize) + i as usize;
    let mut owner = vec![NONE; (nx as usize) * (ny as usize)];
    loop {
        owner.fill(NONE);
        for (k, l) in leaves.iter().enumerate() {
            for j in l.j..l.j + l.s {
                let row = idx(l.i, j);
                owner[row..row + l.s as usize].fill(k as u32);
            }
        }
        let across = |l: &Leaf, side: usize, t: u32| -> Option<u32> {
            let (i, j): (i64, i64) = match side {
                0 => (l.i as i64 + t as i64, l.j as i64 - 1),
                1 => (l.i as i64 + l.s as i64, l.j as i64 + t as i64),
                2 => (l.i as i64 + t as i64, l.j as i64 + l.s as i64),
                _ => (l.i as i64 - 1, l.j as i64 + t as i64),
            };
            if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                return None;
            }
            let o = owner[idx(i as u32, j as u32)];
            (o != NONE).then_some(o)
        };
        let mut next = Vec::with_capacity(leaves.len());
        let mut changed = false;
        for l in &leaves {
            let mut split = false;
            if l.s > 1 {
                'sides: for side in 0..4 {
                    let mut empty = false;
                    let mut full = false;
                    for t in 0..l.s {
                        match across(l, side, t) {
                            None => empty = true,
                            Some(o) => {
                                full = true;
                                if leaves[o as usize].s < l.s / 2 {
                                    split = true;
                                    break 'sides;
                                }
                            }
                        }
                        if empty && full {
                            split = true;
                            break 'sides;
                        }
                    }
                }
            }
            if split {
                changed = true;
                next.extend(children(l));
            } else {
                next.push(*l);
            }
        }
        leaves = next;
        if !changed {
            break;
        }
    }
    leaves.sort_by_key(|l| (l.j, l.i));
    owner.fill(NONE);
    for (k, l) in leaves.iter().enumerate() {
        for j in l.j..l.j + l.s {
            let row = idx(l.i, j);
            owner[row..row + l.s as usize].fill(k as u32);
        }
    }

    // vertices, numbered row by row on the lattice
    let vw = nx as usize + 1;
    let vidx = |i: u32, j: u32| (j as usize) * vw + i as usize;
    let mut vid = vec![NONE; vw * (ny as usize + 1)];
    for l in &leaves {
        for (a, c) in [(0, 0), (l.s, 0), (0, l.s), (l.s, l.s)] {
            vid[vidx(l.i + a, l.j + c)] = 0;
        }
    }
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let v = &mut vid[vidx(i, j)];
            if *v != NONE {
                *v = vertices.len() as u32;
                vertices.push(Point::new(origin.x + i as f64 * unit, origin.y + j as f64 * unit));
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * leaves.len());
    let mut element_block = Vec::with_capacity(2 * leaves.len());
    let mut hanging = Vec::new();
    let mut boundary = Vec::new();
    let scale = {
        let bb = partition.domain.bounding_box();
        bb.width().max(bb.height())
    };
    for l in &leaves {
        let v00 = vid[vidx(l.i, l.j)];
        let v10 = vid[vidx(l.i + l.s, l.j)];
        let v11 = vid[vidx(l.i + l.s, l.j + l.s)];
        let v01 = vid[vidx(l.i, l.j + l.s)];
        triangles.push([v00, v10, v11]);
        triangles.push([v00, v11, v01]);
        element_block.extend([l.block, l.block]);
        let sides = [
            ((l.i, l.j), (l.i + l.s, l.j), [v00, v10]),
            ((l.i + l.s, l.j), (l.i + l.s, l.j + l.s), [v10, v11]),
            ((l.i, l.j + l.s), (l.i + l.s, l.j + l.s), [v01, v11]),
            ((l.i, l.j), (l.i, l.j + l.s), [v00, v01]),
        ];
        for (side, &(a, c, ends)) in sides.iter().enumerate() {
            if l.s >= 2 {
                let m = ((a.0 + c.0) / 2, (a.1 + c.1) / 2);
                let mv = vid[vidx(m.0, m.1)];
                if mv != NONE {
                    hanging.push(Hanging { slave: mv, masters: ends });
                }
            }
            let (ai, aj): (i64, i64) = match side {
                0 => (l.i as i64, l.j as i64 - 1),
                1 => (l.i as i64 + l.s as i64, l.j as i64),
                2 => (l.i as i64, l.j as i64 + l.s as i64),
                _ => (l.i as i64 - 1, l.j as i64),
            };
            let inside = ai >= 0
                && aj >= 0
                && ai < nx as i64
                && aj < ny as i64
                && owner[idx(ai as u32, aj as u32)] != NONE;
            if inside {
                continue;
            }
            let (pa, pc) = (vertices[ends[0] as usize], vertices[ends[1] as usize]);
            let tol = 1e-9 * scale;
            let tagged = partition
                .domain
                .segments
                .iter()
                .position(|s| s.contains(pa, tol) && s.contains(pc, tol));
            let (kind, segment) = match (tagged, &fillet) {
                (Some(k), _) => (partition.domain.segments[k].kind, Some(k)),
                (None, Some(f)) if f.square().contains_eps(pa, tol) && f.square().contains_eps(pc, tol) => {
                    (f.kind, None)
                }
                _ => return Err(Error::UntaggedBoundary(pa.x, pa.y, pc.x, pc.y)),
            };
            boundary.push(BoundaryFacet { vertices: ends, kind, segment });
        }
    }
    hanging.sort_by_key(|h| h.slave);
    hanging.dedup_by_key(|h| h.slave);

    let geom = triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| vertices[v as usize]);
            let two_a = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
            let grads = [
                [(b.y - c.y) / two_a, (c.x - b.x) / two_a],
                [(c.y - a.y) / two_a, (a.x - c.x) / two_a],
                [(a.y - b.y) / two_a, (b.x - a.x) / two_a],
            ];
            ElementGeom { area: 0.5 * two_a, grads }
        })
        .collect();

    Ok(Mesh {
        vertices,
        triangles,
        hanging,
        element_block,
        boundary,
        fine_size: h_fine,
        spec: spec.clone(),
        geom,
        origin,
        leaves,
    })
}

impl Mesh {
    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_quad(&self, e: usize) -> ElementQuad {
        let l = self.leaves[e / 2];
        ElementQuad {
            origin: Point::new(
                self.origin.x + l.i as f64 * self.fine_size,
                self.origin.y + l.j as f64 * self.fine_size,
            ),
            size: l.s as f64 * self.fine_size,
            lower: e % 2 == 0,
        }
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.triangles[e].map(|v| self.vertices[v as usize]);
        centroid(a, b, c)
    }

    pub fn corners(&self, e: usize) -> [Point; 3] {
        self.triangles[e].map(|v| self.vertices[v as usize])
    }

    pub fn area(&self) -> f64 {
        self.geom.iter().map(|g| g.area).sum()
    }

    /// Plain-text dump: vertex lines `v x y`, triangle lines `t a b c block`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.vertices {
            let _ = writeln!(s, "v {} {}", p.x, p.y);
        }
        for (t, b) in self.triangles.iter().zip(&self.element_block) {
            let _ = writeln!(s, "t {} {} {} {}", t[0], t[1], t[2], b);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{partition_blocks, Domain};
    use std::collections::{BTreeSet, HashMap};

    fn rect(w: f64, h: f64, edge: f64) -> BlockPartition {
        partition_blocks(&Domain::heat_rectangle(w, h), edge).unwrap()
    }

    fn check_balance(m: &Mesh) {
        // every leaf side is touched by neighbors at most one level finer
        let mut by_pos: HashMap<(u32, u32), u32> = HashMap::new();
        for l in &m.leaves {
            for j in l.j..l.j + l.s {
                for i in l.i..l.i + l.s {
                    by_pos.insert((i, j), l.s);
                }
            }
        }
        for l in &m.leaves {
            for t in 0..l.s {
                for (i, j) in [
                    (l.i as i64 + t as i64, l.j as i64 - 1),
                    (l.i as i64 + l.s as i64, l.j as i64 + t as i64),
                    (l.i as i64 + t as i64, l.j as i64 + l.s as i64),
                    (l.i as i64 - 1, l.j as i64 + t as i64),
                ] {
                    if i >= 0 && j >= 0 {
                        if let Some(&s) = by_pos.get(&(i as u32, j as u32)) {
                            assert!(2 * s >= l.s && s <= 2 * l.s, "unbalanced {} vs {}", l.s, s);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn blockwise_mesh_is_tensor_grid() {
        let p = rect(1.0, 0.2, 0.05);
        let m = build_mesh(&p, &ModelSpec::BlockwiseHomogenized, 0.025, 0.00625).unwrap();
        assert_eq!(m.num_vertices(), 41 * 9);
        assert_eq!(m.num_elements(), 2 * 40 * 8);
        assert!(m.hanging.is_empty());
        assert!((m.area() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fine_mesh_is_uniform() {
        let p = rect(0.2, 0.1, 0.05);
        let m = build_mesh(&p, &ModelSpec::FineScale, 0.05, 0.0125).unwrap();
        assert_eq!(m.num_vertices(), 17 * 9);
        assert!(m.hanging.is_empty());
    }

    #[test]
    fn refined_block_is_balanced_with_hanging_nodes() {
        let p = rect(0.1, 0.1, 0.05);
        let spec = ModelSpec::refined(BTreeSet::from([1]));
        let m = build_mesh(&p, &spec, 0.05, 0.00625).unwrap();
        check_balance(&m);
        assert!(!m.hanging.is_empty());
        for h in &m.hanging {
            let s = m.vertices[h.slave as usize];
            let (a, b) = (m.vertices[h.masters[0] as usize], m.vertices[h.masters[1] as usize]);
            assert!((s.x - 0.5 * (a.x + b.x)).abs() < 1e-14 && (s.y - 0.5 * (a.y + b.y)).abs() < 1e-14);
        }
        assert!((m.area() - 0.01).abs() < 1e-14);
        for e in 0..m.num_elements() {
            let c = m.centroid(e);
            assert_eq!(p.block_at(c), Some(m.element_block[e] as usize));
            assert!(m.geom[e].area > 0.0);
        }
    }

    #[test]
    fn coarse_hierarchy_meshes() {
        let p = rect(2.0, 0.4, 0.05);
        let m = build_mesh(&p, &ModelSpec::CoarseMeshHomogenized { level: 0 }, 0.05, 0.00625).unwrap();
        assert_eq!(m.num_vertices(), 6 * 2);
        let m = build_mesh(&p, &ModelSpec::GlobalHomogenized, 0.05, 0.00625).unwrap();
        assert_eq!(m.num_vertices(), 6 * 2);
        assert!(build_mesh(&p, &ModelSpec::CoarseMeshHomogenized { level: 4 }, 0.05, 0.00625).is_err());
    }

    #[test]
    fn non_nested_sizes_rejected() {
        let p = rect(1.0, 0.2, 0.05);
        assert!(matches!(
            build_mesh(&p, &ModelSpec::FineScale, 0.05, 0.03),
            Err(Error::NonNestedSizes(_))
        ));
        assert!(matches!(
            build_mesh(&p, &ModelSpec::FineScale, 0.01, 0.02),
            Err(Error::NonNestedSizes(_))
        ));
    }

    #[test]
    fn boundary_tags_cover_rectangle() {
        let p = rect(0.2, 0.1, 0.05);
        let m = build_mesh(&p, &ModelSpec::refined(BTreeSet::from([2])), 0.05, 0.0125).unwrap();
        let mut len = HashMap::new();
        for f in &m.boundary {
            let d = m.vertices[f.vertices[0] as usize].dist(m.vertices[f.vertices[1] as usize]);
            *len.entry(f.segment.unwrap()).or_insert(0.0) += d;
        }
        assert!((len[&0] - 0.2).abs() < 1e-12 && (len[&2] - 0.2).abs() < 1e-12);
        assert!((len[&1] - 0.1).abs() < 1e-12 && (len[&3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn l_shape_mesh_has_same_staircase_for_all_models() {
        let p = partition_blocks(&Domain::l_shape(), 0.2).unwrap();
        let coarse = build_mesh(&p, &ModelSpec::BlockwiseHomogenized, 0.05, 0.0125).unwrap();
        let fine = build_mesh(&p, &ModelSpec::FineScale, 0.05, 0.0125).unwrap();
        check_balance(&coarse);
        assert!((coarse.area() - fine.area()).abs() < 1e-12);
        let f = p.domain.fillet.clone().unwrap();
        // staircase area converges to the fillet piece
        let stair: f64 = (0..fine.num_elements())
            .filter(|&e| fine.element_block[e] == 17)
            .map(|e| fine.geom[e].area)
            .sum();
        assert!((stair - f.piece_area()).abs() < 0.0125 * 0.2);
        let arc: Vec<_> = coarse.boundary.iter().filter(|b| b.segment.is_none()).collect();
        assert!(!arc.is_empty());
    }
}
