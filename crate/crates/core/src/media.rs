//! Computational domains, block partitions and random two-phase microstructures.
//!
//! A [`Domain`] is a union of axis-aligned rectangles plus an optional fillet
//! piece (a square block with a quarter disc removed). [`partition_blocks`]
//! tiles it with square blocks, and [`sample_microstructure`] places disc
//! inclusions in the blocks from a seed.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::rng::{rng_from_seed, SampleRng};

/// Default midpoint subgrid resolution for volume fractions.
pub const DEFAULT_FRACTION_QUADRATURE: usize = 64;

const REL_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    NeumannZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub a: Point,
    pub b: Point,
    pub kind: BoundaryKind,
}

impl BoundarySegment {
    pub fn new(a: Point, b: Point, kind: BoundaryKind) -> Self {
        BoundarySegment { a, b, kind }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// True if `p` lies on the closed segment within `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let t = ((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2;
        let len = len2.sqrt();
        if t < -tol / len || t > 1.0 + tol / len {
            return false;
        }
        let cross = (p.x - self.a.x) * dy - (p.y - self.a.y) * dx;
        (cross / len).abs() <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

/// A square block of edge `radius` with the quarter disc around `center` removed.
///
/// `quadrant` says on which side of `center` the square sits; the removed disc
/// touches the two square edges through `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fillet {
    pub center: Point,
    pub radius: f64,
    pub quadrant: Quadrant,
    pub kind: BoundaryKind,
}

impl Fillet {
    pub fn square(&self) -> Rect {
        let (c, r) = (self.center, self.radius);
        match self.quadrant {
            Quadrant::UpperLeft => Rect::new(c.x - r, c.y, c.x, c.y + r),
            Quadrant::UpperRight => Rect::new(c.x, c.y, c.x + r, c.y + r),
            Quadrant::LowerLeft => Rect::new(c.x - r, c.y - r, c.x, c.y),
            Quadrant::LowerRight => Rect::new(c.x, c.y - r, c.x + r, c.y),
        }
    }

    /// True if `p` lies in the removed quarter disc (open disc).
    pub fn in_cutout(&self, p: Point) -> bool {
        p.dist2(self.center) < self.radius * self.radius
    }

    pub fn piece_contains(&self, p: Point) -> bool {
        self.square().contains(p) && !self.in_cutout(p)
    }

    pub fn piece_area(&self) -> f64 {
        self.radius * self.radius * (1.0 - PI / 4.0)
    }

    /// The two square edges not touched by the cutout.
    fn outer_edges(&self) -> [(Point, Point); 2] {
        let s = self.square();
        let far_x = if (s.x0 - self.center.x).abs() > (s.x1 - self.center.x).abs() {
            s.x0
        } else {
            s.x1
        };
        let far_y = if (s.y0 - self.center.y).abs() > (s.y1 - self.center.y).abs() {
            s.y0
        } else {
            s.y1
        };
        [
            (Point::new(far_x, s.y0), Point::new(far_x, s.y1)),
            (Point::new(s.x0, far_y), Point::new(s.x1, far_y)),
        ]
    }

    /// The square corner farthest from the cutout center.
    pub fn outer_corner(&self) -> Point {
        let s = self.square();
        let x = if (s.x0 - self.center.x).abs() > (s.x1 - self.center.x).abs() {
            s.x0
        } else {
            s.x1
        };
        let y = if (s.y0 - self.center.y).abs() > (s.y1 - self.center.y).abs() {
            s.y0
        } else {
            s.y1
        };
        Point::new(x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub rectangles: Vec<Rect>,
    #[serde(default)]
    pub fillet: Option<Fillet>,
    pub segments: Vec<BoundarySegment>,
}

impl Domain {
    /// Rectangle with Dirichlet left and right edges, Neumann top, zero-flux bottom.
    pub fn heat_rectangle(width: f64, height: f64) -> Domain {
        let (p00, p10) = (Point::new(0.0, 0.0), Point::new(width, 0.0));
        let (p11, p01) = (Point::new(width, height), Point::new(0.0, height));
        Domain {
            rectangles: vec![Rect::new(0.0, 0.0, width, height)],
            fillet: None,
            segments: vec![
                BoundarySegment::new(p00, p10, BoundaryKind::NeumannZero),
                BoundarySegment::new(p10, p11, BoundaryKind::Dirichlet),
                BoundarySegment::new(p11, p01, BoundaryKind::Neumann),
                BoundarySegment::new(p01, p00, BoundaryKind::Dirichlet),
            ],
        }
    }

    /// Unit-square style rectangle clamped on its whole boundary.
    pub fn clamped_rectangle(rect: Rect) -> Domain {
        let p = [
            Point::new(rect.x0, rect.y0),
            Point::new(rect.x1, rect.y0),
            Point::new(rect.x1, rect.y1),
            Point::new(rect.x0, rect.y1),
        ];
        Domain {
            rectangles: vec![rect],
            fillet: None,
            segments: (0..4)
                .map(|i| BoundarySegment::new(p[i], p[(i + 1) % 4], BoundaryKind::Dirichlet))
                .collect(),
        }
    }

    /// The 1 m x 1 m L-shaped plate with a filleted inner corner: clamped at the
    /// bottom, loaded on the right edge of the upper arm.
    pub fn l_shape() -> Domain {
        let seg = |ax, ay, bx, by, kind| BoundarySegment::new(Point::new(ax, ay), Point::new(bx, by), kind);
        use BoundaryKind::*;
        Domain {
            rectangles: vec![Rect::new(0.0, 0.0, 0.4, 1.0), Rect::new(0.4, 0.6, 1.0, 1.0)],
            fillet: Some(Fillet {
                center: Point::new(0.6, 0.4),
                radius: 0.2,
                quadrant: Quadrant::UpperLeft,
                kind: NeumannZero,
            }),
            segments: vec![
                seg(0.0, 0.0, 0.4, 0.0, Dirichlet),
                seg(0.4, 0.0, 0.4, 0.4, NeumannZero),
                seg(0.6, 0.6, 1.0, 0.6, NeumannZero),
                seg(1.0, 0.6, 1.0, 1.0, Neumann),
                seg(1.0, 1.0, 0.0, 1.0, NeumannZero),
                seg(0.0, 1.0, 0.0, 0.0, NeumannZero),
            ],
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.rectangles.iter().any(|r| r.contains(p))
            || self.fillet.as_ref().is_some_and(|f| f.piece_contains(p))
    }

    pub fn area(&self) -> f64 {
        self.rectangles.iter().map(Rect::area).sum::<f64>()
            + self.fillet.as_ref().map_or(0.0, Fillet::piece_area)
    }

    pub fn bounding_box(&self) -> Rect {
        let mut all: Vec<Rect> = self.rectangles.clone();
        if let Some(f) = &self.fillet {
            all.push(f.square());
        }
        all.iter().fold(
            Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |acc, r| Rect::new(acc.x0.min(r.x0), acc.y0.min(r.y0), acc.x1.max(r.x1), acc.y1.max(r.y1)),
        )
    }

    fn scale(&self) -> f64 {
        let bb = self.bounding_box();
        bb.width().max(bb.height())
    }

    /// Checks extents, overlaps and that the tagged segments cover the straight
    /// boundary exactly once.
    pub fn validate(&self) -> Result<()> {
        if self.rectangles.is_empty() {
            return Err(Error::InvalidDomain("no rectangles".into()));
        }
        for r in &self.rectangles {
            if !(r.width() > 0.0 && r.height() > 0.0) {
                return Err(Error::InvalidDomain(format!("rectangle {r:?} has non-positive extent")));
            }
        }
        let mut pieces: Vec<Rect> = self.rectangles.clone();
        if let Some(f) = &self.fillet {
            if !(f.radius > 0.0) {
                return Err(Error::InvalidDomain("fillet radius must be positive".into()));
            }
            pieces.push(f.square());
        }
        let tol = REL_EPS * self.scale();
        for i in 0..pieces.len() {
            for j in i + 1..pieces.len() {
                if pieces[i].overlaps(&pieces[j], tol) {
                    return Err(Error::InvalidDomain(format!(
                        "pieces {:?} and {:?} overlap",
                        pieces[i], pieces[j]
                    )));
                }
            }
        }
        for s in &self.segments {
            if s.length() <= tol {
                return Err(Error::InvalidDomain("degenerate boundary segment".into()));
            }
        }
        // straight boundary pieces, split at every corner coordinate
        let mut cuts_x: Vec<f64> = Vec::new();
        let mut cuts_y: Vec<f64> = Vec::new();
        for r in &pieces {
            cuts_x.extend([r.x0, r.x1]);
            cuts_y.extend([r.y0, r.y1]);
        }
        for s in &self.segments {
            cuts_x.extend([s.a.x, s.b.x]);
            cuts_y.extend([s.a.y, s.b.y]);
        }
        let mut edges: Vec<(Point, Point)> = Vec::new();
        for r in &self.rectangles {
            edges.push((Point::new(r.x0, r.y0), Point::new(r.x1, r.y0)));
            edges.push((Point::new(r.x1, r.y0), Point::new(r.x1, r.y1)));
            edges.push((Point::new(r.x0, r.y1), Point::new(r.x1, r.y1)));
            edges.push((Point::new(r.x0, r.y0), Point::new(r.x0, r.y1)));
        }
        if let Some(f) = &self.fillet {
            edges.extend(f.outer_edges());
        }
        let mut boundary_len = 0.0;
        for (a, b) in edges {
            let horizontal = (a.y - b.y).abs() <= tol;
            let (lo, hi, cuts) = if horizontal { (a.x, b.x, &cuts_x) } else { (a.y, b.y, &cuts_y) };
            let mut ts: Vec<f64> = cuts.iter().copied().filter(|&c| c > lo + tol && c < hi - tol).collect();
            ts.push(lo);
            ts.push(hi);
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|x, y| (*x - *y).abs() <= tol);
            for w in ts.windows(2) {
                let m = 0.5 * (w[0] + w[1]);
                let mid = if horizontal { Point::new(m, a.y) } else { Point::new(a.x, m) };
                let off = 10.0 * tol.max(1e-12);
                let probes = if horizontal {
                    [Point::new(mid.x, mid.y - off), Point::new(mid.x, mid.y + off)]
                } else {
                    [Point::new(mid.x - off, mid.y), Point::new(mid.x + off, mid.y)]
                };
                let inside = probes.iter().filter(|p| self.contains(**p)).count();
                if inside == 2 {
                    continue;
                }
                boundary_len += w[1] - w[0];
                let covering = self.segments.iter().filter(|s| s.contains(mid, tol)).count();
                if covering != 1 {
                    return Err(Error::InvalidDomain(format!(
                        "boundary point ({:.6}, {:.6}) is covered by {covering} segments",
                        mid.x, mid.y
                    )));
                }
            }
        }
        let tagged: f64 = self.segments.iter().map(BoundarySegment::length).sum();
        if (tagged - boundary_len).abs() > 1e-6 * self.scale() {
            return Err(Error::InvalidDomain(format!(
                "tagged length {tagged} differs from straight boundary length {boundary_len}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// 1-based block id.
    pub id: usize,
    /// The square covered by the block; for a fillet block the cutout is excluded.
    pub rect: Rect,
    pub fillet: bool,
}

/// Square tiling of a [`Domain`]; block ids run 1..=K_b.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    pub domain: Domain,
    pub edge: f64,
    pub blocks: Vec<Block>,
    origin: Point,
    nx: usize,
    ny: usize,
    lookup: Vec<Option<u32>>,
}

fn integer_ratio(extent: f64, edge: f64) -> Result<usize> {
    let n = (extent / edge).round();
    if n < 1.0 || (n * edge - extent).abs() > REL_EPS * extent.abs().max(edge) {
        return Err(Error::NonTilingEdge { edge, extent });
    }
    Ok(n as usize)
}

/// Tiles `domain` with square blocks of size `edge`, row-major per rectangle,
/// the fillet block (if any) last.
pub fn partition_blocks(domain: &Domain, edge: f64) -> Result<BlockPartition> {
    domain.validate()?;
    if !(edge > 0.0) {
        return Err(Error::NonTilingEdge { edge, extent: 0.0 });
    }
    let bb = domain.bounding_box();
    let origin = Point::new(bb.x0, bb.y0);
    let nx = integer_ratio(bb.width(), edge)?;
    let ny = integer_ratio(bb.height(), edge)?;
    let mut lookup = vec![None; nx * ny];
    let mut blocks = Vec::new();
    let mut place = |rect: Rect, fillet: bool, blocks: &mut Vec<Block>| -> Result<()> {
        let i = integer_ratio_offset(rect.x0 - origin.x, edge)?;
        let j = integer_ratio_offset(rect.y0 - origin.y, edge)?;
        let id = blocks.len() + 1;
        lookup[j * nx + i] = Some((id - 1) as u32);
        blocks.push(Block { id, rect, fillet });
        Ok(())
    };
    for r in &domain.rectangles {
        let cols = integer_ratio(r.width(), edge)?;
        let rows = integer_ratio(r.height(), edge)?;
        for j in 0..rows {
            for i in 0..cols {
                let x0 = r.x0 + i as f64 * edge;
                let y0 = r.y0 + j as f64 * edge;
                place(Rect::new(x0, y0, x0 + edge, y0 + edge), false, &mut blocks)?;
            }
        }
    }
    if let Some(f) = &domain.fillet {
        let sq = f.square();
        if (f.radius - edge).abs() > REL_EPS * edge {
            return Err(Error::NonTilingEdge { edge, extent: f.radius });
        }
        place(sq, true, &mut blocks)?;
    }
    let area: f64 = blocks
        .iter()
        .map(|b| if b.fillet { domain.fillet.as_ref().unwrap().piece_area() } else { b.rect.area() })
        .sum();
    if (area - domain.area()).abs() > 1e-12 * domain.area() {
        return Err(Error::InvalidDomain(format!("blocks cover {area}, domain has {}", domain.area())));
    }
    Ok(BlockPartition {
        domain: domain.clone(),
        edge,
        blocks,
        origin,
        nx,
        ny,
        lookup,
    })
}

fn integer_ratio_offset(offset: f64, edge: f64) -> Result<usize> {
    let n = (offset / edge).round();
    if n < 0.0 || (n * edge - offset).abs() > REL_EPS * edge.max(offset.abs()) {
        return Err(Error::NonTilingEdge { edge, extent: offset });
    }
    Ok(n as usize)
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: usize) -> Result<&Block> {
        id.checked_sub(1)
            .and_then(|k| self.blocks.get(k))
            .ok_or(Error::UnknownRegion(id))
    }

    /// Area of the material part of block `id`.
    pub fn block_area(&self, id: usize) -> Result<f64> {
        let b = self.block(id)?;
        Ok(if b.fillet {
            self.domain.fillet.as_ref().map_or(0.0, Fillet::piece_area)
        } else {
            b.rect.area()
        })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Block id whose square contains `p` (closed, lower/left cells win on shared edges).
    pub fn block_at(&self, p: Point) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.edge;
        let fy = (p.y - self.origin.y) / self.edge;
        let tol = 1e-9;
        if fx < -tol || fy < -tol || fx > self.nx as f64 + tol || fy > self.ny as f64 + tol {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        if let Some(k) = self.lookup[j * self.nx + i] {
            return Some(k as usize + 1);
        }
        // on a shared edge the neighboring cell may hold the block
        let (fi, fj) = (fx - fx.floor(), fy - fy.floor());
        let di: &[isize] = if fi < tol { &[0, -1] } else { &[0] };
        let dj: &[isize] = if fj < tol { &[0, -1] } else { &[0] };
        for &a in di {
            for &b in dj {
                let (ii, jj) = (i as isize + a, j as isize + b);
                if ii >= 0 && jj >= 0 && (ii as usize) < self.nx && (jj as usize) < self.ny {
                    if let Some(k) = self.lookup[jj as usize * self.nx + ii as usize] {
                        return Some(k as usize + 1);
                    }
                }
            }
        }
        None
    }

    /// Blocks whose closed square intersects the closed rectangle `r`.
    pub fn blocks_touching(&self, r: &Rect) -> Vec<usize> {
        let e = self.edge;
        let lo_i = (((r.x0 - self.origin.x) / e).floor().max(0.0) as usize).min(self.nx - 1);
        let hi_i = (((r.x1 - self.origin.x) / e).floor().max(0.0) as usize).min(self.nx - 1);
        let lo_j = (((r.y0 - self.origin.y) / e).floor().max(0.0) as usize).min(self.ny - 1);
        let hi_j = (((r.y1 - self.origin.y) / e).floor().max(0.0) as usize).min(self.ny - 1);
        let mut out = Vec::new();
        let (lo_i, lo_j) = (lo_i.saturating_sub(1), lo_j.saturating_sub(1));
        for j in lo_j..=hi_j.min(self.ny - 1) {
            for i in lo_i..=hi_i.min(self.nx - 1) {
                if let Some(k) = self.lookup[j * self.nx + i] {
                    let b = &self.blocks[k as usize].rect;
                    if b.x0 <= r.x1 && r.x0 <= b.x1 && b.y0 <= r.y1 && r.y0 <= b.y1 {
                        out.push(k as usize + 1);
                    }
                }
            }
        }
        out
    }

    /// True for a single-rectangle partition, where nested coarse meshes exist.
    pub fn is_tensor(&self) -> bool {
        self.domain.rectangles.len() == 1 && self.domain.fillet.is_none()
    }

    /// Edges `edge * 2^k` (coarsest first) of the nested quadrilateral meshes
    /// covering a tensor domain; empty for other partitions.
    pub fn coarse_cell_edges(&self) -> Vec<f64> {
        if !self.is_tensor() {
            return Vec::new();
        }
        let r = self.domain.rectangles[0];
        let (cols, rows) = (
            (r.width() / self.edge).round() as usize,
            (r.height() / self.edge).round() as usize,
        );
        let mut k = 0;
        while cols % (1 << (k + 1)) == 0 && rows % (1 << (k + 1)) == 0 {
            k += 1;
        }
        (0..=k).rev().map(|i| self.edge * (1u64 << i) as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InclusionLayout {
    /// At most one inclusion per block, present with probability `p`.
    BernoulliPerBlock { p: f64 },
    /// An `n x n` grid of candidate positions per block; the count is discrete
    /// uniform on `[n_min, n_max]`, the positions a random permutation prefix.
    SubgridPermutation { n: usize, n_min: usize, n_max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionGenParams {
    pub layout: InclusionLayout,
    /// Block edge scale used for the nominal perturbation sizes.
    pub h: f64,
    pub center_jitter: f64,
    pub nominal_radius: f64,
    pub radius_jitter: f64,
}

impl InclusionGenParams {
    /// Radius `h/4`, center jitter `U[-h/8, h/8]`, radius jitter `U[-h/16, h/16]`.
    pub fn with_layout(layout: InclusionLayout, h: f64) -> Self {
        InclusionGenParams {
            layout,
            h,
            center_jitter: h / 8.0,
            nominal_radius: h / 4.0,
            radius_jitter: h / 16.0,
        }
    }

    pub fn bernoulli(p: f64, h: f64) -> Self {
        Self::with_layout(InclusionLayout::BernoulliPerBlock { p }, h)
    }

    pub fn subgrid(n: usize, n_min: usize, n_max: usize, h: f64) -> Self {
        Self::with_layout(InclusionLayout::SubgridPermutation { n, n_min, n_max }, h)
    }

    fn cell_size(&self, edge: f64) -> f64 {
        match self.layout {
            InclusionLayout::BernoulliPerBlock { .. } => edge,
            InclusionLayout::SubgridPermutation { n, .. } => edge / n as f64,
        }
    }

    pub fn validate(&self, edge: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self.layout {
            InclusionLayout::BernoulliPerBlock { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("p = {p} outside [0, 1]"));
                }
            }
            InclusionLayout::SubgridPermutation { n, n_min, n_max } => {
                if n == 0 || n_min > n_max || n_max > n * n {
                    return bad(format!("need 0 <= n_min <= n_max <= n^2, got ({n}, {n_min}, {n_max})"));
                }
            }
        }
        if !(self.center_jitter >= 0.0 && self.radius_jitter >= 0.0) {
            return bad("jitter half-widths must be non-negative".into());
        }
        if !(self.nominal_radius - self.radius_jitter > 0.0) {
            return bad("nominal radius minus radius jitter must be positive".into());
        }
        let reach = self.center_jitter + self.nominal_radius + self.radius_jitter;
        if reach > 0.5 * self.cell_size(edge) * (1.0 + REL_EPS) {
            return bad(format!(
                "inclusions may leave their cell: reach {reach} exceeds half cell {}",
                0.5 * self.cell_size(edge)
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub center: Point,
    pub radius: f64,
    /// Block id the inclusion was generated in.
    pub block: usize,
}

impl Inclusion {
    pub fn contains(&self, p: Point) -> bool {
        p.dist2(self.center) <= self.radius * self.radius
    }

    fn bbox(&self) -> Rect {
        let (c, r) = (self.center, self.radius);
        Rect::new(c.x - r, c.y - r, c.x + r, c.y + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Matrix,
    Inclusion,
}

/// One realization of the random two-phase medium.
#[derive(Clone, Debug)]
pub struct Microstructure {
    pub inclusions: Vec<Inclusion>,
    pub partition: Arc<BlockPartition>,
    pub seed: u64,
    /// Inclusions whose bounding box touches each block (index = id - 1).
    by_block: Vec<Vec<u32>>,
}

fn uniform_sym(rng: &mut SampleRng, half_width: f64) -> f64 {
    half_width * (2.0 * rng.gen::<f64>() - 1.0)
}

/// Draws a microstructure. The draw order is fixed: blocks by id, and per
/// inclusion its x offset, y offset, then radius offset.
pub fn sample_microstructure(
    partition: &Arc<BlockPartition>,
    params: &InclusionGenParams,
    seed: u64,
) -> Result<Microstructure> {
    params.validate(partition.edge)?;
    let mut rng = rng_from_seed(seed);
    let mut inclusions = Vec::new();
    let fillet = partition.domain.fillet.as_ref();
    for block in &partition.blocks {
        let mut local: Vec<(usize, Inclusion)> = Vec::new();
        let mut draw = |rng: &mut SampleRng, nominal: Point, cell: usize| {
            let dx = uniform_sym(rng, params.center_jitter);
            let dy = uniform_sym(rng, params.center_jitter);
            let dr = uniform_sym(rng, params.radius_jitter);
            local.push((
                cell,
                Inclusion {
                    center: Point::new(nominal.x + dx, nominal.y + dy),
                    radius: params.nominal_radius + dr,
                    block: block.id,
                },
            ));
        };
        match params.layout {
            InclusionLayout::BernoulliPerBlock { p } => {
                if rng.gen::<f64>() < p {
                    draw(&mut rng, block.rect.center(), 0);
                }
            }
            InclusionLayout::SubgridPermutation { n, n_min, n_max } => {
                let count = rng.gen_range(n_min..=n_max);
                let mut cells: Vec<usize> = (0..n * n).collect();
                cells.shuffle(&mut rng);
                let cell = block.rect.width() / n as f64;
                for &c in &cells[..count] {
                    let (ci, cj) = (c % n, c / n);
                    let nominal = Point::new(
                        block.rect.x0 + (ci as f64 + 0.5) * cell,
                        block.rect.y0 + (cj as f64 + 0.5) * cell,
                    );
                    draw(&mut rng, nominal, c);
                }
            }
        }
        if block.fillet {
            let f = fillet.expect("fillet block without fillet");
            let keep_cell = match params.layout {
                InclusionLayout::BernoulliPerBlock { .. } => None,
                InclusionLayout::SubgridPermutation { n, .. } => {
                    let corner = f.outer_corner();
                    let cell = block.rect.width() / n as f64;
                    let ci = if corner.x > block.rect.center().x { n - 1 } else { 0 };
                    let cj = if corner.y > block.rect.center().y { n - 1 } else { 0 };
                    let _ = cell;
                    Some(cj * n + ci)
                }
            };
            local.retain(|(cell, inc)| {
                keep_cell.is_none_or(|k| k == *cell)
                    && inc.center.dist(f.center) >= f.radius + inc.radius
            });
        }
        inclusions.extend(local.into_iter().map(|(_, inc)| inc));
    }
    Ok(Microstructure::new(inclusions, Arc::clone(partition), seed))
}

impl Microstructure {
    pub fn new(inclusions: Vec<Inclusion>, partition: Arc<BlockPartition>, seed: u64) -> Self {
        let mut by_block = vec![Vec::new(); partition.len()];
        for (k, inc) in inclusions.iter().enumerate() {
            for id in partition.blocks_touching(&inc.bbox()) {
                by_block[id - 1].push(k as u32);
            }
        }
        Microstructure {
            inclusions,
            partition,
            seed,
            by_block,
        }
    }

    pub fn empty(partition: Arc<BlockPartition>) -> Self {
        Self::new(Vec::new(), partition, 0)
    }

    /// Phase at a domain point; closed discs count as inclusion.
    pub fn phase_at(&self, p: Point) -> Result<Phase> {
        if !self.partition.domain.contains(p) {
            return Err(Error::OutsideDomain(p.x, p.y));
        }
        Ok(self.phase_unchecked(p))
    }

    /// Phase lookup without the domain test, for points known to be inside.
    pub fn phase_unchecked(&self, p: Point) -> Phase {
        if self.is_inclusion(p) {
            Phase::Inclusion
        } else {
            Phase::Matrix
        }
    }

    pub fn is_inclusion(&self, p: Point) -> bool {
        match self.partition.block_at(p) {
            Some(id) => self.by_block[id - 1]
                .iter()
                .any(|&k| self.inclusions[k as usize].contains(p)),
            None => false,
        }
    }

    pub fn inclusions_in_block(&self, id: usize) -> impl Iterator<Item = &Inclusion> {
        self.by_block[id - 1].iter().map(move |&k| &self.inclusions[k as usize])
    }

    /// Inclusion volume fraction of every block (index = id - 1), by midpoint
    /// quadrature on a `q x q` subgrid per block.
    pub fn block_inclusion_fractions(&self, q: usize) -> Vec<f64> {
        let part = &self.partition;
        let fillet = part.domain.fillet.as_ref();
        part.blocks
            .iter()
            .map(|b| {
                let incs: Vec<&Inclusion> = self.inclusions_in_block(b.id).collect();
                if incs.is_empty() {
                    return 0.0;
                }
                let step = b.rect.width() / q as f64;
                let pt = |i: usize, j: usize| {
                    Point::new(
                        b.rect.x0 + (i as f64 + 0.5) * step,
                        b.rect.y0 + (j as f64 + 0.5) * step,
                    )
                };
                let material = |p: Point| !b.fillet || !fillet.unwrap().in_cutout(p);
                // only the subgrid rows/columns under the inclusions can hit
                let bb = incs.iter().fold(
                    Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                    |acc, inc| {
                        let r = inc.bbox();
                        Rect::new(acc.x0.min(r.x0), acc.y0.min(r.y0), acc.x1.max(r.x1), acc.y1.max(r.y1))
                    },
                );
                let range = |lo: f64, hi: f64, origin: f64| {
                    let a = ((lo - origin) / step - 0.5).floor().max(0.0) as usize;
                    let b = (((hi - origin) / step - 0.5).ceil().max(0.0) as usize + 1).min(q);
                    a.min(q)..b
                };
                let mut hits = 0usize;
                for j in range(bb.y0, bb.y1, b.rect.y0) {
                    for i in range(bb.x0, bb.x1, b.rect.x0) {
                        let p = pt(i, j);
                        if material(p) && incs.iter().any(|inc| inc.contains(p)) {
                            hits += 1;
                        }
                    }
                }
                let total = if b.fillet {
                    (0..q)
                        .flat_map(|j| (0..q).map(move |i| (i, j)))
                        .filter(|&(i, j)| material(pt(i, j)))
                        .count()
                } else {
                    q * q
                };
                hits as f64 / total as f64
            })
            .collect()
    }

    /// Writes one `id,cx,cy,r` line per inclusion (id = parent block id).
    pub fn to_text(&self) -> String {
        let mut s = format!("# seed={}\n", self.seed);
        for inc in &self.inclusions {
            let _ = writeln!(s, "{},{},{},{}", inc.block, inc.center.x, inc.center.y, inc.radius);
        }
        s
    }

    pub fn from_text(text: &str, partition: Arc<BlockPartition>) -> Result<Self> {
        let mut seed = 0;
        let mut inclusions = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# seed=") {
                seed = rest
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad seed line {line:?}")))?;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad inclusion line {line:?}")))
            };
            if f.len() != 4 {
                return Err(Error::InvalidArgument(format!("bad inclusion line {line:?}")));
            }
            inclusions.push(Inclusion {
                block: parse(f[0])? as usize,
                center: Point::new(parse(f[1])?, parse(f[2])?),
                radius: parse(f[3])?,
            });
        }
        Ok(Self::new(inclusions, partition, seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Block(usize),
    Domain,
}

/// `(phi_M, phi_I)` of a block or of the whole domain, with `phi_M = 1 - phi_I`.
pub fn volume_fractions(micro: &Microstructure, region: Region, q: usize) -> Result<(f64, f64)> {
    let fr = micro.block_inclusion_fractions(q);
    let part = &micro.partition;
    let phi_i = match region {
        Region::Block(id) => {
            part.block(id)?;
            fr[id - 1]
        }
        Region::Domain => area_weighted(part, &fr, part.blocks.iter().map(|b| b.id)),
    };
    Ok((1.0 - phi_i, phi_i))
}

/// Area-weighted inclusion fraction over a set of blocks.
pub fn area_weighted(part: &BlockPartition, fractions: &[f64], ids: impl Iterator<Item = usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for id in ids {
        let a = part.block_area(id).unwrap_or(0.0);
        num += a * fractions[id - 1];
        den += a;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
