//! Planar primitives shared by the media and finite element modules.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Closed containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains_eps(&self, p: Point, eps: f64) -> bool {
        p.x >= self.x0 - eps && p.x <= self.x1 + eps && p.y >= self.y0 - eps && p.y <= self.y1 + eps
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// Overlap with positive extent beyond `tol` in both directions.
    pub fn overlaps(&self, other: &Rect, tol: f64) -> bool {
        self.x1.min(other.x1) - self.x0.max(other.x0) > tol && self.y1.min(other.y1) - self.y0.max(other.y0) > tol
    }

    /// Smallest distance from `p` to the rectangle (zero inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }
}

pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub fn centroid(a: Point, b: Point, c: Point) -> Point {
    Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
}

/// Clips a convex polygon against an axis-aligned rectangle (Sutherland-Hodgman).
pub fn clip_to_rect(poly: &[Point], rect: &Rect) -> Vec<Point> {
    let mut out = poly.to_vec();
    // (axis, bound, keep_greater)
    let planes = [
        (0, rect.x0, true),
        (0, rect.x1, false),
        (1, rect.y0, true),
        (1, rect.y1, false),
    ];
    for &(axis, bound, keep_greater) in &planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: &Point| if axis == 0 { p.x } else { p.y };
        let inside = |p: &Point| {
            if keep_greater {
                coord(p) >= bound
            } else {
                coord(p) <= bound
            }
        };
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - coord(&prev)) / (coord(&cur) - coord(&prev));
                out.push(Point::new(
                    prev.x + t * (cur.x - prev.x),
                    prev.y + t * (cur.y - prev.y),
                ));
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Fan triangulation of a convex polygon, skipping degenerate pieces.
pub fn fan(poly: &[Point]) -> impl Iterator<Item = [Point; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).filter_map(move |i| {
        let t = [poly[0], poly[i], poly[i + 1]];
        (triangle_area(t[0], t[1], t[2]).abs() > 0.0).then_some(t)
    })
}

/// Barycentric coordinates of `p` with respect to triangle `(a, b, c)`.
pub fn barycentric(p: Point, a: Point, b: Point, c: Point) -> [f64; 3] {
    let area = triangle_area(a, b, c);
    let la = triangle_area(p, b, c) / area;
    let lb = triangle_area(a, p, c) / area;
    [la, lb, 1.0 - la - lb]
}

/// Degree-5, 7-point rule on the reference triangle: (barycentric coordinates, weight).
/// Weights sum to one and are to be scaled by the triangle area.
pub const DUNAVANT7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

pub fn from_barycentric(l: &[f64; 3], a: Point, b: Point, c: Point) -> Point {
    Point::new(
        l[0] * a.x + l[1] * b.x + l[2] * c.x,
        l[0] * a.y + l[1] * b.y + l[2] * c.y,
    )
}
