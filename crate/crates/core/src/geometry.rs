//! Polygon geometry under the even-odd fill rule.

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon has no rings")]
    NoRings,
    #[error("ring {ring} has {vertices} vertices after closing, need at least 4")]
    TooFewVertices { ring: usize, vertices: usize },
    #[error("ring {ring} has a non-finite coordinate")]
    NonFinite { ring: usize },
}

/// One field outline: any number of closed rings, interior decided by the
/// even-odd rule over all rings jointly, so ring orientation is irrelevant.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonGeometry {
    rings: Vec<Vec<Point>>,
}

impl PolygonGeometry {
    /// Builds a geometry, appending the first vertex to any ring that is not
    /// explicitly closed.
    pub fn new(rings: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        if rings.is_empty() {
            return Err(GeometryError::NoRings);
        }
        let mut closed = Vec::with_capacity(rings.len());
        for (i, mut ring) in rings.into_iter().enumerate() {
            if ring.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
                return Err(GeometryError::NonFinite { ring: i });
            }
            if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
                if first != last {
                    ring.push(first);
                }
            }
            if ring.len() < 4 {
                return Err(GeometryError::TooFewVertices {
                    ring: i,
                    vertices: ring.len(),
                });
            }
            closed.push(ring);
        }
        Ok(Self { rings: closed })
    }

    pub fn rings(&self) -> &[Vec<Point>] {
        &self.rings
    }

    pub fn into_rings(self) -> Vec<Vec<Point>> {
        self.rings
    }

    /// `(min_x, min_y, max_x, max_y)` over all vertices.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for p in self.rings.iter().flatten() {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    /// Iterates every ring edge as `(start, end)`.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings
            .iter()
            .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
    }

    /// Even-odd point test by ray casting towards +x.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if let Some(x) = crossing_x(a, b, py) {
                if px < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Even-odd area for rings that do not cross each other: each ring's
    /// absolute area is added or subtracted by the parity of how many other
    /// rings enclose it.
    pub fn area(&self) -> f64 {
        let mut total = 0.0;
        for (i, ring) in self.rings.iter().enumerate() {
            let probe = ring_probe_point(ring);
            let depth = self
                .rings
                .iter()
                .enumerate()
                .filter(|&(j, other)| j != i && ring_contains(other, probe[0], probe[1]))
                .count();
            let a = ring_signed_area(ring).abs();
            if depth % 2 == 0 {
                total += a;
            } else {
                total -= a;
            }
        }
        total
    }
}

/// x-coordinate where edge `a`-`b` crosses the horizontal line `y = py`, if the
/// edge straddles it under the half-open rule `(y1 > py) != (y2 > py)`.
///
/// Evaluated from the lower endpoint, so an edge shared by two neighbouring
/// polygons yields the same abscissa whichever way each one traverses it.
#[inline]
pub fn crossing_x(a: Point, b: Point, py: f64) -> Option<f64> {
    let (a, b) = if (a[1], a[0]) <= (b[1], b[0]) {
        (a, b)
    } else {
        (b, a)
    };
    let (x1, y1) = (a[0], a[1]);
    let (x2, y2) = (b[0], b[1]);
    if (y1 > py) != (y2 > py) {
        Some(x1 + (py - y1) * (x2 - x1) / (y2 - y1))
    } else {
        None
    }
}

fn ring_contains(ring: &[Point], px: f64, py: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        if let Some(x) = crossing_x(w[0], w[1], py) {
            if px < x {
                inside = !inside;
            }
        }
    }
    inside
}

// A point strictly on the ring's interior side, used to test ring nesting.
// The midpoint of the first edge nudged inward is enough for non-crossing rings.
fn ring_probe_point(ring: &[Point]) -> Point {
    let bbox_span = ring
        .iter()
        .fold([f64::INFINITY, f64::NEG_INFINITY], |acc, p| {
            [acc[0].min(p[0]), acc[1].max(p[0])]
        });
    let span = (bbox_span[1] - bbox_span[0]).abs().max(1.0);
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let eps = len.min(span) * 1e-6;
        for sign in [1.0, -1.0] {
            let p = [
                mid[0] - sign * dy / len * eps,
                mid[1] + sign * dx / len * eps,
            ];
            if ring_contains(ring, p[0], p[1]) {
                return p;
            }
        }
    }
    ring[0]
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum::<f64>()
        / 2.0
}
