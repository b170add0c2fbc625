//! Uniform triangulations of the unit square and the distance geometry used
//! by the weighted stability measurements.

use crate::error::{FemError, Result};
use crate::{Point, Vector};

/// Side of the unit square a boundary facet lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> Vector {
        match self {
            Side::Bottom => Vector::new(0.0, -1.0),
            Side::Right => Vector::new(1.0, 0.0),
            Side::Top => Vector::new(0.0, 1.0),
            Side::Left => Vector::new(-1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet {
    /// Vertex indices, ordered by ascending coordinate along the side.
    pub endpoints: [usize; 2],
    pub outward_normal: Vector,
    pub length: f64,
    pub parent_triangle: usize,
    pub side: Side,
}

/// Triangulation of `[0,1]^2` built from an `n x n` grid, each cell split
/// along its bottom-left to top-right diagonal.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Ordered bottom, right, top, left; ascending coordinate within a side.
    pub boundary_facets: Vec<BoundaryFacet>,
    pub grid_n: usize,
    pub h_max: f64,
    pub h_grid: f64,
}

fn checked_sizes(n: usize) -> Option<(usize, usize, usize)> {
    let side = n.checked_add(1)?;
    let nv = side.checked_mul(side)?;
    let nt = n.checked_mul(n)?.checked_mul(2)?;
    // triangle connectivity is stored as 3 indices per triangle
    nt.checked_mul(3)?;
    let nf = n.checked_mul(4)?;
    Some((nv, nt, nf))
}

/// Builds the uniform right-diagonal triangulation with `n` cells per side.
pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(FemError::InvalidArgument(
            "grid subdivisions must be positive".into(),
        ));
    }
    let (nv, nt, nf) = checked_sizes(n).ok_or(FemError::MeshTooLarge(n))?;
    // refuse sizes whose coordinate arrays alone could not be addressed
    if nv > isize::MAX as usize / std::mem::size_of::<Point>() {
        return Err(FemError::MeshTooLarge(n));
    }

    let h = 1.0 / n as f64;
    let vid = |i: usize, j: usize| j * (n + 1) + i;

    let mut vertices = Vec::with_capacity(nv);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }

    let mut triangles = Vec::with_capacity(nt);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let lower = |i: usize, j: usize| 2 * (j * n + i);
    let upper = |i: usize, j: usize| 2 * (j * n + i) + 1;
    let mut boundary_facets = Vec::with_capacity(nf);
    let mut push = |endpoints: [usize; 2], parent: usize, side: Side| {
        boundary_facets.push(BoundaryFacet {
            endpoints,
            outward_normal: side.outward_normal(),
            length: h,
            parent_triangle: parent,
            side,
        })
    };
    for i in 0..n {
        push([vid(i, 0), vid(i + 1, 0)], lower(i, 0), Side::Bottom);
    }
    for j in 0..n {
        push([vid(n, j), vid(n, j + 1)], lower(n - 1, j), Side::Right);
    }
    for i in 0..n {
        push([vid(i, n), vid(i + 1, n)], upper(i, n - 1), Side::Top);
    }
    for j in 0..n {
        push([vid(0, j), vid(0, j + 1)], upper(0, j), Side::Left);
    }

    let mut mesh = Mesh {
        vertices,
        triangles,
        boundary_facets,
        grid_n: n,
        h_max: 0.0,
        h_grid: h,
    };
    mesh.h_max = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_diameter(t))
        .fold(0.0, f64::max);
    Ok(mesh)
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_boundary_facets(&self) -> usize {
        self.boundary_facets.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area, positive for counter-clockwise triangles.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).perp(&(c - a))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        Point::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    /// Point on facet `f` at local coordinate `s` in `[0,1]`.
    pub fn facet_point(&self, f: usize, s: f64) -> Point {
        let [a, b] = self.boundary_facets[f].endpoints;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        pa + (pb - pa) * s
    }

    pub fn facet_midpoint(&self, f: usize) -> Point {
        self.facet_point(f, 0.5)
    }

    /// Index of a triangle containing `x`. Points on shared edges resolve to
    /// the triangle of the cell above/right, clamped at the outer boundary.
    pub fn locate(&self, x: Point) -> Result<usize> {
        const TOL: f64 = 1e-12;
        if !(x.x >= -TOL && x.x <= 1.0 + TOL && x.y >= -TOL && x.y <= 1.0 + TOL) {
            return Err(FemError::PointNotFound(x.x, x.y));
        }
        let n = self.grid_n;
        let cell = |c: f64| ((c * n as f64).floor().max(0.0) as usize).min(n - 1);
        let (i, j) = (cell(x.x), cell(x.y));
        let (x0, y0) = (i as f64 / n as f64, j as f64 / n as f64);
        let base = 2 * (j * n + i);
        // lower triangle lies below the diagonal through (x0,y0)
        if x.x - x0 > x.y - y0 {
            Ok(base)
        } else {
            Ok(base + 1)
        }
    }

    /// Indices of all vertices lying on the boundary, in counter-clockwise
    /// order starting at the origin.
    pub fn boundary_vertex_loop(&self) -> Vec<usize> {
        let n = self.grid_n;
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut out = Vec::with_capacity(4 * n);
        out.extend((0..n).map(|i| vid(i, 0)));
        out.extend((0..n).map(|j| vid(n, j)));
        out.extend((0..n).map(|i| vid(n - i, n)));
        out.extend((0..n).map(|j| vid(0, n - j)));
        out
    }
}

/// Distance to the boundary of the unit square, clamped to zero outside it.
pub fn boundary_distance(x: Point) -> f64 {
    x.x.min(1.0 - x.x).min(x.y).min(1.0 - x.y).max(0.0)
}

/// The shifted weight `max(0, dist(x, boundary) - delta_prime)`.
pub fn distance_weight(x: Point, delta_prime: f64) -> f64 {
    (boundary_distance(x) - delta_prime).max(0.0)
}

/// Boundary of the inset square `[delta, 1 - delta]^2`, the level set of the
/// boundary distance at `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetContour {
    pub delta: f64,
    /// Counter-clockwise polyline: bottom, right, top, left.
    pub segments: Vec<[Point; 2]>,
}

impl OffsetContour {
    pub fn perimeter(&self) -> f64 {
        self.segments.iter().map(|[a, b]| (b - a).norm()).sum()
    }
}

pub fn offset_contour(delta: f64) -> Result<OffsetContour> {
    if !(delta >= 0.0) {
        return Err(FemError::InvalidArgument(format!(
            "offset must be non-negative, got {delta}"
        )));
    }
    if delta >= 0.5 {
        return Err(FemError::OffsetExceedsInradius(delta));
    }
    let (lo, hi) = (delta, 1.0 - delta);
    let p = [
        Point::new(lo, lo),
        Point::new(hi, lo),
        Point::new(hi, hi),
        Point::new(lo, hi),
    ];
    Ok(OffsetContour {
        delta,
        segments: vec![[p[0], p[1]], [p[1], p[2]], [p[2], p[3]], [p[3], p[0]]],
    })
}
