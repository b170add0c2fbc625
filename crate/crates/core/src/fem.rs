//! P1 and boundary DG0 spaces, quadrature rules, nodal interpolation and
//! pointwise evaluation of discrete functions.

use crate::error::{FemError, Result};
use crate::mesh::{Mesh, OffsetContour};
use crate::{Point, Vector};

/// Quadrature on a reference domain: the unit triangle `{(s,t): s,t >= 0,
/// s + t <= 1}` for `P = [f64; 2]`, the unit interval for `P = f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    /// Polynomials up to this total degree are integrated exactly.
    pub degree: usize,
}

pub type TriangleRule = QuadratureRule<[f64; 2]>;
pub type EdgeRule = QuadratureRule<f64>;

impl<P: Copy> QuadratureRule<P> {
    pub fn iter(&self) -> impl Iterator<Item = (P, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Symmetric Dunavant orbits: (barycentric a, b, b) with 3 permutations, or
// (a, b, c) with 6.
fn orbit3(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 2]>, wts: &mut Vec<f64>) {
    for p in [[b, b], [a, b], [b, a]] {
        pts.push(p);
        wts.push(0.5 * w);
    }
}

fn orbit6(a: f64, b: f64, c: f64, w: f64, pts: &mut Vec<[f64; 2]>, wts: &mut Vec<f64>) {
    for p in [[a, b], [b, a], [b, c], [c, b], [a, c], [c, a]] {
        pts.push(p);
        wts.push(0.5 * w);
    }
}

/// Triangle rule exact for polynomials of the requested degree (1 to 6).
/// All weights are positive; degree 3 is served by the degree 4 rule.
pub fn triangle_quadrature(degree: usize) -> Result<TriangleRule> {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    let exact = match degree {
        1 => {
            pts.push([1.0 / 3.0, 1.0 / 3.0]);
            wts.push(0.5);
            1
        }
        2 => {
            orbit3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0, &mut pts, &mut wts);
            2
        }
        3 | 4 => {
            orbit3(0.108103018168070, 0.445948490915965, 0.223381589678011, &mut pts, &mut wts);
            orbit3(0.816847572980459, 0.091576213509771, 0.109951743655322, &mut pts, &mut wts);
            4
        }
        5 => {
            pts.push([1.0 / 3.0, 1.0 / 3.0]);
            wts.push(0.5 * 0.225);
            orbit3(0.059715871789770, 0.470142064105115, 0.132394152788506, &mut pts, &mut wts);
            orbit3(0.797426985353087, 0.101286507323456, 0.125939180544827, &mut pts, &mut wts);
            5
        }
        6 => {
            orbit3(0.501426509658179, 0.249286745170910, 0.116786275726379, &mut pts, &mut wts);
            orbit3(0.873821971016996, 0.063089014491502, 0.050844906370207, &mut pts, &mut wts);
            orbit6(
                0.053145049844817,
                0.310352451033784,
                0.636502499121399,
                0.082851075618374,
                &mut pts,
                &mut wts,
            );
            6
        }
        d => {
            return Err(FemError::Config(format!(
                "unsupported triangle quadrature degree {d} (supported: 1..=6)"
            )))
        }
    };
    Ok(QuadratureRule {
        points: pts,
        weights: wts,
        degree: exact,
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule with `points` nodes (1 to 10) mapped to `[0,1]`.
pub fn edge_quadrature(points: usize) -> Result<EdgeRule> {
    if !(1..=10).contains(&points) {
        return Err(FemError::Config(format!(
            "unsupported Gauss-Legendre point count {points} (supported: 1..=10)"
        )));
    }
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    if n == 1 {
        nodes[0] = 0.5;
        weights[0] = 1.0;
    } else {
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5;
        }
    }
    Ok(QuadratureRule {
        points: nodes,
        weights,
        degree: 2 * n - 1,
    })
}

/// Quadrature choices shared by assembly and error measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub volume_degree: usize,
    pub edge_points: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            volume_degree: 4,
            edge_points: 6,
        }
    }
}

impl QuadratureConfig {
    pub fn rules(&self) -> Result<(TriangleRule, EdgeRule)> {
        Ok((
            triangle_quadrature(self.volume_degree)?,
            edge_quadrature(self.edge_points)?,
        ))
    }
}

/// Affine geometry of one triangle with its P1 basis gradients.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub points: [Point; 3],
    pub area: f64,
    pub grads: [Vector; 3],
}

impl ElementGeometry {
    pub fn new(points: [Point; 3]) -> Result<Self> {
        let [a, b, c] = points;
        let twice_area = (b - a).perp(&(c - a));
        if !(twice_area > 0.0) {
            return Err(FemError::Geometry(format!(
                "triangle {a:?}, {b:?}, {c:?} has non-positive area"
            )));
        }
        // grad of barycentric i is the inward edge normal scaled by 1/(2|T|)
        let rot = |e: Vector| Vector::new(-e.y, e.x) / twice_area;
        let grads = [rot(c - b), rot(a - c), rot(b - a)];
        Ok(ElementGeometry {
            points,
            area: 0.5 * twice_area,
            grads,
        })
    }

    pub fn of(mesh: &Mesh, t: usize) -> Result<Self> {
        Self::new(mesh.triangle_points(t))
    }

    /// Physical point for reference coordinates `(s, t)`.
    pub fn map(&self, r: [f64; 2]) -> Point {
        let [a, b, c] = self.points;
        a + (b - a) * r[0] + (c - a) * r[1]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let [a, _, _] = self.points;
        let d = x - a;
        let l1 = self.grads[1].dot(&d);
        let l2 = self.grads[2].dot(&d);
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn gradient(&self, coeffs: [f64; 3]) -> Vector {
        self.grads[0] * coeffs[0] + self.grads[1] * coeffs[1] + self.grads[2] * coeffs[2]
    }
}

/// Values and gradients of the three P1 shape functions at `x`.
pub fn eval_basis(points: [Point; 3], x: Point) -> Result<([f64; 3], [Vector; 3])> {
    let geo = ElementGeometry::new(points)?;
    let lam = geo.barycentric(x);
    if lam.iter().any(|&l| !(-1e-12..=1.0 + 1e-12).contains(&l)) {
        return Err(FemError::PointNotFound(x.x, x.y));
    }
    Ok((lam, geo.grads))
}

/// Continuous piecewise linears; one dof per vertex.
#[derive(Debug, Clone, Copy)]
pub struct P1Space<'m> {
    pub mesh: &'m Mesh,
}

impl<'m> P1Space<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        P1Space { mesh }
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn dof(&self, vertex: usize) -> usize {
        vertex
    }

    pub fn local_coeffs(&self, coeffs: &[f64], t: usize) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t];
        [coeffs[a], coeffs[b], coeffs[c]]
    }

    pub fn nodal_interpolant(&self, f: impl Fn(Point) -> f64) -> Result<Vec<f64>> {
        self.mesh
            .vertices
            .iter()
            .map(|&p| {
                let v = f(p);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(FemError::NonFinite(format!("vertex ({}, {})", p.x, p.y)))
                }
            })
            .collect()
    }

    /// Value and gradient of the discrete function inside triangle `t`.
    pub fn eval_in(&self, coeffs: &[f64], t: usize, x: Point) -> Result<(f64, Vector)> {
        let geo = ElementGeometry::of(self.mesh, t)?;
        let c = self.local_coeffs(coeffs, t);
        let lam = geo.barycentric(x);
        Ok((
            lam[0] * c[0] + lam[1] * c[1] + lam[2] * c[2],
            geo.gradient(c),
        ))
    }

    pub fn eval_discrete(&self, coeffs: &[f64], x: Point) -> Result<(f64, Vector)> {
        if coeffs.len() != self.n_dofs() {
            return Err(FemError::DimensionMismatch {
                expected: self.n_dofs(),
                got: coeffs.len(),
            });
        }
        let t = self.mesh.locate(x)?;
        self.eval_in(coeffs, t, x)
    }
}

/// Per-facet constants on the boundary trace mesh.
#[derive(Debug, Clone, Copy)]
pub struct TraceDg0Space<'m> {
    pub mesh: &'m Mesh,
}

impl<'m> TraceDg0Space<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        TraceDg0Space { mesh }
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_boundary_facets()
    }
}

/// A function known element by element together with its gradient. The
/// element index disambiguates gradients of discrete functions on edges.
pub trait ElementField {
    fn eval(&self, t: usize, x: Point) -> (f64, Vector);
}

impl<F: Fn(usize, Point) -> (f64, Vector)> ElementField for F {
    fn eval(&self, t: usize, x: Point) -> (f64, Vector) {
        self(t, x)
    }
}

/// A P1 coefficient vector viewed as an [`ElementField`].
#[derive(Debug, Clone, Copy)]
pub struct DiscreteField<'a> {
    pub mesh: &'a Mesh,
    pub coeffs: &'a [f64],
}

impl ElementField for DiscreteField<'_> {
    fn eval(&self, t: usize, x: Point) -> (f64, Vector) {
        // mesh triangles are validated at construction, geometry cannot fail
        let geo = ElementGeometry::of(self.mesh, t).expect("valid mesh triangle");
        let [a, b, c] = self.mesh.triangles[t];
        let cf = [self.coeffs[a], self.coeffs[b], self.coeffs[c]];
        let lam = geo.barycentric(x);
        (
            lam[0] * cf[0] + lam[1] * cf[1] + lam[2] * cf[2],
            geo.gradient(cf),
        )
    }
}

/// `exact - discrete`, with the exact part given in closed form.
pub struct ErrorField<'a, U, G> {
    pub discrete: DiscreteField<'a>,
    pub exact: U,
    pub exact_grad: G,
}

impl<U: Fn(Point) -> f64, G: Fn(Point) -> Vector> ElementField for ErrorField<'_, U, G> {
    fn eval(&self, t: usize, x: Point) -> (f64, Vector) {
        let (v, g) = self.discrete.eval(t, x);
        ((self.exact)(x) - v, (self.exact_grad)(x) - g)
    }
}

/// `sum_T int_T integrand(t, x) dx` with the given rule on every triangle.
pub fn integrate_volume(
    mesh: &Mesh,
    rule: &TriangleRule,
    mut integrand: impl FnMut(usize, Point) -> f64,
) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = ElementGeometry::of(mesh, t).expect("valid mesh triangle");
        let mut local = 0.0;
        for (r, w) in rule.iter() {
            local += w * integrand(t, geo.map(r));
        }
        total += 2.0 * geo.area * local;
    }
    total
}

/// `sum_F int_F integrand(f, x) ds` over boundary facets.
pub fn integrate_boundary(
    mesh: &Mesh,
    rule: &EdgeRule,
    mut integrand: impl FnMut(usize, Point) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (f, facet) in mesh.boundary_facets.iter().enumerate() {
        let mut local = 0.0;
        for (s, w) in rule.iter() {
            local += w * integrand(f, mesh.facet_point(f, s));
        }
        total += facet.length * local;
    }
    total
}

fn breakpoints(lo: f64, hi: f64, fixed: f64, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut pts = vec![lo, hi];
    for k in 0..=n {
        let c = k as f64 / nf;
        if c > lo && c < hi {
            pts.push(c);
        }
    }
    let kmin = -(n as i64);
    for k in kmin..=(n as i64) {
        let c = fixed + k as f64 / nf;
        if c > lo && c < hi {
            pts.push(c);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

/// Integral of `integrand(t, x)` along an offset contour. Each side is split
/// at every grid line and cell diagonal it crosses, so `t` is the unique
/// triangle containing each sub-segment and the integrand is smooth there.
pub fn integrate_contour(
    mesh: &Mesh,
    contour: &OffsetContour,
    rule: &EdgeRule,
    mut integrand: impl FnMut(usize, Point) -> f64,
) -> f64 {
    let n = mesh.grid_n;
    let mut total = 0.0;
    for [a, b] in &contour.segments {
        let dir = b - a;
        let len = dir.norm();
        if len == 0.0 {
            continue;
        }
        let horizontal = dir.y.abs() < dir.x.abs();
        // diagonals x - y = k/n meet y = c at x = c + k/n and x = c at
        // y = c - k/n; k ranges symmetrically so both give the same cut set
        let (lo, hi, fixed) = if horizontal {
            (a.x.min(b.x), a.x.max(b.x), a.y)
        } else {
            (a.y.min(b.y), a.y.max(b.y), a.x)
        };
        let cuts = breakpoints(lo, hi, fixed, n);
        let at = |u: f64| {
            if horizontal {
                Point::new(u, fixed)
            } else {
                Point::new(fixed, u)
            }
        };
        for w in cuts.windows(2) {
            let (u0, u1) = (w[0], w[1]);
            let t = mesh
                .locate(at(0.5 * (u0 + u1)))
                .expect("contour lies inside the unit square");
            let mut local = 0.0;
            for (s, wq) in rule.iter() {
                local += wq * integrand(t, at(u0 + s * (u1 - u0)));
            }
            total += (u1 - u0) * local;
        }
    }
    total
}
