//! Discrete boundary normal fluxes recovered from solved states, and the
//! exact flux of a manufactured solution.

use std::collections::HashMap;

use crate::error::{FemError, Result};
use crate::fem::{EdgeRule, ElementGeometry, TriangleRule};
use crate::linsolve::FactorizedMatrix;
use crate::mesh::Mesh;
use crate::nitsche::{facet_basis, facet_local_index, NitscheConfig};
use crate::problem::{ManufacturedProblem, ScalarFn};
use crate::sparse::TripletBuilder;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    /// Two endpoint values per facet, linear in between.
    FacetwiseLinear,
    /// One value per facet.
    FacetwiseConstant,
}

/// A closed-form term `scale[F] · g(x)` added on each facet.
#[derive(Clone)]
pub struct DataTerm {
    pub scale: Vec<f64>,
    pub g: ScalarFn,
}

impl std::fmt::Debug for DataTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataTerm").field("scale", &self.scale).finish_non_exhaustive()
    }
}

/// Piecewise polynomial function on the boundary facets, optionally plus a
/// data term evaluated pointwise.
#[derive(Debug, Clone)]
pub struct BoundaryFluxField<'m> {
    pub mesh: &'m Mesh,
    pub kind: FluxKind,
    pub coeffs: Vec<f64>,
    pub data: Option<DataTerm>,
}

impl<'m> BoundaryFluxField<'m> {
    pub fn new(mesh: &'m Mesh, kind: FluxKind, coeffs: Vec<f64>) -> Result<Self> {
        let per = match kind {
            FluxKind::FacetwiseLinear => 2,
            FluxKind::FacetwiseConstant => 1,
        };
        let expected = per * mesh.n_boundary_facets();
        if coeffs.len() != expected {
            return Err(FemError::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(BoundaryFluxField {
            mesh,
            kind,
            coeffs,
            data: None,
        })
    }

    pub fn zero(mesh: &'m Mesh, kind: FluxKind) -> Self {
        let per = if kind == FluxKind::FacetwiseLinear { 2 } else { 1 };
        BoundaryFluxField {
            mesh,
            kind,
            coeffs: vec![0.0; per * mesh.n_boundary_facets()],
            data: None,
        }
    }

    /// Value on `facet` at local coordinate `s ∈ [0, 1]`.
    pub fn evaluate(&self, facet: usize, s: f64) -> f64 {
        let base = match self.kind {
            FluxKind::FacetwiseLinear => {
                (1.0 - s) * self.coeffs[2 * facet] + s * self.coeffs[2 * facet + 1]
            }
            FluxKind::FacetwiseConstant => self.coeffs[facet],
        };
        match &self.data {
            Some(d) => base + d.scale[facet] * (d.g)(self.mesh.facet_point(facet, s)),
            None => base,
        }
    }

    /// Endpoint values `(start, end)` on `facet`, including any data term.
    pub fn endpoint_values(&self, facet: usize) -> (f64, f64) {
        (self.evaluate(facet, 0.0), self.evaluate(facet, 1.0))
    }
}

/// `n·∇u_h − β h⁻¹ (u_h − g)` per facet. The data `g` is kept in closed form,
/// so the field matches the penalty term of the assembled equations.
pub fn nitsche_flux<'m>(
    mesh: &'m Mesh,
    cfg: &NitscheConfig,
    u_h: &[f64],
    g: ScalarFn,
) -> Result<BoundaryFluxField<'m>> {
    cfg.validate()?;
    check_len(u_h, mesh.n_vertices())?;
    let nf = mesh.n_boundary_facets();
    let mut coeffs = Vec::with_capacity(2 * nf);
    let mut scale = Vec::with_capacity(nf);
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let dn = facet
            .outward_normal
            .dot(&geo.gradient([u_h[tri[0]], u_h[tri[1]], u_h[tri[2]]]));
        let pen = cfg.beta / cfg.penalty_h(mesh, fi);
        let [a, b] = facet.endpoints;
        coeffs.push(dn - pen * u_h[a]);
        coeffs.push(dn - pen * u_h[b]);
        scale.push(pen);
    }
    Ok(BoundaryFluxField {
        mesh,
        kind: FluxKind::FacetwiseLinear,
        coeffs,
        data: Some(DataTerm { scale, g }),
    })
}

/// Boundary mass matrix on the continuous P1 trace, indexed by position in
/// [`Mesh::boundary_vertex_loop`].
struct TraceSpace {
    index: HashMap<usize, usize>,
    mass: FactorizedMatrix,
}

impl TraceSpace {
    fn new(mesh: &Mesh) -> Result<Self> {
        let loop_ = mesh.boundary_vertex_loop();
        let index: HashMap<usize, usize> = loop_.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = loop_.len();
        let mut b = TripletBuilder::with_capacity(n, n, 4 * mesh.n_boundary_facets());
        for facet in &mesh.boundary_facets {
            let [i, j] = facet.endpoints.map(|v| index[&v]);
            let h = facet.length;
            b.push(i, i, h / 3.0);
            b.push(j, j, h / 3.0);
            b.push_sym(i, j, h / 6.0);
        }
        let mass = FactorizedMatrix::spd(&b.build())?;
        Ok(TraceSpace { index, mass })
    }

    fn to_field<'m>(&self, mesh: &'m Mesh, values: &[f64]) -> BoundaryFluxField<'m> {
        let coeffs = mesh
            .boundary_facets
            .iter()
            .flat_map(|f| f.endpoints.map(|v| values[self.index[&v]]))
            .collect();
        BoundaryFluxField {
            mesh,
            kind: FluxKind::FacetwiseLinear,
            coeffs,
            data: None,
        }
    }
}

/// L²(∂Ω) projection of `field` onto continuous piecewise linears on the
/// boundary trace, with the edge rule used for the load integrals.
pub fn project_to_trace<'m>(
    field: &BoundaryFluxField<'m>,
    edge_rule: &EdgeRule,
) -> Result<BoundaryFluxField<'m>> {
    let mesh = field.mesh;
    let space = TraceSpace::new(mesh)?;
    let mut rhs = vec![0.0; space.index.len()];
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let [i, j] = facet.endpoints.map(|v| space.index[&v]);
        for (s, w) in edge_rule.iter() {
            let v = w * facet.length * field.evaluate(fi, s);
            rhs[i] += (1.0 - s) * v;
            rhs[j] += s * v;
        }
    }
    let sol = space.mass.solve(&rhs)?;
    Ok(space.to_field(mesh, &sol.x))
}

/// The continuous P1 trace function `Σ` with
/// `(Σ, v)_∂Ω = (∇u_h,∇v) + κ(u_h,v) − (u_h − g, n·∇v)_∂Ω − (f,v)`
/// for every basis function `v` that does not vanish on the boundary.
pub fn variational_flux<'m>(
    mesh: &'m Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    u_h: &[f64],
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
) -> Result<BoundaryFluxField<'m>> {
    cfg.validate()?;
    check_len(u_h, mesh.n_vertices())?;
    let (tri_rule, edge_rule) = rules;
    let space = TraceSpace::new(mesh)?;
    let mut rhs = vec![0.0; space.index.len()];

    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles[t];
        if !tri.iter().any(|v| space.index.contains_key(v)) {
            continue;
        }
        let geo = ElementGeometry::of(mesh, t)?;
        let cu = [u_h[tri[0]], u_h[tri[1]], u_h[tri[2]]];
        let grad = geo.gradient(cu);
        let mut load = [0.0; 3];
        let mut mass = [0.0; 3];
        for (r, w) in tri_rule.iter() {
            let lam = [1.0 - r[0] - r[1], r[0], r[1]];
            let fx = f(geo.map(r));
            let ux: f64 = (0..3).map(|a| lam[a] * cu[a]).sum();
            for a in 0..3 {
                load[a] += w * fx * lam[a];
                mass[a] += w * ux * lam[a];
            }
        }
        for a in 0..3 {
            if let Some(&i) = space.index.get(&tri[a]) {
                rhs[i] += geo.area * grad.dot(&geo.grads[a])
                    + 2.0 * geo.area * (cfg.kappa * mass[a] - load[a]);
            }
        }
    }

    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let local = facet_local_index(mesh, fi);
        let dn = geo.grads.map(|g| facet.outward_normal.dot(&g));
        let mut jump = 0.0;
        for (s, w) in edge_rule.iter() {
            let phi = facet_basis(&local, s);
            let ux: f64 = (0..3).map(|a| phi[a] * u_h[tri[a]]).sum();
            jump += w * (ux - g(mesh.facet_point(fi, s)));
        }
        jump *= facet.length;
        for a in 0..3 {
            if let Some(&i) = space.index.get(&tri[a]) {
                rhs[i] -= jump * dn[a];
            }
        }
    }
    let sol = space.mass.solve(&rhs)?;
    Ok(space.to_field(mesh, &sol.x))
}

/// `−λ_h`, constant per facet.
pub fn multiplier_flux<'m>(mesh: &'m Mesh, lambda_h: &[f64]) -> Result<BoundaryFluxField<'m>> {
    BoundaryFluxField::new(
        mesh,
        FluxKind::FacetwiseConstant,
        lambda_h.iter().map(|l| -l).collect(),
    )
}

/// `n·∇u` on `facet` at local coordinate `s`.
pub fn exact_flux(problem: &ManufacturedProblem, mesh: &Mesh, facet: usize, s: f64) -> f64 {
    problem.flux(mesh.facet_point(facet, s), mesh.boundary_facets[facet].outward_normal)
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(FemError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{edge_quadrature, triangle_quadrature};
    use crate::lagrange::{assemble_saddle, SaddleConfig};
    use crate::linsolve::{solve_spd, solve_sym_indefinite};
    use crate::mesh::build_unit_square_mesh;
    use crate::nitsche::assemble_nitsche;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn rules() -> (TriangleRule, EdgeRule) {
        (triangle_quadrature(4).unwrap(), edge_quadrature(6).unwrap())
    }

    fn nitsche_solve(m: &Mesh, p: ManufacturedProblem) -> Vec<f64> {
        let (tr, er) = rules();
        let sys = assemble_nitsche(m, &NitscheConfig::default(), (&tr, &er), &|x| p.f(x), &|x| p.g(x)).unwrap();
        solve_spd(&sys).unwrap().x
    }

    #[test]
    fn all_fluxes_vanish_for_constants() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(4).unwrap();
        let p = ManufacturedProblem::Constant(1.0);
        let cfg = NitscheConfig::default();
        let u = nitsche_solve(&m, p);
        let nf = nitsche_flux(&m, &cfg, &u, p.dirichlet_fn()).unwrap();
        let vf = variational_flux(&m, &cfg, (&tr, &er), &u, &|x| p.f(x), &|x| p.g(x)).unwrap();
        let sys = assemble_saddle(&m, &SaddleConfig::default(), (&tr, &er), &|_| 0.0, &|_| 1.0).unwrap();
        let (sol, _) = solve_sym_indefinite(&sys).unwrap();
        let mf = multiplier_flux(&m, sys.split(&sol.x).1).unwrap();
        for fi in 0..m.n_boundary_facets() {
            for s in [0.0, 0.3, 1.0] {
                assert_abs_diff_eq!(nf.evaluate(fi, s), 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!(vf.evaluate(fi, s), 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!(mf.evaluate(fi, s), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn affine_nitsche_flux_is_side_normal() {
        let m = build_unit_square_mesh(4).unwrap();
        let p = ManufacturedProblem::Affine { c0: 0.0, cx: 1.0, cy: 1.0 };
        let u = nitsche_solve(&m, p);
        let nf = nitsche_flux(&m, &NitscheConfig::default(), &u, p.dirichlet_fn()).unwrap();
        for (fi, facet) in m.boundary_facets.iter().enumerate() {
            let expected = facet.outward_normal.x + facet.outward_normal.y;
            for s in [0.0, 0.5, 1.0] {
                assert_abs_diff_eq!(nf.evaluate(fi, s), expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn affine_variational_flux_averages_at_corners() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(8).unwrap();
        let p = ManufacturedProblem::Affine { c0: 0.0, cx: 1.0, cy: 1.0 };
        let u = nitsche_solve(&m, p);
        let vf = variational_flux(&m, &NitscheConfig::default(), (&tr, &er), &u, &|x| p.f(x), &|x| p.g(x)).unwrap();
        // side fluxes are -1 (bottom, left) and +1 (right, top); the projection
        // is continuous, so the mixed corners settle between the two
        let n = m.grid_n;
        let bottom_last = n - 1;
        let (_, corner) = vf.endpoint_values(bottom_last);
        assert!(corner > -1.0 && corner < 1.0);
        let (start_right, _) = vf.endpoint_values(n);
        assert_abs_diff_eq!(corner, start_right, epsilon = 1e-14);
        // the side data is odd under reflection in x + y = 1, which fixes this corner
        assert_abs_diff_eq!(corner, 0.0, epsilon = 1e-9);
        // the projection equals the trace projection of the pointwise flux
        let nf = nitsche_flux(&m, &NitscheConfig::default(), &u, p.dirichlet_fn()).unwrap();
        let pf = project_to_trace(&nf, &er).unwrap();
        for (a, b) in pf.coeffs.iter().zip(&vf.coeffs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn projection_reproduces_continuous_linears() {
        let er = edge_quadrature(6).unwrap();
        let m = build_unit_square_mesh(5).unwrap();
        let mut field = BoundaryFluxField::zero(&m, FluxKind::FacetwiseLinear);
        field.data = Some(DataTerm {
            scale: vec![1.0; m.n_boundary_facets()],
            g: Arc::new(|p: Point| 2.0 * p.x - p.y + 0.5),
        });
        let proj = project_to_trace(&field, &er).unwrap();
        for fi in 0..m.n_boundary_facets() {
            for s in [0.0, 0.25, 1.0] {
                assert_abs_diff_eq!(proj.evaluate(fi, s), field.evaluate(fi, s), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn multiplier_flux_negates() {
        let m = build_unit_square_mesh(2).unwrap();
        let f = multiplier_flux(&m, &[1.0, -2.0, 0.0, 0.5, 0.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(f.evaluate(1, 0.7), 2.0);
        assert_eq!(f.evaluate(7, 0.0), -3.0);
        assert!(multiplier_flux(&m, &[1.0]).is_err());
    }

    #[test]
    fn exact_flux_values() {
        let m = build_unit_square_mesh(4).unwrap();
        let p = ManufacturedProblem::Trigonometric;
        // bottom facet 1 spans [0.25, 0.5]
        assert_abs_diff_eq!(exact_flux(&p, &m, 1, 0.0), -2.0 * std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(exact_flux(&p, &m, 1, 1.0), 0.0, epsilon = 1e-12);
    }
}
