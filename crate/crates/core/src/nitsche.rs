//! Symmetric Nitsche discretization:
//!
//! ```text
//! a_h(u,v) = (∇u,∇v) − (n·∇u, v)_∂Ω − (u, n·∇v)_∂Ω + β h⁻¹ (u,v)_∂Ω + κ (u,v)
//! l_h(v)   = (f,v) − (g, n·∇v)_∂Ω + β h⁻¹ (g,v)_∂Ω
//! ```

use crate::error::{FemError, Result};
use crate::fem::{integrate_boundary, integrate_volume, EdgeRule, ElementField, ElementGeometry, TriangleRule};
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::Point;

/// Which length scale enters `β/h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyScale {
    /// Local facet length `h_F`.
    #[default]
    FacetLength,
    /// Global grid spacing `1/n`.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NitscheConfig {
    pub beta: f64,
    pub h_choice: PenaltyScale,
    /// Zeroth-order shift `κ (u, v)`.
    pub kappa: f64,
}

impl Default for NitscheConfig {
    fn default() -> Self {
        NitscheConfig {
            beta: 10.0,
            h_choice: PenaltyScale::FacetLength,
            kappa: 0.0,
        }
    }
}

impl NitscheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(FemError::Config(format!(
                "Nitsche penalty beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(FemError::Config(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    pub fn penalty_h(&self, mesh: &Mesh, facet: usize) -> f64 {
        match self.h_choice {
            PenaltyScale::FacetLength => mesh.boundary_facets[facet].length,
            PenaltyScale::Global => mesh.h_grid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    Indefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub definiteness: Definiteness,
}

impl LinearSystem {
    /// An SPD-tagged system.
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        LinearSystem {
            matrix,
            rhs,
            definiteness: Definiteness::PositiveDefinite,
        }
    }
}

/// `∫_F φ_a ds` and `∫_F φ_a φ_b ds` for the three local basis functions of
/// the parent triangle restricted to facet `f` (zero for the opposite vertex).
pub(crate) fn facet_local_index(mesh: &Mesh, f: usize) -> [Option<usize>; 3] {
    let facet = &mesh.boundary_facets[f];
    let tri = mesh.triangles[facet.parent_triangle];
    tri.map(|v| facet.endpoints.iter().position(|&e| e == v))
}

/// Local basis values along facet `f` at local coordinate `s`.
pub(crate) fn facet_basis(local: &[Option<usize>; 3], s: f64) -> [f64; 3] {
    local.map(|e| match e {
        Some(0) => 1.0 - s,
        Some(_) => s,
        None => 0.0,
    })
}

/// Element stiffness, mass and boundary contributions shared by both
/// discretizations.
pub(crate) fn push_volume_terms(b: &mut TripletBuilder, mesh: &Mesh, kappa: f64) -> Result<()> {
    for t in 0..mesh.n_triangles() {
        let geo = ElementGeometry::of(mesh, t)?;
        let tri = mesh.triangles[t];
        for a in 0..3 {
            for c in a..3 {
                let mut v = geo.area * geo.grads[a].dot(&geo.grads[c]);
                if kappa != 0.0 {
                    let m = if a == c { geo.area / 6.0 } else { geo.area / 12.0 };
                    v += kappa * m;
                }
                b.push_sym(tri[a], tri[c], v);
            }
        }
    }
    Ok(())
}

pub(crate) fn load_vector(
    mesh: &Mesh,
    rule: &TriangleRule,
    f: &dyn Fn(Point) -> f64,
    out: &mut [f64],
) -> Result<()> {
    for t in 0..mesh.n_triangles() {
        let geo = ElementGeometry::of(mesh, t)?;
        let tri = mesh.triangles[t];
        let mut local = [0.0; 3];
        for (r, w) in rule.iter() {
            let x = geo.map(r);
            let fx = f(x);
            let lam = [1.0 - r[0] - r[1], r[0], r[1]];
            for a in 0..3 {
                local[a] += w * fx * lam[a];
            }
        }
        for a in 0..3 {
            out[tri[a]] += 2.0 * geo.area * local[a];
        }
    }
    Ok(())
}

/// Assembles `a_h` and `l_h` on the P1 space of `mesh`.
pub fn assemble_nitsche(
    mesh: &Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
) -> Result<LinearSystem> {
    cfg.validate()?;
    let (tri_rule, edge_rule) = rules;
    let n = mesh.n_vertices();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.n_triangles() + 9 * mesh.n_boundary_facets());
    push_volume_terms(&mut b, mesh, cfg.kappa)?;
    let mut rhs = vec![0.0; n];
    load_vector(mesh, tri_rule, f, &mut rhs)?;

    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let local = facet_local_index(mesh, fi);
        let hf = facet.length;
        let pen = cfg.beta / cfg.penalty_h(mesh, fi);
        let dn = geo.grads.map(|g| facet.outward_normal.dot(&g));
        let mass1 = local.map(|e| if e.is_some() { 0.5 * hf } else { 0.0 });
        for a in 0..3 {
            for c in a..3 {
                let mm = match (local[a], local[c]) {
                    (Some(_), Some(_)) if a == c => hf / 3.0,
                    (Some(_), Some(_)) => hf / 6.0,
                    _ => 0.0,
                };
                let v = -(dn[c] * mass1[a] + dn[a] * mass1[c]) + pen * mm;
                b.push_sym(tri[a], tri[c], v);
            }
        }
        let mut local_rhs = [0.0; 3];
        for (s, w) in edge_rule.iter() {
            let gx = g(mesh.facet_point(fi, s));
            let phi = facet_basis(&local, s);
            for a in 0..3 {
                local_rhs[a] += w * gx * (pen * phi[a] - dn[a]);
            }
        }
        for a in 0..3 {
            rhs[tri[a]] += hf * local_rhs[a];
        }
    }
    Ok(LinearSystem::new(b.build(), rhs))
}

/// Right-hand side `m_ψ(φ_i) = β h⁻¹ (ψ, φ_i)_∂Ω − (ψ, n·∇φ_i)_∂Ω` of the
/// discrete dual problem. `psi` receives the facet index and the point.
pub fn assemble_dual_rhs_nitsche(
    mesh: &Mesh,
    cfg: &NitscheConfig,
    edge_rule: &EdgeRule,
    psi: &dyn Fn(usize, Point) -> f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rhs = vec![0.0; mesh.n_vertices()];
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let local = facet_local_index(mesh, fi);
        let pen = cfg.beta / cfg.penalty_h(mesh, fi);
        let dn = geo.grads.map(|g| facet.outward_normal.dot(&g));
        let mut acc = [0.0; 3];
        for (s, w) in edge_rule.iter() {
            let p = psi(fi, mesh.facet_point(fi, s));
            let phi = facet_basis(&local, s);
            for a in 0..3 {
                acc[a] += w * p * (pen * phi[a] - dn[a]);
            }
        }
        for a in 0..3 {
            rhs[tri[a]] += facet.length * acc[a];
        }
    }
    Ok(rhs)
}

/// `|||v|||² = ‖∇v‖²_Ω + h‖n·∇v‖²_∂Ω + h⁻¹‖v‖²_∂Ω`, returned as `|||v|||`.
pub fn energy_norm(
    mesh: &Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    v: &dyn ElementField,
) -> f64 {
    let (tri_rule, edge_rule) = rules;
    let grad = integrate_volume(mesh, tri_rule, |t, x| v.eval(t, x).1.norm_squared());
    let bnd = integrate_boundary(mesh, edge_rule, |f, x| {
        let facet = &mesh.boundary_facets[f];
        let h = cfg.penalty_h(mesh, f);
        let (val, g) = v.eval(facet.parent_triangle, x);
        h * facet.outward_normal.dot(&g).powi(2) + val * val / h
    });
    (grad + bnd).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{edge_quadrature, triangle_quadrature, DiscreteField, P1Space};
    use crate::linsolve::{solve_spd, FactorizedMatrix};
    use crate::mesh::build_unit_square_mesh;
    use crate::sparse::norm2;
    use approx::assert_abs_diff_eq;

    fn rules() -> (TriangleRule, EdgeRule) {
        (triangle_quadrature(4).unwrap(), edge_quadrature(6).unwrap())
    }

    #[test]
    fn constants_are_reproduced() {
        let (tr, er) = rules();
        for n in [1, 3, 6] {
            let m = build_unit_square_mesh(n).unwrap();
            let sys = assemble_nitsche(&m, &NitscheConfig::default(), (&tr, &er), &|_| 0.0, &|_| 1.0).unwrap();
            let sol = solve_spd(&sys).unwrap();
            assert!(sol.relative_residual <= 1e-10);
            for v in sol.x {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn affine_patch_test() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(4).unwrap();
        let g = |p: Point| p.x + p.y;
        let sys = assemble_nitsche(&m, &NitscheConfig::default(), (&tr, &er), &|_| 0.0, &g).unwrap();
        let sol = solve_spd(&sys).unwrap();
        let interp = P1Space::new(&m).nodal_interpolant(g).unwrap();
        for (a, b) in sol.x.iter().zip(&interp) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn matrix_is_exactly_symmetric_and_factorizes() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(4).unwrap();
        let sys = assemble_nitsche(&m, &NitscheConfig::default(), (&tr, &er), &|_| 1.0, &|_| 0.0).unwrap();
        assert_eq!(sys.matrix.symmetry_defect(), 0.0);
        let f = FactorizedMatrix::spd(&sys.matrix).unwrap();
        assert_eq!(f.inertia().positive, 25);
    }

    #[test]
    fn small_penalty_loses_definiteness() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(8).unwrap();
        let cfg = NitscheConfig {
            beta: 0.1,
            ..Default::default()
        };
        let sys = assemble_nitsche(&m, &cfg, (&tr, &er), &|_| 0.0, &|_| 1.0).unwrap();
        let err = solve_spd(&sys).unwrap_err();
        assert!(matches!(err, FemError::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("penalty too small"));
    }

    #[test]
    fn rejects_invalid_config() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(2).unwrap();
        for cfg in [
            NitscheConfig { beta: 0.0, ..Default::default() },
            NitscheConfig { beta: -1.0, ..Default::default() },
            NitscheConfig { kappa: -1.0, ..Default::default() },
        ] {
            assert!(matches!(
                assemble_nitsche(&m, &cfg, (&tr, &er), &|_| 0.0, &|_| 0.0),
                Err(FemError::Config(_))
            ));
        }
    }

    #[test]
    fn penalty_scale_choice_is_bitwise_irrelevant_on_uniform_meshes() {
        let (tr, er) = rules();
        for n in [3, 7, 10] {
            let m = build_unit_square_mesh(n).unwrap();
            let g = |p: Point| (3.0 * p.x).sin() + p.y;
            let a = assemble_nitsche(&m, &NitscheConfig::default(), (&tr, &er), &|_| 1.0, &g).unwrap();
            let cfg = NitscheConfig {
                h_choice: PenaltyScale::Global,
                ..Default::default()
            };
            let b = assemble_nitsche(&m, &cfg, (&tr, &er), &|_| 1.0, &g).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn galerkin_residual_vanishes() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(8).unwrap();
        let p = crate::problem::ManufacturedProblem::Trigonometric;
        let sys = assemble_nitsche(&m, &NitscheConfig::default(), (&tr, &er), &|x| p.f(x), &|x| p.g(x)).unwrap();
        let sol = solve_spd(&sys).unwrap();
        let ax = sys.matrix.mul_vec(&sol.x).unwrap();
        let bn = norm2(&sys.rhs);
        for (a, b) in ax.iter().zip(&sys.rhs) {
            assert!((a - b).abs() <= 1e-10 * bn);
        }
    }

    #[test]
    fn dual_rhs_hand_values() {
        // n = 4, psi = 1: bottom vertex (1/2, 0) gets beta - 1 and the vertex
        // (1/2, 1/4) above it gets 1, both from the n·∇φ term of facet [1/4, 1/2]
        let er = edge_quadrature(6).unwrap();
        let m = build_unit_square_mesh(4).unwrap();
        let cfg = NitscheConfig::default();
        let zero = assemble_dual_rhs_nitsche(&m, &cfg, &er, &|_, _| 0.0).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let one = assemble_dual_rhs_nitsche(&m, &cfg, &er, &|_, _| 1.0).unwrap();
        assert_abs_diff_eq!(one[2], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(one[7], 1.0, epsilon = 1e-12);
        // (1/4, 1/4) sits in the parents of a bottom and a left facet
        assert_abs_diff_eq!(one[6], 2.0, epsilon = 1e-12);
        assert_eq!(one[12], 0.0);
    }

    #[test]
    fn energy_norm_of_constants() {
        let (tr, er) = rules();
        let m = build_unit_square_mesh(4).unwrap();
        let cfg = NitscheConfig::default();
        let zero = vec![0.0; m.n_vertices()];
        let ones = vec![1.0; m.n_vertices()];
        let z = DiscreteField { mesh: &m, coeffs: &zero };
        let o = DiscreteField { mesh: &m, coeffs: &ones };
        assert_eq!(energy_norm(&m, &cfg, (&tr, &er), &z), 0.0);
        assert_abs_diff_eq!(energy_norm(&m, &cfg, (&tr, &er), &o), 4.0, epsilon = 1e-12);
    }
}
