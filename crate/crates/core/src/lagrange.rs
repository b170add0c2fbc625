//! Stabilized Lagrange multiplier discretization with P1 primal unknowns and
//! one constant multiplier per boundary facet.
//!
//! ```text
//! A_h((u,λ),(v,μ)) = (∇u,∇v) + κ(u,v) + (λ,v)_∂Ω + (μ,u)_∂Ω − c_h(u,λ; v,μ)
//! c_h(u,λ; v,μ)    = Σ_F γ_F (λ + n·∇u, μ + n·∇v)_F
//! L_h(v,μ)         = (f,v) + (g,μ)_∂Ω
//! ```
//!
//! Unknowns are ordered `[u; λ]`, multipliers by boundary facet index.

use crate::error::{FemError, Result};
use crate::fem::{integrate_volume, EdgeRule, ElementGeometry, TriangleRule};
use crate::mesh::Mesh;
use crate::nitsche::{facet_basis, facet_local_index, load_vector, push_volume_terms};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::Point;

/// How the stabilization weight `γ_F` depends on `α` and `h_F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabilizationScaling {
    /// `γ_F = h_F / α`. Stable for `α` above a mesh-independent threshold.
    #[default]
    Reciprocal,
    /// `γ_F = α h_F`. Stable only for `α` below a mesh-independent threshold.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub scaling: StabilizationScaling,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        SaddleConfig {
            alpha: 10.0,
            kappa: 0.0,
            scaling: StabilizationScaling::Reciprocal,
        }
    }
}

impl SaddleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FemError::Config(format!(
                "stabilization alpha must be positive, got {}",
                self.alpha
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

    /// Stabilization weight `γ_F` for a facet of length `h`.
    pub fn weight(&self, h: f64) -> f64 {
        match self.scaling {
            StabilizationScaling::Reciprocal => h / self.alpha,
            StabilizationScaling::Direct => self.alpha * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_primal: usize,
    pub n_multiplier: usize,
}

impl SaddleSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>, n_primal: usize) -> Self {
        let n_multiplier = matrix.nrows.saturating_sub(n_primal);
        SaddleSystem {
            matrix,
            rhs,
            n_primal,
            n_multiplier,
        }
    }

    /// Splits a solution vector into its primal and multiplier parts.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.n_primal)
    }
}

/// Assembles only the stabilization form `c_h` (with positive sign). Its
/// pattern touches boundary-adjacent triangles and multipliers only.
pub fn assemble_stabilization(mesh: &Mesh, cfg: &SaddleConfig) -> Result<CsrMatrix> {
    cfg.validate()?;
    let nv = mesh.n_vertices();
    let n = nv + mesh.n_boundary_facets();
    let mut b = TripletBuilder::new(n, n);
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let gh = cfg.weight(facet.length) * facet.length;
        let dn = geo.grads.map(|g| facet.outward_normal.dot(&g));
        for a in 0..3 {
            for c in a..3 {
                b.push_sym(tri[a], tri[c], gh * dn[a] * dn[c]);
            }
            b.push_sym(tri[a], nv + fi, gh * dn[a]);
        }
        b.push(nv + fi, nv + fi, gh);
    }
    Ok(b.build())
}

pub fn assemble_saddle(
    mesh: &Mesh,
    cfg: &SaddleConfig,
    rules: (&TriangleRule, &EdgeRule),
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
) -> Result<SaddleSystem> {
    cfg.validate()?;
    let (tri_rule, edge_rule) = rules;
    let nv = mesh.n_vertices();
    let nf = mesh.n_boundary_facets();
    let n = nv + nf;
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.n_triangles() + 16 * nf);
    push_volume_terms(&mut b, mesh, cfg.kappa)?;
    let mut rhs = vec![0.0; n];
    load_vector(mesh, tri_rule, f, &mut rhs[..nv])?;

    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let geo = ElementGeometry::of(mesh, facet.parent_triangle)?;
        let tri = mesh.triangles[facet.parent_triangle];
        let local = facet_local_index(mesh, fi);
        let hf = facet.length;
        let gh = cfg.weight(hf) * hf;
        let dn = geo.grads.map(|g| facet.outward_normal.dot(&g));
        let lam = nv + fi;
        for a in 0..3 {
            for c in a..3 {
                b.push_sym(tri[a], tri[c], -gh * dn[a] * dn[c]);
            }
            let mass = if local[a].is_some() { 0.5 * hf } else { 0.0 };
            b.push_sym(tri[a], lam, mass - gh * dn[a]);
        }
        b.push(lam, lam, -gh);
        let mut gi = 0.0;
        for (s, w) in edge_rule.iter() {
            gi += w * g(mesh.facet_point(fi, s));
        }
        rhs[lam] = hf * gi;
    }
    Ok(SaddleSystem::new(b.build(), rhs, nv))
}

/// Dual right-hand side `(ψ, μ)_∂Ω`: zero on the primal block, `∫_F ψ` on
/// each multiplier.
pub fn assemble_dual_rhs_lm(
    mesh: &Mesh,
    edge_rule: &EdgeRule,
    psi: &dyn Fn(usize, Point) -> f64,
) -> Vec<f64> {
    let nv = mesh.n_vertices();
    let mut rhs = vec![0.0; nv + mesh.n_boundary_facets()];
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let mut acc = 0.0;
        for (s, w) in edge_rule.iter() {
            acc += w * psi(fi, mesh.facet_point(fi, s));
        }
        rhs[nv + fi] = facet.length * acc;
    }
    rhs
}

/// `‖∇u‖² + h⁻¹‖u‖²_∂Ω + h‖λ‖²_∂Ω` for discrete `(u, λ)`, returned as the
/// square root.
pub fn triple_norm_pair(
    mesh: &Mesh,
    rules: (&TriangleRule, &EdgeRule),
    u: &[f64],
    lambda: &[f64],
) -> Result<f64> {
    if u.len() != mesh.n_vertices() {
        return Err(FemError::DimensionMismatch {
            expected: mesh.n_vertices(),
            got: u.len(),
        });
    }
    if lambda.len() != mesh.n_boundary_facets() {
        return Err(FemError::DimensionMismatch {
            expected: mesh.n_boundary_facets(),
            got: lambda.len(),
        });
    }
    let (tri_rule, edge_rule) = rules;
    let grad = integrate_volume(mesh, tri_rule, |t, _| {
        let tri = mesh.triangles[t];
        let geo = ElementGeometry::of(mesh, t).expect("valid mesh triangle");
        geo.gradient([u[tri[0]], u[tri[1]], u[tri[2]]]).norm_squared()
    });
    let mut trace = 0.0;
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let local = facet_local_index(mesh, fi);
        let tri = mesh.triangles[facet.parent_triangle];
        let h = facet.length;
        // h⁻¹ ∫_F u² ds with h = h_F reduces to the bare rule sum
        let mut uu = 0.0;
        for (s, w) in edge_rule.iter() {
            let phi = facet_basis(&local, s);
            let v: f64 = (0..3).map(|a| phi[a] * u[tri[a]]).sum();
            uu += w * v * v;
        }
        trace += uu + h * h * lambda[fi] * lambda[fi];
    }
    Ok((grad + trace).max(0.0).sqrt())
}
