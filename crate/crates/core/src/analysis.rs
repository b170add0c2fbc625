//! Error measures, rate fitting, error-representation residuals and discrete
//! dual stability measurements.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FemError, Result};
use crate::fem::{
    integrate_boundary, integrate_contour, integrate_volume, DiscreteField, EdgeRule, ElementField,
    ErrorField, P1Space, TriangleRule,
};
use crate::flux::{exact_flux, nitsche_flux, BoundaryFluxField};
use crate::lagrange::{assemble_dual_rhs_lm, assemble_saddle, SaddleConfig};
use crate::linsolve::{solve_spd, solve_sym_indefinite, FactorizedMatrix};
use crate::mesh::{distance_weight, offset_contour, Mesh};
use crate::nitsche::{assemble_dual_rhs_nitsche, assemble_nitsche, energy_norm, NitscheConfig};
use crate::problem::ManufacturedProblem;
use crate::{Point, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Nitsche,
    Lagrange,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nitsche => "nitsche",
            Method::Lagrange => "lagrange",
        }
    }
}

/// Errors of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub grid_n: usize,
    pub h_grid: f64,
    pub h_max: f64,
    pub dofs: usize,
    pub method: Method,
    pub variant: &'static str,
    /// `‖σ_n − Σ_n‖_∂Ω`.
    pub flux_err: f64,
    /// Energy norm error for Nitsche, triple norm error for multipliers.
    pub energy_err: f64,
    /// `‖u − u_h‖_Ω`.
    pub l2_err: f64,
}

/// Dual stability quantities of one level. `q[0..5]` hold
/// `‖∇φ_h‖²_{ρ_δ'}`, `h‖∇φ_h‖²`, `sup_δ ‖φ_h‖²_{∂Ω_δ}`, `‖φ_h‖²` and
/// `h²‖θ_h‖²_∂Ω` (zero for Nitsche).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub grid_n: usize,
    pub h: f64,
    pub method: Method,
    pub kappa: f64,
    pub psi_norm2: f64,
    pub q: [f64; 5],
    /// `‖φ_h‖²_∂Ω`, the `δ = 0` sample of `q[2]`.
    pub boundary_trace: f64,
    /// Squared energy (Nitsche) or triple (multiplier) norm of the dual solution.
    pub energy: f64,
    /// Offset of the contour attaining `q[2]`.
    pub sup_delta: f64,
}

impl StabilityReport {
    /// `q[i] / ‖ψ‖²`, or zero when `ψ = 0`.
    pub fn ratios(&self) -> [f64; 5] {
        if self.psi_norm2 == 0.0 {
            return [0.0; 5];
        }
        self.q.map(|q| q / self.psi_norm2)
    }

    pub fn active_quantities(&self) -> usize {
        match self.method {
            Method::Nitsche => 4,
            Method::Lagrange => 5,
        }
    }
}

/// Boundary data for dual problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiField {
    Zero,
    Constant(f64),
    /// Independent `±1` per facet from a seeded ChaCha8 stream.
    RandomSigns { seed: u64 },
    /// `sin(2πx + 1) + cos(3πy)`.
    Smooth,
}

pub type PsiFn = Arc<dyn Fn(usize, Point) -> f64 + Send + Sync>;

impl PsiField {
    pub fn materialize(&self, mesh: &Mesh) -> PsiFn {
        match *self {
            PsiField::Zero => Arc::new(|_, _| 0.0),
            PsiField::Constant(c) => Arc::new(move |_, _| c),
            PsiField::RandomSigns { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let signs: Vec<f64> = (0..mesh.n_boundary_facets())
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                Arc::new(move |f, _| signs[f])
            }
            PsiField::Smooth => {
                Arc::new(|_, p: Point| (2.0 * PI * p.x + 1.0).sin() + (3.0 * PI * p.y).cos())
            }
        }
    }
}

/// `‖Σ − exact‖_∂Ω` with the given edge rule on every facet.
pub fn boundary_l2_error(
    flux: &BoundaryFluxField,
    edge_rule: &EdgeRule,
    exact: &dyn Fn(usize, f64) -> f64,
) -> f64 {
    let mesh = flux.mesh;
    let mut total = 0.0;
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let mut local = 0.0;
        for (s, w) in edge_rule.iter() {
            let d = flux.evaluate(fi, s) - exact(fi, s);
            local += w * d * d;
        }
        total += facet.length * local;
    }
    total.sqrt()
}

/// `‖σ_n‖_∂Ω` for a manufactured problem.
pub fn exact_flux_norm(problem: &ManufacturedProblem, mesh: &Mesh, edge_rule: &EdgeRule) -> f64 {
    integrate_boundary(mesh, edge_rule, |f, x| {
        problem.flux(x, mesh.boundary_facets[f].outward_normal).powi(2)
    })
    .sqrt()
}

pub fn l2_error(mesh: &Mesh, rule: &TriangleRule, u_h: &[f64], u: &dyn Fn(Point) -> f64) -> f64 {
    let d = DiscreteField { mesh, coeffs: u_h };
    integrate_volume(mesh, rule, |t, x| (u(x) - d.eval(t, x).0).powi(2)).sqrt()
}

/// `|||u − u_h|||` in the Nitsche energy norm.
pub fn energy_error(
    mesh: &Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    u_h: &[f64],
    problem: &ManufacturedProblem,
) -> f64 {
    let e = ErrorField {
        discrete: DiscreteField { mesh, coeffs: u_h },
        exact: |x| problem.u(x),
        exact_grad: |x| problem.grad(x),
    };
    energy_norm(mesh, cfg, rules, &e)
}

/// `|||(u − u_h, λ − λ_h)|||` with `λ = −n·∇u`.
pub fn triple_error(
    mesh: &Mesh,
    rules: (&TriangleRule, &EdgeRule),
    u_h: &[f64],
    lambda_h: &[f64],
    problem: &ManufacturedProblem,
) -> f64 {
    let (tri_rule, edge_rule) = rules;
    let e = ErrorField {
        discrete: DiscreteField { mesh, coeffs: u_h },
        exact: |x| problem.u(x),
        exact_grad: |x| problem.grad(x),
    };
    let grad = integrate_volume(mesh, tri_rule, |t, x| e.eval(t, x).1.norm_squared());
    let bnd = integrate_boundary(mesh, edge_rule, |f, x| {
        let facet = &mesh.boundary_facets[f];
        let h = facet.length;
        let eu = e.eval(facet.parent_triangle, x).0;
        let el = -problem.flux(x, facet.outward_normal) - lambda_h[f];
        eu * eu / h + h * el * el
    });
    (grad + bnd).max(0.0).sqrt()
}

/// Least-squares slope of `log err` against `log h`.
pub fn fit_rate(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(FemError::InsufficientData {
            needed: 3,
            got: samples.len(),
        });
    }
    if let Some(&(h, e)) = samples.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(FemError::NonFinite(format!(
            "rate fit needs positive finite data, got h={h}, err={e}"
        )));
    }
    let n = samples.len() as f64;
    let (sx, sy) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (h, e)| (a + h.ln(), b + e.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (h, e) in samples {
        let dx = h.ln() - mx;
        sxy += dx * (e.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(FemError::InvalidArgument("rate fit needs distinct mesh sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Slope of `select(record)` over records with `h_lo ≤ h_grid ≤ h_hi`.
pub fn fit_records(
    records: &[ConvergenceRecord],
    window: (f64, f64),
    select: impl Fn(&ConvergenceRecord) -> f64,
) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.h_grid >= window.0 && r.h_grid <= window.1)
        .map(|r| (r.h_grid, select(r)))
        .collect();
    fit_rate(&pts)
}

/// Nitsche form `a_h(w, v)` for general element fields.
fn nitsche_form(
    mesh: &Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    w: &dyn ElementField,
    v: &dyn ElementField,
) -> f64 {
    let (tri_rule, edge_rule) = rules;
    let vol = integrate_volume(mesh, tri_rule, |t, x| {
        let (a, ga) = w.eval(t, x);
        let (b, gb) = v.eval(t, x);
        ga.dot(&gb) + cfg.kappa * a * b
    });
    let bnd = integrate_boundary(mesh, edge_rule, |f, x| {
        let facet = &mesh.boundary_facets[f];
        let t = facet.parent_triangle;
        let n = facet.outward_normal;
        let (a, ga) = w.eval(t, x);
        let (b, gb) = v.eval(t, x);
        -n.dot(&ga) * b - a * n.dot(&gb) + cfg.beta / cfg.penalty_h(mesh, f) * a * b
    });
    vol + bnd
}

/// `(ψ, ψ)_∂Ω`.
pub fn psi_norm2(mesh: &Mesh, edge_rule: &EdgeRule, psi: &dyn Fn(usize, Point) -> f64) -> f64 {
    integrate_boundary(mesh, edge_rule, |f, x| psi(f, x).powi(2))
}

/// Both sides of the flux error representation for Nitsche's method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub psi_norm: f64,
}

impl IdentityCheck {
    /// `|lhs − rhs| / ‖ψ‖_∂Ω`, zero when `ψ = 0`.
    pub fn relative_residual(&self) -> f64 {
        if self.psi_norm == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / self.psi_norm
        }
    }
}

/// Checks `(σ_n − Σ_n, ψ)_∂Ω = a_h(u − π_h u, φ_h) − m_ψ(u − π_h u)` where
/// `u_h` solves the primal and `φ_h` the discrete dual problem, `Σ_n` is the
/// pointwise Nitsche flux and `π_h` the nodal interpolant.
pub fn error_representation_nitsche(
    problem: &ManufacturedProblem,
    mesh: &Mesh,
    cfg: &NitscheConfig,
    rules: (&TriangleRule, &EdgeRule),
    psi: &dyn Fn(usize, Point) -> f64,
) -> Result<IdentityCheck> {
    let (tri_rule, edge_rule) = rules;
    let sys = assemble_nitsche(mesh, cfg, rules, &|x| problem.f(x), &|x| problem.g(x))?;
    let factor = FactorizedMatrix::spd(&sys.matrix)?;
    let u_h = factor.solve(&sys.rhs)?.x;
    let dual_rhs = assemble_dual_rhs_nitsche(mesh, cfg, edge_rule, psi)?;
    let phi_h = factor.solve(&dual_rhs)?.x;

    let flux = nitsche_flux(mesh, cfg, &u_h, problem.dirichlet_fn())?;
    let mut lhs = 0.0;
    for (fi, facet) in mesh.boundary_facets.iter().enumerate() {
        let mut local = 0.0;
        for (s, w) in edge_rule.iter() {
            let x = mesh.facet_point(fi, s);
            local += w * (exact_flux(problem, mesh, fi, s) - flux.evaluate(fi, s)) * psi(fi, x);
        }
        lhs += facet.length * local;
    }

    let pi_u = P1Space::new(mesh).nodal_interpolant(|x| problem.u(x))?;
    let e = ErrorField {
        discrete: DiscreteField { mesh, coeffs: &pi_u },
        exact: |x| problem.u(x),
        exact_grad: |x| problem.grad(x),
    };
    let phi = DiscreteField { mesh, coeffs: &phi_h };
    let a = nitsche_form(mesh, cfg, (tri_rule, edge_rule), &e, &phi);
    let m = integrate_boundary(mesh, edge_rule, |f, x| {
        let facet = &mesh.boundary_facets[f];
        let (ev, eg) = e.eval(facet.parent_triangle, x);
        psi(f, x) * (cfg.beta / cfg.penalty_h(mesh, f) * ev - facet.outward_normal.dot(&eg))
    });
    Ok(IdentityCheck {
        lhs,
        rhs: a - m,
        psi_norm: psi_norm2(mesh, edge_rule, psi).sqrt(),
    })
}

/// Checks `(λ − λ_h, ψ)_∂Ω = A_h(π_h u − u, π_h λ − λ; φ_h, θ_h) + (ψ, λ − π_h λ)_∂Ω`
/// for the multiplier method, where `λ = −n·∇u`, `π_h λ` is its facet mean and
/// `(φ_h, θ_h)` solves the discrete dual problem.
pub fn error_representation_lagrange(
    problem: &ManufacturedProblem,
    mesh: &Mesh,
    cfg: &SaddleConfig,
    rules: (&TriangleRule, &EdgeRule),
    psi: &dyn Fn(usize, Point) -> f64,
) -> Result<IdentityCheck> {
    let (tri_rule, edge_rule) = rules;
    let sys = assemble_saddle(mesh, cfg, rules, &|x| problem.f(x), &|x| problem.g(x))?;
    let factor = FactorizedMatrix::saddle(&sys.matrix, sys.n_primal)?;
    let x = factor.solve(&sys.rhs)?.x;
    let lambda_h = sys.split(&x).1;
    let dual = factor.solve(&assemble_dual_rhs_lm(mesh, edge_rule, psi))?.x;
    let (phi_h, theta_h) = sys.split(&dual);
    let lambda = |f: usize, x: Point| -problem.flux(x, mesh.boundary_facets[f].outward_normal);

    let pi_lambda: Vec<f64> = (0..mesh.n_boundary_facets())
        .map(|f| edge_rule.iter().map(|(s, w)| w * lambda(f, mesh.facet_point(f, s))).sum())
        .collect();

    let lhs = integrate_boundary(mesh, edge_rule, |f, x| (lambda(f, x) - lambda_h[f]) * psi(f, x));

    let pi_u = P1Space::new(mesh).nodal_interpolant(|x| problem.u(x))?;
    // e_u = π_h u − u, the negative of the interpolation error field
    let e = ErrorField {
        discrete: DiscreteField { mesh, coeffs: &pi_u },
        exact: |x| problem.u(x),
        exact_grad: |x| problem.grad(x),
    };
    let eu = |t: usize, x: Point| -> (f64, Vector) {
        let (v, g) = e.eval(t, x);
        (-v, -g)
    };
    let phi = DiscreteField { mesh, coeffs: phi_h };
    let vol = integrate_volume(mesh, tri_rule, |t, x| {
        let (a, ga) = eu(t, x);
        let (b, gb) = phi.eval(t, x);
        ga.dot(&gb) + cfg.kappa * a * b
    });
    let bnd = integrate_boundary(mesh, edge_rule, |f, x| {
        let facet = &mesh.boundary_facets[f];
        let t = facet.parent_triangle;
        let n = facet.outward_normal;
        let (a, ga) = eu(t, x);
        let (b, gb) = phi.eval(t, x);
        let el = pi_lambda[f] - lambda(f, x);
        let gamma = cfg.weight(facet.length);
        el * b + theta_h[f] * a - gamma * (el + n.dot(&ga)) * (theta_h[f] + n.dot(&gb))
            + psi(f, x) * (lambda(f, x) - pi_lambda[f])
    });
    Ok(IdentityCheck {
        lhs,
        rhs: vol + bnd,
        psi_norm: psi_norm2(mesh, edge_rule, psi).sqrt(),
    })
}

/// Parameters of a dual stability measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualStabilityConfig {
    pub method: Method,
    pub nitsche: NitscheConfig,
    pub saddle: SaddleConfig,
    pub delta0: f64,
    /// Shift `δ'` of the distance weight; `None` uses the grid spacing.
    pub delta_prime: Option<f64>,
    /// Number of evenly spaced offsets in `[0, δ_0]`.
    pub samples: usize,
}

impl Default for DualStabilityConfig {
    fn default() -> Self {
        DualStabilityConfig {
            method: Method::Nitsche,
            nitsche: NitscheConfig::default(),
            saddle: SaddleConfig::default(),
            delta0: 0.25,
            delta_prime: None,
            samples: 33,
        }
    }
}

impl DualStabilityConfig {
    pub fn kappa(&self) -> f64 {
        match self.method {
            Method::Nitsche => self.nitsche.kappa,
            Method::Lagrange => self.saddle.kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 < 0.5) {
            return Err(FemError::Config(format!(
                "delta0 must lie in (0, 1/2), got {}",
                self.delta0
            )));
        }
        if self.samples < 2 {
            return Err(FemError::Config("at least two offset samples are needed".into()));
        }
        if let Some(d) = self.delta_prime {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(FemError::Config(format!("delta' must be non-negative, got {d}")));
            }
        }
        self.nitsche.validate()?;
        self.saddle.validate()
    }
}

/// `max_δ ∫_{∂Ω_δ} integrand` over `samples` evenly spaced `δ ∈ [0, δ_0]`,
/// with the maximizing offset.
pub fn sup_over_contours(
    mesh: &Mesh,
    edge_rule: &EdgeRule,
    delta0: f64,
    samples: usize,
    mut integrand: impl FnMut(usize, Point) -> f64,
) -> Result<(f64, f64)> {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for j in 0..samples {
        let delta = delta0 * j as f64 / (samples - 1) as f64;
        let contour = offset_contour(delta)?;
        let v = integrate_contour(mesh, &contour, edge_rule, &mut integrand);
        if v > best.0 {
            best = (v, delta);
        }
    }
    Ok(best)
}

/// Solves the discrete dual problem with data `ψ` and measures its
/// stability quantities.
pub fn dual_stability_report(
    mesh: &Mesh,
    cfg: &DualStabilityConfig,
    rules: (&TriangleRule, &EdgeRule),
    psi: &dyn Fn(usize, Point) -> f64,
) -> Result<StabilityReport> {
    cfg.validate()?;
    let (tri_rule, edge_rule) = rules;
    let h = mesh.h_grid;
    let (phi_h, theta_h): (Vec<f64>, Vec<f64>) = match cfg.method {
        Method::Nitsche => {
            let mut sys = assemble_nitsche(mesh, &cfg.nitsche, rules, &|_| 0.0, &|_| 0.0)?;
            sys.rhs = assemble_dual_rhs_nitsche(mesh, &cfg.nitsche, edge_rule, psi)?;
            (solve_spd(&sys)?.x, Vec::new())
        }
        Method::Lagrange => {
            let mut sys = assemble_saddle(mesh, &cfg.saddle, rules, &|_| 0.0, &|_| 0.0)?;
            sys.rhs = assemble_dual_rhs_lm(mesh, edge_rule, psi);
            let (sol, _) = solve_sym_indefinite(&sys)?;
            let (p, t) = sys.split(&sol.x);
            (p.to_vec(), t.to_vec())
        }
    };
    let phi = DiscreteField { mesh, coeffs: &phi_h };
    let dp = cfg.delta_prime.unwrap_or(h);
    let grad_sq: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| phi.eval(t, mesh.centroid(t)).1.norm_squared())
        .collect();
    let q1 = integrate_volume(mesh, tri_rule, |t, x| distance_weight(x, dp) * grad_sq[t]);
    let q2 = h * (0..mesh.n_triangles())
        .map(|t| mesh.signed_area(t) * grad_sq[t])
        .sum::<f64>();
    let (q3, sup_delta) =
        sup_over_contours(mesh, edge_rule, cfg.delta0, cfg.samples, |t, x| phi.eval(t, x).0.powi(2))?;
    let q4 = integrate_volume(mesh, tri_rule, |t, x| phi.eval(t, x).0.powi(2));
    let q5 = mesh
        .boundary_facets
        .iter()
        .zip(&theta_h)
        .map(|(f, th)| h * h * f.length * th * th)
        .sum();
    let boundary_trace = integrate_boundary(mesh, edge_rule, |f, x| {
        phi.eval(mesh.boundary_facets[f].parent_triangle, x).0.powi(2)
    });
    let energy = match cfg.method {
        Method::Nitsche => energy_norm(mesh, &cfg.nitsche, rules, &phi).powi(2),
        Method::Lagrange => crate::lagrange::triple_norm_pair(mesh, rules, &phi_h, &theta_h)?.powi(2),
    };
    Ok(StabilityReport {
        grid_n: mesh.grid_n,
        h,
        method: cfg.method,
        kappa: cfg.kappa(),
        psi_norm2: psi_norm2(mesh, edge_rule, psi),
        q: [q1, q2, q3, q4, q5],
        boundary_trace,
        energy,
        sup_delta,
    })
}

/// `max/min` of each ratio `q_i/‖ψ‖²` across reports. Quantities that vanish
/// on every level report 1.
pub fn ratio_spread(reports: &[StabilityReport]) -> [f64; 5] {
    let mut out = [1.0; 5];
    for (i, o) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = reports.iter().map(|r| r.ratios()[i]).collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            *o = if min > 0.0 { max / min } else { f64::INFINITY };
        }
    }
    out
}

/// Suprema over offset contours of the interpolation error and of its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationScan {
    /// `sup_δ ‖u − π_h u‖_{∂Ω_δ}`.
    pub value: f64,
    /// `sup_δ ‖∇(u − π_h u)‖_{∂Ω_δ}`.
    pub gradient: f64,
}

pub fn interp_error_scan(
    problem: &ManufacturedProblem,
    mesh: &Mesh,
    edge_rule: &EdgeRule,
    delta0: f64,
    samples: usize,
) -> Result<InterpolationScan> {
    if samples < 2 {
        return Err(FemError::Config("at least two offset samples are needed".into()));
    }
    let pi_u = P1Space::new(mesh).nodal_interpolant(|x| problem.u(x))?;
    let e = ErrorField {
        discrete: DiscreteField { mesh, coeffs: &pi_u },
        exact: |x| problem.u(x),
        exact_grad: |x| problem.grad(x),
    };
    let (v, _) = sup_over_contours(mesh, edge_rule, delta0, samples, |t, x| e.eval(t, x).0.powi(2))?;
    let (g, _) = sup_over_contours(mesh, edge_rule, delta0, samples, |t, x| {
        e.eval(t, x).1.norm_squared()
    })?;
    Ok(InterpolationScan {
        value: v.max(0.0).sqrt(),
        gradient: g.max(0.0).sqrt(),
    })
}
