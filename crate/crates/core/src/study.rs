//! Refinement studies, patch tests and dual checks over a sequence of
//! uniform meshes with `n_k = round(4·√2^k)`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::analysis::{
    boundary_l2_error, dual_stability_report, energy_error, error_representation_lagrange,
    error_representation_nitsche, fit_records, l2_error, ratio_spread, triple_error,
    ConvergenceRecord, DualStabilityConfig, Method, PsiField, StabilityReport,
};
use crate::error::{FemError, Result};
use crate::fem::{edge_quadrature, triangle_quadrature, P1Space, QuadratureConfig};
use crate::flux::{exact_flux, multiplier_flux, nitsche_flux, variational_flux};
use crate::lagrange::{assemble_saddle, SaddleConfig};
use crate::linsolve::{solve_spd, solve_sym_indefinite};
use crate::mesh::{build_unit_square_mesh, Mesh};
use crate::nitsche::{assemble_nitsche, NitscheConfig};
use crate::problem::ManufacturedProblem;

/// Largest accepted level (`n = 724`).
pub const MAX_LEVEL: usize = 15;
/// Rates are fitted over levels with `h_grid` at most this.
pub const FIT_H_MAX: f64 = 0.1;
/// Level range used by dual checks unless configured otherwise.
pub const DUAL_CHECK_LEVELS: (usize, usize) = (2, 8);
/// Tolerance of the patch tests.
pub const PATCH_TOLERANCE: f64 = 1e-9;
/// Tolerance of the relative error-representation residuals.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;
/// Allowed `max/min` spread of each dual stability ratio across levels.
pub const STABILITY_SPREAD: f64 = 2.0;
/// Seeded `ψ` fields per level in the identity check.
pub const IDENTITY_FIELDS: u64 = 5;

/// Accepted window for the fitted energy or triple norm slope.
pub const ENERGY_SLOPE_WINDOW: (f64, f64) = (0.9, 1.1);

/// Accepted window for the fitted flux slope of each variant.
pub fn flux_slope_window(variant: FluxVariant) -> (f64, f64) {
    match variant {
        FluxVariant::Pointwise | FluxVariant::Variational => (0.9, 1.15),
        FluxVariant::Multiplier => (0.9, 1.2),
    }
}

/// Grid subdivisions of level `k`.
pub fn level_n(k: usize) -> usize {
    (4.0 * std::f64::consts::SQRT_2.powi(k as i32)).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxVariant {
    Pointwise,
    Variational,
    Multiplier,
}

impl FluxVariant {
    pub fn name(self) -> &'static str {
        match self {
            FluxVariant::Pointwise => "pointwise",
            FluxVariant::Variational => "variational",
            FluxVariant::Multiplier => "multiplier",
        }
    }

    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Nitsche => FluxVariant::Pointwise,
            Method::Lagrange => FluxVariant::Multiplier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub method: Method,
    pub variant: FluxVariant,
    pub beta: f64,
    pub alpha: f64,
    pub kmin: usize,
    pub kmax: usize,
    pub quadrature: QuadratureConfig,
    pub delta0: f64,
    pub kappa: f64,
    pub seed: u64,
    pub psi: PsiKind,
    /// Offsets sampled in `[0, δ_0]`.
    pub samples: usize,
    pub parallel: bool,
}

/// `ψ` family of a dual check; random fields use the configured seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiKind {
    Zero,
    Constant,
    Random,
    Smooth,
}

impl PsiKind {
    pub fn field(self, seed: u64) -> PsiField {
        match self {
            PsiKind::Zero => PsiField::Zero,
            PsiKind::Constant => PsiField::Constant(1.0),
            PsiKind::Random => PsiField::RandomSigns { seed },
            PsiKind::Smooth => PsiField::Smooth,
        }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            method: Method::Nitsche,
            variant: FluxVariant::Pointwise,
            beta: 10.0,
            alpha: 10.0,
            kmin: 0,
            kmax: 12,
            quadrature: QuadratureConfig::default(),
            delta0: 0.25,
            kappa: 0.0,
            seed: 1,
            psi: PsiKind::Random,
            samples: 33,
            parallel: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kmin > self.kmax {
            return Err(FemError::Config(format!(
                "kmin ({}) exceeds kmax ({})",
                self.kmin, self.kmax
            )));
        }
        if self.kmax > MAX_LEVEL {
            return Err(FemError::Config(format!(
                "kmax {} exceeds the supported maximum {MAX_LEVEL}",
                self.kmax
            )));
        }
        let ok = matches!(
            (self.method, self.variant),
            (Method::Nitsche, FluxVariant::Pointwise)
                | (Method::Nitsche, FluxVariant::Variational)
                | (Method::Lagrange, FluxVariant::Multiplier)
        );
        if !ok {
            return Err(FemError::Config(format!(
                "flux variant {} is not available for method {}",
                self.variant.name(),
                self.method.name()
            )));
        }
        self.quadrature.rules()?;
        self.nitsche().validate()?;
        self.saddle().validate()?;
        self.dual().validate()
    }

    pub fn nitsche(&self) -> NitscheConfig {
        NitscheConfig {
            beta: self.beta,
            kappa: self.kappa,
            ..Default::default()
        }
    }

    pub fn saddle(&self) -> SaddleConfig {
        SaddleConfig {
            alpha: self.alpha,
            kappa: self.kappa,
            ..Default::default()
        }
    }

    pub fn dual(&self) -> DualStabilityConfig {
        DualStabilityConfig {
            method: self.method,
            nitsche: self.nitsche(),
            saddle: self.saddle(),
            delta0: self.delta0,
            delta_prime: None,
            samples: self.samples,
        }
    }

    pub fn levels(&self) -> Vec<usize> {
        (self.kmin..=self.kmax).collect()
    }
}

/// Runs `job` on every item, in parallel if requested, keeping input order.
fn map_levels<T, R>(items: &[T], parallel: bool, job: impl Fn(&T) -> R + Sync + Send) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    if parallel {
        items.par_iter().map(job).collect()
    } else {
        items.iter().map(job).collect()
    }
}

/// Solves the trigonometric problem on level `k` and measures its errors.
pub fn convergence_level(cfg: &StudyConfig, k: usize) -> Result<ConvergenceRecord> {
    let problem = ManufacturedProblem::Trigonometric;
    let mesh = build_unit_square_mesh(level_n(k))?;
    let (tr, er) = cfg.quadrature.rules()?;
    let rules = (&tr, &er);
    let kappa = cfg.kappa;
    let f = |x| problem.f(x) + kappa * problem.u(x);
    let g = |x| problem.g(x);
    let exact = |fi: usize, s: f64| exact_flux(&problem, &mesh, fi, s);

    let (dofs, flux_err, energy_err, u_h) = match cfg.method {
        Method::Nitsche => {
            let ncfg = cfg.nitsche();
            let sys = assemble_nitsche(&mesh, &ncfg, rules, &f, &g)?;
            let u_h = solve_spd(&sys)?.x;
            let flux = match cfg.variant {
                FluxVariant::Variational => variational_flux(&mesh, &ncfg, rules, &u_h, &f, &g)?,
                _ => nitsche_flux(&mesh, &ncfg, &u_h, problem.dirichlet_fn())?,
            };
            let fe = boundary_l2_error(&flux, &er, &exact);
            let ee = energy_error(&mesh, &ncfg, rules, &u_h, &problem);
            (sys.rhs.len(), fe, ee, u_h)
        }
        Method::Lagrange => {
            let sys = assemble_saddle(&mesh, &cfg.saddle(), rules, &f, &g)?;
            let (sol, _) = solve_sym_indefinite(&sys)?;
            let (u_h, lambda_h) = sys.split(&sol.x);
            let flux = multiplier_flux(&mesh, lambda_h)?;
            let fe = boundary_l2_error(&flux, &er, &exact);
            let ee = triple_error(&mesh, rules, u_h, lambda_h, &problem);
            (sys.rhs.len(), fe, ee, u_h.to_vec())
        }
    };
    Ok(ConvergenceRecord {
        level: k,
        grid_n: mesh.grid_n,
        h_grid: mesh.h_grid,
        h_max: mesh.h_max,
        dofs,
        method: cfg.method,
        variant: cfg.variant.name(),
        flux_err,
        energy_err,
        l2_err: l2_error(&mesh, &tr, &u_h, &|x| problem.u(x)),
    })
}

/// One result per level, ordered by level. A failed level does not stop
/// the others.
pub fn run_convergence(cfg: &StudyConfig) -> Result<Vec<(usize, Result<ConvergenceRecord>)>> {
    cfg.validate()?;
    let levels = cfg.levels();
    Ok(map_levels(&levels, cfg.parallel, |&k| (k, convergence_level(cfg, k))))
}

/// Fitted slopes `(flux, energy, l2)` over levels with `h_grid ≤ 0.1`.
pub fn fitted_slopes(records: &[ConvergenceRecord]) -> Result<(f64, f64, f64)> {
    let w = (0.0, FIT_H_MAX);
    Ok((
        fit_records(records, w, |r| r.flux_err)?,
        fit_records(records, w, |r| r.energy_err)?,
        fit_records(records, w, |r| r.l2_err)?,
    ))
}

pub const CSV_HEADER: &str = "k,n,h_grid,h_max,dofs,method,variant,flux_err,energy_err,l2_err";

pub fn render_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.11e},{:.11e},{},{},{},{:.11e},{:.11e},{:.11e}",
            r.level,
            r.grid_n,
            r.h_grid,
            r.h_max,
            r.dofs,
            r.method.name(),
            r.variant,
            r.flux_err,
            r.energy_err,
            r.l2_err
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEntry {
    pub problem: &'static str,
    pub method: Method,
    pub grid_n: usize,
    /// Worst flux error over the flux variants of the method.
    pub flux_err: f64,
    /// Largest nodal (and multiplier) deviation from the exact solution.
    pub coeff_err: f64,
}

impl PatchEntry {
    pub fn passed(&self) -> bool {
        self.flux_err <= PATCH_TOLERANCE && self.coeff_err <= PATCH_TOLERANCE
    }
}

pub const PATCH_LEVELS: [usize; 3] = [2, 4, 8];

fn patch_entry(cfg: &StudyConfig, problem: ManufacturedProblem, method: Method, n: usize) -> Result<PatchEntry> {
    let mesh = build_unit_square_mesh(n)?;
    let (tr, er) = cfg.quadrature.rules()?;
    let rules = (&tr, &er);
    let f = |x| problem.f(x);
    let g = |x| problem.g(x);
    let exact = |fi: usize, s: f64| exact_flux(&problem, &mesh, fi, s);
    let interp = P1Space::new(&mesh).nodal_interpolant(|x| problem.u(x))?;
    let nodal = |u: &[f64]| {
        u.iter()
            .zip(&interp)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let (flux_err, coeff_err) = match method {
        Method::Nitsche => {
            let ncfg = NitscheConfig { beta: cfg.beta, ..Default::default() };
            let sys = assemble_nitsche(&mesh, &ncfg, rules, &f, &g)?;
            let u = solve_spd(&sys)?.x;
            let pw = nitsche_flux(&mesh, &ncfg, &u, problem.dirichlet_fn())?;
            let var = variational_flux(&mesh, &ncfg, rules, &u, &f, &g)?;
            let e1 = boundary_l2_error(&pw, &er, &exact);
            // the continuous trace flux cannot follow the corner jumps of an affine flux
            let e2 = if matches!(problem, ManufacturedProblem::Constant(_)) {
                boundary_l2_error(&var, &er, &exact)
            } else {
                0.0
            };
            (e1.max(e2), nodal(&u))
        }
        Method::Lagrange => {
            let scfg = SaddleConfig { alpha: cfg.alpha, ..Default::default() };
            let sys = assemble_saddle(&mesh, &scfg, rules, &f, &g)?;
            let (sol, _) = solve_sym_indefinite(&sys)?;
            let (u, l) = sys.split(&sol.x);
            let lam_err = (0..mesh.n_boundary_facets())
                .map(|fi| {
                    let normal = mesh.boundary_facets[fi].outward_normal;
                    (l[fi] + problem.flux(mesh.facet_midpoint(fi), normal)).abs()
                })
                .fold(0.0, f64::max);
            let flux = multiplier_flux(&mesh, l)?;
            (boundary_l2_error(&flux, &er, &exact), nodal(u).max(lam_err))
        }
    };
    Ok(PatchEntry {
        problem: problem.name(),
        method,
        grid_n: n,
        flux_err,
        coeff_err,
    })
}

/// Constant and affine problems on `n ∈ {2, 4, 8}` for both methods.
pub fn run_patch_test(cfg: &StudyConfig) -> Result<Vec<PatchEntry>> {
    let problems = [
        ManufacturedProblem::Constant(1.0),
        ManufacturedProblem::Affine { c0: 0.0, cx: 1.0, cy: 1.0 },
    ];
    let mut out = Vec::new();
    for method in [Method::Nitsche, Method::Lagrange] {
        for p in problems {
            for n in PATCH_LEVELS {
                out.push(patch_entry(cfg, p, method, n)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub grid_n: usize,
    pub seed: u64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCheckReport {
    pub stability: Vec<StabilityReport>,
    /// `max/min` of each ratio across levels.
    pub spread: [f64; 5],
    pub identity: Vec<IdentityRow>,
}

impl DualCheckReport {
    pub fn stability_passed(&self) -> bool {
        let active = self.stability.first().map_or(0, |r| r.active_quantities());
        self.spread[..active].iter().all(|&s| s <= STABILITY_SPREAD)
    }

    pub fn identity_passed(&self) -> bool {
        self.identity.iter().all(|r| r.residual <= IDENTITY_TOLERANCE)
    }

    pub fn passed(&self) -> bool {
        self.stability_passed() && self.identity_passed()
    }
}

/// Quadrature used by identity checks; the extra volume degree keeps the
/// quadrature error of the load vector well below the tolerance.
pub fn identity_quadrature() -> QuadratureConfig {
    QuadratureConfig {
        volume_degree: 6,
        edge_points: 6,
    }
}

/// Levels `n_k` for `k = kmin, kmin + 2, …, kmax`, so that `n` doubles.
pub fn dual_check_levels(cfg: &StudyConfig) -> Vec<usize> {
    (cfg.kmin..=cfg.kmax).step_by(2).map(level_n).collect()
}

pub fn stability_reports(cfg: &StudyConfig, grid: &[usize]) -> Result<Vec<StabilityReport>> {
    cfg.validate()?;
    let (tr, er) = cfg.quadrature.rules()?;
    let dual = cfg.dual();
    map_levels(grid, cfg.parallel, |&n| {
        let mesh = build_unit_square_mesh(n)?;
        let psi = cfg.psi.field(cfg.seed).materialize(&mesh);
        dual_stability_report(&mesh, &dual, (&tr, &er), &*psi)
    })
    .into_iter()
    .collect()
}

pub fn identity_rows(cfg: &StudyConfig, grid: &[usize]) -> Result<Vec<IdentityRow>> {
    cfg.validate()?;
    let q = identity_quadrature();
    let tr = triangle_quadrature(q.volume_degree)?;
    let er = edge_quadrature(q.edge_points)?;
    let problem = ManufacturedProblem::Trigonometric;
    let jobs: Vec<(usize, u64)> = grid
        .iter()
        .flat_map(|&n| (0..IDENTITY_FIELDS).map(move |i| (n, i)))
        .collect();
    map_levels(&jobs, cfg.parallel, |&(n, i)| {
        let mesh: Mesh = build_unit_square_mesh(n)?;
        let seed = cfg.seed.wrapping_add(i);
        let psi = match cfg.psi {
            PsiKind::Random => PsiField::RandomSigns { seed },
            other => other.field(seed),
        }
        .materialize(&mesh);
        let check = match cfg.method {
            Method::Nitsche => {
                let ncfg = NitscheConfig { beta: cfg.beta, ..Default::default() };
                error_representation_nitsche(&problem, &mesh, &ncfg, (&tr, &er), &*psi)?
            }
            Method::Lagrange => {
                let scfg = SaddleConfig { alpha: cfg.alpha, ..Default::default() };
                error_representation_lagrange(&problem, &mesh, &scfg, (&tr, &er), &*psi)?
            }
        };
        Ok(IdentityRow {
            grid_n: n,
            seed,
            residual: check.relative_residual(),
        })
    })
    .into_iter()
    .collect()
}

/// Dual stability ratios over the doubling levels plus identity residuals
/// on the levels with `n ≥ 8`.
pub fn run_dual_check(cfg: &StudyConfig) -> Result<DualCheckReport> {
    cfg.validate()?;
    let grid = dual_check_levels(cfg);
    let stability = stability_reports(cfg, &grid)?;
    let id_grid: Vec<usize> = grid.iter().copied().filter(|&n| n >= 8).collect();
    let identity = identity_rows(cfg, &id_grid)?;
    Ok(DualCheckReport {
        spread: ratio_spread(&stability),
        stability,
        identity,
    })
}

pub const STABILITY_HEADER: &str =
    "n,h,method,kappa,psi_norm2,q1,q2,q3,q4,q5,r1,r2,r3,r4,r5,boundary_trace,energy,sup_delta";

pub fn render_dual_check(report: &DualCheckReport) -> String {
    let mut out = String::from(STABILITY_HEADER);
    out.push('\n');
    for r in &report.stability {
        let _ = write!(out, "{},{:.11e},{},{:.11e},{:.11e}", r.grid_n, r.h, r.method.name(), r.kappa, r.psi_norm2);
        for v in r.q.iter().chain(r.ratios().iter()) {
            let _ = write!(out, ",{v:.11e}");
        }
        let _ = writeln!(out, ",{:.11e},{:.11e},{:.11e}", r.boundary_trace, r.energy, r.sup_delta);
    }
    out.push_str("\nspread");
    for s in report.spread {
        let _ = write!(out, ",{s:.11e}");
    }
    out.push_str("\n\nn,seed,identity_residual\n");
    for row in &report.identity {
        let _ = writeln!(out, "{},{},{:.11e}", row.grid_n, row.seed, row.residual);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes() {
        let n: Vec<usize> = (0..=12).map(level_n).collect();
        assert_eq!(n, vec![4, 6, 8, 11, 16, 23, 32, 45, 64, 91, 128, 181, 256]);
    }

    #[test]
    fn config_validation() {
        let ok = StudyConfig::default();
        assert!(ok.validate().is_ok());
        let bad = [
            StudyConfig { kmin: 5, kmax: 4, ..ok },
            StudyConfig { kmax: 16, ..ok },
            StudyConfig { variant: FluxVariant::Multiplier, ..ok },
            StudyConfig { method: Method::Lagrange, ..ok },
            StudyConfig { beta: 0.0, ..ok },
            StudyConfig { alpha: -1.0, ..ok },
            StudyConfig { delta0: 0.5, ..ok },
            StudyConfig { kappa: -1.0, ..ok },
        ];
        for b in bad {
            assert!(matches!(b.validate(), Err(FemError::Config(_))), "{b:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let cfg = StudyConfig { kmin: 0, kmax: 2, ..Default::default() };
        let rows = run_convergence(&cfg).unwrap();
        let recs: Vec<_> = rows.into_iter().map(|(_, r)| r.unwrap()).collect();
        assert_eq!(recs.iter().map(|r| r.grid_n).collect::<Vec<_>>(), vec![4, 6, 8]);
        let csv = render_csv(&recs);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,4,2.50000000000e-1,"));
        assert!(lines[1].contains(",25,nitsche,pointwise,"));
    }

    #[test]
    fn parallel_levels_match_sequential() {
        let cfg = StudyConfig { kmin: 0, kmax: 4, ..Default::default() };
        let par = StudyConfig { parallel: true, ..cfg };
        let a: Vec<_> = run_convergence(&cfg).unwrap().into_iter().map(|(_, r)| r.unwrap()).collect();
        let b: Vec<_> = run_convergence(&par).unwrap().into_iter().map(|(_, r)| r.unwrap()).collect();
        assert_eq!(render_csv(&a), render_csv(&b));
    }

    #[test]
    fn patch_tests_pass() {
        let entries = run_patch_test(&StudyConfig::default()).unwrap();
        assert_eq!(entries.len(), 12);
        for e in entries {
            assert!(e.passed(), "{e:?}");
        }
    }

    #[test]
    fn zero_psi_dual_check_passes() {
        let cfg = StudyConfig { psi: PsiKind::Zero, kmin: 2, kmax: 4, ..Default::default() };
        let rep = run_dual_check(&cfg).unwrap();
        assert!(rep.passed());
        assert!(rep.stability.iter().all(|r| r.q == [0.0; 5]));
    }
}
