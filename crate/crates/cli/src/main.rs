//! `fluxfem`: convergence studies, patch tests and dual checks for weakly
//! imposed Dirichlet conditions.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 usage or configuration error,
//! 3 solver failure.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluxfem::analysis::Method;
use fluxfem::study::{
    self, flux_slope_window, fitted_slopes, render_csv, render_dual_check, FluxVariant, PsiKind,
    StudyConfig, DUAL_CHECK_LEVELS, ENERGY_SLOPE_WINDOW, FIT_H_MAX,
};
use fluxfem::FemError;

use config::{parse_method, parse_psi, parse_variant, Settings};

const EXIT_TOLERANCE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "fluxfem", version, about = "Boundary flux convergence studies for weak Dirichlet conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refinement study on the trigonometric manufactured solution; writes CSV.
    Converge(Flags),
    /// Constant and affine problems on small meshes for both methods.
    PatchTest(Flags),
    /// Dual stability ratios and error-representation residuals.
    DualCheck(Flags),
}

#[derive(Args, Debug, Clone, Default)]
struct Flags {
    /// nitsche or lagrange
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// pointwise, variational (nitsche) or multiplier (lagrange)
    #[arg(long, value_parser = parse_variant)]
    flux_variant: Option<FluxVariant>,
    /// Nitsche penalty
    #[arg(long)]
    beta: Option<f64>,
    /// Multiplier stabilization parameter
    #[arg(long)]
    alpha: Option<f64>,
    /// First level; level k uses round(4·√2^k) cells per side
    #[arg(long)]
    kmin: Option<usize>,
    /// Last level
    #[arg(long)]
    kmax: Option<usize>,
    /// Largest contour offset in dual checks
    #[arg(long)]
    delta0: Option<f64>,
    /// Zeroth-order shift
    #[arg(long)]
    kappa: Option<f64>,
    /// Seed of random boundary data
    #[arg(long)]
    seed: Option<u64>,
    /// key=value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve levels in parallel; output is unchanged
    #[arg(long)]
    parallel: bool,
    /// Dual data: zero, constant, random or smooth
    #[arg(long, value_parser = parse_psi)]
    psi: Option<PsiKind>,
    /// Contour offsets sampled in [0, delta0]
    #[arg(long)]
    samples: Option<usize>,
    /// Triangle quadrature degree (1 to 6)
    #[arg(long)]
    volume_degree: Option<usize>,
    /// Gauss points per edge (1 to 10)
    #[arg(long)]
    edge_points: Option<usize>,
}

impl Flags {
    fn settings(&self) -> Settings {
        Settings {
            method: self.method,
            flux_variant: self.flux_variant,
            beta: self.beta,
            alpha: self.alpha,
            kmin: self.kmin,
            kmax: self.kmax,
            delta0: self.delta0,
            kappa: self.kappa,
            seed: self.seed,
            out: self.out.clone(),
            parallel: self.parallel.then_some(true),
            psi: self.psi,
            samples: self.samples,
            volume_degree: self.volume_degree,
            edge_points: self.edge_points,
        }
    }

    fn merged(&self) -> Result<Settings, Failure> {
        let file = match &self.config {
            Some(p) => Settings::load(p).map_err(Failure::Usage)?,
            None => Settings::default(),
        };
        Ok(file.overlay(self.settings()))
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Tolerance(String),
}

impl From<FemError> for Failure {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Config(_) | FemError::InvalidArgument(_) | FemError::InsufficientData { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
        }
    }
}

fn converge(flags: &Flags) -> Result<(), Failure> {
    let s = flags.merged()?;
    let cfg = s.resolve(StudyConfig::default());
    let rows = study::run_convergence(&cfg)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in rows {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(format!("level {k}: {e}")),
        }
    }
    emit(s.out.as_deref(), &render_csv(&records))?;
    if !failures.is_empty() {
        return Err(Failure::Solver(failures.join("\n")));
    }
    let in_window = records.iter().filter(|r| r.h_grid <= FIT_H_MAX).count();
    if in_window < 3 {
        eprintln!("{in_window} level(s) with h_grid <= {FIT_H_MAX}: no slope fitted");
        return Ok(());
    }
    let (flux, energy, l2) = fitted_slopes(&records)?;
    eprintln!(
        "fitted slopes over h_grid <= {FIT_H_MAX}: flux {flux:.4}, energy {energy:.4}, l2 {l2:.4}"
    );
    let fw = flux_slope_window(cfg.variant);
    let mut bad = Vec::new();
    if !(fw.0..=fw.1).contains(&flux) {
        bad.push(format!("flux slope {flux:.4} outside [{}, {}]", fw.0, fw.1));
    }
    let ew = ENERGY_SLOPE_WINDOW;
    if !(ew.0..=ew.1).contains(&energy) {
        bad.push(format!("energy slope {energy:.4} outside [{}, {}]", ew.0, ew.1));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(bad.join("; ")))
    }
}

fn patch_test(flags: &Flags) -> Result<(), Failure> {
    let s = flags.merged()?;
    let cfg = s.resolve(StudyConfig::default());
    cfg.validate()?;
    let entries = study::run_patch_test(&cfg)?;
    let mut text = String::from("method,problem,n,flux_err,coeff_err,status\n");
    for e in &entries {
        let _ = writeln!(
            text,
            "{},{},{},{:.11e},{:.11e},{}",
            e.method.name(),
            e.problem,
            e.grid_n,
            e.flux_err,
            e.coeff_err,
            if e.passed() { "pass" } else { "FAIL" }
        );
    }
    emit(s.out.as_deref(), &text)?;
    let failed: Vec<String> = entries
        .iter()
        .filter(|e| !e.passed())
        .map(|e| {
            format!(
                "{} {} n={}: flux {:.3e}, coefficients {:.3e}",
                e.method.name(),
                e.problem,
                e.grid_n,
                e.flux_err,
                e.coeff_err
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(failed.join("\n")))
    }
}

fn dual_check(flags: &Flags) -> Result<(), Failure> {
    let s = flags.merged()?;
    let base = StudyConfig {
        kmin: DUAL_CHECK_LEVELS.0,
        kmax: DUAL_CHECK_LEVELS.1,
        ..StudyConfig::default()
    };
    let cfg = s.resolve(base);
    let report = study::run_dual_check(&cfg)?;
    emit(s.out.as_deref(), &render_dual_check(&report))?;
    let mut bad = Vec::new();
    if !report.stability_passed() {
        bad.push(format!("stability ratio spread {:?} exceeds {}", report.spread, study::STABILITY_SPREAD));
    }
    if !report.identity_passed() {
        let worst = report.identity.iter().map(|r| r.residual).fold(0.0, f64::max);
        bad.push(format!("identity residual {worst:.3e} exceeds {}", study::IDENTITY_TOLERANCE));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(bad.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Converge(f) => converge(f),
        Command::PatchTest(f) => patch_test(f),
        Command::DualCheck(f) => dual_check(f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Tolerance(m)) => {
            eprintln!("tolerance failure: {m}");
            ExitCode::from(EXIT_TOLERANCE)
        }
    }
}
