//! `key=value` configuration files and their merge with command-line flags.

use std::path::{Path, PathBuf};

use fluxfem::analysis::Method;
use fluxfem::study::{FluxVariant, PsiKind, StudyConfig};

/// Every setting that can come from a file or a flag. `None` means unset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub method: Option<Method>,
    pub flux_variant: Option<FluxVariant>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub kmin: Option<usize>,
    pub kmax: Option<usize>,
    pub delta0: Option<f64>,
    pub kappa: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<bool>,
    pub psi: Option<PsiKind>,
    pub samples: Option<usize>,
    pub volume_degree: Option<usize>,
    pub edge_points: Option<usize>,
}

pub fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "nitsche" => Ok(Method::Nitsche),
        "lagrange" => Ok(Method::Lagrange),
        _ => Err(format!("unknown method '{s}' (expected nitsche or lagrange)")),
    }
}

pub fn parse_variant(s: &str) -> Result<FluxVariant, String> {
    match s {
        "pointwise" => Ok(FluxVariant::Pointwise),
        "variational" => Ok(FluxVariant::Variational),
        "multiplier" => Ok(FluxVariant::Multiplier),
        _ => Err(format!(
            "unknown flux variant '{s}' (expected pointwise, variational or multiplier)"
        )),
    }
}

pub fn parse_psi(s: &str) -> Result<PsiKind, String> {
    match s {
        "zero" => Ok(PsiKind::Zero),
        "constant" => Ok(PsiKind::Constant),
        "random" => Ok(PsiKind::Random),
        "smooth" => Ok(PsiKind::Smooth),
        _ => Err(format!("unknown psi '{s}' (expected zero, constant, random or smooth)")),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got '{s}'")),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| format!("{key}: {e}"))
}

impl Settings {
    /// Parses `key=value` lines; `#` starts a comment. Keys may use `-` or `_`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let key = key.trim().replace('-', "_");
            let v = value.trim();
            let at = |e: String| format!("line {}: {e}", i + 1);
            match key.as_str() {
                "method" => s.method = Some(parse_method(v).map_err(at)?),
                "flux_variant" => s.flux_variant = Some(parse_variant(v).map_err(at)?),
                "beta" => s.beta = Some(num(&key, v).map_err(at)?),
                "alpha" => s.alpha = Some(num(&key, v).map_err(at)?),
                "kmin" => s.kmin = Some(num(&key, v).map_err(at)?),
                "kmax" => s.kmax = Some(num(&key, v).map_err(at)?),
                "delta0" => s.delta0 = Some(num(&key, v).map_err(at)?),
                "kappa" => s.kappa = Some(num(&key, v).map_err(at)?),
                "seed" => s.seed = Some(num(&key, v).map_err(at)?),
                "out" => s.out = Some(PathBuf::from(v)),
                "parallel" => s.parallel = Some(parse_bool(v).map_err(at)?),
                "psi" => s.psi = Some(parse_psi(v).map_err(at)?),
                "samples" => s.samples = Some(num(&key, v).map_err(at)?),
                "volume_degree" => s.volume_degree = Some(num(&key, v).map_err(at)?),
                "edge_points" => s.edge_points = Some(num(&key, v).map_err(at)?),
                _ => return Err(at(format!("unknown key '{key}'"))),
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Values set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            method: over.method.or(self.method),
            flux_variant: over.flux_variant.or(self.flux_variant),
            beta: over.beta.or(self.beta),
            alpha: over.alpha.or(self.alpha),
            kmin: over.kmin.or(self.kmin),
            kmax: over.kmax.or(self.kmax),
            delta0: over.delta0.or(self.delta0),
            kappa: over.kappa.or(self.kappa),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            parallel: over.parallel.or(self.parallel),
            psi: over.psi.or(self.psi),
            samples: over.samples.or(self.samples),
            volume_degree: over.volume_degree.or(self.volume_degree),
            edge_points: over.edge_points.or(self.edge_points),
        }
    }

    /// Builds a study configuration on top of `base`. An unset flux variant
    /// follows the method.
    pub fn resolve(&self, base: StudyConfig) -> StudyConfig {
        let method = self.method.unwrap_or(base.method);
        let mut quadrature = base.quadrature;
        if let Some(d) = self.volume_degree {
            quadrature.volume_degree = d;
        }
        if let Some(p) = self.edge_points {
            quadrature.edge_points = p;
        }
        StudyConfig {
            method,
            variant: self.flux_variant.unwrap_or(FluxVariant::default_for(method)),
            beta: self.beta.unwrap_or(base.beta),
            alpha: self.alpha.unwrap_or(base.alpha),
            kmin: self.kmin.unwrap_or(base.kmin),
            kmax: self.kmax.unwrap_or(base.kmax),
            quadrature,
            delta0: self.delta0.unwrap_or(base.delta0),
            kappa: self.kappa.unwrap_or(base.kappa),
            seed: self.seed.unwrap_or(base.seed),
            psi: self.psi.unwrap_or(base.psi),
            samples: self.samples.unwrap_or(base.samples),
            parallel: self.parallel.unwrap_or(base.parallel),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let s = Settings::parse(
            "# study\nmethod = lagrange\nflux-variant=multiplier\nbeta=12.5\nalpha=3\n\
             kmin=1\nkmax=3 # short\ndelta0=0.2\nkappa=10\nseed=7\nout=a.csv\nparallel=true\n\
             psi=smooth\nsamples=9\nvolume_degree=6\nedge_points=4\n",
        )
        .unwrap();
        assert_eq!(s.method, Some(Method::Lagrange));
        assert_eq!(s.flux_variant, Some(FluxVariant::Multiplier));
        assert_eq!(s.kmax, Some(3));
        assert_eq!(s.out, Some(PathBuf::from("a.csv")));
        let c = s.resolve(StudyConfig::default());
        assert_eq!((c.beta, c.alpha, c.kappa, c.delta0), (12.5, 3.0, 10.0, 0.2));
        assert_eq!((c.quadrature.volume_degree, c.quadrature.edge_points), (6, 4));
        assert!(c.parallel);
        assert_eq!(c.psi, PsiKind::Smooth);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["method", "method=fem", "beta=abc", "colour=red", "parallel=maybe", "kmin=-1"] {
            assert!(Settings::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let file = Settings::parse("beta=5\nkmax=4\nmethod=lagrange").unwrap();
        let flags = Settings { beta: Some(20.0), method: Some(Method::Nitsche), ..Default::default() };
        let c = file.overlay(flags).resolve(StudyConfig::default());
        assert_eq!(c.beta, 20.0);
        assert_eq!(c.kmax, 4);
        assert_eq!(c.method, Method::Nitsche);
        assert_eq!(c.variant, FluxVariant::Pointwise);
    }
}
