//! Flat key-value configuration files plus CLI flag overrides.
//!
//! The file format is one `key = value` pair per line; `#` starts a comment.
//! Keys mirror the CLI flags (`m`, `n`, `r`, `r-star`, `alpha`, `geometry`,
//! `seed`, `out`, `oversampling`, `sv`, `max-iters`, `grad-tol`, `preset`,
//! `algorithm`). Flags take precedence over file values.

use std::collections::HashMap;
use std::path::PathBuf;

use desingopt::cost::SvSpec;

use crate::experiment::{Algorithm, ExperimentSpec, GeometryChoice};
use crate::{HarnessError, Result};

/// Option bag shared by the config file and the CLI flags.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub preset: Option<String>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub r_star: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub geometry: Option<Vec<GeometryChoice>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub oversampling: Option<f64>,
    pub sv: Option<SvSpec>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub algorithm: Option<Algorithm>,
}

impl Options {
    /// Overlays `self` on top of `base`: values present here win.
    pub fn over(self, base: Options) -> Options {
        Options {
            preset: self.preset.or(base.preset),
            m: self.m.or(base.m),
            n: self.n.or(base.n),
            r: self.r.or(base.r),
            r_star: self.r_star.or(base.r_star),
            alpha: self.alpha.or(base.alpha),
            geometry: self.geometry.or(base.geometry),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            oversampling: self.oversampling.or(base.oversampling),
            sv: self.sv.or(base.sv),
            max_iters: self.max_iters.or(base.max_iters),
            grad_tol: self.grad_tol.or(base.grad_tol),
            algorithm: self.algorithm.or(base.algorithm),
        }
    }

    /// Resolves the final spec: preset first (when named), then overrides.
    pub fn into_spec(self) -> Result<ExperimentSpec> {
        let out_dir = self
            .out
            .clone()
            .ok_or_else(|| HarnessError::Config("missing output directory (out)".into()))?;
        let mut spec = match &self.preset {
            Some(name) => ExperimentSpec::preset(name, out_dir)?,
            None => ExperimentSpec::base(out_dir),
        };
        if let Some(m) = self.m {
            spec.m = m;
        }
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(r) = self.r {
            spec.r = r;
        }
        if let Some(r_star) = self.r_star {
            spec.r_star = r_star;
        }
        if let Some(alpha) = self.alpha {
            spec.alphas = alpha;
        }
        if let Some(geometry) = self.geometry {
            spec.geometries = geometry;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(oversampling) = self.oversampling {
            spec.oversampling = oversampling;
        }
        if let Some(sv) = self.sv {
            spec.sv_spec = sv;
        }
        if let Some(max_iters) = self.max_iters {
            spec.solver.max_outer_iters = max_iters;
        }
        if let Some(grad_tol) = self.grad_tol {
            spec.solver.grad_tol = grad_tol;
        }
        if let Some(algorithm) = self.algorithm {
            spec.algorithm = algorithm;
        }
        spec.dims()?;
        spec.solver.validate()?;
        if spec.r_star == 0 || spec.alphas.iter().any(|&a| a <= 0.0) {
            return Err(HarnessError::Config("r_star must be >= 1 and alphas positive".into()));
        }
        Ok(spec)
    }
}

/// Parses the flat `key = value` format into an option bag.
pub fn parse_config(text: &str) -> Result<Options> {
    let mut kv = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        kv.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }

    let mut opts = Options::default();
    for (key, value) in kv {
        match key.as_str() {
            "preset" => opts.preset = Some(value),
            "m" => opts.m = Some(parse_num(&key, &value)?),
            "n" => opts.n = Some(parse_num(&key, &value)?),
            "r" => opts.r = Some(parse_num(&key, &value)?),
            "r_star" => opts.r_star = Some(parse_num(&key, &value)?),
            "alpha" => opts.alpha = Some(parse_alpha_list(&value)?),
            "geometry" => opts.geometry = Some(parse_geometries(&value)?),
            "seed" => opts.seed = Some(parse_num(&key, &value)?),
            "out" => opts.out = Some(PathBuf::from(value)),
            "oversampling" => opts.oversampling = Some(parse_float(&key, &value)?),
            "sv" => opts.sv = Some(parse_sv(&value)?),
            "max_iters" => opts.max_iters = Some(parse_num(&key, &value)?),
            "grad_tol" => opts.grad_tol = Some(parse_float(&key, &value)?),
            "algorithm" => opts.algorithm = Some(parse_algorithm(&value)?),
            other => {
                return Err(HarnessError::Config(format!("unknown config key '{other}'")));
            }
        }
    }
    Ok(opts)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid integer for '{key}': '{value}'")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid number for '{key}': '{value}'")))
}

/// `0.05,0.5,5` style comma lists.
pub fn parse_alpha_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| parse_float("alpha", part.trim()))
        .collect()
}

/// `desing,lr,fixed-rank` or `all`.
pub fn parse_geometries(text: &str) -> Result<Vec<GeometryChoice>> {
    if text.trim() == "all" {
        return Ok(vec![GeometryChoice::Desing, GeometryChoice::Lr, GeometryChoice::FixedRank]);
    }
    text.split(',').map(|part| GeometryChoice::parse(part.trim())).collect()
}

/// `uniform:LO,HI` or `expdecay:RHO`.
pub fn parse_sv(text: &str) -> Result<SvSpec> {
    let Some((kind, args)) = text.split_once(':') else {
        return Err(HarnessError::Config(format!(
            "invalid sv spec '{text}' (expected 'uniform:lo,hi' or 'expdecay:rho')"
        )));
    };
    match kind.trim() {
        "uniform" => {
            let Some((lo, hi)) = args.split_once(',') else {
                return Err(HarnessError::Config(format!("uniform sv needs 'lo,hi', got '{args}'")));
            };
            Ok(SvSpec::Uniform {
                lo: parse_float("sv", lo.trim())?,
                hi: parse_float("sv", hi.trim())?,
            })
        }
        "expdecay" => Ok(SvSpec::ExpDecay { rho: parse_float("sv", args.trim())? }),
        other => Err(HarnessError::Config(format!("unknown sv kind '{other}'"))),
    }
}

pub fn parse_algorithm(text: &str) -> Result<Algorithm> {
    match text {
        "tr" | "trust-region" | "trust_region" => Ok(Algorithm::TrustRegion),
        "gd" | "gradient-descent" | "gradient_descent" => Ok(Algorithm::GradientDescent),
        other => Err(HarnessError::Config(format!("unknown algorithm '{other}'"))),
    }
}
