//! Problem configuration files and the built-in problem library.
//!
//! A config is a JSON object whose function fields are strings in the
//! expression grammar of [`crate::expr`]. See the README for the schema and
//! `devbvp` for the commands that consume it.

use serde::{Deserialize, Serialize};

use crate::conditions::LipschitzPair;
use crate::error::{Error, Result};
use crate::expr::{parse, Var};
use crate::jumps::PiecewiseFn;
use crate::model::{DeviatedBVP, ScalarMap, TernaryMap};
use crate::monotone::{OuterSettings, ProblemSetup};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyConfig {
    /// Which variable of `f` to slice: "x" or "y".
    pub slice: String,
    pub window: [f64; 2],
    #[serde(default)]
    pub jumps: Vec<f64>,
    #[serde(default)]
    pub fix_t: f64,
    #[serde(default)]
    pub fix_x: f64,
    #[serde(default)]
    pub fix_y: f64,
    #[serde(default = "default_samples")]
    pub samples_per_piece: usize,
}

fn default_samples() -> usize {
    2048
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub r: f64,
    #[serde(rename = "B")]
    pub endpoint: f64,
    /// Nonlinearity `f(t, x, y)` with `x = u(tau_x(t))`, `y = u(tau(t))`.
    pub f: String,
    /// Deviation feeding `y`.
    pub tau: String,
    /// Deviation feeding `x`; identity when absent.
    #[serde(default)]
    pub tau_x: Option<String>,
    pub phi: String,
    pub alpha: String,
    pub beta: String,
    #[serde(rename = "L1")]
    pub l1: String,
    #[serde(rename = "L2")]
    pub l2: String,
    #[serde(default)]
    pub psi: Option<String>,
    #[serde(default)]
    pub f_singular_at_zero: bool,
    #[serde(default)]
    pub l1_singular_at_zero: bool,
    #[serde(default)]
    pub l2_singular_at_zero: bool,
    #[serde(default)]
    pub psi_singular_at_zero: bool,
    #[serde(default = "default_mesh_n")]
    pub mesh_n: usize,
    #[serde(default = "default_tol_sup")]
    pub tol_sup: f64,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_eps_mono")]
    pub eps_mono: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default)]
    pub certify: Option<CertifyConfig>,
}

fn default_mesh_n() -> usize {
    200
}

fn default_tol_sup() -> f64 {
    1e-10
}

fn default_outer_tol() -> f64 {
    1e-8
}

fn default_eps_mono() -> f64 {
    1e-7
}

fn default_max_outer() -> usize {
    500
}

/// A parsed and validated problem, ready to run.
#[derive(Debug, Clone)]
pub struct CompiledProblem {
    pub name: String,
    pub setup: ProblemSetup,
    pub mesh_n: usize,
    pub tol_sup: f64,
    pub outer: OuterSettings,
    pub certify: Option<PiecewiseFn>,
    pub certify_samples: usize,
}

fn scalar_field(name: &str, src: &str) -> Result<ScalarMap> {
    let expr = parse(src)
        .map_err(|e| Error::Config(format!("field {name:?}: {e}")))?;
    ScalarMap::from_expr(expr).map_err(|_| {
        Error::Config(format!("field {name:?} must be a function of t only: {src:?}"))
    })
}

pub fn compile(cfg: &ProblemConfig) -> Result<CompiledProblem> {
    if cfg.mesh_n < 4 {
        return Err(Error::Config(format!("mesh_n must be at least 4, got {}", cfg.mesh_n)));
    }
    for (label, v) in [
        ("tol_sup", cfg.tol_sup),
        ("outer_tol", cfg.outer_tol),
        ("eps_mono", cfg.eps_mono),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{label} must be positive, got {v}")));
        }
    }
    let f_expr = parse(&cfg.f).map_err(|e| Error::Config(format!("field \"f\": {e}")))?;
    let bvp = DeviatedBVP {
        horizon: cfg.horizon,
        radius: cfg.r,
        endpoint_value: cfg.endpoint,
        deviation_x: cfg
            .tau_x
            .as_deref()
            .map(|s| scalar_field("tau_x", s))
            .transpose()?,
        deviation_y: scalar_field("tau", &cfg.tau)?,
        history: scalar_field("phi", &cfg.phi)?,
        nonlinearity: TernaryMap::new(f_expr.clone(), cfg.f_singular_at_zero),
    };
    let setup = ProblemSetup {
        bvp,
        coefficients: LipschitzPair {
            l1: scalar_field("L1", &cfg.l1)?,
            l2: scalar_field("L2", &cfg.l2)?,
            l1_singular: cfg.l1_singular_at_zero,
            l2_singular: cfg.l2_singular_at_zero,
        },
        lower: scalar_field("alpha", &cfg.alpha)?,
        upper: scalar_field("beta", &cfg.beta)?,
        envelope: cfg
            .psi
            .as_deref()
            .map(|s| scalar_field("psi", s))
            .transpose()?,
        envelope_singular: cfg.psi_singular_at_zero,
    };
    let certify = match &cfg.certify {
        None => None,
        Some(c) => {
            let var = match c.slice.as_str() {
                "t" => Var::T,
                "x" => Var::X,
                "y" => Var::Y,
                other => {
                    return Err(Error::Config(format!(
                        "certify.slice must be one of t/x/y, got {other:?}"
                    )))
                }
            };
            Some(PiecewiseFn::new(
                f_expr,
                var,
                (c.fix_t, c.fix_x, c.fix_y),
                c.jumps.clone(),
                (c.window[0], c.window[1]),
            )?)
        }
    };
    Ok(CompiledProblem {
        name: cfg.name.clone(),
        setup,
        mesh_n: cfg.mesh_n,
        tol_sup: cfg.tol_sup,
        outer: OuterSettings {
            outer_tol: cfg.outer_tol,
            max_outer: cfg.max_outer,
            eps_mono: cfg.eps_mono,
        },
        certify,
        certify_samples: cfg.certify.as_ref().map_or(default_samples(), |c| c.samples_per_piece),
    })
}

pub fn load_file(path: &std::path::Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ProblemConfig = serde_json::from_str(&text)?;
    Ok(cfg)
}

pub const BUILTIN_NAMES: [&str; 4] =
    ["example1", "example2", "trivial_constant", "trivial_linear"];

/// Built-in problems, so the solver can be exercised without external files.
/// `example2` takes the Lipschitz parameter `k` (default 0.05).
pub fn builtin(name: &str, k: Option<f64>) -> Result<ProblemConfig> {
    match name {
        "example1" => Ok(ProblemConfig {
            name: "example1".into(),
            horizon: 2.0,
            r: 1.0,
            endpoint: std::f64::consts::FRAC_PI_4,
            f: "floor(t*x) - (1/9)*y*sin(y*pi/(2*floor(abs(y))+2))".into(),
            tau: "t - 1".into(),
            tau_x: None,
            phi: "cos(pi*t/2)".into(),
            alpha: "0".into(),
            beta: "piecewise(t <= 0, cos(pi*t/2), 1 - t*(t-2))".into(),
            l1: "0".into(),
            l2: "(1 + pi/2)/9".into(),
            psi: Some("4".into()),
            f_singular_at_zero: false,
            l1_singular_at_zero: false,
            l2_singular_at_zero: false,
            psi_singular_at_zero: false,
            mesh_n: 400,
            tol_sup: default_tol_sup(),
            outer_tol: default_outer_tol(),
            eps_mono: default_eps_mono(),
            max_outer: default_max_outer(),
            certify: Some(CertifyConfig {
                slice: "y".into(),
                window: [0.0, 3.0],
                jumps: vec![1.0, 2.0],
                fix_t: 0.0,
                fix_x: 0.0,
                fix_y: 0.0,
                samples_per_piece: default_samples(),
            }),
        }),
        "example2" => {
            let k = k.unwrap_or(0.05);
            if !(k > 0.0) {
                return Err(Error::Config(format!("parameter k must be positive, got {k}")));
            }
            Ok(ProblemConfig {
                name: format!("example2(k={k})"),
                horizon: 1.0,
                r: 0.0,
                endpoint: 0.0,
                f: format!("sin(t) + paperphi({k:?}, x) + 1/(5*sqrt(t))*y"),
                tau: "sqrt(t)".into(),
                tau_x: Some("sqrt(1 - t)".into()),
                phi: "0".into(),
                alpha: "t*t - t".into(),
                beta: "t - t*t".into(),
                l1: format!("{k:?}"),
                l2: "1/(5*sqrt(t))".into(),
                psi: Some(format!("sin(t) + {k:?}/2 + 1/(20*sqrt(t))")),
                f_singular_at_zero: true,
                l1_singular_at_zero: false,
                l2_singular_at_zero: true,
                psi_singular_at_zero: true,
                mesh_n: 400,
                tol_sup: default_tol_sup(),
                outer_tol: default_outer_tol(),
                eps_mono: default_eps_mono(),
                max_outer: default_max_outer(),
                certify: None,
            })
        }
        "trivial_constant" => Ok(ProblemConfig {
            name: "trivial_constant".into(),
            horizon: 1.0,
            r: 0.0,
            endpoint: 0.0,
            f: "2".into(),
            tau: "t".into(),
            tau_x: None,
            phi: "0".into(),
            alpha: "0".into(),
            beta: "t*(1 - t)".into(),
            l1: "0".into(),
            l2: "0".into(),
            psi: Some("2".into()),
            f_singular_at_zero: false,
            l1_singular_at_zero: false,
            l2_singular_at_zero: false,
            psi_singular_at_zero: false,
            mesh_n: 200,
            tol_sup: default_tol_sup(),
            outer_tol: default_outer_tol(),
            eps_mono: default_eps_mono(),
            max_outer: default_max_outer(),
            certify: None,
        }),
        "trivial_linear" => Ok(ProblemConfig {
            name: "trivial_linear".into(),
            horizon: 1.0,
            r: 0.0,
            endpoint: 1.0,
            f: "0".into(),
            tau: "t".into(),
            tau_x: None,
            phi: "0".into(),
            alpha: "0".into(),
            beta: "1".into(),
            l1: "0".into(),
            l2: "0".into(),
            psi: Some("0".into()),
            f_singular_at_zero: false,
            l1_singular_at_zero: false,
            l2_singular_at_zero: false,
            psi_singular_at_zero: false,
            mesh_n: 200,
            tol_sup: default_tol_sup(),
            outer_tol: default_outer_tol(),
            eps_mono: default_eps_mono(),
            max_outer: default_max_outer(),
            certify: None,
        }),
        other => Err(Error::Config(format!(
            "unknown builtin {other:?}; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_compile() {
        for name in BUILTIN_NAMES {
            let cfg = builtin(name, None).unwrap();
            compile(&cfg).unwrap();
        }
        compile(&builtin("example2", Some(0.09)).unwrap()).unwrap();
        assert!(builtin("nope", None).is_err());
        assert!(builtin("example2", Some(-1.0)).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = builtin("example1", None).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ProblemConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, cfg.name);
        assert_eq!(back.f, cfg.f);
        assert_eq!(back.mesh_n, cfg.mesh_n);
        compile(&back).unwrap();
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let text = r#"{
            "name": "tiny", "T": 1.0, "r": 0.0, "B": 0.0,
            "f": "2", "tau": "t", "phi": "0",
            "alpha": "0", "beta": "t*(1-t)",
            "L1": "0", "L2": "0"
        }"#;
        let cfg: ProblemConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.mesh_n, 200);
        assert_eq!(cfg.tol_sup, 1e-10);
        compile(&cfg).unwrap();
    }

    #[test]
    fn bad_expression_is_reported_with_field() {
        let mut cfg = builtin("trivial_constant", None).unwrap();
        cfg.beta = "t *".into();
        let err = compile(&cfg).unwrap_err();
        assert!(err.to_string().contains("beta"));
        let mut cfg = builtin("trivial_constant", None).unwrap();
        cfg.phi = "x + 1".into(); // not a function of t
        assert!(compile(&cfg).is_err());
    }
}
