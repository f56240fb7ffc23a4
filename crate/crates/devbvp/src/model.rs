//! Domain types for problem instances.
//!
//! A [`DeviatedBVP`] is the full statement of
//! `-u''(t) = f(t, u(dx(t)), u(dy(t)))` on `[0, T]` with history values on
//! `[-r, 0]` and a prescribed right endpoint value. The x-deviation defaults
//! to the identity, which recovers the plain form `f(t, u(t), u(tau(t)))`;
//! problems with two genuine deviations set both. Deviations may reach into
//! the history (delays) or forward (advances) but must stay inside `[-r, T]`.
//!
//! All types here are immutable after construction; every operation is pure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{GridFunction, Mesh};

/// Tolerance for the continuity requirement `u(0) = history(0)` when gluing.
pub const GLUE_TOL: f64 = 1e-9;

/// A scalar function of one real variable: either a closed-form expression in
/// `t` or a sampled grid function.
#[derive(Debug, Clone)]
pub enum ScalarMap {
    Expr(Expr),
    Grid(GridFunction),
}

impl ScalarMap {
    pub fn from_expr(e: Expr) -> Result<ScalarMap> {
        let uses = e.uses();
        if uses[1] || uses[2] {
            return Err(Error::Config(
                "scalar function must use only the variable t".into(),
            ));
        }
        Ok(ScalarMap::Expr(e))
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        match self {
            ScalarMap::Expr(e) => Ok(e.eval(v, 0.0, 0.0)?),
            ScalarMap::Grid(g) => g.interp(v),
        }
    }
}

/// A scalar function of `(t, x, y)`; `x` and `y` stand for the unknown
/// evaluated at the two deviated arguments.
#[derive(Debug, Clone)]
pub struct TernaryMap {
    pub expr: Expr,
    /// Evaluation at `t = 0` is undefined (the function blows up there); the
    /// solver samples the first quadrature cell away from zero instead.
    pub singular_at_zero: bool,
}

impl TernaryMap {
    pub fn new(expr: Expr, singular_at_zero: bool) -> TernaryMap {
        TernaryMap { expr, singular_at_zero }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.expr
            .eval(t, x, y)
            .map_err(|source| Error::RhsUndefined { t, x, y, source })
    }
}

/// Full problem instance.
#[derive(Debug, Clone)]
pub struct DeviatedBVP {
    /// Right endpoint `T` of the main interval `[0, T]`.
    pub horizon: f64,
    /// History radius `r`; the full domain is `[-r, T]`.
    pub radius: f64,
    /// Prescribed value `u(T)`.
    pub endpoint_value: f64,
    /// Deviation feeding the second argument of the nonlinearity; `None`
    /// means the identity.
    pub deviation_x: Option<ScalarMap>,
    /// Deviation feeding the third argument.
    pub deviation_y: ScalarMap,
    /// History function on `[-r, 0]`; `history(0)` is the left boundary value.
    pub history: ScalarMap,
    pub nonlinearity: TernaryMap,
}

impl DeviatedBVP {
    pub fn deviation_x_at(&self, t: f64) -> Result<f64> {
        match &self.deviation_x {
            Some(m) => m.eval(t),
            None => Ok(t),
        }
    }

    pub fn deviation_y_at(&self, t: f64) -> Result<f64> {
        self.deviation_y.eval(t)
    }

    pub fn history_left_value(&self) -> Result<f64> {
        self.history.eval(0.0)
    }
}

/// A candidate member of the solution class: a continuous profile on
/// `[-r, T]` whose restriction to `[0, T]` carries integrable second
/// derivatives, realized at mesh resolution by central second differences.
/// Construction checks agreement with the history on `[-r, 0]`.
#[derive(Debug, Clone)]
pub struct SolutionCandidate {
    pub profile: GridFunction,
    /// Central second differences at the interior nodes of `[0, T]`.
    pub second_differences: Vec<f64>,
}

impl SolutionCandidate {
    pub fn new(profile: GridFunction, history: &ScalarMap) -> Result<SolutionCandidate> {
        let mesh = profile.mesh().clone();
        for (i, &t) in mesh.nodes()[..=mesh.zero_index()].iter().enumerate() {
            let expected = history.eval(t)?;
            let got = profile.values()[i];
            if (got - expected).abs() > GLUE_TOL {
                return Err(Error::Gluing { left: expected, right: got, tol: GLUE_TOL });
            }
        }
        let second_differences = profile.second_difference();
        Ok(SolutionCandidate { profile, second_differences })
    }
}

/// A problem-data violation found by [`validate_problem`]. Violations are
/// data, not errors: callers decide whether to stop.
#[derive(Debug, Clone)]
pub struct Violation {
    pub at: f64,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at t={}: {}", self.at, self.message)
    }
}

/// Check sign constraints, deviation ranges at every `[0, T]` node, and
/// finiteness of the history at every history node.
pub fn validate_problem(p: &DeviatedBVP, mesh: &Mesh) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(p.horizon > 0.0) {
        out.push(Violation {
            at: p.horizon,
            message: format!("horizon T = {} must be positive", p.horizon),
        });
    }
    if !(p.radius >= 0.0) {
        out.push(Violation {
            at: -p.radius,
            message: format!("history radius r = {} must be nonnegative", p.radius),
        });
    }
    if (mesh.horizon() - p.horizon).abs() > 1e-12 || (mesh.radius() - p.radius).abs() > 1e-12 {
        out.push(Violation {
            at: 0.0,
            message: format!(
                "mesh covers [{}, {}] but the problem domain is [{}, {}]",
                -mesh.radius(),
                mesh.horizon(),
                -p.radius,
                p.horizon
            ),
        });
    }
    let lo = -p.radius - 1e-12;
    let hi = p.horizon + 1e-12;
    for &t in &mesh.nodes()[mesh.zero_index()..] {
        for (label, dev) in [("x", p.deviation_x_at(t)), ("y", p.deviation_y_at(t))] {
            match dev {
                Ok(v) if v < lo || v > hi => out.push(Violation {
                    at: t,
                    message: format!(
                        "{label}-deviation({t}) = {v} leaves [{}, {}]",
                        -p.radius, p.horizon
                    ),
                }),
                Ok(_) => {}
                Err(e) => out.push(Violation {
                    at: t,
                    message: format!("{label}-deviation not evaluable: {e}"),
                }),
            }
        }
    }
    for &t in &mesh.nodes()[..=mesh.zero_index()] {
        match p.history.eval(t) {
            Ok(v) if v.is_finite() => {}
            Ok(v) => out.push(Violation {
                at: t,
                message: format!("history({t}) = {v} is not finite"),
            }),
            Err(e) => out.push(Violation {
                at: t,
                message: format!("history not evaluable: {e}"),
            }),
        }
    }
    out
}

/// Extend a function given on `[0, T]` by the history on `[-r, 0]`, producing
/// a grid function on the full mesh. The input may already live on the full
/// mesh, in which case its history part is checked against `history` and the
/// function is returned unchanged (so the operation is idempotent).
pub fn history_extend(
    u_on_i: &GridFunction,
    history: &ScalarMap,
    mesh: &Arc<Mesh>,
) -> Result<GridFunction> {
    let z = mesh.zero_index();
    let input_covers_history = u_on_i.mesh().nodes()[0] == mesh.nodes()[0]
        && u_on_i.mesh().len() == mesh.len();

    let u0 = if input_covers_history {
        u_on_i.values()[z]
    } else {
        u_on_i.interp(0.0)?
    };
    let phi0 = history.eval(0.0)?;
    if (u0 - phi0).abs() > GLUE_TOL {
        return Err(Error::Gluing { left: phi0, right: u0, tol: GLUE_TOL });
    }

    let mut values = Vec::with_capacity(mesh.len());
    for (i, &t) in mesh.nodes().iter().enumerate() {
        if i < z {
            values.push(history.eval(t)?);
        } else if input_covers_history {
            values.push(u_on_i.values()[i]);
        } else {
            values.push(u_on_i.interp(t)?);
        }
    }
    values[z] = phi0;
    GridFunction::from_values(mesh.clone(), values)
}
