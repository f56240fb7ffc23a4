//! Norms of the one-sided Lipschitz coefficients and the smallness conditions
//! that gate both solvers.
//!
//! For coefficients `L1, L2 >= 0` on `[0, T]` the uniqueness conditions are
//!
//! ```text
//! C1: ||L1+L2||_inf < 1/T^2
//! C2: ||L1+L2||_2   < sqrt(3/(2 T^3))
//! C3: ||L1+L2||_1   < 1/(2T)
//! ```
//!
//! and the maximum-principle conditions relax them to
//!
//! ```text
//! C1hat: ||L1+L2||_inf < 2/T^2
//! C2hat: ||L1+L2||_2   < sqrt(2)/T
//! C3hat: ||L1+L2||_1   < 1/T
//! ```
//!
//! The combined rule asks for `C1 | C2 | C3` when `T >= 3/4` and for
//! `C1 | C2hat | C3` when `0 < T < 3/4`. On thresholds, `C1 => C1hat` and
//! `C3 => C3hat` for every `T`, while the C2 pair flips direction exactly at
//! `T = 3/4` where the two thresholds coincide.
//!
//! Two contraction factors are reported. `q = 2*int_0^T (T-s)(L1+L2) ds` is
//! the coarse bound obtained by estimating the boundary-matching term and the
//! double integral separately; it can exceed 1 even when C2 holds (constant
//! coefficients `c < 3/(2T)` make the C2 chain `int <= ||.||_2^2 T^3/3`
//! false, so only `q < sqrt(2)` follows from C2). `q_kernel` is the sharp
//! factor `sup_t int_0^T G(t,s)(L1+L2)(s) ds` for the triangular kernel
//! `G(t,s) = min(s,t)(T - max(s,t))/T`, and satisfies `q_kernel < 1` under
//! any of the six conditions:
//!
//! ```text
//! C1:    q_kernel <= ||.||_inf T^2/8            < 1/8
//! C2:    q_kernel <= ||.||_2  T^(3/2)/(4 sqrt3) < sqrt(3/2)/(4 sqrt3) = 1/(2 sqrt8)
//! C3:    q_kernel <= ||.||_1  T/4               < 1/8
//! ```
//!
//! (and the hat variants double these). Picard admissibility uses `q_kernel`.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::{integrate, Mesh, QuadratureRule};
use crate::model::ScalarMap;

/// Margin below which a condition is considered to sit on its threshold.
pub const STRICTNESS: f64 = 1e-12;

/// The coefficient pair of the one-sided Lipschitz hypothesis, with
/// per-component flags for an integrable singularity at `t = 0`.
#[derive(Debug, Clone)]
pub struct LipschitzPair {
    pub l1: ScalarMap,
    pub l2: ScalarMap,
    pub l1_singular: bool,
    pub l2_singular: bool,
}

impl LipschitzPair {
    pub fn singular(&self) -> bool {
        self.l1_singular || self.l2_singular
    }

    pub fn sum_at(&self, t: f64) -> Result<f64> {
        let a = self.l1.eval(t)?;
        let b = self.l2.eval(t)?;
        if a < 0.0 {
            return Err(Error::InvalidCoefficient { t, value: a });
        }
        if b < 0.0 {
            return Err(Error::InvalidCoefficient { t, value: b });
        }
        Ok(a + b)
    }
}

/// `L^inf`, `L^2`, `L^1` norms of `L1 + L2` over `[0, T]`; infinite entries
/// use `f64::INFINITY`.
#[derive(Debug, Clone, Copy)]
pub struct Norms {
    pub inf: f64,
    pub l2: f64,
    pub l1: f64,
}

/// One condition: strict inequality `lhs < threshold` with its margin.
#[derive(Debug, Clone, Copy)]
pub struct ConditionCheck {
    pub holds: bool,
    pub lhs: f64,
    pub threshold: f64,
    pub margin: f64,
    /// `lhs` sits on the threshold within [`STRICTNESS`]; reported as not
    /// satisfied since the conditions are strict.
    pub boundary: bool,
}

fn check(lhs: f64, threshold: f64) -> ConditionCheck {
    let margin = threshold - lhs;
    ConditionCheck {
        holds: margin > STRICTNESS,
        lhs,
        threshold,
        margin,
        boundary: margin.abs() <= STRICTNESS,
    }
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub horizon: f64,
    pub norms: Norms,
    /// C1, C2, C3 in order.
    pub uniqueness: [ConditionCheck; 3],
    /// C1hat, C2hat, C3hat in order.
    pub max_principle: [ConditionCheck; 3],
    pub main_rule_ok: bool,
    /// Coarse factor `2*int_0^T (T-s)(L1+L2) ds`.
    pub q: f64,
    /// Sharp kernel factor used for Picard admissibility.
    pub q_kernel: f64,
}

/// Evaluate `L^inf/L^2/L^1` norms of `L1 + L2` by singularity-aware
/// quadrature. Sample points for the sup and the nonnegativity check are the
/// `[0, T]` nodes and cell midpoints (skipping `t = 0` for singular pairs).
pub fn compute_norms(lp: &LipschitzPair, mesh: &Mesh) -> Result<Norms> {
    let horizon = mesh.horizon();
    let i_nodes = &mesh.nodes()[mesh.zero_index()..];

    let mut sup: f64 = 0.0;
    for w in i_nodes.windows(2) {
        sup = sup.max(lp.sum_at(0.5 * (w[0] + w[1]))?);
    }
    for &t in &i_nodes[1..] {
        sup = sup.max(lp.sum_at(t)?);
    }
    if lp.singular() {
        sup = f64::INFINITY;
    } else {
        sup = sup.max(lp.sum_at(0.0)?);
    }

    let rule = if lp.singular() {
        QuadratureRule::singular()
    } else {
        QuadratureRule::trapezoid()
    };
    let l1_est = integrate(mesh, 0.0, horizon, rule, |s| lp.sum_at(s))?;
    let l1 = if l1_est.looks_divergent() { f64::INFINITY } else { l1_est.value };
    let l2_est = integrate(mesh, 0.0, horizon, rule, |s| {
        let v = lp.sum_at(s)?;
        Ok(v * v)
    })?;
    let l2 = if l2_est.looks_divergent() {
        f64::INFINITY
    } else {
        l2_est.value.max(0.0).sqrt()
    };

    let norms = Norms { inf: sup, l2, l1 };
    if norms.inf.is_finite() && norms.l2.is_finite() && norms.l1.is_finite() {
        // Hoelder chain n1 <= sqrt(T) n2 <= T n_inf, up to quadrature slack.
        let slack = 1e-7 * (1.0 + norms.inf) * (1.0 + horizon);
        if norms.l1 > horizon.sqrt() * norms.l2 + slack
            || horizon.sqrt() * norms.l2 > horizon * norms.inf + slack
        {
            return Err(Error::Config(format!(
                "norm chain violated: n1={} n2={} ninf={} on T={horizon}",
                norms.l1, norms.l2, norms.inf
            )));
        }
    }
    Ok(norms)
}

pub fn uniqueness_thresholds(horizon: f64) -> [f64; 3] {
    [
        1.0 / (horizon * horizon),
        (3.0 / (2.0 * horizon.powi(3))).sqrt(),
        1.0 / (2.0 * horizon),
    ]
}

pub fn max_principle_thresholds(horizon: f64) -> [f64; 3] {
    [
        2.0 / (horizon * horizon),
        std::f64::consts::SQRT_2 / horizon,
        1.0 / horizon,
    ]
}

pub fn check_uniqueness(norms: &Norms, horizon: f64) -> [ConditionCheck; 3] {
    let thr = uniqueness_thresholds(horizon);
    [
        check(norms.inf, thr[0]),
        check(norms.l2, thr[1]),
        check(norms.l1, thr[2]),
    ]
}

pub fn check_max_principle(norms: &Norms, horizon: f64) -> [ConditionCheck; 3] {
    let thr = max_principle_thresholds(horizon);
    [
        check(norms.inf, thr[0]),
        check(norms.l2, thr[1]),
        check(norms.l1, thr[2]),
    ]
}

/// Combined admissibility rule: `C1 | C2 | C3` for `T >= 3/4`, and
/// `C1 | C2hat | C3` for `0 < T < 3/4`.
pub fn check_main_rule(
    uniqueness: &[ConditionCheck; 3],
    max_principle: &[ConditionCheck; 3],
    horizon: f64,
) -> bool {
    let second = if horizon >= 0.75 {
        uniqueness[1].holds
    } else {
        max_principle[1].holds
    };
    uniqueness[0].holds || second || uniqueness[2].holds
}

/// One threshold comparison between a condition and its relaxed counterpart.
#[derive(Debug, Clone)]
pub struct ThresholdImplication {
    pub label: &'static str,
    pub plain_threshold: f64,
    pub relaxed_threshold: f64,
    /// plain threshold <= relaxed threshold, so the plain condition implies
    /// the relaxed one.
    pub plain_implies_relaxed: bool,
    /// relaxed threshold <= plain threshold (the reverse direction).
    pub relaxed_implies_plain: bool,
    /// Thresholds coincide within 1e-12 (happens for the 2-norm pair exactly
    /// at `T = 3/4`).
    pub equal: bool,
}

/// Machine-checked threshold comparisons behind the implication lattice.
pub fn implication_lattice(horizon: f64) -> Vec<ThresholdImplication> {
    let plain = uniqueness_thresholds(horizon);
    let relaxed = max_principle_thresholds(horizon);
    let labels = ["C1 -> C1hat", "C2 <-> C2hat", "C3 -> C3hat"];
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let equal = (plain[i] - relaxed[i]).abs() <= 1e-12;
            ThresholdImplication {
                label,
                plain_threshold: plain[i],
                relaxed_threshold: relaxed[i],
                plain_implies_relaxed: plain[i] <= relaxed[i] + 1e-12,
                relaxed_implies_plain: relaxed[i] <= plain[i] + 1e-12,
                equal,
            }
        })
        .collect()
}

/// Cell-wise integrals of `L1+L2` and `s*(L1+L2)` over the `[0, T]` cells;
/// the shared building block for both contraction factors.
fn coefficient_prefix_sums(lp: &LipschitzPair, mesh: &Mesh) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let z = mesh.zero_index();
    let nodes = mesh.nodes();
    let n = nodes.len() - 1 - z;
    let mut c = vec![0.0; n + 1]; // c[i] = int_0^{t_i} (L1+L2)
    let mut d = vec![0.0; n + 1]; // d[i] = int_0^{t_i} s (L1+L2)
    for i in 0..n {
        let (l, r) = (nodes[z + i], nodes[z + i + 1]);
        let (dc, dd) = if lp.singular() {
            if i == 0 {
                let ec = integrate(mesh, l, r, QuadratureRule::singular(), |s| lp.sum_at(s))?;
                if ec.looks_divergent() {
                    return Ok(None);
                }
                let ed = integrate(mesh, l, r, QuadratureRule::singular(), |s| {
                    Ok(s * lp.sum_at(s)?)
                })?;
                (ec.value, ed.value)
            } else {
                // steep region next to the singularity: subdivided midpoints
                let m = if i <= 16 { 16 } else { 4 };
                let h = (r - l) / m as f64;
                let mut dc = 0.0;
                let mut dd = 0.0;
                for j in 0..m {
                    let s = l + (j as f64 + 0.5) * h;
                    let v = lp.sum_at(s)?;
                    dc += h * v;
                    dd += h * s * v;
                }
                (dc, dd)
            }
        } else {
            let fl = lp.sum_at(l)?;
            let fr = lp.sum_at(r)?;
            (
                0.5 * (r - l) * (fl + fr),
                0.5 * (r - l) * (l * fl + r * fr),
            )
        };
        c[i + 1] = c[i] + dc;
        d[i + 1] = d[i] + dd;
    }
    Ok(Some((c, d)))
}

/// The coarse and sharp contraction factors; both infinite when `L1 + L2` is
/// not integrable.
pub fn contraction_factors(lp: &LipschitzPair, mesh: &Mesh) -> Result<(f64, f64)> {
    let horizon = mesh.horizon();
    let Some((c, d)) = coefficient_prefix_sums(lp, mesh)? else {
        return Ok((f64::INFINITY, f64::INFINITY));
    };
    let n = c.len() - 1;
    let q = 2.0 * (horizon * c[n] - d[n]);
    let z = mesh.zero_index();
    let mut q_kernel: f64 = 0.0;
    for i in 0..=n {
        let t = mesh.nodes()[z + i];
        let left = (horizon - t) / horizon * d[i];
        let right = t / horizon * (horizon * (c[n] - c[i]) - (d[n] - d[i]));
        q_kernel = q_kernel.max(left + right);
    }
    Ok((q, q_kernel))
}

/// Full evaluation: norms, all six conditions, the combined rule and both
/// contraction factors.
pub fn evaluate(lp: &LipschitzPair, mesh: &Mesh) -> Result<ConditionReport> {
    let horizon = mesh.horizon();
    let norms = compute_norms(lp, mesh)?;
    let uniqueness = check_uniqueness(&norms, horizon);
    let max_principle = check_max_principle(&norms, horizon);
    let main_rule_ok = check_main_rule(&uniqueness, &max_principle, horizon);
    let (q, q_kernel) = contraction_factors(lp, mesh)?;
    if uniqueness.iter().any(|c| c.holds) || main_rule_ok {
        assert!(
            q_kernel < 1.0,
            "kernel contraction factor {q_kernel} >= 1 although a smallness condition holds"
        );
    }
    Ok(ConditionReport {
        horizon,
        norms,
        uniqueness,
        max_principle,
        main_rule_ok,
        q,
        q_kernel,
    })
}

fn json_number(v: f64) -> Value {
    match serde_json::Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None => Value::String(if v > 0.0 { "inf" } else { "-inf" }.to_string()),
    }
}

impl ConditionReport {
    /// Flat JSON object with dotted keys: `C1.holds`, `C1.lhs`,
    /// `C1.threshold`, `C1.margin`, the `C1hat..C3hat` variants, `q`,
    /// `q_kernel` and `main_rule_ok`. Non-finite numbers serialize as the
    /// strings `"inf"` / `"-inf"`.
    pub fn to_flat_json(&self) -> Value {
        let mut map = Map::new();
        let names = ["C1", "C2", "C3"];
        for (i, name) in names.iter().enumerate() {
            for (group, checks) in [("", &self.uniqueness), ("hat", &self.max_principle)] {
                let c = &checks[i];
                map.insert(format!("{name}{group}.holds"), Value::Bool(c.holds));
                map.insert(format!("{name}{group}.lhs"), json_number(c.lhs));
                map.insert(format!("{name}{group}.threshold"), json_number(c.threshold));
                map.insert(format!("{name}{group}.margin"), json_number(c.margin));
                map.insert(format!("{name}{group}.boundary"), Value::Bool(c.boundary));
            }
        }
        map.insert("norm_inf".into(), json_number(self.norms.inf));
        map.insert("norm_2".into(), json_number(self.norms.l2));
        map.insert("norm_1".into(), json_number(self.norms.l1));
        map.insert("q".into(), json_number(self.q));
        map.insert("q_kernel".into(), json_number(self.q_kernel));
        map.insert("main_rule_ok".into(), Value::Bool(self.main_rule_ok));
        map.insert("T".into(), json_number(self.horizon));
        Value::Object(map)
    }
}
