//! Lower/upper solution verification and the monotone iteration that brackets
//! the extremal solutions.
//!
//! Given a verified lower solution `alpha` and upper solution `beta` with
//! `alpha <= beta`, each outer step maps a profile `gamma` to the unique
//! solution of the linear auxiliary problem
//!
//! ```text
//! -u''(t) + L1(t) (u(dx(t)) - gamma(dx(t))) + L2(t) (u(dy(t)) - gamma(dy(t)))
//!     = f(t, gamma(dx(t)), gamma(dy(t)))
//! ```
//!
//! with the original boundary and history data, i.e. a Picard solve of
//! `-u'' = ftilde(t, u(dx), u(dy))` where
//! `ftilde(t, x, y) = -L1 x - L2 y + f(t, gamma(dx), gamma(dy)) + L1 gamma(dx) + L2 gamma(dy)`.
//! All the discontinuity of `f` is frozen into the forcing; the state enters
//! linearly, so the inner iteration contracts whenever the smallness rule
//! holds. The one-sided Lipschitz condition makes this map nondecreasing and
//! keeps it inside `[alpha, beta]`, so iterating from `alpha` climbs and from
//! `beta` descends; the limits approximate the least and greatest solutions.
//! The ordering of every step is asserted nodewise — a violation beyond
//! `eps_mono` signals a hypothesis failure or an insufficient mesh, and
//! callers retry once on a doubled mesh before giving up.

use std::sync::Arc;

use crate::conditions::{self, LipschitzPair};
use crate::contraction::{picard_solve, residual_l1, PicardSettings, Rhs, SampledProblem};
use crate::error::{Error, Result};
use crate::grid::{integrate, GridFunction, Mesh, QuadratureRule};
use crate::model::{DeviatedBVP, ScalarMap, TernaryMap};

/// Nodewise slack for the `lower <= upper` requirement on input pairs.
pub const EPS_ORDER: f64 = 1e-9;

/// Default tolerance for lower/upper verification defects.
pub const EPS_VERIFY: f64 = 1e-7;

/// Scale of the `h^2` term added to the differential-defect tolerance
/// (second differences of a merely W^{2,1} profile carry O(h^2) noise).
const DIFF_TOL_SCALE: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct LowerUpperPair {
    pub lower: GridFunction,
    pub upper: GridFunction,
}

impl LowerUpperPair {
    pub fn new(lower: GridFunction, upper: GridFunction) -> Result<LowerUpperPair> {
        for (i, (&a, &b)) in lower.values().iter().zip(upper.values()).enumerate() {
            if a > b + EPS_ORDER {
                return Err(Error::Config(format!(
                    "lower solution exceeds upper solution at t={} by {}",
                    lower.mesh().nodes()[i],
                    a - b
                )));
            }
        }
        Ok(LowerUpperPair { lower, upper })
    }
}

/// Outcome of checking one candidate against the lower/upper definition.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    /// Positive part of the differential inequality defect at each interior
    /// node of `[0, T]`.
    pub differential_defects: Vec<f64>,
    pub max_differential_defect: f64,
    /// History ordering, history variation, left endpoint, right endpoint.
    pub boundary_defects: [f64; 4],
    pub differential_tol: f64,
    pub boundary_tol: f64,
    pub is_valid: bool,
}

fn finish_report(
    differential_defects: Vec<f64>,
    boundary_defects: [f64; 4],
    h: f64,
    tol: f64,
) -> VerificationReport {
    let max_differential_defect = differential_defects.iter().copied().fold(0.0, f64::max);
    let differential_tol = tol.max(DIFF_TOL_SCALE * h * h);
    let is_valid = max_differential_defect <= differential_tol
        && boundary_defects.iter().all(|&d| d <= tol);
    VerificationReport {
        differential_defects,
        max_differential_defect,
        boundary_defects,
        differential_tol,
        boundary_tol: tol,
        is_valid,
    }
}

/// Check the lower-solution inequalities at mesh resolution:
/// `-alpha'' <= f(t, alpha(dx), alpha(dy))` on the interior,
/// `alpha <= phi` and `phi - alpha <= phi(0) - alpha(0)` on the history,
/// `alpha(T) <= B`.
pub fn verify_lower(
    sp: &SampledProblem,
    rhs: &TernaryMap,
    candidate: &GridFunction,
    tol: f64,
) -> Result<VerificationReport> {
    let mesh = sp.mesh();
    let z = mesh.zero_index();
    let d2 = candidate.second_difference();
    let mut defects = Vec::with_capacity(d2.len());
    for (i, d) in d2.iter().enumerate() {
        let k = i + 1;
        let t = mesh.nodes()[z + k];
        let (x, y) = sp.arguments_at_node(candidate, k);
        defects.push(((-d) - rhs.eval(t, x, y)?).max(0.0));
    }
    let boundary = lower_boundary_defects(sp, candidate);
    Ok(finish_report(defects, boundary, mesh.h(), tol))
}

/// Mirror image of [`verify_lower`] with every inequality reversed.
pub fn verify_upper(
    sp: &SampledProblem,
    rhs: &TernaryMap,
    candidate: &GridFunction,
    tol: f64,
) -> Result<VerificationReport> {
    let mesh = sp.mesh();
    let z = mesh.zero_index();
    let d2 = candidate.second_difference();
    let mut defects = Vec::with_capacity(d2.len());
    for (i, d) in d2.iter().enumerate() {
        let k = i + 1;
        let t = mesh.nodes()[z + k];
        let (x, y) = sp.arguments_at_node(candidate, k);
        defects.push((rhs.eval(t, x, y)? - (-d)).max(0.0));
    }
    let boundary = upper_boundary_defects(sp, candidate);
    Ok(finish_report(defects, boundary, mesh.h(), tol))
}

fn lower_boundary_defects(sp: &SampledProblem, a: &GridFunction) -> [f64; 4] {
    let mesh = sp.mesh();
    let z = mesh.zero_index();
    let phi = sp.history_values();
    let a0 = a.values()[z];
    let mut ordering: f64 = 0.0;
    let mut variation: f64 = 0.0;
    for i in 0..=z {
        let ai = a.values()[i];
        ordering = ordering.max(ai - phi[i]);
        variation = variation.max((phi[i] - ai) - (phi[z] - a0));
    }
    let left = (a0 - sp.phi0).max(0.0);
    let right = (a.values()[mesh.len() - 1] - sp.endpoint_value).max(0.0);
    [ordering.max(0.0), variation.max(0.0), left, right]
}

fn upper_boundary_defects(sp: &SampledProblem, b: &GridFunction) -> [f64; 4] {
    let mesh = sp.mesh();
    let z = mesh.zero_index();
    let phi = sp.history_values();
    let b0 = b.values()[z];
    let mut ordering: f64 = 0.0;
    let mut variation: f64 = 0.0;
    for i in 0..=z {
        let bi = b.values()[i];
        ordering = ordering.max(phi[i] - bi);
        variation = variation.max((bi - phi[i]) - (b0 - phi[z]));
    }
    let left = (sp.phi0 - b0).max(0.0);
    let right = (sp.endpoint_value - b.values()[mesh.len() - 1]).max(0.0);
    [ordering.max(0.0), variation.max(0.0), left, right]
}

/// Linearized right-hand side with frozen forcing, state entering through
/// pre-sampled coefficients.
struct LinearizedRhs {
    l1_at: Vec<f64>,
    l2_at: Vec<f64>,
    forcing: Vec<f64>,
}

impl Rhs for LinearizedRhs {
    fn eval(&self, k: usize, _t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.forcing[k] - self.l1_at[k] * x - self.l2_at[k] * y)
    }
}

/// The monotone operator: `apply` maps a profile in `[lower, upper]` to the
/// solution of the linear auxiliary problem frozen at that profile.
pub struct GOperator<'a> {
    sp: &'a SampledProblem,
    rhs: &'a TernaryMap,
    l1_at: Vec<f64>,
    l2_at: Vec<f64>,
    picard: PicardSettings,
    lower: &'a GridFunction,
    upper: &'a GridFunction,
    eps_mono: f64,
}

impl<'a> GOperator<'a> {
    pub fn new(
        sp: &'a SampledProblem,
        rhs: &'a TernaryMap,
        coefficients: &LipschitzPair,
        picard: PicardSettings,
        pair: &'a LowerUpperPair,
        eps_mono: f64,
    ) -> Result<GOperator<'a>> {
        let mut l1_at = Vec::with_capacity(sp.sample_positions().len());
        let mut l2_at = Vec::with_capacity(sp.sample_positions().len());
        for &s in sp.sample_positions() {
            let a = coefficients.l1.eval(s)?;
            let b = coefficients.l2.eval(s)?;
            if a < 0.0 {
                return Err(Error::InvalidCoefficient { t: s, value: a });
            }
            if b < 0.0 {
                return Err(Error::InvalidCoefficient { t: s, value: b });
            }
            l1_at.push(a);
            l2_at.push(b);
        }
        Ok(GOperator {
            sp,
            rhs,
            l1_at,
            l2_at,
            picard,
            lower: &pair.lower,
            upper: &pair.upper,
            eps_mono,
        })
    }

    pub fn apply(&self, gamma: &GridFunction) -> Result<GridFunction> {
        for (i, ((g, lo), hi)) in gamma
            .values()
            .iter()
            .zip(self.lower.values())
            .zip(self.upper.values())
            .enumerate()
        {
            let below = lo - g;
            let above = g - hi;
            if below > self.eps_mono || above > self.eps_mono {
                return Err(Error::OutsideBracket {
                    t: gamma.mesh().nodes()[i],
                    defect: below.max(above),
                });
            }
        }
        let rhs = self.linearize(gamma)?;
        let start = self.glued_start(gamma);
        let result = picard_solve(self.sp, &rhs, &self.picard, Some(&start))?;
        Ok(result.solution)
    }

    fn linearize(&self, gamma: &GridFunction) -> Result<LinearizedRhs> {
        let mut forcing = self.sp.sample_rhs(self.rhs, gamma)?;
        let v = gamma.values();
        for (k, f) in forcing.iter_mut().enumerate() {
            let (x, y) = {
                let (ax, ay) = self.sp.anchors(k);
                (ax.apply(v), ay.apply(v))
            };
            *f += self.l1_at[k] * x + self.l2_at[k] * y;
        }
        Ok(LinearizedRhs { l1_at: self.l1_at.clone(), l2_at: self.l2_at.clone(), forcing })
    }

    /// Start the inner iteration from the profile itself, with the history
    /// part replaced by the prescribed history values.
    fn glued_start(&self, gamma: &GridFunction) -> GridFunction {
        let z = self.sp.mesh().zero_index();
        let mut g = gamma.clone();
        g.values_mut()[..=z].copy_from_slice(self.sp.history_values());
        g
    }
}

/// Convenience wrapper: one application of the monotone operator.
pub fn apply_g(
    sp: &SampledProblem,
    rhs: &TernaryMap,
    coefficients: &LipschitzPair,
    pair: &LowerUpperPair,
    picard: &PicardSettings,
    eps_mono: f64,
    gamma: &GridFunction,
) -> Result<GridFunction> {
    GOperator::new(sp, rhs, coefficients, *picard, pair, eps_mono)?.apply(gamma)
}

#[derive(Debug, Clone, Copy)]
pub struct OuterSettings {
    /// Sup-norm stopping tolerance for the outer updates.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Slack for every nodewise ordering assertion.
    pub eps_mono: f64,
}

impl Default for OuterSettings {
    fn default() -> Self {
        OuterSettings { outer_tol: 1e-8, max_outer: 500, eps_mono: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OuterLogRow {
    pub step: usize,
    pub side: &'static str,
    pub delta_sup: f64,
    pub ordering_defect: f64,
    pub residual_l1: f64,
}

/// The two monotone iterate sequences with their diagnostics.
#[derive(Debug, Clone)]
pub struct ExtremalBracket {
    pub lower_iterates: Vec<GridFunction>,
    pub upper_iterates: Vec<GridFunction>,
    pub u_star_low: GridFunction,
    pub u_star_high: GridFunction,
    /// Worst observed ordering defect across all assertions (0 when the
    /// ordering held exactly).
    pub monotonicity_defect: f64,
    /// Minimum of `u_star_high - u_star_low` over nodes; small negative
    /// values up to `eps_mono` come from discretization.
    pub gap_min: f64,
    pub residual_low: f64,
    pub residual_high: f64,
    pub outer_steps_low: usize,
    pub outer_steps_high: usize,
    /// A sequence was accepted by the stall rule (updates stopped shrinking
    /// monotonically below `10 * outer_tol`), not by the plain tolerance.
    pub stalled: bool,
    /// Largest interpolant slope over all iterates.
    pub max_slope: f64,
    pub log: Vec<OuterLogRow>,
}

struct SequenceState {
    iterates: Vec<GridFunction>,
    deltas: Vec<f64>,
    done: bool,
    stalled: bool,
}

impl SequenceState {
    fn new(start: GridFunction) -> SequenceState {
        SequenceState { iterates: vec![start], deltas: Vec::new(), done: false, stalled: false }
    }

    fn last(&self) -> &GridFunction {
        self.iterates.last().unwrap()
    }

    /// Accept when the update is small, or when updates sit below
    /// `10 * tol` for five consecutive steps without decreasing monotonically
    /// (limit cycles below quadrature resolution for discontinuous forcing).
    fn update_done(&mut self, tol: f64) {
        let d = *self.deltas.last().unwrap();
        if d <= tol {
            self.done = true;
            return;
        }
        if self.deltas.len() >= 5 {
            let tail = &self.deltas[self.deltas.len() - 5..];
            let all_small = tail.iter().all(|&x| x < 10.0 * tol);
            let nonmonotone = tail.windows(2).any(|w| w[1] > w[0]);
            if all_small && nonmonotone {
                self.done = true;
                self.stalled = true;
            }
        }
    }
}

fn max_drop(above: &GridFunction, below: &GridFunction) -> (f64, f64) {
    // largest amount by which `above` dips under `below`, with its location
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for (i, (a, b)) in above.values().iter().zip(below.values()).enumerate() {
        let d = b - a;
        if d > worst {
            worst = d;
            at = above.mesh().nodes()[i];
        }
    }
    (worst.max(0.0), at)
}

/// Run the two monotone sequences until both converge, asserting the ordering
/// `lower_n <= lower_{n+1} <= upper_{n+1} <= upper_n` and the bracket
/// `[alpha, beta]` nodewise at every step.
pub fn iterate_extremal(
    sp: &SampledProblem,
    rhs: &TernaryMap,
    coefficients: &LipschitzPair,
    pair: &LowerUpperPair,
    picard: &PicardSettings,
    outer: &OuterSettings,
) -> Result<ExtremalBracket> {
    let g = GOperator::new(sp, rhs, coefficients, *picard, pair, outer.eps_mono)?;
    let mut low = SequenceState::new(pair.lower.clone());
    let mut high = SequenceState::new(pair.upper.clone());
    let mut defect: f64 = 0.0;
    let mut log = Vec::new();

    let guard = |name: &'static str, d: f64, at: f64, step: usize| -> Result<f64> {
        if d > outer.eps_mono {
            return Err(Error::OrderingViolation {
                t: at,
                step,
                side: name,
                defect: d,
                tol: outer.eps_mono,
            });
        }
        Ok(d)
    };

    for step in 1..=outer.max_outer {
        if !low.done {
            let next = g.apply(low.last())?;
            let delta = next.sup_distance(low.last());
            let (d_mono, at) = max_drop(&next, low.last());
            defect = defect.max(guard("lower monotone", d_mono, at, step)?);
            let (d_cap, at) = max_drop(&pair.upper, &next);
            defect = defect.max(guard("lower under beta", d_cap, at, step)?);
            log.push(OuterLogRow {
                step,
                side: "lower",
                delta_sup: delta,
                ordering_defect: d_mono.max(d_cap),
                residual_l1: residual_l1(sp, rhs, &next)?,
            });
            low.iterates.push(next);
            low.deltas.push(delta);
            low.update_done(outer.outer_tol);
        }
        if !high.done {
            let next = g.apply(high.last())?;
            let delta = next.sup_distance(high.last());
            let (d_mono, at) = max_drop(high.last(), &next);
            defect = defect.max(guard("upper monotone", d_mono, at, step)?);
            let (d_floor, at) = max_drop(&next, &pair.lower);
            defect = defect.max(guard("upper over alpha", d_floor, at, step)?);
            log.push(OuterLogRow {
                step,
                side: "upper",
                delta_sup: delta,
                ordering_defect: d_mono.max(d_floor),
                residual_l1: residual_l1(sp, rhs, &next)?,
            });
            high.iterates.push(next);
            high.deltas.push(delta);
            high.update_done(outer.outer_tol);
        }
        let (d_cross, at) = max_drop(high.last(), low.last());
        defect = defect.max(guard("cross", d_cross, at, step)?);
        if low.done && high.done {
            break;
        }
    }
    if !(low.done && high.done) {
        let last = low
            .deltas
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(high.deltas.last().copied().unwrap_or(0.0));
        return Err(Error::OuterNonConvergence { steps: outer.max_outer, last_delta: last });
    }

    let u_star_low = low.last().clone();
    let u_star_high = high.last().clone();
    let gap_min = u_star_high
        .values()
        .iter()
        .zip(u_star_low.values())
        .map(|(hi, lo)| hi - lo)
        .fold(f64::INFINITY, f64::min);
    // slope diagnostic over produced images only; the start profiles are
    // inputs and not covered by the compactness estimate
    let max_slope = low.iterates[1..]
        .iter()
        .chain(high.iterates[1..].iter())
        .map(GridFunction::max_slope)
        .fold(0.0, f64::max);
    Ok(ExtremalBracket {
        residual_low: residual_l1(sp, rhs, &u_star_low)?,
        residual_high: residual_l1(sp, rhs, &u_star_high)?,
        outer_steps_low: low.deltas.len(),
        outer_steps_high: high.deltas.len(),
        stalled: low.stalled || high.stalled,
        monotonicity_defect: defect,
        gap_min,
        max_slope,
        lower_iterates: low.iterates,
        upper_iterates: high.iterates,
        u_star_low,
        u_star_high,
        log,
    })
}

/// Everything needed to run the full pipeline on a fresh mesh.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub bvp: DeviatedBVP,
    pub coefficients: LipschitzPair,
    pub lower: ScalarMap,
    pub upper: ScalarMap,
    /// Optional integrable envelope `psi` with `|f| <= psi` on the bracket,
    /// used for the slope bound diagnostic.
    pub envelope: Option<ScalarMap>,
    pub envelope_singular: bool,
}

impl ProblemSetup {
    pub fn shift_first_sample(&self) -> bool {
        self.bvp.nonlinearity.singular_at_zero || self.coefficients.singular()
    }

    pub fn sample_pair(&self, mesh: &Arc<Mesh>) -> Result<LowerUpperPair> {
        let lower = GridFunction::sample(mesh, |t| self.lower.eval(t))?;
        let upper = GridFunction::sample(mesh, |t| self.upper.eval(t))?;
        LowerUpperPair::new(lower, upper)
    }

    /// A-priori bound on iterate slopes:
    /// `|B - phi(0)|/T + ||psi||_1 + ||L1+L2||_1 ||beta-alpha||_inf + 0.1`.
    pub fn slope_bound(&self, mesh: &Mesh, pair: &LowerUpperPair) -> Result<Option<f64>> {
        let Some(envelope) = &self.envelope else {
            return Ok(None);
        };
        let rule = if self.envelope_singular {
            QuadratureRule::singular()
        } else {
            QuadratureRule::trapezoid()
        };
        let psi_l1 = integrate(mesh, 0.0, mesh.horizon(), rule, |s| envelope.eval(s))?.value;
        let norms = conditions::compute_norms(&self.coefficients, mesh)?;
        let spread = pair
            .upper
            .values()
            .iter()
            .zip(pair.lower.values())
            .map(|(b, a)| (b - a).abs())
            .fold(0.0, f64::max);
        let phi0 = self.bvp.history_left_value()?;
        let bound = (self.bvp.endpoint_value - phi0).abs() / self.bvp.horizon
            + psi_l1
            + norms.l1 * spread
            + 0.1;
        Ok(Some(bound))
    }
}

/// Bracket outcome together with the mesh it was finally computed on.
#[derive(Debug)]
pub struct BracketOutcome {
    pub bracket: ExtremalBracket,
    pub conditions: conditions::ConditionReport,
    pub lower_report: VerificationReport,
    pub upper_report: VerificationReport,
    pub mesh: Arc<Mesh>,
    pub pair: LowerUpperPair,
    /// The mesh was doubled once after an ordering violation.
    pub refined: bool,
    pub slope_bound: Option<f64>,
}

/// Full pipeline on `n` cells: verify the pair, check the combined rule, run
/// the bracketing iteration. A first ordering violation triggers one retry on
/// a doubled mesh (discretization can produce spurious tiny violations; a
/// genuine hypothesis failure survives refinement).
pub fn bracket_extremal(
    setup: &ProblemSetup,
    n: usize,
    tol_sup: f64,
    outer: &OuterSettings,
    force: bool,
) -> Result<BracketOutcome> {
    match bracket_once(setup, n, tol_sup, outer, force, false) {
        Err(Error::OrderingViolation { .. }) => bracket_once(setup, 2 * n, tol_sup, outer, force, true),
        other => other,
    }
}

fn bracket_once(
    setup: &ProblemSetup,
    n: usize,
    tol_sup: f64,
    outer: &OuterSettings,
    force: bool,
    refined: bool,
) -> Result<BracketOutcome> {
    let mesh = Mesh::new(setup.bvp.horizon, setup.bvp.radius, n)?;
    let sp = SampledProblem::build(&setup.bvp, &mesh, setup.shift_first_sample())?;
    let report = conditions::evaluate(&setup.coefficients, &mesh)?;
    if !report.main_rule_ok && !force {
        return Err(Error::Config(
            "combined smallness rule fails; rerun with --force to attempt anyway".into(),
        ));
    }
    let pair = setup.sample_pair(&mesh)?;
    let lower_report = verify_lower(&sp, &setup.bvp.nonlinearity, &pair.lower, EPS_VERIFY)?;
    let upper_report = verify_upper(&sp, &setup.bvp.nonlinearity, &pair.upper, EPS_VERIFY)?;
    if !(lower_report.is_valid && upper_report.is_valid) && !force {
        return Err(Error::Config(format!(
            "lower/upper verification failed (max defects {} / {}); rerun with --force to attempt anyway",
            lower_report.max_differential_defect.max(
                lower_report.boundary_defects.iter().copied().fold(0.0, f64::max)
            ),
            upper_report.max_differential_defect.max(
                upper_report.boundary_defects.iter().copied().fold(0.0, f64::max)
            ),
        )));
    }
    let picard = PicardSettings::new(tol_sup, 10_000, report.q_kernel);
    let bracket = iterate_extremal(
        &sp,
        &setup.bvp.nonlinearity,
        &setup.coefficients,
        &pair,
        &picard,
        outer,
    )?;
    let slope_bound = setup.slope_bound(&mesh, &pair)?;
    Ok(BracketOutcome {
        bracket,
        conditions: report,
        lower_report,
        upper_report,
        mesh,
        pair,
        refined,
        slope_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::apply_integral_operator;
    use crate::expr::parse;

    fn scalar(src: &str) -> ScalarMap {
        ScalarMap::from_expr(parse(src).unwrap()).unwrap()
    }

    /// Delay problem with floor nonlinearity on [0, 2], history cos(pi t/2).
    fn floor_setup() -> ProblemSetup {
        ProblemSetup {
            bvp: DeviatedBVP {
                horizon: 2.0,
                radius: 1.0,
                endpoint_value: std::f64::consts::FRAC_PI_4,
                deviation_x: None,
                deviation_y: scalar("t - 1"),
                history: scalar("cos(pi*t/2)"),
                nonlinearity: TernaryMap::new(
                    parse("floor(t*x) - (1/9)*y*sin(y*pi/(2*floor(abs(y))+2))").unwrap(),
                    false,
                ),
            },
            coefficients: LipschitzPair {
                l1: scalar("0"),
                l2: scalar("(1 + pi/2)/9"),
                l1_singular: false,
                l2_singular: false,
            },
            lower: scalar("0"),
            upper: scalar("piecewise(t <= 0, cos(pi*t/2), 1 - t*(t-2))"),
            envelope: Some(scalar("4")),
            envelope_singular: false,
        }
    }

    /// Singular advance/delay problem on [0, 1] with the sawtooth term.
    fn singular_setup(k: f64) -> ProblemSetup {
        ProblemSetup {
            bvp: DeviatedBVP {
                horizon: 1.0,
                radius: 0.0,
                endpoint_value: 0.0,
                deviation_x: Some(scalar("sqrt(1 - t)")),
                deviation_y: scalar("sqrt(t)"),
                history: scalar("0"),
                nonlinearity: TernaryMap::new(
                    parse(&format!("sin(t) + paperphi({k}, x) + 1/(5*sqrt(t))*y")).unwrap(),
                    true,
                ),
            },
            coefficients: LipschitzPair {
                l1: scalar(&format!("{k}")),
                l2: scalar("1/(5*sqrt(t))"),
                l1_singular: false,
                l2_singular: true,
            },
            lower: scalar("t*t - t"),
            upper: scalar("t - t*t"),
            envelope: Some(scalar(&format!("sin(t) + {k}/2 + 1/(20*sqrt(t))"))),
            envelope_singular: true,
        }
    }

    fn build(setup: &ProblemSetup, n: usize) -> (SampledProblem, LowerUpperPair) {
        let mesh = Mesh::new(setup.bvp.horizon, setup.bvp.radius, n).unwrap();
        let sp = SampledProblem::build(&setup.bvp, &mesh, setup.shift_first_sample()).unwrap();
        let pair = setup.sample_pair(&mesh).unwrap();
        (sp, pair)
    }

    #[test]
    fn floor_problem_pair_verifies() {
        let setup = floor_setup();
        let (sp, pair) = build(&setup, 200);
        let low = verify_lower(&sp, &setup.bvp.nonlinearity, &pair.lower, EPS_VERIFY).unwrap();
        assert!(low.is_valid, "{low:?}");
        assert!(low.max_differential_defect <= 1e-12);
        let up = verify_upper(&sp, &setup.bvp.nonlinearity, &pair.upper, EPS_VERIFY).unwrap();
        assert!(up.is_valid, "{up:?}");
    }

    #[test]
    fn singular_problem_pair_verifies() {
        let setup = singular_setup(0.05);
        let (sp, pair) = build(&setup, 200);
        let low = verify_lower(&sp, &setup.bvp.nonlinearity, &pair.lower, EPS_VERIFY).unwrap();
        assert!(low.is_valid, "{low:?}");
        let up = verify_upper(&sp, &setup.bvp.nonlinearity, &pair.upper, EPS_VERIFY).unwrap();
        assert!(up.is_valid, "{up:?}");
    }

    #[test]
    fn shifted_lower_candidate_is_rejected() {
        let setup = floor_setup();
        let (sp, pair) = build(&setup, 100);
        let mut bad = pair.upper.clone();
        for v in bad.values_mut() {
            *v += 1.0;
        }
        let rep = verify_lower(&sp, &setup.bvp.nonlinearity, &bad, EPS_VERIFY).unwrap();
        assert!(!rep.is_valid);
        assert!(rep.max_differential_defect > 0.1);
    }

    #[test]
    fn zero_upper_candidate_is_rejected_at_endpoint() {
        let setup = floor_setup();
        let (sp, _) = build(&setup, 100);
        let zero = GridFunction::constant(sp.mesh(), 0.0);
        let rep = verify_upper(&sp, &setup.bvp.nonlinearity, &zero, EPS_VERIFY).unwrap();
        assert!(!rep.is_valid);
        // beta(T) = 0 < B: right-endpoint defect of pi/4; history also fails
        assert!((rep.boundary_defects[3] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(rep.boundary_defects[0] > 0.9);
    }

    #[test]
    fn zero_coefficients_reduce_apply_to_one_sweep() {
        // with L1 = L2 = 0 the auxiliary rhs is the frozen forcing, so the
        // operator image equals one integral-operator sweep
        let mut setup = floor_setup();
        setup.coefficients.l2 = scalar("0");
        let (sp, pair) = build(&setup, 100);
        let picard = PicardSettings::new(1e-12, 50, 0.0);
        let gamma = pair.lower.clone();
        let direct = {
            let frozen = sp.sample_rhs(&setup.bvp.nonlinearity, &gamma).unwrap();
            struct Frozen(Vec<f64>);
            impl Rhs for Frozen {
                fn eval(&self, k: usize, _t: f64, _x: f64, _y: f64) -> Result<f64> {
                    Ok(self.0[k])
                }
            }
            apply_integral_operator(&sp, &Frozen(frozen), &gamma).unwrap()
        };
        let via_g = apply_g(
            &sp,
            &setup.bvp.nonlinearity,
            &setup.coefficients,
            &pair,
            &picard,
            1e-7,
            &gamma,
        )
        .unwrap();
        assert!(via_g.sup_distance(&direct) < 1e-12);
    }

    #[test]
    fn image_of_lower_start_climbs() {
        let setup = floor_setup();
        let (sp, pair) = build(&setup, 200);
        let picard = PicardSettings::new(1e-10, 200, 0.15);
        let image = apply_g(
            &sp,
            &setup.bvp.nonlinearity,
            &setup.coefficients,
            &pair,
            &picard,
            1e-7,
            &pair.lower,
        )
        .unwrap();
        for (a, b) in pair.lower.values().iter().zip(image.values()) {
            assert!(b + 1e-9 >= *a);
        }
    }

    #[test]
    fn profile_outside_bracket_is_rejected() {
        let setup = floor_setup();
        let (sp, pair) = build(&setup, 50);
        let picard = PicardSettings::new(1e-10, 50, 0.15);
        let mut outside = pair.upper.clone();
        for v in outside.values_mut() {
            *v += 0.5;
        }
        assert!(matches!(
            apply_g(
                &sp,
                &setup.bvp.nonlinearity,
                &setup.coefficients,
                &pair,
                &picard,
                1e-7,
                &outside,
            ),
            Err(Error::OutsideBracket { .. })
        ));
    }

    #[test]
    fn state_free_problem_brackets_in_one_step() {
        // -u'' = 2 with upper solution equal to the exact solution t(1-t):
        // both sequences land on it after a single outer step
        let setup = ProblemSetup {
            bvp: DeviatedBVP {
                horizon: 1.0,
                radius: 0.0,
                endpoint_value: 0.0,
                deviation_x: None,
                deviation_y: scalar("t"),
                history: scalar("0"),
                nonlinearity: TernaryMap::new(parse("2").unwrap(), false),
            },
            coefficients: LipschitzPair {
                l1: scalar("0"),
                l2: scalar("0"),
                l1_singular: false,
                l2_singular: false,
            },
            lower: scalar("0"),
            upper: scalar("t*(1 - t)"),
            envelope: Some(scalar("2")),
            envelope_singular: false,
        };
        let outcome = bracket_extremal(&setup, 100, 1e-11, &OuterSettings::default(), false).unwrap();
        let b = &outcome.bracket;
        assert!(b.outer_steps_low <= 2 && b.outer_steps_high <= 2);
        for (&t, &v) in outcome.mesh.nodes().iter().zip(b.u_star_low.values()) {
            assert!((v - t * (1.0 - t)).abs() < 1e-9);
        }
        assert!(b.u_star_high.sup_distance(&b.u_star_low) < 1e-9);
        assert!(b.monotonicity_defect <= 1e-9);
        assert!(!outcome.refined);
    }

    #[test]
    fn stall_rule_accepts_limit_cycles_below_resolution() {
        let mesh = Mesh::new(1.0, 0.0, 8).unwrap();
        let tol = 1e-8;
        // nonmonotone updates parked below 10 * tol: accepted and flagged
        let mut s = SequenceState::new(GridFunction::constant(&mesh, 0.0));
        for d in [1e-3, 4e-8, 3e-8, 5e-8, 2e-8, 4e-8] {
            s.deltas.push(d);
        }
        s.update_done(tol);
        assert!(s.done && s.stalled);
        // cleanly decreasing updates above tol: keep iterating
        let mut s = SequenceState::new(GridFunction::constant(&mesh, 0.0));
        for d in [9e-8, 8e-8, 7e-8, 6e-8, 5e-8] {
            s.deltas.push(d);
        }
        s.update_done(tol);
        assert!(!s.done);
        // plain convergence is not flagged
        let mut s = SequenceState::new(GridFunction::constant(&mesh, 0.0));
        s.deltas.push(5e-9);
        s.update_done(tol);
        assert!(s.done && !s.stalled);
    }

    #[test]
    fn fixed_point_stays_fixed() {
        let setup = singular_setup(0.05);
        let (sp, pair) = build(&setup, 200);
        let picard = PicardSettings::new(1e-11, 500, 0.1);
        let outer = OuterSettings { outer_tol: 1e-9, ..Default::default() };
        let bracket = iterate_extremal(
            &sp,
            &setup.bvp.nonlinearity,
            &setup.coefficients,
            &pair,
            &picard,
            &outer,
        )
        .unwrap();
        let again = apply_g(
            &sp,
            &setup.bvp.nonlinearity,
            &setup.coefficients,
            &pair,
            &picard,
            1e-7,
            &bracket.u_star_low,
        )
        .unwrap();
        assert!(again.sup_distance(&bracket.u_star_low) <= outer.outer_tol + 1e-8);
    }
}
