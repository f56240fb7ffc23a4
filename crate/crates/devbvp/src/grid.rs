//! Meshes over `[-r, T]`, piecewise-linear grid functions, second
//! differences, and composite quadrature that tolerates an integrable
//! singularity at the left endpoint.
//!
//! Grid functions are the computational stand-in for continuous functions on
//! `[-r, T]`: values live at nodes and evaluation between nodes is the
//! piecewise-linear interpolant. Linear interpolation (rather than a cubic)
//! matches the regularity class of the solutions being approximated, whose
//! second derivatives are merely integrable.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute slack accepted at the domain endpoints when interpolating, to
/// absorb roundoff in computed deviation values like `sqrt(1-t)` at `t=0`.
pub const ENDPOINT_SLACK: f64 = 1e-12;

/// Recursive bisection depth of the first cell for singular integrands.
pub const GRADED_DEPTH: usize = 20;

/// A mesh on `[-r, T]`: uniform step `h = T/n` on `[0, T]`, and history nodes
/// on `[-r, 0]` with a step as close to `h` as divides `r` evenly. `-r`, `0`
/// and `T` are always nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    zero_index: usize,
    h: f64,
}

impl Mesh {
    pub fn new(horizon: f64, radius: f64, n: usize) -> Result<Arc<Mesh>> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Mesh(format!("horizon T must be positive, got {horizon}")));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Mesh(format!("history radius r must be nonnegative, got {radius}")));
        }
        if n < 4 {
            return Err(Error::Mesh(format!("need at least 4 cells on [0, T], got {n}")));
        }
        let h = horizon / n as f64;
        let mut nodes = Vec::new();
        if radius > 0.0 {
            let m = ((radius / h).round() as usize).max(1);
            for j in 0..m {
                nodes.push(-radius + radius * j as f64 / m as f64);
            }
            nodes[0] = -radius;
        }
        let zero_index = nodes.len();
        for i in 0..=n {
            nodes.push(horizon * i as f64 / n as f64);
        }
        nodes[zero_index] = 0.0;
        let last = nodes.len() - 1;
        nodes[last] = horizon;
        for w in nodes.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Mesh(format!("nodes not strictly increasing near {}", w[0])));
            }
        }
        Ok(Arc::new(Mesh { nodes, zero_index, h }))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node at `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    /// Uniform step on `[0, T]`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn radius(&self) -> f64 {
        -self.nodes[0]
    }

    /// Number of cells on `[0, T]`.
    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1 - self.zero_index
    }

    /// Locate `t` inside the mesh: cell index and barycentric weight so that
    /// the interpolant is `(1 - w) * v[cell] + w * v[cell + 1]`.
    pub fn locate(&self, t: f64) -> Result<InterpPoint> {
        let lo = self.nodes[0];
        let hi = *self.nodes.last().unwrap();
        if t < lo - ENDPOINT_SLACK || t > hi + ENDPOINT_SLACK {
            return Err(Error::Extrapolation { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        // partition_point returns the first node strictly greater than t
        let up = self.nodes.partition_point(|&n| n <= t);
        let cell = up.saturating_sub(1).min(self.nodes.len() - 2);
        let width = self.nodes[cell + 1] - self.nodes[cell];
        let w = ((t - self.nodes[cell]) / width).clamp(0.0, 1.0);
        Ok(InterpPoint { cell, w, t })
    }
}

/// A resolved interpolation anchor: `value = (1-w)*v[cell] + w*v[cell+1]`.
#[derive(Debug, Clone, Copy)]
pub struct InterpPoint {
    pub cell: usize,
    pub w: f64,
    pub t: f64,
}

impl InterpPoint {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        if self.w == 0.0 {
            values[self.cell]
        } else {
            (1.0 - self.w) * values[self.cell] + self.w * values[self.cell + 1]
        }
    }
}

/// Sampled function on a mesh, read between nodes as piecewise-linear.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != mesh.len() {
            return Err(Error::Mesh(format!(
                "value array length {} does not match node count {}",
                values.len(),
                mesh.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(GridFunction { mesh, values })
    }

    /// Sample a function at every node.
    pub fn sample<F>(mesh: &Arc<Mesh>, mut f: F) -> Result<GridFunction>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let values = mesh
            .nodes()
            .iter()
            .map(|&t| f(t))
            .collect::<Result<Vec<_>>>()?;
        GridFunction::from_values(mesh.clone(), values)
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> GridFunction {
        GridFunction {
            mesh: mesh.clone(),
            values: vec![c; mesh.len()],
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Piecewise-linear interpolation; exact at nodes.
    pub fn interp(&self, t: f64) -> Result<f64> {
        Ok(self.mesh.locate(t)?.apply(&self.values))
    }

    /// Supremum over nodes of `|self - other|`.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Central second differences at the interior nodes of `[0, T]`.
    /// Entry `i` corresponds to node `zero_index + 1 + i`.
    pub fn second_difference(&self) -> Vec<f64> {
        let z = self.mesh.zero_index();
        let h2 = self.mesh.h() * self.mesh.h();
        let v = &self.values;
        (z + 1..self.mesh.len() - 1)
            .map(|i| (v[i - 1] - 2.0 * v[i] + v[i + 1]) / h2)
            .collect()
    }

    /// Maximum slope of the interpolant over the whole domain.
    pub fn max_slope(&self) -> f64 {
        self.mesh
            .nodes()
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max)
    }

    /// Two-column CSV `t,value` at 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.mesh.nodes().iter().zip(&self.values) {
            writeln!(w, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    Trapezoid,
    Midpoint,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureRule {
    pub kind: QuadKind,
    /// The integrand has an integrable singularity at the left endpoint; the
    /// first cell is handled by graded bisection with the midpoint rule,
    /// which never evaluates at cell endpoints.
    pub singular_left: bool,
}

impl QuadratureRule {
    pub fn trapezoid() -> Self {
        QuadratureRule { kind: QuadKind::Trapezoid, singular_left: false }
    }

    pub fn midpoint() -> Self {
        QuadratureRule { kind: QuadKind::Midpoint, singular_left: false }
    }

    pub fn singular() -> Self {
        QuadratureRule { kind: QuadKind::Midpoint, singular_left: true }
    }
}

/// Quadrature value plus a diagnostic for the graded scheme: the ratio of the
/// two deepest bisection-level contributions. A ratio near 1 signals an
/// integrand whose singularity is too strong to integrate (like `1/t`);
/// ratios near `2^(p-1)` correspond to `t^-p` behavior.
#[derive(Debug, Clone, Copy)]
pub struct IntegralEstimate {
    pub value: f64,
    pub tail_ratio: Option<f64>,
}

impl IntegralEstimate {
    /// Conservative divergence test for the graded scheme.
    pub fn looks_divergent(&self) -> bool {
        matches!(self.tail_ratio, Some(r) if r >= 0.98)
    }
}

/// Composite quadrature of `g` over `[a, b]` on the mesh cells intersected
/// with `[a, b]`. With `singular_left` set, the leftmost cell is split into
/// `GRADED_DEPTH` geometrically shrinking subcells evaluated by midpoints,
/// and the following cells use subdivided midpoints (16 subcells for the
/// first 16 cells, then 4) so that the steep region next to the singularity
/// does not dominate the error.
pub fn integrate<F>(
    mesh: &Mesh,
    a: f64,
    b: f64,
    rule: QuadratureRule,
    mut g: F,
) -> Result<IntegralEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a <= b) {
        return Err(Error::Mesh(format!("integration bounds reversed: [{a}, {b}]")));
    }
    if a == b {
        return Ok(IntegralEstimate { value: 0.0, tail_ratio: None });
    }
    // Cut points: a, all interior mesh nodes, b.
    let mut cuts = vec![a];
    for &t in mesh.nodes() {
        if t > a && t < b {
            cuts.push(t);
        }
    }
    cuts.push(b);

    let mut total = 0.0;
    let mut tail_ratio = None;
    for (ci, w) in cuts.windows(2).enumerate() {
        let (l, r) = (w[0], w[1]);
        if rule.singular_left {
            if ci == 0 {
                let (v, ratio) = graded_first_cell(l, r, &mut g)?;
                total += v;
                tail_ratio = ratio;
            } else {
                let m = if ci <= 16 { 16 } else { 4 };
                total += subdivided_midpoint(l, r, m, &mut g)?;
            }
            continue;
        }
        total += match rule.kind {
            QuadKind::Trapezoid => 0.5 * (r - l) * (g(l)? + g(r)?),
            QuadKind::Midpoint => (r - l) * g(0.5 * (l + r))?,
        };
    }
    Ok(IntegralEstimate { value: total, tail_ratio })
}

fn subdivided_midpoint<F>(l: f64, r: f64, m: usize, g: &mut F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let h = (r - l) / m as f64;
    let mut sum = 0.0;
    for j in 0..m {
        sum += h * g(l + (j as f64 + 0.5) * h)?;
    }
    Ok(sum)
}

// The dyadic cells see a self-similar integrand, so every level carries the
// same relative midpoint error; four midpoint subcells per level cut the
// constant by 16 and put sqrt-type singularities near 1e-4 accuracy.
fn graded_first_cell<F>(l: f64, r: f64, g: &mut F) -> Result<(f64, Option<f64>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let width = r - l;
    let mut total = 0.0;
    let mut prev_level = 0.0;
    let mut ratio = None;
    let mut hi = width;
    for level in 0..GRADED_DEPTH {
        let lo = hi * 0.5;
        let contribution = subdivided_midpoint(l + lo, l + hi, 4, g)?;
        total += contribution;
        if level > 0 && prev_level != 0.0 {
            ratio = Some((contribution / prev_level).abs());
        }
        prev_level = contribution;
        hi = lo;
    }
    // Final sliver [l, l + width/2^D].
    total += subdivided_midpoint(l, l + hi, 4, g)?;
    Ok((total, ratio))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(t: f64, r: f64, n: usize) -> Arc<Mesh> {
        Mesh::new(t, r, n).unwrap()
    }

    fn ok(v: f64) -> Result<f64> {
        Ok(v)
    }

    #[test]
    fn mesh_has_anchor_nodes() {
        let m = mesh(2.0, 1.0, 400);
        assert_eq!(m.nodes()[0], -1.0);
        assert_eq!(m.nodes()[m.zero_index()], 0.0);
        assert_eq!(*m.nodes().last().unwrap(), 2.0);
        assert_eq!(m.n_cells(), 400);
        assert!((m.h() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn mesh_rejects_small_n() {
        assert!(Mesh::new(1.0, 0.0, 3).is_err());
        assert!(Mesh::new(-1.0, 0.0, 10).is_err());
        assert!(Mesh::new(1.0, -0.5, 10).is_err());
    }

    #[test]
    fn interp_identity_at_midpoint() {
        let m = mesh(1.0, 0.0, 10);
        let u = GridFunction::sample(&m, Ok).unwrap();
        assert_eq!(u.interp(0.5).unwrap(), 0.5);
        assert_eq!(u.interp(0.123).unwrap(), 0.123);
    }

    #[test]
    fn interp_upper_solution_of_floor_problem() {
        // history cos(pi t / 2), then 1 - t(t-2); value 2 at t = 1
        let m = mesh(2.0, 1.0, 40);
        let u = GridFunction::sample(&m, |t| {
            Ok(if t <= 0.0 {
                (std::f64::consts::PI * t / 2.0).cos()
            } else {
                1.0 - t * (t - 2.0)
            })
        })
        .unwrap();
        assert!((u.interp(1.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn interp_chord_error_on_parabola() {
        let m = mesh(1.0, 0.0, 4); // h = 0.25
        let u = GridFunction::sample(&m, |t| Ok(t * t)).unwrap();
        let v = u.interp(0.125).unwrap();
        assert!((v - 0.03125).abs() < 1e-15);
        assert!((v - 0.125f64.powi(2) - 0.015625).abs() < 1e-15); // h^2/4 chord gap
    }

    #[test]
    fn interp_rejects_out_of_range() {
        let m = mesh(1.0, 0.0, 8);
        let u = GridFunction::constant(&m, 1.0);
        assert!(u.interp(1.1).is_err());
        assert!(u.interp(-0.1).is_err());
        assert!(u.interp(1.0 + 0.5e-12).is_ok()); // endpoint roundoff slack
    }

    #[test]
    fn second_difference_exact_on_quadratic() {
        let m = mesh(1.0, 0.0, 17);
        let u = GridFunction::sample(&m, |t| Ok(t * (1.0 - t))).unwrap();
        for d in u.second_difference() {
            assert!((d + 2.0).abs() < 1e-9);
        }
        let c = GridFunction::constant(&m, 3.25);
        for d in c.second_difference() {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn second_difference_approximates_sine() {
        let m = mesh(1.0, 0.0, 100); // h = 0.01
        let u = GridFunction::sample(&m, |t| Ok(t.sin())).unwrap();
        let d2 = u.second_difference();
        for (i, d) in d2.iter().enumerate() {
            let t = m.nodes()[m.zero_index() + 1 + i];
            assert!((d + t.sin()).abs() < 1e-4);
        }
    }

    #[test]
    fn trapezoid_exact_on_linear_times_constant() {
        let m = mesh(2.0, 0.0, 200);
        for c in [0.0, 1.0, -3.5, 0.2856] {
            let v = integrate(&m, 0.0, 2.0, QuadratureRule::trapezoid(), |s| ok((2.0 - s) * c))
                .unwrap()
                .value;
            assert!((v - 2.0 * c).abs() < 1e-12, "c={c}: {v}");
        }
        let z = integrate(&m, 0.0, 1.0, QuadratureRule::trapezoid(), |s| ok((1.0 - s) * 0.0))
            .unwrap()
            .value;
        assert_eq!(z, 0.0);
    }

    #[test]
    fn graded_midpoint_handles_sqrt_singularity() {
        let m = mesh(1.0, 0.0, 200);
        let est = integrate(&m, 0.0, 1.0, QuadratureRule::singular(), |s| ok(1.0 / s.sqrt()))
            .unwrap();
        assert!((est.value - 2.0).abs() < 1e-3, "{}", est.value);
        assert!(!est.looks_divergent());
        let est = integrate(&m, 0.0, 1.0, QuadratureRule::singular(), |s| {
            ok(1.0 / (5.0 * s.sqrt()))
        })
        .unwrap();
        assert!((est.value - 0.4).abs() < 1e-3);
    }

    #[test]
    fn graded_midpoint_flags_nonintegrable_singularity() {
        let m = mesh(1.0, 0.0, 200);
        let est = integrate(&m, 0.0, 1.0, QuadratureRule::singular(), |s| ok(1.0 / (25.0 * s)))
            .unwrap();
        assert!(est.looks_divergent());
    }

    #[test]
    fn quadrature_order_at_least_1_9_on_smooth_integrand() {
        let exact = std::f64::consts::E - 1.0;
        let mut errs = Vec::new();
        for n in [50usize, 100, 200] {
            let m = mesh(1.0, 0.0, n);
            for rule in [QuadratureRule::trapezoid(), QuadratureRule::midpoint()] {
                let v = integrate(&m, 0.0, 1.0, rule, |s| ok(s.exp())).unwrap().value;
                errs.push((n, rule.kind, (v - exact).abs()));
            }
        }
        for kind in [QuadKind::Trapezoid, QuadKind::Midpoint] {
            let e: Vec<f64> = errs.iter().filter(|(_, k, _)| *k == kind).map(|(_, _, e)| *e).collect();
            let order1 = (e[0] / e[1]).log2();
            let order2 = (e[1] / e[2]).log2();
            assert!(order1 >= 1.9 && order2 >= 1.9, "{kind:?}: {order1} {order2}");
        }
    }

    #[test]
    fn interpolation_error_order_on_refinement() {
        // max error for C^2 functions is h^2/8 * max|u''|; observed order >= 1.9
        let mut errs = Vec::new();
        for n in [50usize, 100, 200] {
            let m = mesh(1.0, 0.0, n);
            let u = GridFunction::sample(&m, |t| Ok(t * t)).unwrap();
            let mut e: f64 = 0.0;
            for j in 0..=(4 * n) {
                let t = j as f64 / (4 * n) as f64;
                e = e.max((u.interp(t).unwrap() - t * t).abs());
            }
            let h = 1.0 / n as f64;
            assert!(e <= h * h / 8.0 * 2.0 + 1e-15);
            errs.push(e);
        }
        assert!((errs[0] / errs[1]).log2() >= 1.9);
        assert!((errs[1] / errs[2]).log2() >= 1.9);
    }

    #[test]
    fn csv_export_round_trips_doubles() {
        let m = mesh(1.0, 0.0, 4);
        let u = GridFunction::sample(&m, |t| Ok(t * std::f64::consts::PI)).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,value");
        for (line, (&t, &v)) in lines.zip(m.nodes().iter().zip(u.values())) {
            let mut parts = line.split(',');
            let tt: f64 = parts.next().unwrap().parse().unwrap();
            let vv: f64 = parts.next().unwrap().parse().unwrap();
            assert_eq!(tt, t);
            assert_eq!(vv, v);
        }
    }
}
