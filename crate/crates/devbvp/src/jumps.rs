//! Shift-constant certificates for piecewise-C1 scalar functions with upward
//! jumps.
//!
//! For a function that is C1 between declared jump points and never jumps
//! downward, `x -> f(x) + |M| x` is nondecreasing, where `M` is the infimum
//! of `f'` over all smooth pieces. A nondecreasing shift certifies the
//! one-sided Lipschitz condition with coefficient `|M|` for that variable.
//! Since a nonnegative infimum needs no shift at all, [`shift_constant`]
//! returns the sharpened value `max(0, -M)`.
//!
//! Jump points are user-declared, not discovered. Certificates are local to
//! the evaluation window: pieces outside it are not inspected.

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};

/// Tolerance for the one-sided limit comparison at declared jump points.
pub const EPS_JUMP: f64 = 1e-9;

/// Relative offset (times the window width) of the first one-sided sample
/// used for limit estimation at a jump.
const LIMIT_OFFSET: f64 = 1e-4;

/// Central-difference step, relative to the piece width.
const DERIV_STEP: f64 = 1e-6;

/// Grid size of the final nondecreasingness scan.
const SCAN_POINTS: usize = 10_000;

/// A scalar slice of an expression: one designated variable sweeps the
/// window, the other two stay fixed.
#[derive(Debug, Clone)]
pub struct PiecewiseFn {
    pub expr: Expr,
    pub var: Var,
    /// Values of (t, x, y) for the two non-swept variables.
    pub fixed: (f64, f64, f64),
    /// Strictly increasing interior jump points.
    pub jumps: Vec<f64>,
    pub window: (f64, f64),
}

impl PiecewiseFn {
    pub fn new(
        expr: Expr,
        var: Var,
        fixed: (f64, f64, f64),
        mut jumps: Vec<f64>,
        window: (f64, f64),
    ) -> Result<PiecewiseFn> {
        if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
            return Err(Error::Config(format!(
                "evaluation window [{}, {}] must be finite and nonempty",
                window.0, window.1
            )));
        }
        jumps.retain(|&j| j > window.0 && j < window.1);
        for w in jumps.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config("jump points must be strictly increasing".into()));
            }
        }
        Ok(PiecewiseFn { expr, var, fixed, jumps, window })
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        let (t, x, y) = self.fixed;
        Ok(match self.var {
            Var::T => self.expr.eval(v, x, y)?,
            Var::X => self.expr.eval(t, v, y)?,
            Var::Y => self.expr.eval(t, x, v)?,
        })
    }

    /// Piece boundaries: window edges plus interior jumps.
    fn cuts(&self) -> Vec<f64> {
        let mut cuts = Vec::with_capacity(self.jumps.len() + 2);
        cuts.push(self.window.0);
        cuts.extend_from_slice(&self.jumps);
        cuts.push(self.window.1);
        cuts
    }

    /// One-sided limit estimate by quadratic extrapolation from samples at
    /// distances d, d/2, d/4 on the given side.
    fn one_sided_limit(&self, at: f64, side: f64) -> Result<f64> {
        let d = LIMIT_OFFSET * (self.window.1 - self.window.0);
        let v1 = self.eval(at + side * d)?;
        let v2 = self.eval(at + side * d / 2.0)?;
        let v4 = self.eval(at + side * d / 4.0)?;
        Ok((v1 - 6.0 * v2 + 8.0 * v4) / 3.0)
    }

    /// Check that every declared jump is upward:
    /// left limit <= f(x_k) <= right limit, within [`EPS_JUMP`].
    pub fn verify_jump_conditions(&self) -> Result<()> {
        for &j in &self.jumps {
            let at = self.eval(j)?;
            let left = self.one_sided_limit(j, -1.0)?;
            let right = self.one_sided_limit(j, 1.0)?;
            if left > at + EPS_JUMP {
                return Err(Error::CertificateRefused {
                    at: j,
                    detail: format!("left limit {left} exceeds value {at} (downward jump)"),
                });
            }
            if at > right + EPS_JUMP {
                return Err(Error::CertificateRefused {
                    at: j,
                    detail: format!("value {at} exceeds right limit {right} (downward jump)"),
                });
            }
        }
        Ok(())
    }
}

/// Sampled infimum of the derivative over all pieces, using central
/// differences at Chebyshev-distributed interior points.
pub fn derivative_infimum(pf: &PiecewiseFn, samples_per_piece: usize) -> Result<f64> {
    if samples_per_piece < 16 {
        return Err(Error::Config(format!(
            "need at least 16 samples per piece, got {samples_per_piece}"
        )));
    }
    let cuts = pf.cuts();
    let mut inf = f64::INFINITY;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let width = b - a;
        let step = DERIV_STEP * width;
        // keep the stencil strictly inside the open piece
        let lo = a + 2.0 * step;
        let hi = b - 2.0 * step;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for j in 0..samples_per_piece {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / samples_per_piece as f64;
            let v = mid + half * theta.cos();
            let d = (pf.eval(v + step)? - pf.eval(v - step)?) / (2.0 * step);
            inf = inf.min(d);
        }
    }
    if !inf.is_finite() {
        return Err(Error::Config("derivative infimum is not finite".into()));
    }
    Ok(inf)
}

/// The certified shift `max(0, -M)` with `M` the sampled derivative infimum.
/// Refuses on downward jumps; cross-checks that the shifted function is
/// nondecreasing on a dense scan of the window.
pub fn shift_constant(pf: &PiecewiseFn, samples_per_piece: usize) -> Result<f64> {
    pf.verify_jump_conditions()?;
    let m = derivative_infimum(pf, samples_per_piece)?;
    let shift = (-m).max(0.0);
    // soundness scan at sample resolution
    let (a, b) = pf.window;
    let mut prev_v = a;
    let mut prev_g = pf.eval(a)? + shift * a;
    for i in 1..=SCAN_POINTS {
        let v = a + (b - a) * i as f64 / SCAN_POINTS as f64;
        let g = pf.eval(v)? + shift * v;
        if g < prev_g - EPS_JUMP {
            return Err(Error::CertificateInconsistent { at: prev_v, defect: prev_g - g });
        }
        prev_v = v;
        prev_g = g;
    }
    Ok(shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn slice_y(src: &str, jumps: Vec<f64>, window: (f64, f64)) -> PiecewiseFn {
        PiecewiseFn::new(parse(src).unwrap(), Var::Y, (0.0, 0.0, 0.0), jumps, window).unwrap()
    }

    #[test]
    fn identity_has_unit_infimum_and_zero_shift() {
        let pf = slice_y("y", vec![], (0.0, 1.0));
        let m = derivative_infimum(&pf, 64).unwrap();
        assert!((m - 1.0).abs() < 1e-6);
        assert_eq!(shift_constant(&pf, 64).unwrap(), 0.0);
    }

    #[test]
    fn steep_line_needs_matching_shift() {
        let pf = slice_y("-3*y", vec![], (0.0, 1.0));
        let m = derivative_infimum(&pf, 64).unwrap();
        assert!((m + 3.0).abs() < 1e-6);
        let c = shift_constant(&pf, 64).unwrap();
        assert!((c - 3.0).abs() < 1e-6);
    }

    #[test]
    fn floor_slice_certificate_matches_dense_scan() {
        // y-slice of the floor-problem nonlinearity on [0, 3], jumps at 1, 2
        let pf = slice_y(
            "-(1/9)*y*sin(y*pi/(2*floor(abs(y))+2))",
            vec![1.0, 2.0],
            (0.0, 3.0),
        );
        pf.verify_jump_conditions().unwrap();
        let m = derivative_infimum(&pf, 2048).unwrap();
        // brute-force oracle: dense uniform scan away from the jumps
        let mut brute = f64::INFINITY;
        let n = 100_000;
        for i in 1..n {
            let y = 3.0 * i as f64 / n as f64;
            if (y - 1.0).abs() < 1e-4 || (y - 2.0).abs() < 1e-4 || (3.0 - y) < 1e-6 {
                continue;
            }
            let d = (pf.eval(y + 1e-7).unwrap() - pf.eval(y - 1e-7).unwrap()) / 2e-7;
            brute = brute.min(d);
        }
        assert!((m - brute).abs() < 1e-3, "sampled {m} vs brute {brute}");
        let c = shift_constant(&pf, 2048).unwrap();
        assert!((c + brute).abs() < 1e-3);
        // the certified shift is bounded by the coarse analytic coefficient
        assert!(c <= (1.0 + std::f64::consts::FRAC_PI_2) / 9.0);
    }

    #[test]
    fn downward_jump_is_refused() {
        let pf = slice_y("piecewise(y < 1, 0, -1)", vec![1.0], (0.0, 2.0));
        assert!(matches!(
            shift_constant(&pf, 64),
            Err(Error::CertificateRefused { .. })
        ));
    }

    #[test]
    fn sawtooth_is_certified_with_its_slope() {
        // paperphi has slope -k between jumps; on (0, 1] the jumps at the
        // reciprocals 1/n are upward, so the certificate is exactly k
        let pf = slice_y("paperphi(0.05, y)", vec![1.0 / 3.0, 0.5], (0.26, 0.9));
        let c = shift_constant(&pf, 256).unwrap();
        assert!((c - 0.05).abs() < 1e-6, "{c}");
    }

    #[test]
    fn sawtooth_downward_jump_at_two_is_refused() {
        // at integer arguments m >= 2 the branch index steps from m-1 to m,
        // so the value drops by k/(m(m-1)): a genuine downward jump
        let pf = slice_y("paperphi(0.05, y)", vec![2.0], (1.5, 2.5));
        match shift_constant(&pf, 64) {
            Err(Error::CertificateRefused { at, .. }) => assert_eq!(at, 2.0),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn jump_points_outside_window_are_ignored() {
        let pf = slice_y("y*y", vec![-5.0, 7.0], (0.0, 1.0));
        assert!(pf.jumps.is_empty());
        assert!(shift_constant(&pf, 64).is_ok());
    }
}
