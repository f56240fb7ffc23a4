//! Shared helpers for integration tests: an independent dense
//! finite-difference oracle for linear problems with one deviation.
//!
//! The oracle discretizes `-u'' + a(t) u(t) + b(t) u(tau(t)) = g(t)` with
//! central differences on a uniform grid and solves the tridiagonal system
//! directly (Thomas algorithm), lagging the deviation term and re-solving
//! until it settles. This shares no code path with the integral-operator
//! solver under test.

#![allow(dead_code)]

/// Returns the grid `t_0..t_m` on `[0, horizon]` and the oracle solution.
#[allow(clippy::too_many_arguments)]
pub fn fd_oracle(
    horizon: f64,
    endpoint: f64,
    a: impl Fn(f64) -> f64,
    b: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    tau: impl Fn(f64) -> f64,
    history: impl Fn(f64) -> f64,
    m: usize,
) -> (Vec<f64>, Vec<f64>) {
    let h = horizon / m as f64;
    let ts: Vec<f64> = (0..=m).map(|i| horizon * i as f64 / m as f64).collect();
    let mut u = vec![0.0; m + 1];
    u[0] = history(0.0);
    u[m] = endpoint;

    let probe = |u: &[f64], at: f64| -> f64 {
        if at <= 0.0 {
            history(at)
        } else {
            let pos = (at / h).min((m - 1) as f64);
            let cell = pos.floor() as usize;
            let w = pos - cell as f64;
            (1.0 - w) * u[cell] + w * u[cell + 1]
        }
    };

    for _ in 0..200 {
        // rhs with the deviation term lagged at the current iterate
        let mut diag = vec![0.0; m - 1];
        let mut rhs = vec![0.0; m - 1];
        for i in 1..m {
            let t = ts[i];
            diag[i - 1] = 2.0 / (h * h) + a(t);
            rhs[i - 1] = g(t) - b(t) * probe(&u, tau(t));
        }
        rhs[0] += u[0] / (h * h);
        rhs[m - 2] += u[m] / (h * h);

        // Thomas sweep with constant off-diagonal -1/h^2
        let off = -1.0 / (h * h);
        let mut c_prime = vec![0.0; m - 1];
        let mut d_prime = vec![0.0; m - 1];
        c_prime[0] = off / diag[0];
        d_prime[0] = rhs[0] / diag[0];
        for i in 1..m - 1 {
            let denom = diag[i] - off * c_prime[i - 1];
            c_prime[i] = off / denom;
            d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / denom;
        }
        let mut next = u.clone();
        next[m - 1] = d_prime[m - 2];
        for i in (1..m - 1).rev() {
            next[i] = d_prime[i - 1] - c_prime[i - 1] * next[i + 1];
        }
        let change = next
            .iter()
            .zip(&u)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        u = next;
        if change <= 1e-13 {
            break;
        }
    }
    (ts, u)
}

#[test]
fn oracle_reproduces_parabola() {
    let (ts, us) = fd_oracle(
        1.0,
        0.0,
        |_| 0.0,
        |_| 0.0,
        |_| 2.0,
        |t| t,
        |_| 0.0,
        200,
    );
    for (t, u) in ts.iter().zip(&us) {
        assert!((u - t * (1.0 - t)).abs() < 1e-10);
    }
}

#[test]
fn oracle_handles_reaction_term() {
    // -u'' + u = (1 + pi^2) sin(pi t), u(0) = u(1) = 0 -> u = sin(pi t)
    let pi = std::f64::consts::PI;
    let (ts, us) = fd_oracle(
        1.0,
        0.0,
        |_| 1.0,
        |_| 0.0,
        |t| (1.0 + pi * pi) * (pi * t).sin(),
        |t| t,
        |_| 0.0,
        2000,
    );
    for (t, u) in ts.iter().zip(&us) {
        assert!((u - (pi * t).sin()).abs() < 1e-5);
    }
}
