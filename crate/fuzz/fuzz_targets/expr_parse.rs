//! Parser totality: any input either parses or yields a located error;
//! evaluation of a parsed expression never panics.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(expr) = devbvp::expr::parse(src) {
            for (t, x, y) in [
                (0.0, 0.0, 0.0),
                (0.5, -1.25, 2.0),
                (1e-12, 1e12, -0.3),
                (-1e308, 1e308, f64::MIN_POSITIVE),
            ] {
                let _ = expr.eval(t, x, y);
            }
        }
    }
});
