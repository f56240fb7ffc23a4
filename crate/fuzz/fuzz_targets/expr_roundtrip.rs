//! Unparse/reparse round trip: the printed form of any parsed expression
//! parses back to the identical tree.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(expr) = devbvp::expr::parse(src) {
            let printed = expr.to_string();
            let again = devbvp::expr::parse(&printed)
                .unwrap_or_else(|e| panic!("unparse not reparsable: {printed:?}: {e}"));
            assert_eq!(expr, again, "round trip changed the tree for {printed:?}");
        }
    }
});
