#![no_main]

use libfuzzer_sys::fuzz_target;
use lorflow::expr::{parse_expression, EvalEnv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(expr) = parse_expression(text) else {
        return;
    };
    // a parsed expression must evaluate without panicking (Err is fine)
    let env = EvalEnv {
        x0: 1.25,
        x: [0.5, -0.25, 2.0],
        vt: 1.5,
    };
    let _ = expr.eval(&env);
    // canonical printing must re-parse
    let printed = expr.to_string();
    let reparsed = parse_expression(&printed).expect("printed expression must re-parse");
    match (expr.eval(&env), reparsed.eval(&env)) {
        (Ok(a), Ok(b)) => assert!(
            a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            "round-trip changed value: {a} vs {b} for '{printed}'"
        ),
        (Err(_), Err(_)) => {}
        (a, b) => panic!("round-trip changed eval outcome: {a:?} vs {b:?} for '{printed}'"),
    }
});
