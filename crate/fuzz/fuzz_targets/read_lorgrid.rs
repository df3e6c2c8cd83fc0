#![no_main]

use libfuzzer_sys::fuzz_target;
use lorflow::scenario::{parse_lorgrid, write_lorgrid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(grid) = parse_lorgrid(text) else {
        return;
    };
    // accepted dumps must survive a bit-exact write/read round trip
    let rewritten = write_lorgrid(&grid);
    let back = parse_lorgrid(&rewritten).expect("rewritten dump must parse");
    assert_eq!(grid.values.len(), back.values.len());
    for (a, b) in grid.values.iter().zip(&back.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
});
