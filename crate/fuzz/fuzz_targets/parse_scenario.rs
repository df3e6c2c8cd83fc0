#![no_main]

use libfuzzer_sys::fuzz_target;
use lorflow::scenario::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = parse_scenario(text) else {
        return;
    };
    // schema-valid configs must build without panicking (Err is fine)
    let _ = config.build_spec();
    let _ = config.build_f();
    let _ = config.build_continuation_config();
    // barrier evaluation walks the whole grid; keep the fuzz budget bounded
    if config.points <= 32 {
        let _ = config.build_barriers();
    }
});
