//! JSON run configuration: parsing, validation and structure construction
//! must fail with an error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

use finsler::cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json(text) {
        if let Some(spec) = &cfg.structure {
            let _ = spec.build();
        }
    }
});
