//! Expression parser on arbitrary text: must return a tree or a diagnostic
//! whose offset lies inside the input, and printed trees must reparse.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match finsler::expr::parse(text, 4) {
        Ok(e) => {
            let printed = e.to_string();
            let again = finsler::expr::parse(&printed, 4).expect("printed form reparses");
            assert_eq!(again, e);
        }
        Err(d) => assert!(d.offset <= text.len()),
    }
});
