//! Evaluation of parsed expressions on plain values and second-order jets.
//! Input layout: four little-endian f64 coordinates, then the expression.

#![no_main]

use libfuzzer_sys::fuzz_target;

use finsler::tower::{derive, DerivativeRequest};

fuzz_target!(|data: &[u8]| {
    if data.len() < 32 {
        return;
    }
    let (head, tail) = data.split_at(32);
    let coords: Vec<f64> = head
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .map(|v| if v.is_finite() { v.clamp(-1e6, 1e6) } else { 0.5 })
        .collect();
    let Ok(text) = std::str::from_utf8(tail) else {
        return;
    };
    let Ok(e) = finsler::expr::parse(text, 2) else {
        return;
    };
    let plain = e.eval::<f64>(&coords[..2], &coords[2..]);
    if let Ok(v) = plain {
        assert!(v.is_finite());
        // The printed form is the same tree, so it evaluates identically.
        let printed = finsler::expr::parse(&e.to_string(), 2).expect("printed form reparses");
        let w = printed
            .eval::<f64>(&coords[..2], &coords[2..])
            .expect("same tree, same domain");
        assert_eq!(v.to_bits(), w.to_bits());
    }
    let req = DerivativeRequest::new(&coords, &[0, 1, 2, 3], 2);
    if let Ok(p) = derive(|c| e.eval_flat(c, 2), &req) {
        assert!(p.iter().all(|(_, d)| d.is_finite()));
    }
});
