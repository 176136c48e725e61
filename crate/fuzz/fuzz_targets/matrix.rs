#![no_main]

use graphmix::io::{normalized_laplacian_weights, parse_matrix, symmetrize_mean};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = parse_matrix(text) else { return };
    if let Ok(g) = symmetrize_mean(&m) {
        let _ = normalized_laplacian_weights(&g);
    }
});
