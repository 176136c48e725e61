#![no_main]

use graphmix::io::{parse_weighted_edge_list, write_weighted_edge_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_weighted_edge_list(text) {
        let again = parse_weighted_edge_list(&write_weighted_edge_list(&g)).expect("written edge list must parse");
        assert_eq!(g, again);
    }
});
