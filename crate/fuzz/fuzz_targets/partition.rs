#![no_main]

use graphmix::io::{parse_partition, write_partition};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&q, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let q = if q == 0 { None } else { Some(q as usize % 8) };
    if let Ok(z) = parse_partition(text, q) {
        assert_eq!(parse_partition(&write_partition(&z), None).unwrap().labels(), z.labels());
    }
});
