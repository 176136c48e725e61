#![no_main]

use graphmix::bench::BenchmarkConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = BenchmarkConfig::from_json(text) {
        let _ = cfg.params();
    }
});
