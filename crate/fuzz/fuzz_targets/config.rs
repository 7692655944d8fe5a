#![no_main]

use libfuzzer_sys::fuzz_target;
use m2b::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            assert_eq!(RunConfig::parse(&cfg.to_toml()).expect("canonical form parses"), cfg);
        }
    }
});
