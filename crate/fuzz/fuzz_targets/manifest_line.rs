#![no_main]

use libfuzzer_sys::fuzz_target;
use m2b::scene::parse_manifest_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        if let Ok(entry) = parse_manifest_line(line) {
            assert!(!entry.mono_wav.starts_with('/'));
            assert!(!entry.frame_image.split('/').any(|c| c == ".."));
        }
    }
});
