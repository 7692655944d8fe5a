#![no_main]

use libfuzzer_sys::fuzz_target;
use m2b::audio::wav::{encode_wav, read_wav_bytes, WavEncoding};

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = read_wav_bytes(data) {
        // anything we accept must survive a float round trip
        let bytes = encode_wav(&w, WavEncoding::Float32).expect("re-encode accepted audio");
        let back = read_wav_bytes(&bytes).expect("re-read our own output");
        assert_eq!(back.len(), w.len());
        assert_eq!(back.num_channels(), w.num_channels());
    }
});
