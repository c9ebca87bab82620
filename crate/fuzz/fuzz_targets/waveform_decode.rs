#![no_main]

use libfuzzer_sys::fuzz_target;

use doa_core::io::{decode_waveforms, encode_waveforms};

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = decode_waveforms(data) {
        // Decoding is exact, so re-encoding reproduces the input.
        assert_eq!(encode_waveforms(&w), data);
    }
});
