#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = doa_core::experiments::ExperimentSpec::from_toml_str(text) {
            spec.validate().expect("parsed spec revalidates");
            let _ = spec.algorithm_list();
        }
    }
});
