#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = doa_core::io::SceneFile::from_toml_str(text) {
            // Accepted files must build without error.
            file.build().expect("validated scene builds");
        }
    }
});
