#![no_main]

use bellreg_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = parse_config(text) {
            let _ = c.validate();
            let _ = c.hash();
        }
    }
});
