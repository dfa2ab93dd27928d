#![no_main]

use bellreg_cli::data::{parse_dataset_str, DatasetOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_dataset_str(text, &DatasetOptions::default());
        let standardized = DatasetOptions {
            standardize: true,
            ..DatasetOptions::default()
        };
        let _ = parse_dataset_str(text, &standardized);
    }
});
