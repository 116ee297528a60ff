#![no_main]

use ipk_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ExperimentConfig::from_json(text) {
        let again = ExperimentConfig::from_json(&c.to_json()).expect("accepted configs round-trip");
        assert_eq!(again, c);
    }
});
