#![no_main]

use ipk_core::agent::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Checkpoint::from_json(text) {
        Checkpoint::from_json(&c.to_json()).expect("decoded checkpoints re-encode");
    }
});
