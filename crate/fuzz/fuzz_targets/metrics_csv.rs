#![no_main]

use ipk_core::report::{export, read_metrics, write_metrics};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_metrics(data) {
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).expect("parsed rows serialize");
        assert_eq!(read_metrics(&buf[..]).expect("written rows parse").len(), rows.len());
        let _ = export(&rows);
    }
});
