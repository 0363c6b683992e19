//! Fuzz the per-agent dataset CSV importer.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = flock::gp::AgentDataset::from_csv_str(text);
    }
});
