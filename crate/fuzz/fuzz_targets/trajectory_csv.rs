//! Fuzz the trajectory CSV reader used by `flock compare`.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = flock::runner::parse_trajectory_csv(text);
    }
});
