#![no_main]

use custn::event::CustomerProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(profiles) = serde_json::from_slice::<Vec<CustomerProfile>>(data) {
        let _ = profiles.len();
    }
});
