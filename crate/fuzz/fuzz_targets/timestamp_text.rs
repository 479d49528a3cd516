#![no_main]

use custn::ingest::parse_timestamp_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_timestamp_text(text);
    }
});
