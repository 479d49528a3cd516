#![no_main]

use custn::ingest::{ImpressionReader, LogFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for row in ImpressionReader::from_reader(data, LogFormat::Jsonl) {
        let _ = row;
    }
});
