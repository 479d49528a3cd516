#![no_main]

use custn::ingest::{InteractionReader, LogFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for row in InteractionReader::from_reader(data, LogFormat::Jsonl) {
        let _ = row;
    }
});
