#![no_main]

use custn::ingest::read_segments_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_segments_from_reader(data);
});
