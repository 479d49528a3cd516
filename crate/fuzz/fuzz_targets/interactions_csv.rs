#![no_main]

use custn::ingest::{InteractionReader, LogFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let reader = InteractionReader::from_reader(data, LogFormat::Csv);
    let _ = reader.header_error();
    for row in reader {
        let _ = row;
    }
});
