#![no_main]

use custn::ingest::read_ranked_lists_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let (lists, errors) = read_ranked_lists_from_reader(data);
    let _ = (lists.len(), errors.len());
});
