#![no_main]

use custn::report::read_segment_n_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_segment_n_from_reader(data);
});
