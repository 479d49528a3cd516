#![no_main]

use custn::report::read_profiles_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_profiles_from_reader(data);
});
