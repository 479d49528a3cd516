#![no_main]

use custn::synth::PopulationSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<PopulationSpec>(data) {
        let _ = spec.validate();
    }
});
