#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| maxsive::fuzz_checks::attack_preset(data));
