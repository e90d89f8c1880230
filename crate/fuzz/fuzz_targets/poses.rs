#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| egopose_fuzz::poses(data));
