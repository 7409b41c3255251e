#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    fakeinv_runner::roundtrip::check("dataset_csv", data);
});
