#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = qoe_eeg::nn::parse_checkpoint_bytes(data);
});
