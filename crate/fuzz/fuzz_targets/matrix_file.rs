#![no_main]

use libfuzzer_sys::fuzz_target;

// Matrix-file parsing and weight validation must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = dqopt::mixing::parse_matrix_text(text) {
        let _ = dqopt::mixing::MixingMatrix::from_weights(raw);
    }
});
