#![no_main]

use libfuzzer_sys::fuzz_target;

// Triplet-file parsing and objective construction must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(triplets) = dqopt::objectives::parse_triplets_text(text) {
        let _ = dqopt::objectives::MatrixFactorization::from_triplets(16, 16, 2, 3, &triplets);
    }
});
