#![no_main]

use libfuzzer_sys::fuzz_target;

// Classification-sample parsing and objective construction must never
// panic; the pooled-mean invariant may reject, never crash.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(samples) = dqopt::objectives::parse_samples_text(text) {
        let _ = dqopt::objectives::LogisticBilinear::from_agent_samples(vec![samples], 0.1);
    }
});
