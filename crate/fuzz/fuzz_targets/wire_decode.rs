#![no_main]

use libfuzzer_sys::fuzz_target;

use dqopt::quantizer::{decode, encode, wire_len};

// Wire decoding must never panic, and every accepted payload must
// re-encode to exactly the same bytes (the decoder rejects anything the
// encoder cannot produce: bad lengths, reserved header bits, nonzero
// padding, out-of-range index patterns).
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let d = (data[0] % 64) as usize;
    let bit_width = 2 + (data[1] % 32) as u32;
    let payload = &data[2..];
    if let Ok(q) = decode(payload, d, bit_width, 0.5) {
        assert_eq!(payload.len(), wire_len(d, bit_width));
        let (bytes, saturated) = encode(&q, bit_width);
        assert_eq!(saturated, 0, "decoded indices must be representable");
        assert_eq!(bytes, payload, "re-encoding must reproduce the wire bytes");
    }
});
