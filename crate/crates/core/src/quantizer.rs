//! Switching stochastic quantizer and baselines.
//!
//! The switching scheme rounds each coordinate stochastically onto one of two
//! uniform grids with spacing `ell`:
//!
//! - level-set 1 (even rounds): `{…, -ell, 0, ell, 2·ell, …}`
//! - level-set 2 (odd rounds):  `{…, -0.5·ell, 0.5·ell, 1.5·ell, …}`
//!
//! Rounding goes to one of the two bracketing grid points with probability
//! linear in the position inside the bracket, which makes the output an
//! unbiased estimate of the input with per-coordinate variance at most
//! `ell²/4`. Because the two grids are offset by `ell/2`, no input sits on a
//! grid point of both parities, so alternating them guarantees the quantizer
//! injects genuine noise at least every other round — the property that lets
//! the optimization dynamics shake off strict saddle points.
//!
//! Baselines: `Level1Only` (no switching, the scheme that goes quiet on its
//! own grid), `LogScale` (stochastic rounding between powers of `log_base`,
//! which preserves zero exactly and whose noise vanishes near the origin),
//! and `Identity` (infinite-precision exchange).

use rand::Rng;
use thiserror::Error;

use crate::rng::{stream, Domain};

/// Which quantization grid a round uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// Level-set 1: integer multiples of `ell`.
    Even,
    /// Level-set 2: odd half-integer multiples of `ell`.
    Odd,
}

impl Parity {
    /// Grid parity used by the switching scheme at round `k`.
    pub fn of_round(k: u64) -> Self {
        if k.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Quantizer variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerScheme {
    /// Alternate between the two level-sets by round parity.
    Switching,
    /// Always use level-set 1.
    Level1Only,
    /// Stochastic rounding between bracketing powers of `log_base`;
    /// sign carried separately, zero maps to zero.
    LogScale,
    /// Exact (infinite-precision) exchange.
    Identity,
}

impl QuantizerScheme {
    pub fn name(&self) -> &'static str {
        match self {
            QuantizerScheme::Switching => "switching",
            QuantizerScheme::Level1Only => "level1_only",
            QuantizerScheme::LogScale => "log_scale",
            QuantizerScheme::Identity => "identity",
        }
    }
}

/// Validated quantizer configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    /// Grid spacing `ell` (> 0).
    pub interval_ell: f64,
    pub scheme: QuantizerScheme,
    /// Wire bits per coordinate, including sign (2..=64).
    pub bit_width: u32,
    /// Grid base for `LogScale` (> 1); ignored by the other schemes.
    pub log_base: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum QuantizerError {
    #[error("quantization interval must be positive and finite, got {0}")]
    BadInterval(f64),
    #[error("bit width must be in 2..=64, got {0}")]
    BadBitWidth(u32),
    #[error("log base must be finite and > 1, got {0}")]
    BadLogBase(f64),
    #[error("non-finite value {value} in quantizer input (corrupted state)")]
    NonFinite { value: f64 },
}

impl QuantizerSpec {
    pub fn new(
        scheme: QuantizerScheme,
        interval_ell: f64,
        bit_width: u32,
    ) -> Result<Self, QuantizerError> {
        if !(interval_ell.is_finite() && interval_ell > 0.0) {
            return Err(QuantizerError::BadInterval(interval_ell));
        }
        if !(2..=64).contains(&bit_width) {
            return Err(QuantizerError::BadBitWidth(bit_width));
        }
        Ok(Self {
            interval_ell,
            scheme,
            bit_width,
            log_base: 2.0,
        })
    }

    pub fn with_log_base(mut self, log_base: f64) -> Result<Self, QuantizerError> {
        if !(log_base.is_finite() && log_base > 1.0) {
            return Err(QuantizerError::BadLogBase(log_base));
        }
        self.log_base = log_base;
        Ok(self)
    }

    /// Wire bits one broadcast of a `d`-vector costs under this spec.
    /// The identity baseline ships raw 64-bit floats.
    pub fn bits_per_vector(&self, d: usize) -> u128 {
        let per_coord = match self.scheme {
            QuantizerScheme::Identity => 64,
            _ => self.bit_width as u128,
        };
        per_coord * d as u128
    }
}

/// A vector realized on one of the two uniform grids.
///
/// Coordinate `j` decodes to `indices[j]·ell` under even parity and
/// `(indices[j] + 0.5)·ell` under odd parity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub indices: Vec<i64>,
    pub parity: Parity,
    pub interval_ell: f64,
}

impl QuantizedVector {
    pub fn decode_coord(&self, j: usize) -> f64 {
        match self.parity {
            Parity::Even => self.indices[j] as f64 * self.interval_ell,
            Parity::Odd => (self.indices[j] as f64 + 0.5) * self.interval_ell,
        }
    }

    pub fn decode(&self) -> Vec<f64> {
        (0..self.indices.len()).map(|j| self.decode_coord(j)).collect()
    }

    /// Clamp all indices into the signed `bit_width`-bit range
    /// `[-(2^(b-1)-1), 2^(b-1)-1]`, returning the number of clamped entries.
    pub fn saturate(&mut self, bit_width: u32) -> u64 {
        let max = max_index(bit_width);
        let mut clamped = 0;
        for idx in &mut self.indices {
            if *idx > max {
                *idx = max;
                clamped += 1;
            } else if *idx < -max {
                *idx = -max;
                clamped += 1;
            }
        }
        clamped
    }
}

/// Largest representable index magnitude for a signed `bit_width`-bit field.
/// The two's-complement minimum is never used, keeping the range symmetric.
fn max_index(bit_width: u32) -> i64 {
    if bit_width >= 64 {
        i64::MAX
    } else {
        (1i64 << (bit_width - 1)) - 1
    }
}

fn ensure_finite(v: f64) -> Result<(), QuantizerError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(QuantizerError::NonFinite { value: v })
    }
}

/// Stochastically round one coordinate onto the grid of the given parity.
///
/// Even parity: with `n·ell ≤ v < (n+1)·ell`, returns `n·ell` with
/// probability `1-p` and `(n+1)·ell` with probability `p = v/ell - n`.
/// Odd parity: with `(n'-0.5)·ell ≤ v < (n'+0.5)·ell`, returns
/// `(n'-0.5)·ell` or `(n'+0.5)·ell` with probability `p' = v/ell - n' + 0.5`
/// for the upper point. A value already on the active grid is returned
/// deterministically (`p = 0` by the half-open bracket).
pub fn quantize_coord<R: Rng + ?Sized>(
    v: f64,
    parity: Parity,
    ell: f64,
    rng: &mut R,
) -> Result<f64, QuantizerError> {
    assert!(ell > 0.0, "quantization interval must be positive");
    let idx = quantize_coord_index(v, parity, ell, rng)?;
    Ok(match parity {
        Parity::Even => idx as f64 * ell,
        Parity::Odd => (idx as f64 + 0.5) * ell,
    })
}

/// Index form of [`quantize_coord`]: the realized grid point is
/// `idx·ell` (even) or `(idx + 0.5)·ell` (odd).
fn quantize_coord_index<R: Rng + ?Sized>(
    v: f64,
    parity: Parity,
    ell: f64,
    rng: &mut R,
) -> Result<i64, QuantizerError> {
    ensure_finite(v)?;
    let t = v / ell;
    match parity {
        Parity::Even => {
            // n·ell ≤ v < (n+1)·ell, upper point with probability t - n.
            let n = t.floor();
            let p = t - n;
            let up = p > 0.0 && rng.random::<f64>() < p;
            Ok(n as i64 + i64::from(up))
        }
        Parity::Odd => {
            // (n'-0.5)·ell ≤ v < (n'+0.5)·ell, upper point with
            // probability t - n' + 0.5. Stored index m decodes to
            // (m + 0.5)·ell, so m = n' - 1 + Bernoulli.
            let np = (t + 0.5).floor();
            let p = t - np + 0.5;
            let up = p > 0.0 && rng.random::<f64>() < p;
            Ok(np as i64 - 1 + i64::from(up))
        }
    }
}

fn quantize_log_coord<R: Rng + ?Sized>(
    v: f64,
    log_base: f64,
    rng: &mut R,
) -> Result<f64, QuantizerError> {
    ensure_finite(v)?;
    if v == 0.0 {
        return Ok(0.0);
    }
    let a = v.abs();
    let mut n = (a.ln() / log_base.ln()).floor();
    // ln round-off can misplace the bracket by one step; fix it up.
    while log_base.powf(n + 1.0) <= a {
        n += 1.0;
    }
    while log_base.powf(n) > a {
        n -= 1.0;
    }
    let lo = log_base.powf(n);
    let hi = log_base.powf(n + 1.0);
    let p = (a - lo) / (hi - lo);
    let mag = if rng.random::<f64>() < p { hi } else { lo };
    Ok(v.signum() * mag)
}

/// One realized quantization of a vector: the values the receivers observe,
/// plus the grid representation when the scheme is grid-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub values: Vec<f64>,
    pub grid: Option<QuantizedVector>,
}

/// Quantize a vector for round `iteration_k` under `spec`, one independent
/// draw per coordinate. The switching scheme picks the grid from the round
/// parity; `Level1Only` always uses level-set 1; `Identity` returns the
/// input unchanged; `LogScale` rounds stochastically between bracketing
/// powers of `log_base`.
pub fn quantize_vector<R: Rng + ?Sized>(
    v: &[f64],
    iteration_k: u64,
    spec: &QuantizerSpec,
    rng: &mut R,
) -> Result<Quantized, QuantizerError> {
    match spec.scheme {
        QuantizerScheme::Identity => {
            for &x in v {
                ensure_finite(x)?;
            }
            Ok(Quantized {
                values: v.to_vec(),
                grid: None,
            })
        }
        QuantizerScheme::LogScale => {
            let values = v
                .iter()
                .map(|&x| quantize_log_coord(x, spec.log_base, rng))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Quantized { values, grid: None })
        }
        QuantizerScheme::Switching | QuantizerScheme::Level1Only => {
            let parity = match spec.scheme {
                QuantizerScheme::Switching => Parity::of_round(iteration_k),
                _ => Parity::Even,
            };
            let q = quantize_grid_vector(v, parity, spec.interval_ell, rng)?;
            Ok(Quantized {
                values: q.decode(),
                grid: Some(q),
            })
        }
    }
}

/// Grid-scheme realization at an explicit parity.
pub fn quantize_grid_vector<R: Rng + ?Sized>(
    v: &[f64],
    parity: Parity,
    ell: f64,
    rng: &mut R,
) -> Result<QuantizedVector, QuantizerError> {
    assert!(ell > 0.0, "quantization interval must be positive");
    let indices = v
        .iter()
        .map(|&x| quantize_coord_index(x, parity, ell, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantizedVector {
        indices,
        parity,
        interval_ell: ell,
    })
}

/// Sample mean of `Q(v)` and sample mean of `‖Q(v)-v‖²` over `n_samples`
/// independent realizations, drawn from the `Estimate` stream of `seed`.
/// Grid schemes quantize at the explicit `parity`; the log-scale and
/// identity baselines ignore it.
pub fn empirical_moments(
    v: &[f64],
    spec: &QuantizerSpec,
    parity: Parity,
    n_samples: u64,
    seed: u64,
) -> Result<(Vec<f64>, f64), QuantizerError> {
    assert!(n_samples >= 1, "need at least one sample");
    for &x in v {
        ensure_finite(x)?;
    }
    if spec.scheme == QuantizerScheme::Identity {
        return Ok((v.to_vec(), 0.0));
    }
    let mut rng = stream(seed, Domain::Estimate, 0, 0);
    let mut mean = vec![0.0; v.len()];
    let mut mse = 0.0;
    // Allocation-free inner loop; the sweep sizes here reach 1e5 samples.
    for _ in 0..n_samples {
        let mut sq = 0.0;
        for (j, &x) in v.iter().enumerate() {
            let q = match spec.scheme {
                QuantizerScheme::LogScale => quantize_log_coord(x, spec.log_base, &mut rng)?,
                _ => quantize_coord(x, parity, spec.interval_ell, &mut rng)?,
            };
            mean[j] += q;
            let e = q - x;
            sq += e * e;
        }
        mse += sq;
    }
    let n = n_samples as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok((mean, mse / n))
}

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("payload is empty (missing header byte)")]
    Empty,
    #[error("reserved header bits must be zero, got {0:#04x}")]
    ReservedBits(u8),
    #[error("payload length {got} does not match {expected} for the declared shape")]
    BadLength { expected: usize, got: usize },
    #[error("zero-padding bits must be zero")]
    BadPadding,
    #[error("index pattern outside the symmetric range (the encoder saturates at ±(2^(b-1)-1))")]
    IndexOutOfRange,
    #[error("bit width must be in 2..=64, got {0}")]
    BadBitWidth(u32),
    #[error("quantization interval must be positive and finite, got {0}")]
    BadInterval(f64),
}

/// Wire byte length of an encoded `d`-vector: 1 header byte plus the packed
/// indices padded up to a whole byte.
pub fn wire_len(d: usize, bit_width: u32) -> usize {
    1 + (d * bit_width as usize).div_ceil(8)
}

/// Pack a quantized vector into the wire format: one header byte (bit 0 =
/// parity, bits 1..7 reserved zero) followed by big-endian two's-complement
/// indices of `bit_width` bits each, zero-padded to a byte boundary.
///
/// Indices outside the representable range are clamped to the extreme and
/// counted; the caller decides whether a nonzero count flags the run.
pub fn encode(q: &QuantizedVector, bit_width: u32) -> (Vec<u8>, u64) {
    assert!((2..=64).contains(&bit_width), "bit width must be in 2..=64");
    let max = max_index(bit_width);
    let mut saturated = 0u64;
    let mut out = Vec::with_capacity(wire_len(q.indices.len(), bit_width));
    out.push(match q.parity {
        Parity::Even => 0u8,
        Parity::Odd => 1u8,
    });
    let mut acc: u8 = 0;
    let mut used: u32 = 0;
    for &raw in &q.indices {
        let idx = if raw > max {
            saturated += 1;
            max
        } else if raw < -max {
            saturated += 1;
            -max
        } else {
            raw
        };
        let bits = (idx as u64) & mask(bit_width);
        for b in (0..bit_width).rev() {
            acc = (acc << 1) | (((bits >> b) & 1) as u8);
            used += 1;
            if used == 8 {
                out.push(acc);
                acc = 0;
                used = 0;
            }
        }
    }
    if used > 0 {
        out.push(acc << (8 - used));
    }
    (out, saturated)
}

fn mask(bit_width: u32) -> u64 {
    if bit_width >= 64 {
        u64::MAX
    } else {
        (1u64 << bit_width) - 1
    }
}

/// Decode a wire payload produced by [`encode`]. The vector length,
/// bit width, and interval are carried out of band.
pub fn decode(
    bytes: &[u8],
    d: usize,
    bit_width: u32,
    ell: f64,
) -> Result<QuantizedVector, WireError> {
    if !(2..=64).contains(&bit_width) {
        return Err(WireError::BadBitWidth(bit_width));
    }
    if !(ell.is_finite() && ell > 0.0) {
        return Err(WireError::BadInterval(ell));
    }
    let Some((&header, payload)) = bytes.split_first() else {
        return Err(WireError::Empty);
    };
    if header & !1 != 0 {
        return Err(WireError::ReservedBits(header));
    }
    let parity = if header & 1 == 0 {
        Parity::Even
    } else {
        Parity::Odd
    };
    let expected = wire_len(d, bit_width) - 1;
    if payload.len() != expected {
        return Err(WireError::BadLength {
            expected,
            got: payload.len(),
        });
    }
    let mut indices = Vec::with_capacity(d);
    let mut pos: usize = 0;
    for _ in 0..d {
        let mut bits: u64 = 0;
        for _ in 0..bit_width {
            let byte = payload[pos / 8];
            let bit = (byte >> (7 - (pos % 8))) & 1;
            bits = (bits << 1) | bit as u64;
            pos += 1;
        }
        // Sign-extend from bit_width bits.
        let idx = if bits >> (bit_width - 1) & 1 == 1 {
            (bits | !mask(bit_width)) as i64
        } else {
            bits as i64
        };
        // The encoder's range is symmetric; the two's-complement minimum
        // never appears on a well-formed wire.
        if idx == -1 - max_index(bit_width) {
            return Err(WireError::IndexOutOfRange);
        }
        indices.push(idx);
    }
    // Trailing padding must be zero.
    while pos < payload.len() * 8 {
        if (payload[pos / 8] >> (7 - (pos % 8))) & 1 != 0 {
            return Err(WireError::BadPadding);
        }
        pos += 1;
    }
    Ok(QuantizedVector {
        indices,
        parity,
        interval_ell: ell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DQ_TEST: u64 = 0x51_75_61_6E;

    fn rng_for(tag: u64) -> rand_chacha::ChaCha8Rng {
        stream(DQ_TEST, Domain::Estimate, tag, 0)
    }

    #[test]
    fn grid_point_is_deterministic() {
        let ell = 0.5;
        let mut rng = rng_for(1);
        for _ in 0..200 {
            let q = quantize_coord(2.0 * ell, Parity::Even, ell, &mut rng).unwrap();
            assert_eq!(q, 2.0 * ell);
        }
    }

    #[test]
    fn odd_parity_at_zero_is_a_fair_coin() {
        let mut rng = rng_for(2);
        let mut ups = 0u32;
        let n = 100_000;
        for _ in 0..n {
            let q = quantize_coord(0.0, Parity::Odd, 1.0, &mut rng).unwrap();
            assert!(q == 0.5 || q == -0.5, "support must be {{-0.5, 0.5}}, got {q}");
            if q == 0.5 {
                ups += 1;
            }
        }
        let frac = ups as f64 / n as f64;
        // 4-sigma band around 0.5 for a fair Bernoulli.
        assert!((frac - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "frac {frac}");
    }

    #[test]
    fn even_parity_empirical_mean_tracks_input() {
        // v = 0.3, ell = 1: mean over 1e5 seeded draws within 0.300 +/- 0.006.
        let mut rng = rng_for(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += quantize_coord(0.3, Parity::Even, 1.0, &mut rng).unwrap();
        }
        let mean = sum / n as f64;
        assert!((mean - 0.3).abs() < 0.006, "mean {mean}");
    }

    #[test]
    fn two_point_support_brackets_input() {
        let mut rng = rng_for(4);
        let ell = 0.37;
        for i in 0..500 {
            let v = -7.0 + i as f64 * 0.031;
            for parity in [Parity::Even, Parity::Odd] {
                let q = quantize_coord(v, parity, ell, &mut rng).unwrap();
                assert!((q - v).abs() < ell, "output must bracket input within ell");
                // On-grid check for the active parity.
                let t = q / ell;
                let snapped = match parity {
                    Parity::Even => t.round(),
                    Parity::Odd => (t - 0.5).round() + 0.5,
                };
                assert!((t - snapped).abs() < 1e-9, "off-grid output {q} at {v}");
            }
        }
    }

    #[test]
    fn level1_grid_points_get_exactly_half_ell_noise_at_odd_parity() {
        let mut rng = rng_for(5);
        let ell = 0.25;
        for n in -8i64..=8 {
            let v = n as f64 * ell;
            for _ in 0..50 {
                let q = quantize_coord(v, Parity::Odd, ell, &mut rng).unwrap();
                assert_eq!((q - v).abs(), ell / 2.0);
            }
        }
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut rng = rng_for(6);
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(matches!(
                quantize_coord(bad, Parity::Even, 1.0, &mut rng),
                Err(QuantizerError::NonFinite { .. })
            ));
        }
    }

    #[test]
    fn identity_scheme_is_exact() {
        let spec = QuantizerSpec::new(QuantizerScheme::Identity, 1.0, 9).unwrap();
        let v = [0.123456789, -std::f64::consts::PI, 1e-12];
        let mut rng = rng_for(7);
        let q = quantize_vector(&v, 3, &spec, &mut rng).unwrap();
        assert_eq!(q.values, v.to_vec());
        assert!(q.grid.is_none());
    }

    #[test]
    fn log_scale_preserves_zero_exactly() {
        let spec = QuantizerSpec::new(QuantizerScheme::LogScale, 1.0, 9)
            .unwrap()
            .with_log_base(2.0)
            .unwrap();
        let mut rng = rng_for(8);
        for k in 0..10 {
            let q = quantize_vector(&[0.0, 0.0], k, &spec, &mut rng).unwrap();
            assert_eq!(q.values, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn log_scale_support_and_unbiasedness() {
        let base: f64 = 2.0;
        let v: f64 = 0.7;
        let lo = base.powf((v.ln() / base.ln()).floor());
        let hi = lo * base;
        let mut rng = rng_for(9);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let q = quantize_log_coord(v, base, &mut rng).unwrap();
            assert!(q == lo || q == hi, "support must be {{{lo}, {hi}}}, got {q}");
            sum += q;
        }
        let mean = sum / n as f64;
        let sigma = ((hi - v) * (v - lo)).sqrt();
        assert!((mean - v).abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        // Sign carried separately.
        let qneg = quantize_log_coord(-v, base, &mut rng).unwrap();
        assert!(qneg == -lo || qneg == -hi);
    }

    #[test]
    fn switching_scheme_follows_round_parity() {
        let spec = QuantizerSpec::new(QuantizerScheme::Switching, 1.0, 9).unwrap();
        let mut rng = rng_for(10);
        let even = quantize_vector(&[0.0, 0.0], 4, &spec, &mut rng).unwrap();
        assert_eq!(even.values, vec![0.0, 0.0]); // on level-set 1, deterministic
        let odd = quantize_vector(&[0.0, 0.0], 5, &spec, &mut rng).unwrap();
        for q in &odd.values {
            assert_eq!(q.abs(), 0.5); // forced onto level-set 2
        }
        let grid = odd.grid.unwrap();
        assert_eq!(grid.parity, Parity::Odd);
    }

    #[test]
    fn realizations_are_seed_deterministic() {
        let spec = QuantizerSpec::new(QuantizerScheme::Switching, 0.3, 9).unwrap();
        let v = [0.11, -2.7, 5.03];
        let a = quantize_vector(&v, 7, &spec, &mut stream(42, Domain::Quantize, 1, 7)).unwrap();
        let b = quantize_vector(&v, 7, &spec, &mut stream(42, Domain::Quantize, 1, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moments_on_half_grid_point() {
        // v = 0.5*ell at even parity: p = 0.5, variance ell^2/4.
        let ell = 0.4;
        let spec = QuantizerSpec::new(QuantizerScheme::Level1Only, ell, 9).unwrap();
        let n = 100_000u64;
        let (mean, mse) = empirical_moments(&[0.5 * ell], &spec, Parity::Even, n, 11).unwrap();
        let band = 4.0 * (0.5 * ell) / (n as f64).sqrt();
        assert!((mean[0] - 0.5 * ell).abs() < band);
        assert!(mse <= ell * ell);
    }

    #[test]
    fn moments_on_active_grid_are_exact() {
        // Dyadic grid values keep the sample-mean accumulation exact, so the
        // "already on the grid" case can be asserted bitwise.
        let ell = 0.5;
        let spec = QuantizerSpec::new(QuantizerScheme::Level1Only, ell, 9).unwrap();
        let v = [3.0 * ell, -ell, 0.0];
        let (mean, mse) = empirical_moments(&v, &spec, Parity::Even, 1000, 12).unwrap();
        assert_eq!(mean, v.to_vec());
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn moments_quarter_points_match_bernoulli_variance() {
        // v = (0.25, 0.75), ell = 1: E[MSE] = 0.1875*2 = 0.375 <= d*ell^2 = 2.
        let spec = QuantizerSpec::new(QuantizerScheme::Level1Only, 1.0, 9).unwrap();
        let (_, mse) = empirical_moments(&[0.25, 0.75], &spec, Parity::Even, 100_000, 13).unwrap();
        assert!((mse - 0.375).abs() < 0.02, "mse {mse}");
        assert!(mse <= 2.0);
    }

    #[test]
    fn wire_example_round_trips() {
        let q = QuantizedVector {
            indices: vec![0, 1, -1],
            parity: Parity::Even,
            interval_ell: 0.5,
        };
        let (bytes, saturated) = encode(&q, 9);
        assert_eq!(saturated, 0);
        // 1 header byte + ceil(3*9/8) = 4 payload bytes.
        assert_eq!(bytes.len(), 5);
        let back = decode(&bytes, 3, 9, 0.5).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn wire_saturates_at_symmetric_extreme() {
        let q = QuantizedVector {
            indices: vec![300, -300, 12],
            parity: Parity::Odd,
            interval_ell: 1.0,
        };
        let (bytes, saturated) = encode(&q, 9);
        assert_eq!(saturated, 2);
        let back = decode(&bytes, 3, 9, 1.0).unwrap();
        assert_eq!(back.indices, vec![255, -255, 12]);
    }

    #[test]
    fn wire_lengths_match_packing_rule() {
        // d = 100, bit width 10: 125 payload bytes + 1 header = 1008 bits.
        assert_eq!(wire_len(100, 10), 126);
        let q = QuantizedVector {
            indices: vec![0; 100],
            parity: Parity::Even,
            interval_ell: 1.0,
        };
        let (bytes, _) = encode(&q, 10);
        assert_eq!(bytes.len() * 8, 1008);
    }

    #[test]
    fn decode_rejects_malformed_input() {
        assert_eq!(decode(&[], 1, 9, 1.0), Err(WireError::Empty));
        assert_eq!(decode(&[2, 0, 0], 1, 9, 1.0), Err(WireError::ReservedBits(2)));
        assert!(matches!(
            decode(&[0, 0, 0, 0], 1, 9, 1.0),
            Err(WireError::BadLength { expected: 2, .. })
        ));
        // 1 coordinate at 9 bits: last 7 bits of the 2-byte payload are padding.
        assert_eq!(decode(&[0, 0, 1], 1, 9, 1.0), Err(WireError::BadPadding));
        // The 9-bit two's-complement minimum (-256) never appears on a
        // well-formed wire (the encoder saturates at ±255).
        assert_eq!(decode(&[0, 0x80, 0], 1, 9, 1.0), Err(WireError::IndexOutOfRange));
        assert!(matches!(decode(&[0, 0, 0], 1, 1, 1.0), Err(WireError::BadBitWidth(1))));
        assert!(matches!(decode(&[0, 0, 0], 1, 9, -1.0), Err(WireError::BadInterval(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            QuantizerSpec::new(QuantizerScheme::Switching, 0.0, 9),
            Err(QuantizerError::BadInterval(_))
        ));
        assert!(matches!(
            QuantizerSpec::new(QuantizerScheme::Switching, 1.0, 1),
            Err(QuantizerError::BadBitWidth(1))
        ));
        assert!(matches!(
            QuantizerSpec::new(QuantizerScheme::LogScale, 1.0, 9).unwrap().with_log_base(1.0),
            Err(QuantizerError::BadLogBase(_))
        ));
    }

    proptest! {
        /// Unbiasedness + bounded variance over random vectors and both parities.
        #[test]
        fn grid_moments_within_lemma_bounds(
            seed in any::<u64>(),
            odd in any::<bool>(),
            coords in proptest::collection::vec(-10.0f64..10.0, 1..6),
        ) {
            let ell = 1.0;
            let spec = QuantizerSpec::new(QuantizerScheme::Switching, ell, 16).unwrap();
            let parity = if odd { Parity::Odd } else { Parity::Even };
            let n = 20_000u64;
            let d = coords.len() as f64;
            let (mean, mse) = empirical_moments(&coords, &spec, parity, n, seed).unwrap();
            let band = 5.0 * (ell / 2.0) / (n as f64).sqrt();
            for (m, v) in mean.iter().zip(&coords) {
                prop_assert!((m - v).abs() < band, "mean {m} vs {v}");
            }
            prop_assert!(mse <= d * ell * ell);
            // Per-coordinate variance is p(1-p)ell^2 <= ell^2/4; allow sampling slack.
            prop_assert!(mse <= d * ell * ell / 4.0 * 1.10 + 1e-9);
        }

        /// decode . encode is the identity on non-saturating vectors.
        #[test]
        fn wire_round_trip(
            odd in any::<bool>(),
            bit_width in 2u32..=20,
            raw in proptest::collection::vec(any::<i32>(), 0..40),
        ) {
            let max = super::max_index(bit_width);
            let indices: Vec<i64> = raw.iter().map(|&r| (r as i64).clamp(-max, max)).collect();
            let q = QuantizedVector {
                indices,
                parity: if odd { Parity::Odd } else { Parity::Even },
                interval_ell: 0.25,
            };
            let (bytes, saturated) = encode(&q, bit_width);
            prop_assert_eq!(saturated, 0);
            prop_assert_eq!(bytes.len(), wire_len(q.indices.len(), bit_width));
            let back = decode(&bytes, q.indices.len(), bit_width, 0.25).unwrap();
            prop_assert_eq!(back, q);
        }
    }
}
