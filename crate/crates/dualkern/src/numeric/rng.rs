//! Deterministic, counter-based random number generation.
//!
//! Every random quantity in the library is a pure function of a 64-bit seed
//! and a stream/counter index. This makes weight initialization reproducible
//! and order-independent: parallel code can draw the value for edge `i`
//! without generating the values for edges `0..i` first.

/// SplitMix64 finalizer. Good avalanche, cheap, and stable across platforms.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream tag.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// A deterministic sequential RNG (SplitMix64).
///
/// Not cryptographically secure; intended for Monte Carlo simulation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// RNG whose stream is fully determined by `(seed, stream)`.
    #[inline]
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            state: derive_seed(seed, stream),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`, safe as a logarithm argument.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)`.
    #[inline]
    pub fn next_bounded(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Multiply-shift; bias is negligible for simulation bounds << 2^64.
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }

    /// A pair of independent standard normals.
    #[inline]
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        (self.next_normal(), self.next_normal())
    }

    /// A single standard normal (ziggurat).
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, self)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_bounded(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Counters per derived stream: normals are drawn in aligned blocks of 8,
/// so a bulk fill pays the stream setup once per 8 values while any single
/// counter remains a pure function of `(seed, index)`.
const BLOCK: u64 = 8;

/// The standard normal draw with counter `index` under `seed`.
#[inline]
pub fn normal_at(seed: u64, index: u64) -> f64 {
    let mut rng = CounterRng::new(seed, index / BLOCK);
    let mut value = rng.next_normal();
    for _ in 0..index % BLOCK {
        value = rng.next_normal();
    }
    value
}

/// Fill `out` with the normals for counters `start..start + out.len()`.
/// Bit-identical to calling [`normal_at`] per index.
pub fn fill_normals(seed: u64, start: u64, out: &mut [f64]) {
    let mut i = 0usize;
    let mut idx = start;
    while i < out.len() {
        let mut rng = CounterRng::new(seed, idx / BLOCK);
        let mut offset = idx % BLOCK;
        // replay any counters consumed before the requested start
        let mut value = rng.next_normal();
        while offset > 0 {
            value = rng.next_normal();
            offset -= 1;
        }
        loop {
            out[i] = value;
            i += 1;
            idx += 1;
            if i >= out.len() || idx.is_multiple_of(BLOCK) {
                break;
            }
            value = rng.next_normal();
        }
    }
}

/// rand_core adapter so distribution samplers can draw from a counter stream.
impl rand_core::RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (CounterRng::next_u64(self) >> 32) as u32
    }
    #[inline]
    fn next_u64(&mut self) -> u64 {
        CounterRng::next_u64(self)
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut chunks = dest.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&CounterRng::next_u64(self).to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let bytes = CounterRng::next_u64(self).to_le_bytes();
            rem.copy_from_slice(&bytes[..rem.len()]);
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
