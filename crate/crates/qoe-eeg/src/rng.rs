//! Deterministic random number streams.
//!
//! All randomness in this crate flows from one base seed. Independent stages
//! (synthesis, weight init, dropout, shuffling, fold assignment, grid cells)
//! derive their own [`Stream`] from that seed plus a list of tags via
//! [`derive`], so adding consumers to one stage never perturbs another. The
//! generator is SplitMix64: the internal state is a plain counter advanced by
//! a fixed odd constant and the output is a bijective mix of that counter,
//! which makes streams cheap to fork and fully reproducible across platforms.

/// Golden-ratio increment used by SplitMix64.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Bijective 64-bit finalizer from SplitMix64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a stage or stream name to a tag for [`derive`].
///
/// FNV-1a over the UTF-8 bytes. Using names instead of bare integers keeps
/// call sites self-describing, e.g. `derive(seed, &[tag("dropout"), layer])`.
pub fn tag(name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in name.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from a base seed and a list of tags.
///
/// Each tag is folded in through the SplitMix64 finalizer, so
/// `derive(s, &[a, b])` and `derive(s, &[b, a])` are unrelated streams and no
/// prefix of the tag list collides with a longer list in practice.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(base ^ GAMMA);
    for &t in tags {
        acc = mix(acc.wrapping_add(GAMMA) ^ t);
    }
    acc
}

/// A deterministic stream of pseudo-random values.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    state: u64,
    /// Second half of the most recent Box-Muller pair, if unconsumed.
    spare_gaussian: Option<f64>,
}

impl Stream {
    /// Creates a stream seeded directly with `seed`.
    pub fn new(seed: u64) -> Self {
        Stream { state: seed, spare_gaussian: None }
    }

    /// Creates a stream for a named sub-purpose of `base`.
    ///
    /// Shorthand for `Stream::new(derive(base, tags))`.
    pub fn derived(base: u64, tags: &[u64]) -> Self {
        Stream::new(derive(base, tags))
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`.
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`, unbiased via rejection. Panics if `n == 0`.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below requires a nonempty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal deviate via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let mut u1 = self.next_f64();
        while u1 <= 0.0 {
            u1 = self.next_f64();
        }
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
