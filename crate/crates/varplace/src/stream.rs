//! Counter-based deterministic random streams.
//!
//! Monte Carlo code in this crate draws randomness as a pure function of
//! `(seed, counter...)` instead of consuming a stateful generator. That makes
//! every estimate independent of evaluation order and of how trials are
//! chunked across workers, which the evaluation contracts require.

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hash of a seed and up to three counters into one u64.
#[inline]
pub fn hash3(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    mix(seed ^ mix(a ^ mix(b ^ mix(c))))
}

/// Uniform f64 in [0, 1) from 53 bits of a hashed counter.
#[inline]
pub fn unit_f64(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    (hash3(seed, a, b, c) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli draw with probability `p` from a hashed counter.
#[inline]
pub fn bernoulli(seed: u64, a: u64, b: u64, c: u64, p: f64) -> bool {
    unit_f64(seed, a, b, c) < p
}

/// Domain separation tags so distinct uses of the same counters never collide.
pub mod domain {
    pub const PI_VALUE: u64 = 0x1001;
    pub const GATE_SURVIVAL: u64 = 0x1002;
    pub const INJECT: u64 = 0x1003;
    pub const STRIKE_X: u64 = 0x2001;
    pub const STRIKE_Y: u64 = 0x2002;
    pub const STRIKE_U: u64 = 0x2003;
}
