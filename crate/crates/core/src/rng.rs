//! Deterministic counter-based random streams.
//!
//! Every draw is a pure function of `(key, counter)`, so streams keyed by
//! `(run seed, iteration, task index)` produce identical values whether tasks
//! are sampled serially or from a worker pool. The generator is the SplitMix64
//! output function over an affine counter walk.

use crate::math;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based generator: stateless apart from the call counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self::keyed(&[seed])
    }

    /// Derive a key from an ordered tuple of stream identifiers, e.g.
    /// `[run_seed, iteration, task_index]`.
    pub fn keyed(parts: &[u64]) -> Self {
        let mut key = 0x853c_49e6_748f_ea9b;
        for (i, &p) in parts.iter().enumerate() {
            key = mix(key ^ p.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
        }
        Self { key, counter: 0 }
    }

    /// Independent stream derived from this one's key and a tag.
    pub fn substream(&self, tag: u64) -> CounterRng {
        CounterRng::keyed(&[self.key, tag])
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.uniform() * (hi - lo)
    }

    /// Standard normal draw (Box–Muller; consumes two uniforms per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        // 1 - u1 ∈ (0, 1], so the log is finite.
        let r = math::sqrt(-2.0 * math::ln(1.0 - u1));
        r * math::cos(core::f64::consts::TAU * u2)
    }
}
