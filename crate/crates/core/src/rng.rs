//! Counter-based, splittable 64-bit generator.
//!
//! Every draw is `mix(key + counter * GOLDEN)` where `mix` is the SplitMix64
//! finalizer, so a stream is fully described by `(key, counter)` and
//! reproduces bit-for-bit on any platform. `split(id)` derives an independent
//! child key without advancing the parent. Floats use the top 53 bits.
//! Only integer arithmetic and `libm` are used, never the platform libm.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT: u64 = 0xD1B5_4A32_D192_ED03;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            key: mix(seed ^ SPLIT),
            counter: 0,
        }
    }

    /// Independent child stream; the parent is not advanced.
    pub fn split(&self, stream: u64) -> Rng {
        Rng {
            key: mix(self.key ^ mix(stream.wrapping_add(1).wrapping_mul(SPLIT))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-64 * n, irrelevant here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller on `libm` for cross-platform bit equality.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }
}
