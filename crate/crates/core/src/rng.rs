//! Counter-based deterministic randomness.
//!
//! Every Gaussian draw is a pure function of (seed, counter), so simulation
//! output is bit-identical regardless of evaluation order or thread count.
//! The mixer is splitmix64; normals come from Box-Muller on two mixed words.

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

#[inline]
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stateless counter RNG: `value(counter)` never depends on prior calls.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    /// Derive an independent stream, e.g. one per substream purpose.
    pub fn stream(&self, tag: u64) -> CounterRng {
        CounterRng {
            seed: splitmix64(self.seed ^ tag.wrapping_mul(GOLDEN)),
        }
    }

    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        splitmix64(self.seed.wrapping_add(counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in (0, 1): top 53 bits, offset so 0 is excluded.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        let bits = self.word(counter) >> 11;
        (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller (cosine branch) on counters
    /// (2 * counter, 2 * counter + 1).
    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform(counter.wrapping_mul(2));
        let u2 = self.uniform(counter.wrapping_mul(2).wrapping_add(1));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
