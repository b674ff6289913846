//! Pinned pseudo-random number generator and shuffle.
//!
//! Every seeded operation in the toolkit (dataset splits, epoch shuffles,
//! synthetic data) draws from the same generator so that results are
//! reproducible bit-for-bit across runs and across reimplementations in
//! other languages. The update rule is fixed and documented here; do not
//! swap it for a platform RNG.
//!
//! SplitMix64 (Steele, Lea & Flood's `splitmix64` finalizer):
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z  = state
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//! z ^= z >> 27;  z *= 0x94D049BB133111EB
//! z ^= z >> 31
//! ```
//!
//! all arithmetic modulo 2^64. The shuffle is Fisher–Yates from the top:
//! for `i` in `n-1 .. 1`, draw `j = next_u64() mod (i + 1)` and swap
//! elements `i` and `j`.

/// 64-bit SplitMix generator with the pinned update rule above.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, bound)` via modulo reduction.
    ///
    /// The modulo bias is below 2^-53 for every bound used here; the simple
    /// rule is part of the pinned shuffle contract.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        self.next_u64() % bound
    }

    /// Uniform f64 in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate via Box–Muller on two uniform draws.
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle with the pinned index rule.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
