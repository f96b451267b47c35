//! Small shared utilities: grids and a seedable RNG.

/// `n` evenly spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two points");
    let step = (hi - lo) / (n as f64 - 1.0);
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// `n` logarithmically spaced points covering `[lo, hi]` inclusive; `lo > 0`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo, "log grid needs 0 < lo < hi");
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// SplitMix64: a tiny deterministic generator.
///
/// Used for seeded experiment draws so that identical seeds give
/// byte-identical outputs independent of external crate versions.
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

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Log-uniform in [lo, hi); both bounds positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo.ln(), hi.ln()).exp()
    }

    /// Uniform integer in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_cover_their_ranges() {
        let lin = linspace(0.0, 1.0, 5);
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = log_spaced(1e-3, 1e3, 7);
        assert!((log[0] - 1e-3).abs() < 1e-18);
        assert!((log[6] - 1e3).abs() < 1e-9);
        assert!((log[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rng_is_deterministic_and_in_range() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            let x = a.next_f64();
            assert_eq!(x, b.next_f64());
            assert!((0.0..1.0).contains(&x));
        }
        let mut c = SplitMix64::new(7);
        let v = c.log_uniform(1e-9, 1e-3);
        assert!(v >= 1e-9 && v < 1e-3);
    }
}
