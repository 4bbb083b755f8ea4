//! Deterministic seeded RNG used by every generator and sampler in this crate.
//!
//! The generator is SplitMix64 with Lemire bounded draws and Fisher-Yates
//! shuffling. All three pieces are pinned so that a fixed seed reproduces the
//! exact same draw sequence on any platform (and in any port of this
//! pipeline), which the shuffle/balance and sampling tests rely on.

/// A 64-bit SplitMix64 stream. Cheap to copy, single-owner by convention:
/// clone it if two consumers must not interleave draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Current stream state, for checkpointing. `SeededRng::new(state)`
    /// resumes the stream exactly where it left off.
    pub fn state(&self) -> u64 {
        self.state
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) via Lemire's multiply-shift rejection.
    ///
    /// Panics if `bound` is 0.
    pub fn gen_range(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "gen_range bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform index into a slice of length `len`.
    pub fn gen_index(&mut self, len: usize) -> usize {
        self.gen_range(len as u64) as usize
    }

    /// In-place Fisher-Yates shuffle, high index down.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.gen_index(i + 1);
            slice.swap(i, j);
        }
    }

    /// First `k` elements of a Fisher-Yates pass over `0..n`: a uniform
    /// k-subset of indices, in draw order, without replacement.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} indices from {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.gen_index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// Derive an independent stream bound to a string key and a lane number.
    ///
    /// Used where determinism must hold per (seed, key, lane) regardless of
    /// call order, e.g. the rigged mock endpoint's per-sample draws.
    pub fn derive(seed: u64, key: &str, lane: u64) -> Self {
        // FNV-1a over the key, then mix seed and lane through the stream.
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in key.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        let mut mixer = SeededRng::new(seed ^ h);
        let a = mixer.next_u64();
        let mut lane_mixer = SeededRng::new(a ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Self::new(lane_mixer.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden vectors computed with an independent SplitMix64 implementation;
    // the seed-1234567 row matches the published reference stream.
    #[test]
    fn splitmix64_golden_vectors() {
        let cases: [(u64, [u64; 4]); 3] = [
            (
                0,
                [
                    16294208416658607535,
                    7960286522194355700,
                    487617019471545679,
                    17909611376780542444,
                ],
            ),
            (
                42,
                [
                    13679457532755275413,
                    2949826092126892291,
                    5139283748462763858,
                    6349198060258255764,
                ],
            ),
            (
                1234567,
                [
                    6457827717110365317,
                    3203168211198807973,
                    9817491932198370423,
                    4593380528125082431,
                ],
            ),
        ];
        for (seed, expected) in cases {
            let mut rng = SeededRng::new(seed);
            for want in expected {
                assert_eq!(rng.next_u64(), want, "seed {seed}");
            }
        }
    }

    #[test]
    fn f64_draws_match_frozen_values() {
        let mut rng = SeededRng::new(7);
        let got: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
        let want = [0.3898297483912715, 0.01678829452815611, 0.9007606806068834];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "got {g}, want {w}");
        }
    }

    #[test]
    fn gen_range_first_binary_draws() {
        // Frozen from the same independent implementation: these seeds pin
        // the swap/identity cases for two-element shuffles.
        assert_eq!(SeededRng::new(3).gen_range(2), 0);
        assert_eq!(SeededRng::new(0).gen_range(2), 1);
    }

    #[test]
    fn gen_range_stays_in_bounds() {
        let mut rng = SeededRng::new(99);
        for bound in [1u64, 2, 3, 7, 100, u64::MAX] {
            for _ in 0..200 {
                assert!(rng.gen_range(bound) < bound);
            }
        }
    }

    #[test]
    fn shuffle_is_reproducible_and_permutes() {
        let mut a: Vec<u32> = (0..20).collect();
        let mut b = a.clone();
        SeededRng::new(11).shuffle(&mut a);
        SeededRng::new(11).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn sample_indices_unique_and_in_range() {
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            let picks = rng.sample_indices(10, 4);
            assert_eq!(picks.len(), 4);
            let mut dedup = picks.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), 4);
            assert!(picks.iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn derive_is_stable_and_key_sensitive() {
        let a = SeededRng::derive(1, "q-17", 0);
        let b = SeededRng::derive(1, "q-17", 0);
        assert_eq!(a, b);
        assert_ne!(
            SeededRng::derive(1, "q-17", 0).state(),
            SeededRng::derive(1, "q-18", 0).state()
        );
        assert_ne!(
            SeededRng::derive(1, "q-17", 0).state(),
            SeededRng::derive(1, "q-17", 1).state()
        );
        assert_ne!(
            SeededRng::derive(1, "q-17", 0).state(),
            SeededRng::derive(2, "q-17", 0).state()
        );
    }
}
