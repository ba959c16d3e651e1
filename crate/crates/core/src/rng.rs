//! Reproducible randomness. Every Monte Carlo path or sweep cell gets its own
//! ChaCha stream derived from one user seed, so results do not depend on how
//! work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a seed and a tuple of labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |h, &l| splitmix64(h ^ splitmix64(l)))
}

/// Draws an index from a probability vector by inversion. Falls back to the
/// last index with positive mass when rounding leaves `u` above the total.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, 1).random();
        let b: u64 = stream_rng(7, 1).random();
        let c: u64 = stream_rng(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derive_seed_depends_on_labels() {
        assert_eq!(derive_seed(1, &[6, 5]), derive_seed(1, &[6, 5]));
        assert_ne!(derive_seed(1, &[6, 5]), derive_seed(1, &[5, 6]));
    }

    #[test]
    fn sampling_respects_zero_mass() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..1000 {
            let i = sample_index(&mut rng, &[0.0, 0.4, 0.0, 0.6]);
            assert!(i == 1 || i == 3);
        }
    }
}
