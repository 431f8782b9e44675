//! Seeded generators. Each call site derives its own stream from the user
//! seed and a fixed path of tags, so no generator state is shared.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for `seed` along `path`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn seeded(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stable 64-bit tag for a string, for use in derivation paths.
pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = seeded(1, &[2, 3]).gen();
        let b: u64 = seeded(1, &[2, 3]).gen();
        let c: u64 = seeded(1, &[3, 2]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive(1, &[]), derive(2, &[]));
        assert_ne!(tag("fc1"), tag("fc2"));
    }
}
