//! Counter-based derivation of independent random streams.
//!
//! A stream is identified by a master seed plus a short list of integer
//! keys (domain tag, channel id, angle bits, ...). Keys are folded through
//! SplitMix64 and the result seeds a ChaCha8 generator, so any stream can be
//! reconstructed without touching its neighbours.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep detection and QKD streams apart under one master seed.
pub const DOMAIN_DETECTION: u64 = 0x6465_7465_6374_696f;
pub const DOMAIN_QKD: u64 = 0x716b_645f_6262_6d39;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `keys` into a single 64-bit stream id.
pub fn stream_id(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

pub fn derive_stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_id(seed, keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference SplitMix64 generator seeded with 0
        let mut state = 0u64;
        let mut next = || {
            let out = splitmix64(state);
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            out
        };
        assert_eq!(next(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(next(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = derive_stream(7, &[1, 2]).random();
        let b: u64 = derive_stream(7, &[1, 2]).random();
        let c: u64 = derive_stream(7, &[2, 1]).random();
        let d: u64 = derive_stream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
