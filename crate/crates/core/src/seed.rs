//! Seed splitting.
//!
//! Every random quantity derives from one 64-bit seed. A replication seed is
//! `mix(mix(seed ^ mix(r_index)) ^ rep)` with `mix` the SplitMix64 finalizer;
//! within a replication each purpose reads its own ChaCha8 stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used inside one replication.
pub mod stream {
    pub const ARRIVALS: u64 = 0;
    pub const SIZES: u64 = 1;
    pub const INITIAL: u64 = 2;
    pub const REFERENCE: u64 = 3;
    pub const WALK: u64 = 4;
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of the `r_index`-th system.
pub fn replication_seed(seed: u64, r_index: u64, rep: u64) -> u64 {
    mix(mix(seed ^ mix(r_index)) ^ rep)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(7, stream::ARRIVALS).random();
        let b: u64 = stream_rng(7, stream::SIZES).random();
        assert_ne!(a, b);
        assert_eq!(a, stream_rng(7, stream::ARRIVALS).random::<u64>());
    }

    #[test]
    fn replication_seeds_distinct() {
        let mut seen = std::collections::HashSet::new();
        for r in 0..10 {
            for rep in 0..1000 {
                assert!(seen.insert(replication_seed(1, r, rep)));
            }
        }
    }
}
