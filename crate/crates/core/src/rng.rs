//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, index, layer, kind)`, so a realization or an epoch can be
//! regenerated on its own, in any order, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    Means = 1,
    Biases = 2,
    Inputs = 3,
    Probes = 4,
    Shuffle = 5,
    BinarySample = 6,
    Data = 7,
    Fields = 8,
}

/// A generator for one `(index, layer, kind)` stream of a seed.
pub fn stream(seed: u64, index: u64, layer: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index & 0xFFFF_FFFF) << 32) | ((layer & 0x00FF_FFFF) << 8) | kind as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |r: &mut ChaCha8Rng| (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>();
        let a = draw(&mut stream(7, 3, 2, StreamKind::Means));
        let b = draw(&mut stream(7, 3, 2, StreamKind::Means));
        assert_eq!(a, b);
        assert_ne!(a, draw(&mut stream(7, 3, 2, StreamKind::Biases)));
        assert_ne!(a, draw(&mut stream(7, 4, 2, StreamKind::Means)));
        assert_ne!(a, draw(&mut stream(7, 3, 1, StreamKind::Means)));
        assert_ne!(a, draw(&mut stream(8, 3, 2, StreamKind::Means)));
    }
}
