//! Named, reproducible random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Seed for the sub-stream `name` of `root`. Distinct names give
/// statistically independent ChaCha streams.
pub fn substream_seed(root: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    rng_from_seed(substream_seed(root, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_separate_streams() {
        assert_eq!(substream_seed(7, "fit/mdr_sst"), substream_seed(7, "fit/mdr_sst"));
        assert_ne!(substream_seed(7, "fit/mdr_sst"), substream_seed(7, "fit/nao"));
        assert_ne!(substream_seed(7, "a"), substream_seed(8, "a"));
    }
}
