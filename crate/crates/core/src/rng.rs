use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream identified by `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs small ids into a stream number under a domain tag.
pub fn stream_id(domain: u8, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(domain as u64, |acc, &p| acc.wrapping_mul(0x1_0000_01b3).wrapping_add(p + 1))
}
