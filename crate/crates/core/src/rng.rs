//! Deterministic keyed randomness.
//!
//! Every stochastic choice in the crate is drawn from a stream derived from a
//! list of integer key parts (seed, domain tag, indices). Equal keys give
//! equal streams on every run and at every thread count; distinct keys give
//! independent streams. Stateless per-element draws (`unit_f64`) make
//! parallel, order-free sampling possible: the value for (key, i) never
//! depends on what else was drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses key parts into one 64-bit key. Order-sensitive.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64 ^ (parts.len() as u64);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    h
}

/// Stable tag for a named stream domain, for use as a key part.
pub fn tag(name: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in name.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h
}

/// Seedable generator for sequential draws (permutations, placements).
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    let k = mix(parts);
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(k.wrapping_add(i as u64 + 1)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stateless uniform draw in [0, 1) for (key, index).
pub fn unit_f64(key: u64, index: u64) -> f64 {
    let h = splitmix64(mix(&[key, index]));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
