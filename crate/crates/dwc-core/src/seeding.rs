//! Stateless sub-seed derivation.
//!
//! Every RNG consumer in the crate derives its own stream from a base seed
//! and a fixed word tag, so streams stay independent, parallel work needs
//! no shared RNG state, and results are stable across platforms.

/// splitmix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent sub-seed from a base seed and a word sequence.
pub(crate) fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut s = mix(seed);
    for &w in words {
        s = mix(s ^ w);
    }
    s
}
