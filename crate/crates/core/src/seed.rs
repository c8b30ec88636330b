//! Deterministic seed derivation. Every stage gets its own stream derived
//! from the master seed, so changing one stage's inputs never shifts the
//! random draws of another.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &p| splitmix64(h ^ p))
}

/// 64-bit FNV-1a, stable across platforms and compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed for `stage` within `fold` (use `u64::MAX` for fold-independent
/// stages).
pub fn derive_seed(master: u64, stage: &str, fold: u64) -> u64 {
    mix(&[master, fnv1a(stage.as_bytes()), fold])
}
