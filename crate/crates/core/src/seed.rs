//! Seed derivation.
//!
//! Every random stream in an experiment is derived from the master seed by
//! hashing a path of counters and labels with a 64-bit finaliser, so adding
//! a scene, policy or initialisation never shifts another stream.

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent and a numeric counter.
#[inline]
pub fn derive(parent: u64, counter: u64) -> u64 {
    mix64(parent ^ mix64(counter.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a child seed from a parent and a label (FNV-1a over the bytes).
pub fn derive_label(parent: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive(parent, h)
}
