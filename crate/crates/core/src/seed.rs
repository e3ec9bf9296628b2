//! Deterministic seed derivation.
//!
//! All randomness in a run flows from one top-level seed. Stage, scene,
//! and per-call seeds are derived with splitmix64 over the parent seed
//! and a label, so parallel work can use independent streams while
//! staying byte-reproducible.

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a textual label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut state = splitmix64(parent ^ 0xA076_1D64_78BD_642F);
    for b in label.as_bytes() {
        state = splitmix64(state ^ u64::from(*b));
    }
    state
}

/// Derives a child seed from a parent seed and an index.
pub fn derive_seed_indexed(parent: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(parent, label) ^ splitmix64(index))
}
