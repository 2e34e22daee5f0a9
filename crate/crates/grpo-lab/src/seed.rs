//! Deterministic seed derivation.
//!
//! All randomness in the lab flows from one global seed. Stage and per-sample
//! seeds are derived by stable hashing so that work units can run in any
//! order (or in parallel) without changing results.

/// Derive a child seed from a global seed and a textual label.
///
/// Uses FNV-1a over the label followed by a splitmix64 finalizer. The mapping
/// is stable across platforms and releases of this crate.
///
/// ```
/// use grpo_lab::seed::derive_seed;
/// assert_eq!(derive_seed(42, "sft"), derive_seed(42, "sft"));
/// assert_ne!(derive_seed(42, "sft"), derive_seed(42, "grpo"));
/// ```
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ global;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(h)
}

/// Derive a child seed from a global seed, a label, and an index.
pub fn derive_seed_indexed(global: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(global, label) ^ splitmix64(index.wrapping_add(0x9e3779b97f4a7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
