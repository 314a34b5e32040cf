//! Seed derivation. Every random choice in the workspace flows from one
//! 64-bit seed; sub-components get independent streams via a stable
//! FNV-1a/splitmix64 mix so adding a consumer never perturbs the others.

/// Derive a child seed for a named purpose from a base seed.
pub fn derive(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(base ^ h)
}

/// Derive a child seed for a named purpose plus an index (per item, per
/// epoch, ...).
pub fn derive_indexed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive(base, tag) ^ splitmix64(index.wrapping_add(0x9e3779b97f4a7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
