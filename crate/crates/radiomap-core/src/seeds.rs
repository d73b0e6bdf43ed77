//! Deterministic seed derivation.
//!
//! Every random decision in the pipeline draws from a seed derived from the
//! master seed plus a label and indices, so artifacts are reproducible from
//! the manifest alone and independent stages never share RNG streams.

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `master`, a stream label and index values.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ label_hash(label));
    for &i in indices {
        s = splitmix64(s ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    s
}
