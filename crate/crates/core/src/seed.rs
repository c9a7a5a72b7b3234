//! Deterministic seed derivation from a single root seed.

/// Derive a child seed from `root` and a path of labels such as
/// `["evaluate", "US", "XG"]`. Stable across platforms and releases.
pub fn derive(root: u64, path: &[&str]) -> u64 {
    let mut h = splitmix(root ^ 0x6a09_e667_f3bc_c909);
    for part in path {
        // FNV-1a over the label, then mix into the running state.
        let mut f: u64 = 0xcbf2_9ce4_8422_2325;
        for b in part.as_bytes() {
            f ^= u64::from(*b);
            f = f.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = splitmix(h ^ f);
    }
    h
}

pub fn derive_index(root: u64, index: u64) -> u64 {
    splitmix(root ^ splitmix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
