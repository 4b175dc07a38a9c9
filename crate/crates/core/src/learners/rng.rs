//! Deterministic seed derivation for independent random substreams.

/// Derive substream `index` from a base seed with the splitmix64 finalizer.
/// The mapping is fixed: changing it invalidates every recorded seed, so it
/// must never be altered.
pub(crate) fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_stable_and_distinct() {
        // Pinned outputs: these values are relied on by recorded seeds.
        assert_eq!(splitmix64(0, 0), 16294208416658607535);
        assert_eq!(splitmix64(0, 1), 7960286522194355700);
        assert_eq!(splitmix64(20170401, 0), splitmix64(20170401, 0));
        assert_ne!(splitmix64(20170401, 0), splitmix64(20170401, 1));
        assert_ne!(splitmix64(20170401, 0), splitmix64(20170402, 0));
    }
}
