use sha2::{Digest, Sha256};

/// Hash that is stable across processes, platforms and toolchains.
pub fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Sum whose result does not depend on the order of `values`: terms are
/// added in ascending order.
pub fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_values() {
        assert_eq!(stable_hash("abc"), stable_hash("abc"));
        assert_ne!(stable_hash("abc"), stable_hash("abd"));
    }

    #[test]
    fn canonical_sum_ignores_order() {
        let mut a = [1e16, 1.0, -1e16, 3.5, 0.1];
        let mut b = [0.1, -1e16, 3.5, 1.0, 1e16];
        assert_eq!(canonical_sum(&mut a).to_bits(), canonical_sum(&mut b).to_bits());
    }
}
