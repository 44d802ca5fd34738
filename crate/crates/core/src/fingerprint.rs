//! 64-bit FNV-1a fingerprint over a dataset's canonical manifest.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::dataset::LabeledDataset;

/// Hashes every item's id, label, shape and pixel payload in dataset order.
pub fn dataset_fingerprint(data: &LabeledDataset) -> u64 {
    let mut h = FnvHasher::default();
    for img in &data.items {
        h.write(img.id.as_bytes());
        h.write(&[0]);
        h.write(img.label.as_bytes());
        h.write(&[0]);
        h.write(&(img.width as u32).to_le_bytes());
        h.write(&(img.height as u32).to_le_bytes());
        h.write(&[img.channels as u8]);
        h.write(&img.pixels);
    }
    h.finish()
}

/// Fingerprints travel through JSON as fixed-width hex strings.
pub fn to_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

pub fn from_hex(s: &str) -> Option<u64> {
    u64::from_str_radix(s, 16).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_reference_vectors() {
        let mut h = FnvHasher::default();
        h.write(b"");
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        let mut h = FnvHasher::default();
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn hex_round_trip() {
        assert_eq!(
            from_hex(&to_hex(0x00ab_cdef_0123_4567)),
            Some(0x00ab_cdef_0123_4567)
        );
        assert_eq!(to_hex(1).len(), 16);
    }
}
