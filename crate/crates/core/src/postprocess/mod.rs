//! Classical post-processing: symmetrization, reconciliation, privacy
//! amplification and final-key export.

pub mod cascade;
pub mod toeplitz;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::keyrate::KeyRateReport;
use crate::protocol::RawKeys;
use crate::quantum::binary_entropy;

pub use cascade::{error_correct, Reconciliation};
pub use toeplitz::ToeplitzHash;

/// Independent generator per stage so stages never share randomness.
pub(crate) fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut sub_rng(seed, 0));
    order
}

/// `out[k] = bits[order[k]]`
pub fn apply_permutation(bits: &[bool], order: &[usize]) -> Vec<bool> {
    order.iter().map(|&i| bits[i]).collect()
}

/// Permutes both raw keys by the same seeded permutation.
pub fn symmetrize(keys: &RawKeys, seed: u64) -> Result<RawKeys> {
    if keys.info_a.len() != keys.info_b.len() {
        return Err(Error::Dimension(format!(
            "raw keys have lengths {} and {}",
            keys.info_a.len(),
            keys.info_b.len()
        )));
    }
    let order = permutation(keys.len(), seed);
    RawKeys::new(apply_permutation(&keys.info_a, &order), apply_permutation(&keys.info_b, &order))
}

/// Toeplitz hash of `key` down to `final_len` bits.
pub fn privacy_amplify(key: &[bool], final_len: usize, seed: u64) -> Result<Vec<bool>> {
    if final_len > key.len() {
        return Err(Error::InvalidArgument(format!(
            "final length {final_len} exceeds input length {}",
            key.len()
        )));
    }
    if final_len == 0 {
        return Ok(Vec::new());
    }
    Ok(ToeplitzHash::new(key.len(), final_len, seed).apply(key))
}

/// `⌊n·max(r, 0)⌋`, reduced by any reconciliation leakage beyond the
/// `n·h(Q_Z)` already charged inside the rate.
pub fn final_length(n: usize, report: &KeyRateReport, ec_leakage: u64) -> usize {
    let base = (n as f64 * report.rate.max(0.0)).floor();
    let budget = n as f64 * binary_entropy(report.inputs.q_z.clamp(0.0, 1.0)).unwrap_or(1.0);
    let excess = (ec_leakage as f64 - budget).max(0.0).ceil();
    ((base - excess).max(0.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalKeyResult {
    #[serde(skip)]
    pub key_a: Vec<bool>,
    #[serde(skip)]
    pub key_b: Vec<bool>,
    pub raw_len: usize,
    pub q_z: f64,
    pub ec_leakage: u64,
    pub corrections: usize,
    pub final_len: usize,
    pub verified: bool,
}

impl FinalKeyResult {
    pub fn summary(&self) -> String {
        format!(
            "n={} q_z={} ec_leakage={} final_len={} verified={}",
            self.raw_len,
            g9(self.q_z),
            self.ec_leakage,
            self.final_len,
            self.verified
        )
    }

    /// A's key as lowercase hex, then the summary line.
    pub fn export(&self) -> String {
        format!("{}\n{}\n", bits_to_hex(&self.key_a), self.summary())
    }
}

/// Most significant bit first; the last byte is zero-padded.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let bytes: Vec<u8> = bits
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |b, (i, &x)| b | ((x as u8) << (7 - i))))
        .collect();
    hex::encode(bytes)
}

/// Symmetrize, reconcile with the given `Q_Z` estimate, then hash both keys to
/// the length allowed by `report`. A result is verified only when
/// reconciliation left no mismatch.
pub fn distill(keys: &RawKeys, qz_estimate: f64, report: &KeyRateReport, seed: u64) -> Result<FinalKeyResult> {
    let shuffled = symmetrize(keys, seed)?;
    let rec = error_correct(&shuffled, qz_estimate, seed)?;
    let final_len = final_length(keys.len(), report, rec.leakage);
    let pa_seed = rand::RngCore::next_u64(&mut sub_rng(seed, 3));
    let key_a = privacy_amplify(&rec.keys.info_a, final_len, pa_seed)?;
    let key_b = privacy_amplify(&rec.keys.info_b, final_len, pa_seed)?;
    let verified = rec.is_verified() && key_a == key_b;
    Ok(FinalKeyResult {
        key_a,
        key_b,
        raw_len: keys.len(),
        q_z: qz_estimate,
        ec_leakage: rec.leakage,
        corrections: rec.corrections,
        final_len,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::{keyrate_semi_honest, keyrate_worst_low};
    use rand::Rng;

    fn noisy_pair(n: usize, rate: f64, seed: u64) -> RawKeys {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let b = a.iter().map(|&x| x ^ rng.random_bool(rate)).collect();
        RawKeys::new(a, b).unwrap()
    }

    #[test]
    fn identity_permutation_is_noop() {
        let keys = noisy_pair(50, 0.2, 0);
        let id: Vec<usize> = (0..50).collect();
        assert_eq!(apply_permutation(&keys.info_a, &id), keys.info_a);
    }

    #[test]
    fn symmetrize_preserves_mismatches() {
        let keys = noisy_pair(2000, 0.1, 1);
        let s = symmetrize(&keys, 7).unwrap();
        assert_eq!(s.mismatches(), keys.mismatches());
        assert_ne!(s, keys);
        assert_eq!(s, symmetrize(&keys, 7).unwrap());
    }

    #[test]
    fn symmetrize_rejects_length_mismatch() {
        let keys = RawKeys {
            info_a: vec![true; 3],
            info_b: vec![true; 2],
        };
        assert!(symmetrize(&keys, 0).is_err());
    }

    #[test]
    fn privacy_amplify_lengths() {
        let key = vec![true, false, true, true];
        assert!(privacy_amplify(&key, 0, 1).unwrap().is_empty());
        assert_eq!(privacy_amplify(&key, 3, 1).unwrap().len(), 3);
        assert_eq!(privacy_amplify(&key, 3, 1).unwrap(), privacy_amplify(&key, 3, 1).unwrap());
        assert!(privacy_amplify(&key, 5, 1).is_err());
    }

    #[test]
    fn final_length_examples() {
        let perfect = keyrate_worst_low(0.0, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(final_length(1000, &perfect, 0), 1000);
        let dead = keyrate_worst_low(0.2, 0.2, 0.2, 0.5).unwrap();
        assert!(dead.rate < 0.0);
        assert_eq!(final_length(1000, &dead, 0), 0);
        let r = keyrate_semi_honest(0.2, 0.2).unwrap();
        let budget = (1000.0 * binary_entropy(r.inputs.q_z).unwrap()) as u64;
        assert_eq!(final_length(1000, &r, budget), (1000.0 * r.rate).floor() as usize);
        assert_eq!(final_length(1000, &r, budget + 50), (1000.0 * r.rate).floor() as usize - 50);
        assert_eq!(final_length(1000, &r, 100_000), 0);
    }

    #[test]
    fn hex_export() {
        assert_eq!(bits_to_hex(&[true, false, false, false, false, false, false, true]), "81");
        assert_eq!(bits_to_hex(&[true, true, true, true, true]), "f8");
        assert_eq!(bits_to_hex(&[]), "");
    }

    #[test]
    fn distill_agrees_and_exports() {
        let r = keyrate_semi_honest(0.2, 0.2).unwrap();
        let keys = noisy_pair(10_000, r.inputs.q_z, 3);
        let out = distill(&keys, r.inputs.q_z, &r, 42).unwrap();
        assert!(out.verified);
        assert_eq!(out.key_a, out.key_b);
        assert_eq!(out.key_a.len(), out.final_len);
        let text = out.export();
        assert!(text.ends_with("verified=true\n"));
        assert_eq!(text.lines().next().unwrap().len(), out.final_len.div_ceil(8) * 2);
    }
}
