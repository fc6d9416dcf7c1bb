//! Seeded Toeplitz hashing over GF(2), bit-packed.

use rand::RngCore;

use super::sub_rng;

/// An `m × n` Toeplitz matrix `T[i][j] = t[i - j + n - 1]`, defined by its
/// `n + m - 1` diagonal bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzHash {
    n: usize,
    m: usize,
    diagonals: Vec<u64>,
}

fn word_at(words: &[u64], bit: usize) -> u64 {
    let (q, r) = (bit / 64, bit % 64);
    let lo = words.get(q).copied().unwrap_or(0) >> r;
    if r == 0 {
        lo
    } else {
        lo | words.get(q + 1).copied().unwrap_or(0) << (64 - r)
    }
}

fn pack(bits: impl ExactSizeIterator<Item = bool>) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, bit) in bits.enumerate() {
        if bit {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

fn set_bit(words: &mut [u64], i: usize, value: bool) {
    if value {
        words[i / 64] |= 1 << (i % 64);
    } else {
        words[i / 64] &= !(1 << (i % 64));
    }
}

impl ToeplitzHash {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        let len = n + m.max(1) - 1;
        let mut rng = sub_rng(seed, 2);
        let mut diagonals: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
        if !len.is_multiple_of(64) {
            if let Some(last) = diagonals.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        ToeplitzHash { n, m, diagonals }
    }

    /// Square, unit lower-triangular member of the family: always invertible.
    pub fn unit_lower_triangular(n: usize, seed: u64) -> Self {
        let mut h = Self::new(n, n, seed);
        for k in 0..n.saturating_sub(1) {
            set_bit(&mut h.diagonals, k, false);
        }
        if n > 0 {
            set_bit(&mut h.diagonals, n - 1, true);
        }
        h
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn output_len(&self) -> usize {
        self.m
    }

    /// Panics if `input.len()` differs from the declared input length.
    pub fn apply(&self, input: &[bool]) -> Vec<bool> {
        assert_eq!(input.len(), self.n, "Toeplitz input length");
        // out_i = parity(t[i..i+n] & reverse(x))
        let rev = pack(input.iter().rev().copied());
        (0..self.m)
            .map(|i| {
                let acc = rev
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (w, &x)| acc ^ (word_at(&self.diagonals, i + 64 * w) & x));
                acc.count_ones() % 2 == 1
            })
            .collect()
    }
}
