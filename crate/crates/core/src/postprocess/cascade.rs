//! Block-parity reconciliation with binary search and backtracking over
//! earlier passes (a simplified Cascade).

use rand::seq::SliceRandom;

use super::sub_rng;
use crate::error::{Error, Result};
use crate::protocol::RawKeys;

pub const PASSES: usize = 4;
/// Initial block size is `⌈BLOCK_FACTOR / Q_Z⌉`.
pub const BLOCK_FACTOR: f64 = 0.73;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reconciliation {
    /// A's key and B's key after correction.
    pub keys: RawKeys,
    /// Parity bits disclosed, counting every block parity and every
    /// binary-search query.
    pub leakage: u64,
    pub corrections: usize,
    pub passes_run: usize,
    pub residual_mismatches: usize,
}

impl Reconciliation {
    pub fn is_verified(&self) -> bool {
        self.residual_mismatches == 0
    }
}

pub fn initial_block_size(n: usize, qz_estimate: f64) -> usize {
    if qz_estimate <= 0.0 {
        return n.max(1);
    }
    ((BLOCK_FACTOR / qz_estimate).ceil() as usize).clamp(1, n.max(1))
}

struct Pass {
    /// Position in the pass order -> key index.
    order: Vec<usize>,
    /// Key index -> position in the pass order.
    position: Vec<usize>,
    block: usize,
    /// Whether A's and B's parities currently differ, per block.
    odd: Vec<bool>,
}

impl Pass {
    fn block_of(&self, key_index: usize) -> usize {
        self.position[key_index] / self.block
    }

    fn range(&self, blk: usize) -> (usize, usize) {
        let lo = blk * self.block;
        (lo, (lo + self.block).min(self.order.len()))
    }
}

fn parity(bits: &[bool], order: &[usize]) -> bool {
    order.iter().fold(false, |p, &i| p ^ bits[i])
}

/// Locates one differing bit in an odd-parity block by halving.
fn binary_search(a: &[bool], b: &[bool], order: &[usize], leakage: &mut u64) -> usize {
    let mut slice = order;
    while slice.len() > 1 {
        let (left, right) = slice.split_at(slice.len() / 2);
        *leakage += 1;
        slice = if parity(a, left) != parity(b, left) { left } else { right };
    }
    slice[0]
}

/// Corrects B's key toward A's. Pass 0 uses the key order; later passes use
/// seeded permutations and double the block size. Stops after the first pass
/// when it finds nothing to correct.
pub fn error_correct(keys: &RawKeys, qz_estimate: f64, seed: u64) -> Result<Reconciliation> {
    if !(0.0..0.5).contains(&qz_estimate) {
        return Err(Error::InvalidArgument(format!("Q_Z estimate {qz_estimate} must be in [0, 0.5)")));
    }
    let n = keys.len();
    let a = &keys.info_a;
    let mut b = keys.info_b.clone();
    let mut leakage = 0u64;
    let mut corrections = 0usize;
    let mut passes: Vec<Pass> = Vec::with_capacity(PASSES);
    let mut passes_run = 0;
    if n == 0 {
        return Ok(Reconciliation {
            keys: keys.clone(),
            leakage,
            corrections,
            passes_run,
            residual_mismatches: 0,
        });
    }
    let mut rng = sub_rng(seed, 1);
    let mut block = initial_block_size(n, qz_estimate);
    for pass_index in 0..PASSES {
        let mut order: Vec<usize> = (0..n).collect();
        if pass_index > 0 {
            order.shuffle(&mut rng);
        }
        let mut position = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            position[i] = pos;
        }
        let blocks = n.div_ceil(block);
        leakage += blocks as u64;
        let odd = (0..blocks)
            .map(|blk| {
                let chunk = &order[blk * block..((blk + 1) * block).min(n)];
                parity(a, chunk) != parity(&b, chunk)
            })
            .collect::<Vec<_>>();
        let found = odd.iter().any(|&o| o);
        passes.push(Pass {
            order,
            position,
            block,
            odd,
        });
        passes_run += 1;

        let current = passes.len() - 1;
        let mut work: Vec<(usize, usize)> = (0..blocks)
            .filter(|&blk| passes[current].odd[blk])
            .map(|blk| (current, blk))
            .collect();
        while let Some((p, blk)) = work.pop() {
            if !passes[p].odd[blk] {
                continue;
            }
            let (lo, hi) = passes[p].range(blk);
            let i = binary_search(a, &b, &passes[p].order[lo..hi], &mut leakage);
            b[i] = !b[i];
            corrections += 1;
            for (q, pass) in passes.iter_mut().enumerate() {
                let qb = pass.block_of(i);
                pass.odd[qb] = !pass.odd[qb];
                if pass.odd[qb] {
                    work.push((q, qb));
                }
            }
        }

        if !found && corrections == 0 {
            break;
        }
        block = (block * 2).min(n);
    }
    let residual_mismatches = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(Reconciliation {
        keys: RawKeys::new(a.clone(), b)?,
        leakage,
        corrections,
        passes_run,
        residual_mismatches,
    })
}
