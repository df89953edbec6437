use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::example::ExtendedExample;
use crate::data::vocab::PAD;

/// Padded batch. Masks are `true` on real tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Positions of the members in the input slice.
    pub indices: Vec<usize>,
    pub source: Vec<Vec<usize>>,
    pub source_mask: Vec<Vec<bool>>,
    pub target: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unpadded source of member `k`.
    pub fn source_row(&self, k: usize) -> Vec<usize> {
        unpad(&self.source[k], &self.source_mask[k])
    }

    pub fn target_row(&self, k: usize) -> Vec<usize> {
        unpad(&self.target[k], &self.target_mask[k])
    }
}

fn unpad(ids: &[usize], mask: &[bool]) -> Vec<usize> {
    ids.iter().zip(mask).filter(|(_, &m)| m).map(|(&i, _)| i).collect()
}

fn pad_rows(rows: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    rows.iter()
        .map(|r| {
            let mut ids = r.to_vec();
            let mut mask = vec![true; r.len()];
            ids.resize(width, PAD);
            mask.resize(width, false);
            (ids, mask)
        })
        .unzip()
}

/// Seeded shuffle, then consecutive chunks of `batch_size` padded to the
/// longest member. Sources use UNKed ids; targets use extended ids.
pub fn make_batches(examples: &[ExtendedExample], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let src: Vec<&[usize]> = chunk.iter().map(|&i| examples[i].source.ids.as_slice()).collect();
            let tgt: Vec<&[usize]> = chunk.iter().map(|&i| examples[i].target_ids.as_slice()).collect();
            let (source, source_mask) = pad_rows(&src);
            let (target, target_mask) = pad_rows(&tgt);
            Batch {
                indices: chunk.to_vec(),
                source,
                source_mask,
                target,
                target_mask,
            }
        })
        .collect()
}
