//! Subject-level train/test splitting. Slices never leak across the
//! boundary because the split happens on subject ids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Randomly assign `train_count` subjects to the training cohort and the
/// rest to testing. Deterministic under `seed`; both cohorts come back
/// sorted.
pub fn split_subjects(
    subject_ids: &[String],
    train_count: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if train_count > subject_ids.len() {
        return Err(Error::Config(format!(
            "train_count {train_count} exceeds subject count {}",
            subject_ids.len()
        )));
    }
    let mut ids: Vec<String> = subject_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != subject_ids.len() {
        return Err(Error::Data("duplicate subject ids in split input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut train: Vec<String> = ids[..train_count].to_vec();
    let mut test: Vec<String> = ids[train_count..].to_vec();
    train.sort();
    test.sort();
    Ok((train, test))
}
