use rand::seq::SliceRandom;
use rand::Rng;

use super::TabularDataset;
use crate::error::{Error, Result};

/// Share of rows kept for training in the train/validation split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Uniformly random partition of `0..n` into `floor(ratio * n)` training
/// indices and the remainder for validation.
pub fn split_indices<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 rows to split, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let n_train = ((ratio * n as f64) + 1e-9).floor() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

pub fn split_train_val<R: Rng + ?Sized>(
    dataset: &TabularDataset,
    ratio: f64,
    rng: &mut R,
) -> Result<(TabularDataset, TabularDataset)> {
    let (t, v) = split_indices(dataset.len(), ratio, rng)?;
    Ok((dataset.select(&t), dataset.select(&v)))
}

/// Oversamples the minority class with replacement up to the majority count.
/// Only meant for training data.
pub fn resample_balance<R: Rng + ?Sized>(train: &TabularDataset, rng: &mut R) -> Result<TabularDataset> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in train.labels().iter().enumerate() {
        match l {
            0 | 1 => by_class[l].push(i),
            _ => return Err(Error::Data(format!("class balancing needs binary labels, found {l}"))),
        }
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::Data("class balancing needs both classes present".into()));
    }
    let (minority, majority) = if by_class[0].len() < by_class[1].len() {
        (&by_class[0], &by_class[1])
    } else {
        (&by_class[1], &by_class[0])
    };
    let mut rows: Vec<usize> = (0..train.len()).collect();
    for _ in 0..majority.len() - minority.len() {
        rows.push(minority[rng.random_range(0..minority.len())]);
    }
    rows.shuffle(rng);
    Ok(train.select(&rows))
}
