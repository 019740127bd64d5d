use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Split<T> = (Vec<T>, Vec<T>, Vec<T>);

fn sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    if n < 10 {
        return Err(Error::Config(format!("{n} records are too few to split")));
    }
    let train = (n as f64 * a).round() as usize;
    let val = (n as f64 * b).round() as usize;
    if train == 0 || val == 0 || train + val >= n {
        return Err(Error::Config(format!(
            "fractions {fractions:?} leave an empty split of {n} records"
        )));
    }
    Ok((train, val, n - train - val))
}

/// Seeded shuffle followed by contiguous slicing; sizes are rounded from the
/// fractions and the test split takes the remainder.
pub fn split<T: Clone>(records: &[T], fractions: (f64, f64, f64), seed: u64) -> Result<Split<T>> {
    let (train, val, _) = sizes(records.len(), fractions)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..train]),
        pick(&order[train..train + val]),
        pick(&order[train + val..]),
    ))
}

/// Like [`split`], but each stratum (records sharing `key`) is split on its
/// own, so class proportions carry over to every part.
pub fn stratified_split<T: Clone, K: Ord>(
    records: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
    key: impl Fn(&T) -> K,
) -> Result<Split<T>> {
    sizes(records.len(), fractions)?;
    let mut strata: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(key(r)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut idx) in strata {
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let a = (n * fractions.0).round() as usize;
        let b = ((n * fractions.1).round() as usize).min(idx.len() - a);
        train.extend(idx[..a].iter().map(|&i| records[i].clone()));
        val.extend(idx[a..a + b].iter().map(|&i| records[i].clone()));
        test.extend(idx[a + b..].iter().map(|&i| records[i].clone()));
    }
    for (name, part) in [("training", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok((train, val, test))
}
