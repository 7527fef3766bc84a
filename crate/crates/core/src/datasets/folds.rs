use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Class proportions preserved per split; odd remainders go to training.
    Stratified,
    /// Every group id lands wholly on one side.
    Grouped,
    Plain,
}

/// One random train/test split. Indices are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

pub fn make_folds(
    dataset: &Dataset,
    n_folds: usize,
    test_fraction: f64,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<Vec<Fold>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if strategy == SplitStrategy::Grouped && dataset.group_ids().is_none() {
        return Err(Error::Configuration(
            "grouped split requested but the dataset has no group ids".into(),
        ));
    }
    (0..n_folds)
        .map(|k| {
            let fold_seed = seed::derive(seed, &[seed::stage::FOLDS, k as u64]);
            let test = match strategy {
                SplitStrategy::Plain => plain_test(dataset.n(), test_fraction, fold_seed),
                SplitStrategy::Stratified => stratified_test(dataset, test_fraction, fold_seed),
                SplitStrategy::Grouped => grouped_test(dataset, test_fraction, fold_seed),
            };
            Ok(complete_fold(dataset.n(), test, fold_seed))
        })
        .collect()
}

fn complete_fold(n: usize, mut test: Vec<usize>, seed: u64) -> Fold {
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Fold {
        train_indices: train,
        test_indices: test,
        seed,
    }
}

fn plain_test(n: usize, frac: f64, seed: u64) -> Vec<usize> {
    let n_test = (n as f64 * frac).floor() as usize;
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n_test);
    idx
}

fn stratified_test(ds: &Dataset, frac: f64, seed: u64) -> Vec<usize> {
    let mut by_class: Vec<(u64, Vec<usize>)> = Vec::new();
    for (i, y) in ds.targets().iter().enumerate() {
        let key = y.to_bits();
        match by_class.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => by_class.push((key, vec![i])),
        }
    }
    by_class.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)));
    let mut rng = seed::rng(seed);
    let mut test = Vec::new();
    for (_, mut members) in by_class {
        let k = (members.len() as f64 * frac).floor() as usize;
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..k]);
    }
    test
}

fn grouped_test(ds: &Dataset, frac: f64, seed: u64) -> Vec<usize> {
    let groups = ds.group_ids().expect("checked by caller");
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        members
            .entry(g.as_str())
            .or_insert_with(|| {
                order.push(g.as_str());
                Vec::new()
            })
            .push(i);
    }
    let mut rng = seed::rng(seed);
    order.shuffle(&mut rng);
    let target = (ds.n() as f64 * frac).floor() as usize;
    let mut test = Vec::new();
    for g in &order {
        let m = &members[g];
        if test.len() + m.len() <= target {
            test.extend_from_slice(m);
        }
    }
    if test.is_empty() && order.len() > 1 {
        test.extend_from_slice(&members[order[0]]);
    }
    test
}

/// Keep `m` training rows chosen uniformly without replacement; the test
/// side is untouched.
pub fn subsample_train(fold: &Fold, m: usize, seed: u64) -> Result<Fold> {
    let available = fold.train_indices.len();
    if m > available {
        return Err(Error::Argument(format!(
            "cannot subsample {m} rows from a training set of {available}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut train: Vec<usize> = index::sample(&mut rng, available, m)
        .into_iter()
        .map(|k| fold.train_indices[k])
        .collect();
    train.sort_unstable();
    Ok(Fold {
        train_indices: train,
        test_indices: fold.test_indices.clone(),
        seed,
    })
}
