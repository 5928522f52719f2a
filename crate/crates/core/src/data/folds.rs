//! Fixed test hold-out plus five rotating validation folds.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const DATASET_SIZE: usize = 26;
pub const TEST_SIZE: usize = 6;
pub const FOLDS: usize = 5;
pub const VAL_SIZE: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    #[serde(rename = "fold")]
    pub fold_index: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles the 26 ids, holds out 6 for test, and cuts the remaining 20
/// into 5 validation blocks of 4; each fold trains on the other 16.
pub fn kfold_split<R: Rng + ?Sized>(ids: &[String], rng: &mut R) -> Result<Vec<FoldSplit>, DataError> {
    if ids.len() != DATASET_SIZE {
        return Err(DataError::IdCount { expected: DATASET_SIZE, got: ids.len() });
    }
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::DuplicateId(id.clone()));
        }
    }
    let mut order = ids.to_vec();
    order.shuffle(rng);
    let (trainval, test) = order.split_at(DATASET_SIZE - TEST_SIZE);
    Ok((0..FOLDS)
        .map(|k| {
            let val = trainval[k * VAL_SIZE..(k + 1) * VAL_SIZE].to_vec();
            let train = trainval.iter().filter(|id| !val.contains(id)).cloned().collect();
            FoldSplit { fold_index: k, train, val, test: test.to_vec() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn sizes_and_partition() {
        let folds = kfold_split(&ids(26), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all_val = HashSet::new();
        for f in &folds {
            assert_eq!((f.train.len(), f.val.len(), f.test.len()), (16, 4, 6));
            let t: HashSet<_> = f.train.iter().collect();
            let v: HashSet<_> = f.val.iter().collect();
            let s: HashSet<_> = f.test.iter().collect();
            assert!(t.is_disjoint(&v) && t.is_disjoint(&s) && v.is_disjoint(&s));
            assert_eq!(f.test, folds[0].test);
            for id in &f.val {
                assert!(all_val.insert(id.clone()), "{id} validated twice");
            }
        }
        assert_eq!(all_val.len(), 20);
        let trainval: HashSet<_> = folds[0].train.iter().chain(&folds[0].val).cloned().collect();
        assert_eq!(all_val, trainval);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = kfold_split(&ids(26), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = kfold_split(&ids(26), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_count_rejected() {
        assert!(matches!(
            kfold_split(&ids(25), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DataError::IdCount { expected: 26, got: 25 })
        ));
    }

    #[test]
    fn json_uses_fold_key() {
        let f = FoldSplit { fold_index: 2, train: vec![], val: vec!["a".into()], test: vec![] };
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        assert_eq!(v["fold"], 2);
        assert_eq!(v["val"][0], "a");
    }
}
