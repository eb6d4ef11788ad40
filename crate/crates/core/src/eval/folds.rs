use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Held-out row sets for k-fold cross-validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
    /// `folds[f]` lists the rows held out in fold `f`, ascending.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Rows used for training in fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut held = vec![false; self.n_rows()];
        for &i in &self.folds[f] {
            held[i] = true;
        }
        (0..held.len()).filter(|&i| !held[i]).collect()
    }

    /// Short digest of the fold assignment, for checking that several models
    /// saw the same splits.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (f, rows) in self.folds.iter().enumerate() {
            h.update((f as u64).to_le_bytes());
            for &i in rows {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seeded shuffle followed by round-robin assignment. When stratified, each
/// class is shuffled separately and the round robin continues from one class
/// into the next, so both fold sizes and per-fold class counts differ by at
/// most one.
pub fn make_folds(n: usize, k: usize, stratified: bool, labels: &[u8], seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidParams(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    if stratified && labels.len() != n {
        return Err(Error::InvalidParams(format!("{} labels for {n} rows", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<Vec<usize>> = if stratified {
        let mut classes: Vec<u8> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        classes
            .into_iter()
            .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for i in stratum {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, stratified, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leave_one_out_sizes() {
        let plan = make_folds(10, 10, false, &[], 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn reference_cohort_folds() {
        let labels: Vec<u8> = (0..740).map(|i| u8::from(i < 394)).collect();
        let plan = make_folds(740, 10, true, &labels, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.len(), 74);
            let pos = f.iter().filter(|&&i| labels[i] == 1).count();
            assert!(pos == 39 || pos == 40, "{pos}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        assert!(make_folds(5, 6, false, &[], 0).is_err());
        assert!(make_folds(5, 1, false, &[], 0).is_err());
        assert!(make_folds(5, 2, true, &[0, 1], 0).is_err());
    }

    #[test]
    fn train_indices_complement() {
        let plan = make_folds(23, 4, false, &[], 2).unwrap();
        for f in 0..4 {
            let mut all = plan.train_indices(f);
            all.extend(&plan.folds[f]);
            all.sort_unstable();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
        assert_eq!(plan.hash(), make_folds(23, 4, false, &[], 2).unwrap().hash());
        assert_ne!(plan.hash(), make_folds(23, 4, false, &[], 3).unwrap().hash());
    }

    proptest! {
        #[test]
        fn partition_and_balance(labels in prop::collection::vec(0u8..2, 2..300), k in 2usize..12, seed in any::<u64>(), stratified in any::<bool>()) {
            let n = labels.len();
            prop_assume!(k <= n);
            let plan = make_folds(n, k, stratified, &labels, seed).unwrap();
            let mut seen: Vec<usize> = plan.folds.concat();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            if stratified {
                let pos: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == 1).count()).collect();
                prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
            }
        }
    }
}
