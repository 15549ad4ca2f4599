use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryDataset;
use crate::error::{invalid, Result};
use crate::rng::{stream, Domain};

/// Repeated train/test splits by identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub fold_count: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { n_splits: 10, test_fraction: 0.10, fold_count: 6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Identity indices for every split; each list is sorted.
pub fn split_indices(n: usize, plan: &SplitPlan) -> Result<Vec<SplitIndices>> {
    if plan.n_splits == 0 {
        return Err(invalid("at least one split is required"));
    }
    if !(plan.test_fraction > 0.0 && plan.test_fraction < 1.0) {
        return Err(invalid(format!("test fraction must lie in (0, 1), got {}", plan.test_fraction)));
    }
    let k = (plan.test_fraction * n as f64).round() as usize;
    if k == 0 || k >= n {
        return Err(invalid(format!(
            "{n} identities cannot be split with test fraction {} ({k} test identities)",
            plan.test_fraction
        )));
    }
    Ok((0..plan.n_splits)
        .map(|s| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream(plan.seed, Domain::Split, s as u64));
            let mut test = order[..k].to_vec();
            let mut train = order[k..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            SplitIndices { train, test }
        })
        .collect())
}

/// `(train, test)` datasets for every split of `plan`.
pub fn identity_split(data: &TrajectoryDataset, plan: &SplitPlan) -> Result<Vec<(TrajectoryDataset, TrajectoryDataset)>> {
    split_indices(data.n(), plan)?
        .into_iter()
        .map(|s| {
            assert_disjoint(&s.train, &s.test, data.n());
            Ok((data.subset(&s.train)?, data.subset(&s.test)?))
        })
        .collect()
}

/// Identity indices of each fold (sorted), drawn from the fold stream.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(invalid(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(invalid(format!("{folds} folds requested but only {n} identities are available")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Domain::Fold, 0));
    let mut out = vec![Vec::new(); folds];
    for (pos, &i) in order.iter().enumerate() {
        out[pos % folds].push(i);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

pub(crate) fn assert_disjoint(train: &[usize], test: &[usize], n: usize) {
    let mut seen = vec![0u8; n];
    for &i in train.iter().chain(test) {
        seen[i] += 1;
    }
    assert!(seen.iter().all(|&c| c == 1), "identity leakage between train and held-out sets");
}
