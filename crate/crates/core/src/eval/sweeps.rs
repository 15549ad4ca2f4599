use serde::Serialize;

use super::split::identity_split;
use super::{fit_trajectories, mean, std_dev, test_error, Hyper, OutputChoice, SplitPlan};
use crate::data::{apply_mask, Mode, TrajectoryDataset};
use crate::error::{invalid, Result};
use crate::kernel::{KernelSpec, OutputStructure};
use crate::model::{fit, output_matrix};
use crate::rng::child_seed;
use crate::solver::build_lowrank_a;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankRow {
    pub split_id: usize,
    pub rank: usize,
    pub mse: f64,
    pub mse_half: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankSummary {
    pub rank: usize,
    pub mse_half_mean: f64,
    pub mse_half_std: f64,
    pub mse_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankSweep {
    pub rows: Vec<RankRow>,
    /// Sorted by rank.
    pub summary: Vec<RankSummary>,
    /// Whether the mean test error never increases with rank.
    pub nonincreasing: bool,
}

/// Test error per split as a function of `rank(A)`, with `V` recomputed from
/// each split's training outputs.
pub fn rank_sweep(data: &TrajectoryDataset, plan: &SplitPlan, mode: &Mode, hyper: &Hyper, ranks: &[usize]) -> Result<RankSweep> {
    if ranks.is_empty() {
        return Err(invalid("rank sweep needs at least one rank"));
    }
    let mut rows = Vec::with_capacity(plan.n_splits * ranks.len());
    for (s, (train, test)) in identity_split(data, plan)?.into_iter().enumerate() {
        let triplets = mode.build(&train)?;
        let (_, basis) = build_lowrank_a(&output_matrix(&triplets), 0)?;
        for &rank in ranks {
            let spec = KernelSpec::new(
                hyper.gamma_x,
                hyper.gamma_theta,
                OutputStructure::LowRank { rank, basis: basis.clone() },
            )?;
            let e = test_error(&fit(&triplets, &spec, hyper.lambda)?, &test, mode)?;
            rows.push(RankRow { split_id: s, rank, mse: e.mse, mse_half: e.mse_half });
        }
    }
    let mut sorted: Vec<usize> = ranks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let summary: Vec<RankSummary> = sorted
        .iter()
        .map(|&rank| {
            let half: Vec<f64> = rows.iter().filter(|r| r.rank == rank).map(|r| r.mse_half).collect();
            let full: Vec<f64> = rows.iter().filter(|r| r.rank == rank).map(|r| r.mse).collect();
            RankSummary { rank, mse_half_mean: mean(&half), mse_half_std: std_dev(&half), mse_mean: mean(&full) }
        })
        .collect();
    let nonincreasing = summary.windows(2).all(|w| w[1].mse_half_mean <= w[0].mse_half_mean);
    Ok(RankSweep { rows, summary, nonincreasing })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaskRow {
    pub split_id: usize,
    pub observed_fraction: f64,
    pub mask: usize,
    pub mse: f64,
    pub mse_half: f64,
}

/// Natural logs of the per-split test error (averaged over masks), summarized
/// across splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaskSummary {
    pub observed_fraction: f64,
    pub log_mse_half_min: f64,
    pub log_mse_half_mean: f64,
    pub log_mse_half_max: f64,
    pub mse_half_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskSweep {
    pub rows: Vec<MaskRow>,
    /// In the order the fractions were given.
    pub summary: Vec<MaskSummary>,
}

impl MaskSweep {
    /// Number of adjacent pairs, ordered by decreasing observed fraction, where
    /// the mean test error drops.
    pub fn violations(&self) -> usize {
        let mut s = self.summary.clone();
        s.sort_by(|a, b| b.observed_fraction.total_cmp(&a.observed_fraction));
        s.windows(2).filter(|w| w[1].mse_half_mean < w[0].mse_half_mean).count()
    }
}

/// Test error when only a random `observed_fraction` of each training split
/// is available, averaged over `masks_per_split` masks. Mask `k` of split `s`
/// uses the same seed at every fraction, so its masks are nested.
pub fn missing_data_sweep(
    data: &TrajectoryDataset,
    plan: &SplitPlan,
    mode: &Mode,
    output: &OutputChoice,
    hyper: &Hyper,
    fractions: &[f64],
    masks_per_split: usize,
) -> Result<MaskSweep> {
    if fractions.is_empty() || masks_per_split == 0 {
        return Err(invalid("mask sweep needs at least one fraction and one mask per split"));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(invalid(format!("observed fraction must lie in [0, 1], got {f}")));
    }
    let splits = identity_split(data, plan)?;
    let mut rows = Vec::with_capacity(splits.len() * fractions.len() * masks_per_split);
    for (s, (train, test)) in splits.iter().enumerate() {
        for &f in fractions {
            for k in 0..masks_per_split {
                let masked = apply_mask(train, f, child_seed(plan.seed, s as u64, k as u64))?;
                let e = test_error(&fit_trajectories(&masked, mode, output, hyper)?, test, mode)?;
                rows.push(MaskRow { split_id: s, observed_fraction: f, mask: k, mse: e.mse, mse_half: e.mse_half });
            }
        }
    }
    let per_split = fractions.len() * masks_per_split;
    let summary = fractions
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let split_means: Vec<f64> = (0..splits.len())
                .map(|s| {
                    let start = s * per_split + fi * masks_per_split;
                    mean(&rows[start..start + masks_per_split].iter().map(|r| r.mse_half).collect::<Vec<_>>())
                })
                .collect();
            let logs: Vec<f64> = split_means.iter().map(|v| v.ln()).collect();
            MaskSummary {
                observed_fraction: f,
                log_mse_half_min: logs.iter().copied().fold(f64::INFINITY, f64::min),
                log_mse_half_mean: mean(&logs),
                log_mse_half_max: logs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mse_half_mean: mean(&split_means),
            }
        })
        .collect();
    Ok(MaskSweep { rows, summary })
}
