//! Experiment protocols: identity splits, cross-validation, rank and
//! missing-data sweeps, generation paths, and a synthetic task with a
//! ground-truth oracle.

mod cv;
mod paths;
pub mod report;
mod split;
mod sweeps;
mod synthetic;

pub use cv::{cross_validate, log_spaced, CvPoint, CvResult, CvRow, GridSpec};
pub use paths::{angular_path, radial_path};
pub use split::{fold_indices, identity_split, split_indices, SplitIndices, SplitPlan};
pub use sweeps::{missing_data_sweep, rank_sweep, MaskRow, MaskSummary, MaskSweep, RankRow, RankSummary, RankSweep};
pub use synthetic::{generate_synthetic, SyntheticOracle, SyntheticTask};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{Mode, TrajectoryDataset, TripletDataset};
use crate::error::{invalid, Result};
use crate::kernel::{squared_distance, KernelSpec, OutputStructure};
use crate::model::{fit, output_matrix, ErrorSummary, VitlModel};
use crate::solver::build_lowrank_a;

/// One point of hyperparameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hyper {
    pub gamma_x: f64,
    pub gamma_theta: f64,
    pub lambda: f64,
}

/// How `A` is chosen for a training set.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputChoice {
    Identity,
    /// `V J_r Vᵀ` with `V` from the training outputs only.
    LowRank(usize),
    Explicit(DMatrix<f64>),
}

impl OutputChoice {
    pub fn resolve(&self, train: &TripletDataset) -> Result<OutputStructure> {
        Ok(match self {
            OutputChoice::Identity => OutputStructure::Identity,
            OutputChoice::LowRank(rank) => {
                let (_, basis) = build_lowrank_a(&output_matrix(train), *rank)?;
                OutputStructure::LowRank { rank: *rank, basis }
            }
            OutputChoice::Explicit(a) => OutputStructure::Explicit(a.clone()),
        })
    }
}

/// Builds training triplets from `train` and fits.
pub fn fit_trajectories(train: &TrajectoryDataset, mode: &Mode, output: &OutputChoice, hyper: &Hyper) -> Result<VitlModel> {
    let triplets = mode.build(train)?;
    let spec = KernelSpec::new(hyper.gamma_x, hyper.gamma_theta, output.resolve(&triplets)?)?;
    fit(&triplets, &spec, hyper.lambda)
}

/// Errors of `model` over the observed entries of `test`, built with `mode`.
pub fn test_error(model: &VitlModel, test: &TrajectoryDataset, mode: &Mode) -> Result<ErrorSummary> {
    model.errors(&mode.build(test)?)
}

/// `1 / median` of the nonzero squared pairwise distances.
pub fn median_heuristic<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let pts: Vec<&[f64]> = points.into_iter().collect();
    let mut dists: Vec<f64> = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for (a, u) in pts.iter().enumerate() {
        for v in &pts[a + 1..] {
            let d = squared_distance(u, v);
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(invalid("median heuristic needs at least two distinct points"));
    }
    dists.sort_by(f64::total_cmp);
    let k = dists.len();
    let median = if k % 2 == 1 { dists[k / 2] } else { 0.5 * (dists[k / 2 - 1] + dists[k / 2]) };
    Ok(1.0 / median)
}

/// Median-heuristic bandwidths `(γ_X, γ_Θ)` for a triplet set.
pub fn default_bandwidths(train: &TripletDataset) -> Result<(f64, f64)> {
    let gx = median_heuristic(train.inputs().iter().map(|x| x.as_slice()))?;
    let mut thetas: Vec<&[f64]> = Vec::new();
    for e in train.emotions().iter().flatten() {
        if !thetas.iter().any(|t| *t == e.coords()) {
            thetas.push(e.coords());
        }
    }
    let gt = median_heuristic(thetas)?;
    Ok((gx, gt))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mu = mean(v);
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_heuristic_values() {
        let pts = [[0.0], [1.0], [3.0]];
        // squared distances 1, 9, 4 → median 4
        assert_eq!(median_heuristic(pts.iter().map(|p| &p[..])).unwrap(), 0.25);
        let dup = [[2.0, 0.0], [2.0, 0.0]];
        assert!(median_heuristic(dup.iter().map(|p| &p[..])).is_err());
        let even = [[0.0], [1.0], [3.0], [7.0]];
        // 1, 9, 49, 4, 36, 16 → (9 + 16) / 2
        assert_eq!(median_heuristic(even.iter().map(|p| &p[..])).unwrap(), 1.0 / 12.5);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[5.0]), 0.0);
    }
}
