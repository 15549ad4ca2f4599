use serde::{Deserialize, Serialize};

use super::split::{assert_disjoint, fold_indices};
use super::{Hyper, OutputChoice};
use crate::data::{Mode, TrajectoryDataset};
use crate::error::{invalid, Result, VitlError};
use crate::kernel::KernelSpec;
use crate::model::{fit_path, FitOptions};

/// Candidate values for each hyperparameter; the grid is their product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma_x: Vec<f64>,
    pub gamma_theta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl GridSpec {
    pub fn new(gamma_x: Vec<f64>, gamma_theta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        for (name, values) in [("gamma_x", &gamma_x), ("gamma_theta", &gamma_theta), ("lambda", &lambda)] {
            if values.is_empty() {
                return Err(invalid(format!("grid for {name} is empty")));
            }
            if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(invalid(format!("grid for {name} contains non-positive value {v}")));
            }
        }
        Ok(Self { gamma_x, gamma_theta, lambda })
    }

    pub fn single(h: Hyper) -> Result<Self> {
        Self::new(vec![h.gamma_x], vec![h.gamma_theta], vec![h.lambda])
    }

    pub fn size(&self) -> usize {
        self.gamma_x.len() * self.gamma_theta.len() * self.lambda.len()
    }
}

/// `count` values from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(invalid("log_spaced needs positive finite bounds and count ≥ 1"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (count - 1) as f64;
    let mut out: Vec<f64> = (0..count).map(|k| (a + step * k as f64).exp()).collect();
    out[0] = lo;
    out[count - 1] = hi;
    Ok(out)
}

/// One (fold, grid point) evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CvRow {
    pub fold: usize,
    pub gamma_x: f64,
    pub gamma_theta: f64,
    pub lambda: f64,
    pub mse: f64,
    pub mse_half: f64,
    pub n_observed: usize,
}

/// Fold-averaged validation error of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CvPoint {
    pub gamma_x: f64,
    pub gamma_theta: f64,
    pub lambda: f64,
    pub mse: f64,
    pub mse_half: f64,
}

impl CvPoint {
    pub fn hyper(&self) -> Hyper {
        Hyper { gamma_x: self.gamma_x, gamma_theta: self.gamma_theta, lambda: self.lambda }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub best: CvPoint,
    pub points: Vec<CvPoint>,
    pub rows: Vec<CvRow>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Lower mean error wins; ties go to larger λ, then smaller γ_Θ, then smaller γ_X.
fn preferred(c: &CvPoint, best: &CvPoint) -> bool {
    if !close(c.mse_half, best.mse_half) {
        return c.mse_half < best.mse_half;
    }
    if c.lambda != best.lambda {
        return c.lambda > best.lambda;
    }
    if c.gamma_theta != best.gamma_theta {
        return c.gamma_theta < best.gamma_theta;
    }
    c.gamma_x < best.gamma_x
}

/// K-fold cross-validation by identity over the product grid.
pub fn cross_validate(
    train: &TrajectoryDataset,
    grid: &GridSpec,
    folds: usize,
    mode: &Mode,
    output: &OutputChoice,
    seed: u64,
) -> Result<CvResult> {
    let n = train.n();
    let parts = fold_indices(n, folds, seed)?;
    let mut rows = Vec::with_capacity(folds * grid.size());
    for (f, held) in parts.iter().enumerate() {
        let rest: Vec<usize> = (0..n).filter(|i| held.binary_search(i).is_err()).collect();
        assert_disjoint(&rest, held, n);
        let fit_set = mode.build(&train.subset(&rest)?)?;
        let val_set = mode.build(&train.subset(held)?)?;
        if val_set.observed_count() == 0 {
            return Err(VitlError::Data(format!("fold {f} has no observed validation entries")));
        }
        let out = output.resolve(&fit_set)?;
        for &gx in &grid.gamma_x {
            for &gt in &grid.gamma_theta {
                let spec = KernelSpec::new(gx, gt, out.clone())?;
                let models = fit_path(&fit_set, &spec, &grid.lambda, FitOptions::default())?;
                for (&lambda, model) in grid.lambda.iter().zip(&models) {
                    let e = model.errors(&val_set)?;
                    rows.push(CvRow {
                        fold: f,
                        gamma_x: gx,
                        gamma_theta: gt,
                        lambda,
                        mse: e.mse,
                        mse_half: e.mse_half,
                        n_observed: e.n_observed,
                    });
                }
            }
        }
    }

    let per_fold = grid.size();
    let points: Vec<CvPoint> = (0..per_fold)
        .map(|g| {
            let of_point: Vec<&CvRow> = (0..folds).map(|f| &rows[f * per_fold + g]).collect();
            let k = folds as f64;
            CvPoint {
                gamma_x: of_point[0].gamma_x,
                gamma_theta: of_point[0].gamma_theta,
                lambda: of_point[0].lambda,
                mse: of_point.iter().map(|r| r.mse).sum::<f64>() / k,
                mse_half: of_point.iter().map(|r| r.mse_half).sum::<f64>() / k,
            }
        })
        .collect();
    let mut best = points[0];
    for p in &points[1..] {
        if preferred(p, &best) {
            best = *p;
        }
    }
    Ok(CvResult { best, points, rows })
}
