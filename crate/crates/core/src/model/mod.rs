//! The fitted estimator
//! `ĥ(x)(θ) = Σ_{i,j} k_X(x, x_i) k_Θ(θ, θ_{i,j}) A ĉ_{i,j}`
//! where the sum runs over observed anchor pairs only.

mod container;

pub use container::{FORMAT_VERSION, MAGIC};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::data::{observed_pairs, EmotionPoint, LandmarkVector, TripletDataset};
use crate::error::{dim, invalid, Result, VitlError};
use crate::kernel::{self, build_gram_kron, build_gram_pairs, shared_grid, GramMatrix, KernelSpec, OutputStructure};
use crate::solver::{solve_ridge_identity, SpectralSystem};

/// Which exact solver produced the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Kronecker,
    Ridge,
    Sylvester,
}

impl SolverPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPath::Kronecker => "kronecker",
            SolverPath::Ridge => "ridge",
            SolverPath::Sylvester => "sylvester",
        }
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        match s {
            "kronecker" => Some(SolverPath::Kronecker),
            "ridge" => Some(SolverPath::Ridge),
            "sylvester" => Some(SolverPath::Sylvester),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Never use the Kronecker factorization, even on a shared emotion grid.
    pub force_dense: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VitlModel {
    coefficients: DMatrix<f64>,
    effective: DMatrix<f64>,
    anchors_x: Vec<LandmarkVector>,
    anchors_theta: Vec<Vec<EmotionPoint>>,
    observed: Vec<Vec<bool>>,
    pairs: Vec<(usize, usize)>,
    spec: KernelSpec,
    a: DMatrix<f64>,
    lambda: f64,
    path: SolverPath,
}

/// Observed-pair targets stacked as rows, identity-major.
pub fn output_matrix(data: &TripletDataset) -> DMatrix<f64> {
    let pairs = data.observed_pairs();
    let d = data.d();
    DMatrix::from_fn(pairs.len(), d, |r, c| {
        let (i, j) = pairs[r];
        data.outputs()[i][j].as_slice()[c]
    })
}

/// Fits with default options.
pub fn fit(data: &TripletDataset, spec: &KernelSpec, lambda: f64) -> Result<VitlModel> {
    fit_with(data, spec, lambda, FitOptions::default())
}

pub fn fit_with(data: &TripletDataset, spec: &KernelSpec, lambda: f64, options: FitOptions) -> Result<VitlModel> {
    let mut models = fit_path(data, spec, &[lambda], options)?;
    Ok(models.remove(0))
}

/// Fits one model per `λ`, reusing the Gram matrix and any eigendecomposition.
pub fn fit_path(data: &TripletDataset, spec: &KernelSpec, lambdas: &[f64], options: FitOptions) -> Result<Vec<VitlModel>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(invalid(format!("lambda must be positive and finite, got {l}")));
    }
    let pairs = data.observed_pairs();
    if pairs.is_empty() {
        return Err(VitlError::Data("training set has no observed pairs".into()));
    }
    let anchors_theta: Vec<Vec<EmotionPoint>> =
        data.emotions().iter().map(|row| row.iter().map(EmotionPoint::without_label).collect()).collect();
    let a = spec.materialize_a(data.d())?;
    let y = output_matrix(data);

    let grid = if options.force_dense || !data.all_observed() { None } else { shared_grid(&anchors_theta) };
    let (path, gram) = match grid {
        Some(grid) => (SolverPath::Kronecker, build_gram_kron(data.inputs(), grid, spec)?),
        None => {
            let gram = build_gram_pairs(data.inputs(), &anchors_theta, &pairs, spec)?;
            let path = if spec.is_identity() { SolverPath::Ridge } else { SolverPath::Sylvester };
            (path, gram)
        }
    };

    let spectral = match path {
        SolverPath::Ridge => None,
        _ => Some(SpectralSystem::new(&gram, &a, &y)?),
    };
    lambdas
        .iter()
        .map(|&lambda| {
            let coefficients = match &spectral {
                Some(sys) => sys.solve(lambda)?,
                None => solve_ridge_identity(&gram, &y, lambda)?,
            };
            VitlModel::assemble(
                coefficients,
                data.inputs().to_vec(),
                anchors_theta.clone(),
                data.observed().to_vec(),
                spec.clone(),
                a.clone(),
                lambda,
                path,
            )
        })
        .collect()
}

impl VitlModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        coefficients: DMatrix<f64>,
        anchors_x: Vec<LandmarkVector>,
        anchors_theta: Vec<Vec<EmotionPoint>>,
        observed: Vec<Vec<bool>>,
        spec: KernelSpec,
        a: DMatrix<f64>,
        lambda: f64,
        path: SolverPath,
    ) -> Result<Self> {
        let pairs = observed_pairs(&observed);
        if coefficients.nrows() != pairs.len() {
            return Err(dim(format!(
                "{} coefficient rows for {} observed pairs",
                coefficients.nrows(),
                pairs.len()
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(VitlError::Numerical("non-finite coefficients".into()));
        }
        let effective = &coefficients * &a;
        Ok(Self { coefficients, effective, anchors_x, anchors_theta, observed, pairs, spec, a, lambda, path })
    }

    /// Same anchors and kernel, different coefficients.
    pub fn with_coefficients(&self, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.shape() != self.coefficients.shape() {
            return Err(dim("replacement coefficients have a different shape"));
        }
        Self::assemble(
            coefficients,
            self.anchors_x.clone(),
            self.anchors_theta.clone(),
            self.observed.clone(),
            self.spec.clone(),
            self.a.clone(),
            self.lambda,
            self.path,
        )
    }

    /// Rows `ĉ_{i,j}ᵀ` for observed pairs in identity-major order.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Rows `(A ĉ_{i,j})ᵀ`.
    pub fn effective_coefficients(&self) -> &DMatrix<f64> {
        &self.effective
    }

    pub fn anchors_x(&self) -> &[LandmarkVector] {
        &self.anchors_x
    }

    pub fn anchors_theta(&self) -> &[Vec<EmotionPoint>] {
        &self.anchors_theta
    }

    pub fn observed(&self) -> &[Vec<bool>] {
        &self.observed
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solver_path(&self) -> SolverPath {
        self.path
    }

    pub fn t(&self) -> usize {
        self.anchors_x.len()
    }

    pub fn m(&self) -> usize {
        self.anchors_theta[0].len()
    }

    pub fn d(&self) -> usize {
        self.anchors_x[0].dim()
    }

    pub fn p(&self) -> usize {
        self.anchors_theta[0][0].dim()
    }

    pub fn n_observed(&self) -> usize {
        self.pairs.len()
    }

    fn input_weights(&self, x: &LandmarkVector) -> Result<Vec<f64>> {
        if x.dim() != self.d() {
            return Err(dim(format!("query landmarks have dimension {} but the model expects {}", x.dim(), self.d())));
        }
        Ok(self.anchors_x.iter().map(|xi| self.spec.k_x(x.as_slice(), xi.as_slice())).collect())
    }

    fn evaluate(&self, weights: &[f64], theta: &EmotionPoint) -> Result<LandmarkVector> {
        if theta.dim() != self.p() {
            return Err(dim(format!("query emotion has dimension {} but the model expects {}", theta.dim(), self.p())));
        }
        let mut out = vec![0.0; self.d()];
        for (row, &(i, j)) in self.pairs.iter().enumerate() {
            let w = weights[i] * self.spec.k_theta(theta.coords(), self.anchors_theta[i][j].coords());
            for (o, c) in out.iter_mut().zip(self.effective.row(row).iter()) {
                *o += w * c;
            }
        }
        LandmarkVector::new(out).map_err(|_| VitlError::Numerical("prediction is not finite".into()))
    }

    /// `ĥ(x)(θ)`.
    pub fn predict(&self, x: &LandmarkVector, theta: &EmotionPoint) -> Result<LandmarkVector> {
        let w = self.input_weights(x)?;
        self.evaluate(&w, theta)
    }

    /// `ĥ(x)` evaluated along a list of emotions; identical to repeated [`VitlModel::predict`].
    pub fn predict_curve(&self, x: &LandmarkVector, thetas: &[EmotionPoint]) -> Result<Vec<LandmarkVector>> {
        let w = self.input_weights(x)?;
        thetas.iter().map(|t| self.evaluate(&w, t)).collect()
    }

    /// Gram matrix over the model's observed anchor pairs.
    pub fn gram(&self) -> Result<GramMatrix> {
        let all = self.observed.iter().flatten().all(|&b| b);
        match shared_grid(&self.anchors_theta) {
            Some(grid) if all => build_gram_kron(&self.anchors_x, grid, &self.spec),
            _ => build_gram_pairs(&self.anchors_x, &self.anchors_theta, &self.pairs, &self.spec),
        }
    }

    /// `‖ĥ‖²_{H_K} = Tr(K C A Cᵀ)`.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let kca = self.gram()?.mul(&self.effective)?;
        let value = kca.component_mul(&self.coefficients).sum();
        let scale = kca.norm() * self.coefficients.norm();
        if value < 0.0 && value >= -1e-10 * scale {
            return Ok(0.0);
        }
        Ok(value)
    }

    /// Empirical risk over the observed pairs of `data` (half squared loss,
    /// averaged over the observed count).
    pub fn empirical_risk(&self, data: &TripletDataset) -> Result<f64> {
        Ok(self.errors(data)?.mse_half)
    }

    /// `R̂(h) + (λ/2)‖h‖²`.
    pub fn regularized_risk(&self, data: &TripletDataset) -> Result<f64> {
        Ok(self.empirical_risk(data)? + 0.5 * self.lambda * self.rkhs_norm_sq()?)
    }

    /// Predictions for every entry of `data` (observed or not).
    pub fn predict_dataset(&self, data: &TripletDataset) -> Result<Vec<Vec<LandmarkVector>>> {
        data.inputs().iter().zip(data.emotions()).map(|(x, thetas)| self.predict_curve(x, thetas)).collect()
    }

    pub fn errors(&self, data: &TripletDataset) -> Result<ErrorSummary> {
        let preds = self.predict_dataset(data)?;
        error_summary(&preds, data)
    }

    /// Same function under output matrix `A_new`: coefficients become
    /// `C A_old A_new⁻¹`, so that `C_new A_new = C A_old` row by row.
    pub fn reparameterize(&self, a_new: &DMatrix<f64>) -> Result<Self> {
        let d = self.d();
        if a_new.nrows() != d || a_new.ncols() != d {
            return Err(dim(format!("A_new must be {d}x{d}")));
        }
        kernel::check_symmetric_psd(a_new)?;
        let inv_new = checked_inverse(a_new, "A_new")?;
        checked_inverse(&self.a, "A_old")?;
        if *a_new == self.a {
            return Ok(self.clone());
        }
        let spec = self.spec.with_output(OutputStructure::Explicit(a_new.clone()))?;
        let coefficients = &self.coefficients * &self.a * inv_new;
        Self::assemble(
            coefficients,
            self.anchors_x.clone(),
            self.anchors_theta.clone(),
            self.observed.clone(),
            spec,
            a_new.clone(),
            self.lambda,
            self.path,
        )
    }

    pub fn metrics(&self, evaluation: &ErrorSummary) -> Result<ModelMetrics> {
        Ok(ModelMetrics {
            mse: evaluation.mse,
            mse_half: evaluation.mse_half,
            rkhs_norm_sq: self.rkhs_norm_sq()?,
            n_observed: self.n_observed(),
            lambda: self.lambda,
            gamma_x: self.spec.gamma_x(),
            gamma_theta: self.spec.gamma_theta(),
            rank_a: self.spec.rank_a(self.d())?,
        })
    }
}

fn checked_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let norm = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let min = eig.eigenvalues.min();
    if !(min > 1e-10 * norm) {
        return Err(invalid(format!("{what} is not invertible (min eigenvalue {min:e})")));
    }
    a.clone().try_inverse().ok_or_else(|| invalid(format!("{what} is not invertible")))
}

/// Mean losses over observed pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    /// Mean of `‖Δ‖²`.
    pub mse: f64,
    /// Mean of `½‖Δ‖²` (the training loss).
    pub mse_half: f64,
    pub n_observed: usize,
}

/// Error summary of precomputed predictions against `data`'s observed entries.
pub fn error_summary(predictions: &[Vec<LandmarkVector>], data: &TripletDataset) -> Result<ErrorSummary> {
    if predictions.len() != data.t() || predictions.iter().any(|r| r.len() != data.m()) {
        return Err(dim("predictions do not match the dataset's shape"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((pred_row, out_row), obs_row) in predictions.iter().zip(data.outputs()).zip(data.observed()) {
        for ((pred, y), &obs) in pred_row.iter().zip(out_row).zip(obs_row) {
            if !obs {
                continue;
            }
            if pred.dim() != y.dim() {
                return Err(dim("prediction and target dimensions differ"));
            }
            total += kernel::squared_distance(pred.as_slice(), y.as_slice());
            count += 1;
        }
    }
    if count == 0 {
        return Err(VitlError::Data("no observed pairs to evaluate".into()));
    }
    let mse = total / count as f64;
    Ok(ErrorSummary { mse, mse_half: 0.5 * mse, n_observed: count })
}

/// Metrics record written next to a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub mse: f64,
    pub mse_half: f64,
    pub rkhs_norm_sq: f64,
    pub n_observed: usize,
    pub lambda: f64,
    pub gamma_x: f64,
    pub gamma_theta: f64,
    #[serde(rename = "rank_A")]
    pub rank_a: usize,
}
