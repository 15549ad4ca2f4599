//! Scalar Gaussian kernels, the decomposable operator-valued kernel
//! `K(x, x') G(θ, θ') = k_X(x, x') k_Θ(θ, θ') A`, and Gram matrix assembly.
//!
//! Gram rows and columns follow an identity-major, emotion-minor layout: the
//! pair `(i, j)` (anchor `i`, emotion slot `j`, zero-based) lives at index
//! `m * i + j`. Coefficient matrices and model files use the same layout.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::{EmotionPoint, LandmarkVector};
use crate::error::{dim, invalid, Result};

/// Absolute tolerance on `‖A − Aᵀ‖_∞` for an explicit output matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance on negative eigenvalues, scaled by the spectral norm.
pub const PSD_REL_TOL: f64 = 1e-10;
/// Two emotion grids are considered shared when all coordinates agree within this.
pub const GRID_MATCH_TOL: f64 = 1e-12;

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−γ‖u − v‖²)`.
pub fn gaussian_kernel(u: &[f64], v: &[f64], gamma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(invalid(format!(
            "gaussian kernel arguments have dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("kernel bandwidth must be positive, got {gamma}")));
    }
    Ok(gaussian(u, v, gamma))
}

#[inline]
pub(crate) fn gaussian(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    (-gamma * squared_distance(u, v)).exp()
}

/// How the output coordinates are coupled through the matrix `A`.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputStructure {
    /// `A = I_d`: independent output coordinates.
    Identity,
    /// `A = V J_r Vᵀ`, the orthogonal projection onto the first `rank` columns of `basis`.
    LowRank { rank: usize, basis: DMatrix<f64> },
    /// A user-supplied symmetric positive semi-definite matrix.
    Explicit(DMatrix<f64>),
}

/// Bandwidths of the two Gaussian kernels plus the output structure `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    gamma_x: f64,
    gamma_theta: f64,
    output: OutputStructure,
}

impl KernelSpec {
    pub fn new(gamma_x: f64, gamma_theta: f64, output: OutputStructure) -> Result<Self> {
        for (name, g) in [("gamma_x", gamma_x), ("gamma_theta", gamma_theta)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite, got {g}")));
            }
        }
        match &output {
            OutputStructure::Identity => {}
            OutputStructure::LowRank { rank, basis } => check_basis(*rank, basis)?,
            OutputStructure::Explicit(a) => check_symmetric_psd(a)?,
        }
        Ok(Self { gamma_x, gamma_theta, output })
    }

    /// Gaussian kernels with `A = I`.
    pub fn gaussian(gamma_x: f64, gamma_theta: f64) -> Result<Self> {
        Self::new(gamma_x, gamma_theta, OutputStructure::Identity)
    }

    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn gamma_theta(&self) -> f64 {
        self.gamma_theta
    }

    pub fn output(&self) -> &OutputStructure {
        &self.output
    }

    pub fn with_output(&self, output: OutputStructure) -> Result<Self> {
        Self::new(self.gamma_x, self.gamma_theta, output)
    }

    pub fn with_bandwidths(&self, gamma_x: f64, gamma_theta: f64) -> Result<Self> {
        Self::new(gamma_x, gamma_theta, self.output.clone())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.output, OutputStructure::Identity)
    }

    /// Rank of `A` for output dimension `d`.
    pub fn rank_a(&self, d: usize) -> Result<usize> {
        Ok(match &self.output {
            OutputStructure::Identity => d,
            OutputStructure::LowRank { rank, .. } => *rank,
            OutputStructure::Explicit(a) => {
                let eig = SymmetricEigen::new(a.clone());
                let scale = spectral_norm_sym(&eig.eigenvalues);
                eig.eigenvalues.iter().filter(|&&l| l > PSD_REL_TOL * scale.max(f64::MIN_POSITIVE)).count()
            }
        })
    }

    pub fn materialize_a(&self, d: usize) -> Result<DMatrix<f64>> {
        materialize_a(self, d)
    }

    pub fn k_x(&self, u: &[f64], v: &[f64]) -> f64 {
        gaussian(u, v, self.gamma_x)
    }

    pub fn k_theta(&self, u: &[f64], v: &[f64]) -> f64 {
        gaussian(u, v, self.gamma_theta)
    }
}

fn check_basis(rank: usize, basis: &DMatrix<f64>) -> Result<()> {
    if rank > basis.ncols() {
        return Err(invalid(format!(
            "low-rank A: rank {rank} exceeds the {} basis columns",
            basis.ncols()
        )));
    }
    if basis.ncols() > basis.nrows() {
        return Err(invalid("low-rank A: basis has more columns than rows"));
    }
    let gram = basis.transpose() * basis;
    let err = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax();
    if !(err <= 1e-10) {
        return Err(invalid(format!("low-rank A: basis columns are not orthonormal (error {err:e})")));
    }
    Ok(())
}

pub(crate) fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    (a - a.transpose()).amax()
}

fn spectral_norm_sym(eigenvalues: &nalgebra::DVector<f64>) -> f64 {
    eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Checks symmetry within [`SYMMETRY_TOL`] and positive semi-definiteness
/// within [`PSD_REL_TOL`] relative to the spectral norm.
pub fn check_symmetric_psd(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(dim(format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid("A has non-finite entries"));
    }
    let defect = symmetry_defect(a);
    if defect > SYMMETRY_TOL {
        return Err(invalid(format!("A is not symmetric (‖A − Aᵀ‖∞ = {defect:e})")));
    }
    let eig = SymmetricEigen::new(a.clone());
    let norm = spectral_norm_sym(&eig.eigenvalues);
    let min = eig.eigenvalues.min();
    if min < -PSD_REL_TOL * norm {
        return Err(invalid(format!("A is not positive semi-definite (min eigenvalue {min:e})")));
    }
    Ok(())
}

/// The `d × d` matrix `A` described by `spec`.
pub fn materialize_a(spec: &KernelSpec, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(invalid("output dimension must be at least 1"));
    }
    match &spec.output {
        OutputStructure::Identity => Ok(DMatrix::identity(d, d)),
        OutputStructure::LowRank { rank, basis } => {
            if basis.nrows() != d {
                return Err(invalid(format!(
                    "low-rank A: basis has {} rows but d = {d}",
                    basis.nrows()
                )));
            }
            if *rank > d {
                return Err(invalid(format!("low-rank A: rank {rank} exceeds d = {d}")));
            }
            Ok(projection(basis, *rank))
        }
        OutputStructure::Explicit(a) => {
            if a.nrows() != d || a.ncols() != d {
                return Err(invalid(format!(
                    "explicit A is {}x{} but d = {d}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            Ok(a.clone())
        }
    }
}

/// `V J_r Vᵀ`, built from the leading `rank` columns and symmetrized exactly.
pub(crate) fn projection(basis: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let d = basis.nrows();
    if rank == 0 {
        return DMatrix::zeros(d, d);
    }
    let v = basis.columns(0, rank);
    let p = &v * v.transpose();
    (&p + p.transpose()) * 0.5
}

/// Gram matrix over the training anchor pairs.
#[derive(Clone, Debug, PartialEq)]
pub enum GramMatrix {
    Dense(DMatrix<f64>),
    /// `K = K_X ⊗ K_Θ`; never expanded unless [`GramMatrix::to_dense`] is called.
    Kronecker { kx: DMatrix<f64>, ktheta: DMatrix<f64> },
}

impl GramMatrix {
    /// Side length `tm`.
    pub fn size(&self) -> usize {
        match self {
            GramMatrix::Dense(k) => k.nrows(),
            GramMatrix::Kronecker { kx, ktheta } => kx.nrows() * ktheta.nrows(),
        }
    }

    pub fn is_kronecker(&self) -> bool {
        matches!(self, GramMatrix::Kronecker { .. })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            GramMatrix::Dense(k) => k.clone(),
            GramMatrix::Kronecker { kx, ktheta } => kx.kronecker(ktheta),
        }
    }

    /// `K · M` for a `(tm) × c` matrix `M`.
    pub fn mul(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.size() {
            return Err(dim(format!(
                "Gram matrix is {0}x{0} but right-hand side has {1} rows",
                self.size(),
                rhs.nrows()
            )));
        }
        Ok(match self {
            GramMatrix::Dense(k) => k * rhs,
            GramMatrix::Kronecker { kx, ktheta } => kron_mul(kx, ktheta, rhs),
        })
    }

    pub fn spectral_norm(&self) -> f64 {
        match self {
            GramMatrix::Dense(k) => sym_spectral_norm(k),
            GramMatrix::Kronecker { kx, ktheta } => sym_spectral_norm(kx) * sym_spectral_norm(ktheta),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            GramMatrix::Dense(k) => SymmetricEigen::new(k.clone()).eigenvalues.min(),
            GramMatrix::Kronecker { kx, ktheta } => {
                let ex = SymmetricEigen::new(kx.clone()).eigenvalues;
                let et = SymmetricEigen::new(ktheta.clone()).eigenvalues;
                ex.iter()
                    .flat_map(|a| et.iter().map(move |b| a * b))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

pub(crate) fn sym_spectral_norm(k: &DMatrix<f64>) -> f64 {
    if k.is_empty() {
        return 0.0;
    }
    spectral_norm_sym(&SymmetricEigen::new(k.clone()).eigenvalues)
}

/// `(K_X ⊗ K_Θ) M` using the row layout `m * i + j`.
pub(crate) fn kron_mul(kx: &DMatrix<f64>, ktheta: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, m, c) = (kx.nrows(), ktheta.nrows(), rhs.ncols());
    let mut out = DMatrix::zeros(t * m, c);
    for col in 0..c {
        let block = DMatrix::from_fn(t, m, |i, j| rhs[(m * i + j, col)]);
        let prod = kx * block * ktheta.transpose();
        for i in 0..t {
            for j in 0..m {
                out[(m * i + j, col)] = prod[(i, j)];
            }
        }
    }
    out
}

/// `t × t` input Gram matrix `K_X`.
pub fn input_gram(inputs: &[LandmarkVector], gamma_x: f64) -> DMatrix<f64> {
    let t = inputs.len();
    let mut k = DMatrix::zeros(t, t);
    for a in 0..t {
        k[(a, a)] = 1.0;
        for b in (a + 1)..t {
            let v = gaussian(inputs[a].as_slice(), inputs[b].as_slice(), gamma_x);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// `m × m` emotion Gram matrix `K_Θ` over a shared grid.
pub fn emotion_gram(grid: &[EmotionPoint], gamma_theta: f64) -> DMatrix<f64> {
    let m = grid.len();
    let mut k = DMatrix::zeros(m, m);
    for a in 0..m {
        k[(a, a)] = 1.0;
        for b in (a + 1)..m {
            let v = gaussian(grid[a].coords(), grid[b].coords(), gamma_theta);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

fn check_anchor_shapes(inputs: &[LandmarkVector], emotions: &[Vec<EmotionPoint>]) -> Result<usize> {
    if inputs.is_empty() {
        return Err(invalid("Gram matrix requested for an empty dataset"));
    }
    if emotions.len() != inputs.len() {
        return Err(dim(format!(
            "{} inputs but {} emotion lists",
            inputs.len(),
            emotions.len()
        )));
    }
    let m = emotions[0].len();
    if m == 0 {
        return Err(invalid("emotion lists must be non-empty"));
    }
    if let Some(i) = emotions.iter().position(|e| e.len() != m) {
        return Err(dim(format!("emotion list {i} has length {} but expected {m}", emotions[i].len())));
    }
    let d = inputs[0].dim();
    if let Some(i) = inputs.iter().position(|x| x.dim() != d) {
        return Err(dim(format!("input {i} has dimension {} but expected {d}", inputs[i].dim())));
    }
    let p = emotions[0][0].dim();
    if emotions.iter().flatten().any(|e| e.dim() != p) {
        return Err(dim("emotion points have inconsistent dimensions"));
    }
    Ok(m)
}

/// Dense `(tm) × (tm)` Gram matrix with entry
/// `k_X(x_{i₁}, x_{i₂}) · k_Θ(θ_{i₁,j₁}, θ_{i₂,j₂})` at `(m i₁ + j₁, m i₂ + j₂)`.
pub fn build_gram_dense(
    inputs: &[LandmarkVector],
    emotions: &[Vec<EmotionPoint>],
    spec: &KernelSpec,
) -> Result<GramMatrix> {
    let m = check_anchor_shapes(inputs, emotions)?;
    let pairs: Vec<(usize, usize)> =
        (0..inputs.len()).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    build_gram_pairs(inputs, emotions, &pairs, spec)
}

/// Dense Gram matrix restricted to the listed `(anchor, emotion slot)` pairs, in the given order.
pub fn build_gram_pairs(
    inputs: &[LandmarkVector],
    emotions: &[Vec<EmotionPoint>],
    pairs: &[(usize, usize)],
    spec: &KernelSpec,
) -> Result<GramMatrix> {
    let m = check_anchor_shapes(inputs, emotions)?;
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= inputs.len() || j >= m) {
        return Err(invalid(format!("pair ({i}, {j}) is out of range")));
    }
    let kx = input_gram(inputs, spec.gamma_x);
    let n = pairs.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        let (i1, j1) = pairs[a];
        k[(a, a)] = kx[(i1, i1)];
        for b in (a + 1)..n {
            let (i2, j2) = pairs[b];
            let v = kx[(i1, i2)]
                * gaussian(emotions[i1][j1].coords(), emotions[i2][j2].coords(), spec.gamma_theta);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(GramMatrix::Dense(k))
}

/// Kronecker-factored Gram matrix for anchors observed on a common emotion grid.
pub fn build_gram_kron(
    inputs: &[LandmarkVector],
    shared_grid: &[EmotionPoint],
    spec: &KernelSpec,
) -> Result<GramMatrix> {
    if inputs.is_empty() || shared_grid.is_empty() {
        return Err(invalid("Gram matrix requested for an empty dataset"));
    }
    let d = inputs[0].dim();
    if inputs.iter().any(|x| x.dim() != d) {
        return Err(dim("inputs have inconsistent dimensions"));
    }
    let p = shared_grid[0].dim();
    if shared_grid.iter().any(|e| e.dim() != p) {
        return Err(dim("emotion grid has inconsistent dimensions"));
    }
    Ok(GramMatrix::Kronecker {
        kx: input_gram(inputs, spec.gamma_x),
        ktheta: emotion_gram(shared_grid, spec.gamma_theta),
    })
}

/// Returns the common grid when every anchor's emotion list matches the first
/// one coordinate-wise within [`GRID_MATCH_TOL`].
pub fn shared_grid(emotions: &[Vec<EmotionPoint>]) -> Option<&[EmotionPoint]> {
    let first = emotions.first()?;
    let same = emotions.iter().skip(1).all(|list| {
        list.len() == first.len()
            && list.iter().zip(first).all(|(a, b)| {
                a.dim() == b.dim()
                    && a.coords().iter().zip(b.coords()).all(|(u, v)| (u - v).abs() <= GRID_MATCH_TOL)
            })
    });
    same.then_some(first.as_slice())
}
