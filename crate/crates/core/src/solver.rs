//! Exact solvers for the training system `K C A + n λ C = Y`, where `n` is
//! the number of rows of `Y` (the number of observed training pairs).
//!
//! Three regimes are provided:
//!
//! * [`solve_ridge_identity`]: `A = I`, Cholesky factorization of `K + nλI`.
//! * [`solve_sylvester`]: general symmetric PSD `A`, solved by diagonalizing
//!   `K = U Λ Uᵀ` and `A = V Σ Vᵀ` and dividing `Uᵀ Y V` entrywise by
//!   `Λ_a Σ_b + nλ`. Every denominator is at least `nλ > 0`, so singular `K`
//!   or rank-deficient `A` are fine.
//! * [`solve_kron`]: `K = K_X ⊗ K_Θ`, diagonalizing the two factors only.
//!
//! [`SpectralSystem`] keeps the eigendecompositions around so a whole grid of
//! `λ` values can be solved for the price of one factorization.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{dim, invalid, Result, VitlError};
use crate::kernel::{projection, symmetry_defect, GramMatrix, PSD_REL_TOL, SYMMETRY_TOL};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

fn check_shapes(n: usize, y: &DMatrix<f64>) -> Result<()> {
    if y.nrows() != n {
        return Err(dim(format!("Gram matrix has size {n} but Y has {} rows", y.nrows())));
    }
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(invalid("empty output matrix"));
    }
    Ok(())
}

fn check_a(a: &DMatrix<f64>, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(dim(format!("A is {}x{} but Y has {d} columns", a.nrows(), a.ncols())));
    }
    let defect = symmetry_defect(a);
    if !(defect <= SYMMETRY_TOL) {
        return Err(invalid(format!("A is not symmetric (‖A − Aᵀ‖∞ = {defect:e})")));
    }
    Ok(())
}

/// `Ĉ = (K + nλI)⁻¹ Y` via Cholesky.
pub fn solve_ridge_identity(k: &GramMatrix, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_shapes(k.size(), y)?;
    let n = y.nrows();
    let mut system = k.to_dense();
    let shift = n as f64 * lambda;
    for i in 0..n {
        system[(i, i)] += shift;
    }
    let chol = Cholesky::new(system)
        .ok_or_else(|| VitlError::Numerical("K + nλI is not positive definite".into()))?;
    Ok(chol.solve(y))
}

/// Solves `K Ĉ A + nλ Ĉ = Y` for symmetric PSD `K` and `A`.
pub fn solve_sylvester(k: &GramMatrix, y: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_shapes(k.size(), y)?;
    check_a(a, y.ncols())?;
    SpectralSystem::new(k, a, y)?.solve(lambda)
}

/// Solves `(K_X ⊗ K_Θ) Ĉ A + nλ Ĉ = Y` without forming the Kronecker product.
pub fn solve_kron(
    kx: &DMatrix<f64>,
    ktheta: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !kx.is_square() || !ktheta.is_square() {
        return Err(dim("Kronecker factors must be square"));
    }
    solve_sylvester(&GramMatrix::Kronecker { kx: kx.clone(), ktheta: ktheta.clone() }, y, a, lambda)
}

#[derive(Clone, Debug)]
struct Eigen {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl Eigen {
    /// Symmetric eigendecomposition with noise-level negative eigenvalues clamped to zero.
    fn psd(m: &DMatrix<f64>, what: &str) -> Result<Self> {
        let eig = SymmetricEigen::new(m.clone());
        let norm = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
        let mut values = eig.eigenvalues;
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(VitlError::Numerical(format!("{what} has non-finite eigenvalues")));
            }
            if *v < 0.0 {
                if *v < -PSD_REL_TOL * norm {
                    return Err(VitlError::Numerical(format!(
                        "{what} is not positive semi-definite (eigenvalue {v:e}, norm {norm:e})"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self { vectors: eig.eigenvectors, values })
    }
}

#[derive(Clone, Debug)]
enum Basis {
    Dense(Eigen),
    Kron { x: Eigen, theta: Eigen },
}

/// Eigendecompositions of `K` and `A` plus the rotated right-hand side
/// `(Uᵀ Y V)`; [`SpectralSystem::solve`] is then `O(n d)` plus two rotations.
#[derive(Clone, Debug)]
pub struct SpectralSystem {
    basis: Basis,
    a: Eigen,
    rotated: DMatrix<f64>,
}

impl SpectralSystem {
    pub fn new(k: &GramMatrix, a: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        check_shapes(k.size(), y)?;
        check_a(a, y.ncols())?;
        let a_eig = Eigen::psd(a, "A")?;
        let yv = y * &a_eig.vectors;
        let (basis, rotated) = match k {
            GramMatrix::Dense(kd) => {
                let e = Eigen::psd(kd, "K")?;
                let rotated = e.vectors.transpose() * yv;
                (Basis::Dense(e), rotated)
            }
            GramMatrix::Kronecker { kx, ktheta } => {
                let x = Eigen::psd(kx, "K_X")?;
                let theta = Eigen::psd(ktheta, "K_Θ")?;
                let rotated = block_rotate(&x.vectors.transpose(), &theta.vectors, &yv);
                (Basis::Kron { x, theta }, rotated)
            }
        };
        Ok(Self { basis, a: a_eig, rotated })
    }

    /// Eigenvalues of `K` in the rotated row order.
    fn k_eigenvalue(&self, row: usize) -> f64 {
        match &self.basis {
            Basis::Dense(e) => e.values[row],
            Basis::Kron { x, theta } => {
                let m = theta.values.len();
                x.values[row / m] * theta.values[row % m]
            }
        }
    }

    pub fn solve(&self, lambda: f64) -> Result<DMatrix<f64>> {
        check_lambda(lambda)?;
        let (n, d) = self.rotated.shape();
        let shift = n as f64 * lambda;
        let mut c = self.rotated.clone();
        for row in 0..n {
            let kv = self.k_eigenvalue(row);
            for col in 0..d {
                let denom = kv * self.a.values[col] + shift;
                if !(denom >= shift) {
                    return Err(VitlError::Numerical(format!("spectral denominator {denom:e} below nλ = {shift:e}")));
                }
                c[(row, col)] /= denom;
            }
        }
        let back = match &self.basis {
            Basis::Dense(e) => &e.vectors * c,
            Basis::Kron { x, theta } => block_rotate(&x.vectors, &theta.vectors.transpose(), &c),
        };
        Ok(back * self.a.vectors.transpose())
    }
}

/// Applies `L ⊗ Rᵀ` to each column of `w`, using the row layout `m·i + j`:
/// the column is reshaped to a `t × m` block `B` and mapped to `L B R`.
fn block_rotate(left: &DMatrix<f64>, right: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, m) = (left.nrows(), right.ncols());
    let mut out = DMatrix::zeros(t * m, w.ncols());
    for col in 0..w.ncols() {
        let block = DMatrix::from_fn(left.ncols(), right.nrows(), |i, j| w[(right.nrows() * i + j, col)]);
        let r = left * block * right;
        for i in 0..t {
            for j in 0..m {
                out[(m * i + j, col)] = r[(i, j)];
            }
        }
    }
    out
}

/// `‖K Ĉ A + nλ Ĉ − Y‖_F`.
pub fn residual_norm(k: &GramMatrix, c: &DMatrix<f64>, a: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let kc = k.mul(c)?;
    let n = y.nrows() as f64;
    Ok((kc * a + c * (n * lambda) - y).norm())
}

/// The finite-dimensional training objective
/// `(1/2n)‖K C A − Y‖²_F + (λ/2) Tr(K C A Cᵀ)`.
pub fn objective(c: &DMatrix<f64>, k: &GramMatrix, y: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let kca = k.mul(c)? * a;
    let n = y.nrows() as f64;
    let fit = (&kca - y).norm_squared() / (2.0 * n);
    let reg = 0.5 * lambda * (kca.component_mul(c)).sum();
    Ok(fit + reg)
}

/// Gradient of [`objective`]: `(1/n) K (K C A − Y) A + λ K C A`.
pub fn objective_gradient(
    c: &DMatrix<f64>,
    k: &GramMatrix,
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if c.shape() != y.shape() {
        return Err(dim("C and Y must have the same shape"));
    }
    if a.nrows() != c.ncols() || a.ncols() != c.ncols() {
        return Err(dim("A must be d × d"));
    }
    let kca = k.mul(c)? * a;
    let n = y.nrows() as f64;
    let resid = &kca - y;
    Ok(k.mul(&resid)? * a / n + kca * lambda)
}

/// Eigenvectors of `YᵀY` ordered by decreasing eigenvalue, and the rank-`r`
/// projection `A = V J_r Vᵀ` onto the leading ones.
pub fn build_lowrank_a(y: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = y.ncols();
    if rank > d {
        return Err(invalid(format!("rank {rank} exceeds output dimension {d}")));
    }
    let gram = y.transpose() * y;
    let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let basis = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((projection(&basis, rank), basis))
}
