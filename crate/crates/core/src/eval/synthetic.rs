//! Synthetic trajectories with a known noiseless ground truth.
//!
//! Each identity copies one of `prototypes` trajectories
//! `z_l(θ) = Σ_k k_Θ(θ, ω_k) B_{l,k}` and adds Gaussian noise. Because the
//! inputs of a prototype's copies coincide when `noise = 0`, the map from input
//! landmarks to trajectories is a finite kernel expansion, i.e. it lies in the
//! hypothesis space of a model with the same `γ_Θ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{EmotionPoint, Identity, LandmarkVector, Observation, TrajectoryDataset, NEUTRAL_LABEL};
use crate::error::{dim, invalid, Result};
use crate::kernel::gaussian;
use crate::rng::{stream, Domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub p: usize,
    pub seed: u64,
    /// Standard deviation of the additive noise on every landmark coordinate.
    pub noise: f64,
    pub prototypes: usize,
    /// Number of anchors `ω_k` in each prototype's expansion.
    pub anchors: usize,
    pub gamma_theta: f64,
    /// When set, every `B_{l,k}` lies in one fixed subspace of this dimension.
    pub output_rank: Option<usize>,
    /// Half-width of a uniform per-identity perturbation of the non-reference
    /// emotion coordinates; zero keeps a shared grid.
    pub theta_jitter: f64,
}

impl SyntheticTask {
    pub fn new(n: usize, m: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            d,
            p: 2,
            seed,
            noise: 0.0,
            prototypes: n.clamp(1, 5),
            anchors: m + 2,
            gamma_theta: 1.0,
            output_rank: None,
            theta_jitter: 0.0,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_output_rank(mut self, rank: usize) -> Self {
        self.output_rank = Some(rank);
        self
    }

    pub fn with_prototypes(mut self, prototypes: usize) -> Self {
        self.prototypes = prototypes;
        self
    }

    pub fn with_gamma_theta(mut self, gamma_theta: f64) -> Self {
        self.gamma_theta = gamma_theta;
        self
    }

    pub fn with_theta_jitter(mut self, jitter: f64) -> Self {
        self.theta_jitter = jitter;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 || self.p == 0 || self.anchors == 0 {
            return Err(invalid("synthetic task sizes must be positive"));
        }
        if self.prototypes == 0 || self.prototypes > self.n {
            return Err(invalid(format!("prototypes must lie in 1..={}", self.n)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("noise level must be nonnegative"));
        }
        if !(self.gamma_theta > 0.0 && self.gamma_theta.is_finite()) {
            return Err(invalid("gamma_theta must be positive"));
        }
        if !(self.theta_jitter >= 0.0 && self.theta_jitter.is_finite()) {
            return Err(invalid("theta jitter must be nonnegative"));
        }
        if let Some(r) = self.output_rank {
            if r == 0 || r > self.d {
                return Err(invalid(format!("output rank must lie in 1..={}", self.d)));
            }
        }
        Ok(())
    }
}

/// Noiseless ground truth of a generated task.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOracle {
    assignment: Vec<usize>,
    anchors: Vec<Vec<f64>>,
    /// Per prototype, `anchors × d`.
    coefficients: Vec<DMatrix<f64>>,
    gamma_theta: f64,
    grid: Vec<EmotionPoint>,
    basis: Option<DMatrix<f64>>,
}

impl SyntheticOracle {
    pub fn prototype_of(&self, identity: usize) -> usize {
        self.assignment[identity]
    }

    /// The shared emotion grid; slot 0 is the neutral origin.
    pub fn grid(&self) -> &[EmotionPoint] {
        &self.grid
    }

    /// Orthonormal basis of the output subspace, if the task has one.
    pub fn output_basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    pub fn evaluate_prototype(&self, prototype: usize, theta: &EmotionPoint) -> Result<LandmarkVector> {
        let p = self.anchors[0].len();
        if theta.dim() != p {
            return Err(dim(format!("oracle expects {p}-dimensional emotions")));
        }
        let b = &self.coefficients[prototype];
        let mut out = vec![0.0; b.ncols()];
        for (k, w) in self.anchors.iter().enumerate() {
            let kv = gaussian(theta.coords(), w, self.gamma_theta);
            for (o, c) in out.iter_mut().zip(b.row(k).iter()) {
                *o += kv * c;
            }
        }
        LandmarkVector::new(out)
    }

    /// Noiseless `z_i(θ)`.
    pub fn evaluate(&self, identity: usize, theta: &EmotionPoint) -> Result<LandmarkVector> {
        let l = *self
            .assignment
            .get(identity)
            .ok_or_else(|| invalid(format!("identity {identity} out of range")))?;
        self.evaluate_prototype(l, theta)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate_synthetic(task: &SyntheticTask) -> Result<(TrajectoryDataset, SyntheticOracle)> {
    task.validate()?;
    let (n, m, d, p) = (task.n, task.m, task.d, task.p);
    let mut rng = stream(task.seed, Domain::Synthetic, 0);

    let mut grid = vec![EmotionPoint::labeled(NEUTRAL_LABEL, vec![0.0; p])?];
    for j in 1..m {
        let coords = if p == 2 {
            let a = 2.0 * PI * (j - 1) as f64 / (m - 1) as f64;
            vec![a.cos(), a.sin()]
        } else {
            let v: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|c| c / norm).collect()
        };
        grid.push(EmotionPoint::labeled(format!("e{j}"), coords)?);
    }
    let anchors: Vec<Vec<f64>> = (0..task.anchors).map(|_| (0..p).map(|_| rng.random_range(-1.2..1.2)).collect()).collect();
    let basis = task.output_rank.map(|r| {
        let g = DMatrix::from_fn(d, r, |_, _| normal(&mut rng));
        g.qr().q()
    });
    let coefficients: Vec<DMatrix<f64>> = (0..task.prototypes)
        .map(|_| match &basis {
            Some(u) => {
                let r = u.ncols();
                let g = DMatrix::from_fn(task.anchors, r, |_, _| normal(&mut rng)) * (d as f64 / r as f64).sqrt();
                g * u.transpose()
            }
            None => DMatrix::from_fn(task.anchors, d, |_, _| normal(&mut rng)),
        })
        .collect();
    let oracle = SyntheticOracle {
        assignment: (0..n).map(|i| i % task.prototypes).collect(),
        anchors,
        coefficients,
        gamma_theta: task.gamma_theta,
        grid,
        basis,
    };

    let width = n.to_string().len().max(3);
    let identities = (0..n)
        .map(|i| {
            let mut noise = stream(task.seed, Domain::Noise, i as u64);
            let mut jitter = stream(task.seed, Domain::Perturbation, i as u64);
            let observations = oracle
                .grid
                .iter()
                .enumerate()
                .map(|(j, g)| {
                    let emotion = if j > 0 && task.theta_jitter > 0.0 {
                        let coords = g.coords().iter().map(|c| c + jitter.random_range(-task.theta_jitter..=task.theta_jitter)).collect();
                        EmotionPoint::labeled(g.label().unwrap_or_default(), coords)?
                    } else {
                        g.clone()
                    };
                    let clean = oracle.evaluate(i, &emotion)?.into_inner();
                    let noisy = if task.noise > 0.0 {
                        clean.into_iter().map(|c| c + task.noise * normal(&mut noise)).collect()
                    } else {
                        clean
                    };
                    Ok(Observation { emotion, landmarks: LandmarkVector::new(noisy)? })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Identity { id: format!("s{i:0width$}"), observations })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TrajectoryDataset::new(identities)?, oracle))
}
