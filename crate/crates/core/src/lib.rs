//! Vector-valued infinite task learning.
//!
//! Learns `h: X → (Θ → ℝ^d)` from trajectories `(x_i, {(θ_{i,j}, y_{i,j})})`
//! with the decomposable kernel `K((x,θ),(x',θ')) = k_X(x,x') k_Θ(θ,θ') A`.
//! Training solves `K C A + nλ C = Y` exactly; see [`model::fit`].

pub mod data;
pub mod eval;
pub mod error;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod solver;

pub use data::{EmotionPoint, LandmarkVector, TrajectoryDataset, TripletDataset};
pub use error::{Result, VitlError};
pub use kernel::{KernelSpec, OutputStructure};
pub use model::{fit, fit_path, fit_with, FitOptions, SolverPath, VitlModel};
