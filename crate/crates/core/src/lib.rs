//! Markov-switched affine network dynamics: mode chains, model
//! constructors, forward/backward iteration, and stability, ergodic, and
//! distributional analysis.
//!
//! All numerics are generic over the scalar type through [`num::Real`]
//! (`f32` or `f64`); the `*64` aliases below cover the common case.

pub mod analysis;
pub mod chain;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod num;
pub mod rng;

pub use analysis::{
    empirical_distribution_distance, ergodic_average, first_negative_k, ks_critical_value,
    log_norm_expectation_exact, log_norm_expectation_mc, lyapunov_exponent,
    proposition1_experiment, schur_check, stationary_mean, ErgodicReport, Norm, PairDistances,
    Prop1Report, SchurCheck, StabilityMethod, StabilityReport, Verdict,
    DEFAULT_ENUMERATION_CAP,
};
pub use chain::{ChainDoc, Distribution, ModePath, StructuralCheck, TransitionMatrix};
pub use dynamics::{
    backward_trajectory, backward_trajectory_sampled, backward_trajectory_sampled_stream,
    batch_final_states, batch_trajectories,
    forward_step, forward_trajectory, unrolled_forward, Direction, InitialLaw, Trajectory,
};
pub use error::{Error, Result};
pub use model::{
    attract_neglect_repulse, classical_rw, effective_matrix, epstein, friedkin_johnsen,
    product_system, AffineMap, AffineMapDoc, AffineSystem, AffineSystemDoc, LearningMatrix,
    Mode, ModeDoc, ModeSystem, ModeSystemDoc,
};
pub use num::Real;
pub use rng::stream_rng;

pub type TransitionMatrix64 = TransitionMatrix<f64>;
pub type Distribution64 = Distribution<f64>;
pub type LearningMatrix64 = LearningMatrix<f64>;
pub type Mode64 = Mode<f64>;
pub type ModeSystem64 = ModeSystem<f64>;
pub type AffineSystem64 = AffineSystem<f64>;
pub type AffineMap64 = AffineMap<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type InitialLaw64 = InitialLaw<f64>;
