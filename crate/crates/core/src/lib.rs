//! Values and saddle-point strategies for zero-sum risk-sensitive stochastic
//! games on finite continuous-time Markov chains.
//!
//! * [`discounted`] solves the discounted criterion as an ODE in the risk
//!   parameter `theta`.
//! * [`ergodic`] solves the long-run criterion by normalized finite-horizon
//!   marching and cross-checks it against Perron-Frobenius eigenvalues.
//! * [`lab`] simulates the controlled chain and evaluates the exponential
//!   functionals, semigroups and bounds the solvers are checked against.

pub mod discounted;
pub mod ergodic;
pub mod fixtures;
pub mod hamiltonian;
pub mod lab;
pub mod linalg;
pub mod matrix_game;
pub mod model;
pub mod quadrature;

pub use discounted::{solve_discounted, DiscountedConfig, DiscountedError, DiscountedSolution, MarkovPolicy};
pub use ergodic::{solve_ergodic, ErgodicConfig, ErgodicError, ErgodicSolution, PerronResult, SaddleReport};
pub use hamiltonian::{hamiltonian_eval, stage_matrix, HamiltonianResult, ValueFunction};
pub use matrix_game::{solve_matrix_game, GameError, GameSolution, MatrixGame};
pub use model::{
    GameModel, LyapunovCertificate, MixedAction, ModelError, StationaryStrategy, Strategy, StrategyProfile,
};
