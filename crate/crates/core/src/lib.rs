//! Evaluation, certification, optimization and self-testing of strategies for
//! the noisy CHSH, Magic Square and 2-out-of-n CHSH games.
//!
//! Conventions used throughout:
//! - Pauli basis `sigma_0..sigma_3 = I, X, Y, Z`, normalized Hilbert-Schmidt
//!   inner product `(1/d) Tr(A* B)`.
//! - Multi-indices are flat integers with register 1 as the most significant
//!   base-`m^2` digit.
//! - Joint states are ordered `(A_1..A_n) (x) (B_1..B_n)`.

pub mod error;
pub mod linalg;
pub mod pauli;
pub mod states;
pub mod games;
pub mod certificates;
pub mod extraction;
pub mod protocols;
pub mod optimizer;
pub mod io;
pub mod random;
pub mod oracles;

pub use error::{Error, Result};
pub use linalg::HermitianOperator;
