//! Global extended-rational Arnoldi approximations of `f(A)V` for large sparse
//! `A` and tall blocks `V`, restarted solvers for families of shifted systems,
//! adaptive shift selection, and the comparison methods.

pub mod baselines;
pub mod block;
pub mod dense;
pub mod error;
pub mod factor;
pub mod gera;
pub mod matfun;
pub mod mmio;
pub mod problems;
pub mod shifted;
pub mod shifts;
pub mod sparse;

pub use block::{basis_combine, diamond_product, frobenius_inner, Block};
pub use error::{Error, Result};
pub use factor::{factor_shifted, solve_shifted, FactorCache, ShiftedFactorization};
pub use sparse::CsrMatrix;
