//! Sparse symmetric factorization used by the Poisson solver.

mod ldl;

pub use ldl::{FactorError, LdlFactor};
