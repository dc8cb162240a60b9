//! Verification laboratory for the arithmetic core of a delta-method
//! subconvexity argument: character sums, the delta-symbol expansion,
//! Voronoi and Poisson identities, Hecke relations, and exact exponent
//! optimization.

pub mod arith;
pub mod charsums;
pub mod deltasym;
pub mod exponents;
pub mod kfrac;
pub mod modforms;
pub mod oscint;
pub mod pipeline;
pub mod quad;
pub mod sheval;
pub mod suites;

pub use arith::{Factorization, RationalPhase};
pub use charsums::DirichletCharacter;
pub use num_complex::Complex64;
