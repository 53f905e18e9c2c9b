//! Polymorphisms (bistochastic measures) and Markov operators on finite
//! probability spaces and on Bernoulli-shift cylinder algebras.
//!
//! The crate is organized bottom up:
//!
//! * [`finite_space`]: weighted point sets and the partition lattice.
//! * [`polymorphism`]: the semigroup of bistochastic kernels and its
//!   structural predicates (ergodic, prime, dense, mixing, ...).
//! * [`markov_op`]: the operator picture, the anti-isomorphism and the
//!   isometric-subalgebra scan.
//! * [`coupling`]: zero-diagonal couplings with prescribed marginals and the
//!   block systems built from them.
//! * [`symbolic`]: homoclinic perturbations of a Bernoulli shift, evaluated
//!   exactly on cylinder functions.
//! * [`random`]: seeded generators for sweeps and corpora.

pub mod coupling;
pub mod error;
pub mod finite_space;
pub mod io;
pub mod linalg;
pub mod markov_op;
pub mod polymorphism;
pub mod random;
pub mod scalar;
pub mod symbolic;

pub use error::{Error, Result};
pub use finite_space::{FiniteSpace, Partition, PartitionKind};
pub use linalg::Matrix;
pub use polymorphism::{PointMeasure, Polymorphism};
pub use scalar::{Rational, Scalar};
