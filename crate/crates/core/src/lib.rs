//! Exact finite models of `(eps, d)`-configurations on the
//! infinite-dimensional torus, their maximal operators, and the closed-form
//! bounds that govern weak-type `(p, p)` and `L log L` estimates for them.

pub mod basis;
pub mod bounds;
pub mod binomial;
pub mod error;
pub mod maximal;
pub mod measure;
pub mod oracle;
pub mod rational;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use measure::{build_atom_space, integrate, AtomId, AtomSpace, Scalar, StepFunction};
pub use rational::Rational;
