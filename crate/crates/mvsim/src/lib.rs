//! Deterministic 2D simulator for an incompressible magnetoviscoelastic
//! flow model: momentum transport with elastic and magnetic stresses, an
//! optional sixth-order velocity regularization, deformation-gradient
//! transport, and a penalized convective Landau-Lifshitz-Gilbert equation,
//! on a staggered (MAC) grid with clamped velocity walls and zero-flux
//! magnetization boundaries.
//!
//! All numerics are generic over the scalar type through [`real::Real`]
//! (implemented for `f32` and `f64`); the aliases below fix the default
//! `f64` instantiation used by the `mvsim` binary.

pub mod deformation;
pub mod energetics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod incompressible;
pub mod magnetization;
pub mod momentum;
pub mod operators;
pub mod parallel;
pub mod real;

pub use error::{MvError, Result};
pub use parallel::set_threads;

/// Default scalar type of the binary.
pub type Scalar = f64;

pub type Domain = fields::DomainSpec<Scalar>;
pub type Scalars = fields::ScalarField<Scalar>;
pub type Velocity = fields::VelocityField<Scalar>;
pub type Magnetization = fields::Vec3Field<Scalar>;
pub type Deformation = fields::MatrixField<Scalar>;
pub type State = fields::StateSnapshot<Scalar>;
pub type Params = fields::SimParams<Scalar>;
pub type Ledger = energetics::EnergyLedger<Scalar>;
pub type Config = harness::RunConfig<Scalar>;
pub type Summary = harness::RunSummary<Scalar>;
