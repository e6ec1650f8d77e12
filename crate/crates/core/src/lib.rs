//! Wightman correlators of the harmonic and quartic anharmonic oscillator in
//! arbitrary states.
//!
//! Free correlators are built from cumulant coefficients through the
//! generalized Wick partition sum or from normal-ordered moments; the
//! anharmonic corrections come either from a direct interaction-picture
//! expansion or from diagram rules, and both are checked against an exact
//! truncated Fock-space computation.

pub mod diagram;
pub mod error;
pub mod expsum;
pub mod fock;
pub mod json;
pub mod labels;
pub mod params;
pub mod perturbation;
pub mod quadrature;
pub mod scalar;
pub mod states;
pub mod tables;
pub mod transforms;
pub mod verify;
pub mod wick;

use num_complex::Complex;
use num_rational::BigRational;

pub use error::{Error, Result};
pub use expsum::{make_big_f, make_f, ExpSum, SignVector};
pub use labels::{Branch, InternalLabel, TimeLabel};
pub use params::PhysicalParams;
pub use quadrature::QuadratureSpec;
pub use scalar::Scalar;
pub use states::StateSpec;
pub use tables::{ChiTable, XiTable};

pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
pub type ExactComplex = Complex<BigRational>;

pub type ExpSum64 = ExpSum<C64>;
pub type ExpSum32 = ExpSum<C32>;
pub type ExactExpSum = ExpSum<ExactComplex>;

pub type XiTable64 = XiTable<C64>;
pub type ChiTable64 = ChiTable<C64>;
pub type ExactXiTable = XiTable<ExactComplex>;
pub type ExactChiTable = ChiTable<ExactComplex>;
