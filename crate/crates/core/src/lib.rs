//! Numerical toolkit for a diffeomorphism-invariant algebra of generalized
//! functions: test functions and mollifiers, representatives on the basic
//! space, pullbacks along diffeomorphisms, and eps-asymptotics that classify
//! representatives as moderate or negligible.

pub mod asymptotics;
pub mod basic_space;
pub mod cli;
pub mod diffeo;
pub mod distributions;
pub mod error;
pub mod geometry;
pub mod numerics;
pub mod test_objects;
pub mod testfunc;

pub use asymptotics::{fit_order, sweep, test_moderate, test_negligible, Fit, Series, SweepSpec, Verdict};
pub use basic_space::{Formalism, Representative};
pub use diffeo::{pullback_rep, Diffeomorphism, PartialDomain};
pub use distributions::{Distribution, SmoothFn};
pub use error::{Error, Result};
pub use geometry::{Domain, MultiIndex, Point};
pub use numerics::QuadratureGrid;
pub use test_objects::{make_battery, PathMode, TestObjectPath};
pub use testfunc::{build_mollifier, build_mollifier_at, MomentSpec, TestFunction};
