//! Bond-based peridynamic energies with nonlinear strains: the discrete
//! double-integral engine, its small-displacement and vanishing-horizon
//! limits, bounds on the limit density, explicit constructions and a
//! constrained minimizer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constructions;
pub mod density;
pub mod energy;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod materials;
pub mod quadrature;
pub mod solver;

pub use density::{DensityBounds, LaminateResult, LaminateSearch};
pub use energy::{EnergyReport, LocalizedEnergy};
pub use error::{Error, Result};
pub use grid::{difference_quotient, Grid, LoadField, SubdomainMask, VectorField};
pub use kernels::{Kernel, KernelSequence, Profile};
pub use linalg::Mat;
pub use materials::{MicroPotential, Potential, Psi};
pub use quadrature::SphereQuadrature;
pub use solver::{DirichletProblem, MinimizeResult, OptimizerSettings};
