//! Shared numerical toolbox: compensated summation, special functions,
//! quadrature, bivariate and low-dimensional normal orthant integrals,
//! Bessel functions of real order, root finding, derivative-free and
//! gradient optimisers, and seeded random sampling.

pub mod bessel;
pub mod bvn;
pub mod kahan;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod special;

pub use kahan::KahanSum;
