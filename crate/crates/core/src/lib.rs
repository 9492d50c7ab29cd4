//! Non-linear dependence measures for financial time series.
//!
//! The crate covers four threads that share one numerical toolbox:
//!
//! * **Dependence measurement** — empirical copulas on a regular grid,
//!   tail dependence, conditional sign probabilities and rank statistics
//!   ([`depmeasure`]), with closed-form counterparts for elliptical
//!   models ([`elliptical`]).
//! * **Goodness-of-fit** — Kolmogorov–Smirnov and Cramér–von Mises laws
//!   for independent samples, their variance-weighted variants
//!   ([`gofuni`]), and the corrected laws for dependent samples driven
//!   by a lag-correlation kernel ([`gofdep`], [`selfcopula`]).
//! * **Clustering in time** — recurrence intervals, records and their
//!   copula-based description ([`recurrence`]).
//! * **Volatility feedback** — quadratic ARCH models: simulation,
//!   method-of-moments and likelihood calibration, spectral analysis of
//!   feedback kernels ([`qarch`]), and a log-normal factor model with
//!   a common volatility driver ([`factor`]).
//!
//! Deterministic seeding is used throughout: every stochastic routine
//! takes an explicit seed and the same seed reproduces the same output
//! bit for bit.

pub mod config;
pub mod depmeasure;
pub mod elliptical;
pub mod error;
pub mod factor;
pub mod gofdep;
pub mod gofuni;
pub mod ingest;
pub mod numerics;
pub mod qarch;
pub mod recurrence;
pub mod selfcopula;

pub use config::RunConfig;
pub use error::{Error, Result};
