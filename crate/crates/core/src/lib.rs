//! Boundary-integral workbench for time-domain acoustic scattering by
//! sound-soft obstacles, built on real-frequency combined-field solves.
//!
//! The pipeline: mesh an obstacle ([`geometry`]), assemble and solve the
//! combined-field equation over a frequency grid ([`operators`],
//! [`resolvent`], [`synthesis`]), synthesize the time-domain boundary
//! density, then check domain-of-dependence identities ([`dod`]) and measure
//! decay ([`observables`]). [`oracle`] supplies exact sphere spectra.

pub mod dod;
pub mod geometry;
pub mod incident;
pub mod observables;
pub mod operators;
pub mod oracle;
pub mod quadrature;
pub mod resolvent;
pub mod synthesis;

pub use num_complex::Complex64;
