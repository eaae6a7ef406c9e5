//! Numerical toolkit for dyadic harmonic analysis on the unit ball of ℂⁿ:
//! Bergman trees and tents, radial weight classes, weighted quadrature,
//! sparse and maximal operators, and forward/vanishing/reverse Carleson
//! testing conditions.
//!
//! The crate is `no_std` + `alloc`; float transcendentals come from `libm`
//! through `num-traits`. All randomized routines take explicit seeds and are
//! deterministic for a fixed seed and budget.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod carleson;
pub mod dyadic;
pub mod geometry;
pub mod measures;
pub mod operators;
pub mod numerics;
pub mod quadrature;
pub mod rng;
pub mod testfns;
pub mod weights;
