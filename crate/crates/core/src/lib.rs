//! Numerical microlocal analysis at desk scale.

pub mod counterexample;
pub mod deformation;
pub mod estimates;
pub mod fbi;
pub mod gevrey;
pub mod pipeline;
pub mod realization;
pub mod spectral;
pub mod symbolic;
