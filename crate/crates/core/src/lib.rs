//! Desk-scale view-synthesis laboratory.
//!
//! Procedurally generated analytic scenes serve as ground truth for two toy
//! view-synthesis model families (a coordinate MLP with positional, sinusoidal
//! or hash encoding, and an isotropic Gaussian splat set). On top of trained
//! models the `phd` module implements post-hoc binary dropout uncertainty:
//! it searches for the largest dropout ratio the training views tolerate and
//! turns masked re-renders into per-pixel uncertainty maps. The `metrics` and
//! `ensemble` modules evaluate how well those maps track true error.

pub mod ensemble;
pub mod fields;
pub mod img;
pub mod metrics;
pub mod optim;
pub mod phd;
pub mod report;
pub mod rng;
pub mod scene;
