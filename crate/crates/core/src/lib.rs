//! Wafer-heat feed-forward pipeline.
//!
//! The crate covers the per-millisecond thermal model, the mixed-precision
//! deformation GEMV, a block-transform codec for the deformation operators,
//! a two-stage transfer/compute pipeline with firm deadlines, and the
//! analytic FLOP, I/O and Roofline cost models.

pub mod container;
pub mod matrix;
pub mod model;
pub mod mpgemv;
pub mod thermal;
pub mod codec;
pub mod pipeline;
pub mod analysis;
