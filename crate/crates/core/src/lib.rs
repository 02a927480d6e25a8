//! Numerical-stability laboratory for CNN inference.
//!
//! Every scalar operation of a small 1D-CNN protein-function predictor is
//! routed through an [`Arithmetic`] backend: plain IEEE-754, Monte Carlo
//! Arithmetic ([`mca`]) or reduced-precision emulation ([`vprec`]). Campaigns
//! repeat inference under perturbation and measure how much of the output
//! survives, both as significant digits ([`sigdigits`]) and as
//! protein-function metrics ([`metrics`]).

pub mod arith;
pub mod campaign;
pub mod cnn;
pub mod error;
pub mod fp_codec;
pub mod io;
pub mod mca;
pub mod metrics;
pub mod sigdigits;
pub mod synth;
pub mod vprec;

pub use arith::{Arithmetic, ArithmeticContext, IeeeContext, Op, Precision};
pub use error::{Error, FormatError, Result};
pub use fp_codec::FloatFormat;
pub use mca::{McaConfig, McaContext, McaMode};
pub use vprec::{EventCounters, OverflowPolicy, VprecConfig, VprecContext};
