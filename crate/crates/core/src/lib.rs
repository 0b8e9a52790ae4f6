//! Light-pollution synthesis for nighttime cityscape photographs.
//!
//! A polluted image is modelled as the clean night image plus three additive
//! pollution layers:
//!
//! ```text
//! I(x) = J(x) + P_sky(x) + P_APSF(x) + P_ALSF(x)
//! ```
//!
//! * `P_APSF` spreads every visible light source with an isotropic atmospheric
//!   point spread function ([`apsf`]).
//! * `P_ALSF` spreads each connected light component with one of three
//!   anisotropic kernels built by warping the APSF along shaped beams
//!   ([`alsf`], [`lightmap`]).
//! * `P_sky` lifts the sky above the skyline with upward-beamed glow from
//!   hidden area lights ([`skyglow`]).
//!
//! [`synth`] samples all parameters from a seed and composes the layers,
//! [`dataset`] builds reproducible paired datasets, and [`metrics`] scores
//! restored images with PSNR and SSIM.

pub mod alsf;
pub mod apsf;
pub mod dataset;
pub mod error;
pub mod export;
pub mod imagecore;
pub mod lightmap;
pub mod metrics;
pub mod rng;
pub mod skyglow;
pub mod synth;

pub use error::{Error, Result};
pub use imagecore::{BinaryMask, Image, Kernel};

/// Version string recorded in dataset manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
