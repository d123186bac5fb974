//! Mask-side tooling for diffusion-based video object removal.
//!
//! * [`mask`]: binary mask volumes, morphology, bbox coarsening.
//! * [`muse`]: windowed-union temporal compression of masks onto the latent
//!   frame grid, plus the nearest-frame baseline.
//! * [`randmask`]: seeded random occlusion masks for self-supervised pretraining.
//! * [`degrade`]: dropout / morphology / bbox mask degradation.
//! * [`metrics`]: PSNR, SSIM, masked variants, flicker and a reference-free
//!   region-consistency score.
//! * [`pairselect`]: background-consistency ranking of paired clips.
//! * [`daseg`]: reference numerics and loss gradients for the timestep-aware
//!   segmentation head.
//! * [`gradcheck`]: finite-difference verification of those gradients.
//! * [`seqio`]: `.mseq` masks, PGM/PPM frame directories, report JSON.
//! * [`experiment`]: the skip-frame and mask-drop harnesses behind the CLI.

pub mod daseg;
pub mod degrade;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod mask;
pub mod metrics;
pub mod muse;
pub mod pairselect;
pub mod randmask;
pub mod rng;
pub mod seqio;

pub use error::{Error, Result};
pub use mask::{BBox, MaskSequence, StructuringElement};
pub use metrics::FrameSequence;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
