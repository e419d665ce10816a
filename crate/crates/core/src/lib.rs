//! Quality-gated adversarial iris synthesis and its evaluation toolkit.
//!
//! * [`tensor`]: dense tensors, reverse-mode differentiation and Adam.
//! * [`gan`]: the quality-conditioned DCGAN (generator, discriminator,
//!   losses, first-quartile quality gate, training loop, sampling).
//! * [`quality`]: iris segmentation, the six quality scores and χ²
//!   histogram comparison.
//! * [`matcher`]: rubber-sheet normalization, log-Gabor iris codes,
//!   masked Hamming matching and the attack-evaluation protocol.
//! * [`pad`]: Zernike + LBPV features and the cross-validated neural
//!   presentation-attack detector.
//! * [`roc`]: FAR/FRR curves and equal error rate.
//! * [`data`]: image IO, procedural toy irises, manifests and checkpoints.

pub mod data;
pub mod error;
pub mod gan;
pub mod image;
pub mod matcher;
pub mod pad;
pub mod quality;
pub mod roc;
pub mod tensor;

pub use error::{Error, Result};
pub use image::GrayImage;
