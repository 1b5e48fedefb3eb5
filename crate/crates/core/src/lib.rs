//! Random-access neural compression for material texture sets.
//!
//! A texture set (several textures sharing one resolution, concatenated along
//! the channel axis) is encoded as a pyramid of quantized latent grids plus a
//! small MLP decoder. Any texel of any mip can be decoded on its own from a
//! handful of grid reads and one network evaluation.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, PNG handling and the
//! command-line tool live in the `ntc` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod container;
pub mod encoding;
mod error;
pub mod grid;
pub mod input;
mod linalg;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod profile;
pub mod pyramid;
pub mod quant;
mod real;
pub mod sampler;
pub mod texture;
pub mod trainer;

pub use container::{CompressedTexture, Header, StorageReport};
pub use error::{Error, Result};
pub use grid::AddressMode;
pub use mlp::{Activation, DecoderWeights};
pub use profile::Profile;
pub use pyramid::{FeatureLevel, FeaturePyramid, Grid};
pub use quant::QuantSpec;
pub use real::Real;
pub use sampler::{FilterKind, SamplePoint};
pub use texture::{ChannelSpan, Image, MipChain, TextureSet};
pub use trainer::{LossKind, TrainConfig, Trainer};
