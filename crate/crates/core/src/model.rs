//! The trainable/decodable model: feature pyramid plus decoder network.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::grid::AddressMode;
use crate::input::{mip_resolution, InputBuilder};
use crate::mlp::{Activation, DecoderWeights, MlpScratch};
use crate::profile::Profile;
use crate::pyramid::{feature_level_for_mip, FeaturePyramid};
use crate::texture::mip_count;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub profile: Profile,
    pub width: usize,
    pub num_mips: usize,
    pub channels: usize,
    pub activation: Activation,
    pub address_mode: AddressMode,
    pub pyramid: FeaturePyramid<T>,
    pub weights: DecoderWeights<T>,
}

impl<T: Real> Model<T> {
    /// Randomly initialized model for a `width × width × channels` set.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: RngCore + ?Sized>(
        profile: &Profile,
        width: usize,
        channels: usize,
        hidden: usize,
        activation: Activation,
        address_mode: AddressMode,
        rng: &mut R,
    ) -> Result<Self> {
        profile.validate()?;
        if channels == 0 || channels > crate::mlp::MAX_OUTPUT_CHANNELS {
            return Err(Error::ShapeMismatch(alloc::format!(
                "channel count {channels} outside 1..={}",
                crate::mlp::MAX_OUTPUT_CHANNELS
            )));
        }
        let num_mips = mip_count(width);
        let weights = DecoderWeights::init(profile.input_width(), hidden, channels, rng);
        let mut pyramid = FeaturePyramid::zeros(profile, width, num_mips);
        pyramid.randomize(rng);
        Ok(Self {
            profile: profile.clone(),
            width,
            num_mips,
            channels,
            activation,
            address_mode,
            pyramid,
            weights,
        })
    }

    pub fn check_texel(&self, x: i64, y: i64, mip: usize) -> Result<usize> {
        if mip >= self.num_mips {
            return Err(Error::MipOutOfRange {
                mip,
                num_mips: self.num_mips,
            });
        }
        let res = mip_resolution(mip, self.num_mips);
        if x < 0 || y < 0 || x >= res as i64 || y >= res as i64 {
            return Err(Error::TexelOutOfRange { x, y, res });
        }
        Ok(res)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            profile: self.profile.clone(),
            width: self.width,
            num_mips: self.num_mips,
            channels: self.channels,
            activation: self.activation,
            address_mode: self.address_mode,
            pyramid: self.pyramid.cast(),
            weights: self.weights.cast(),
        }
    }

    /// Decodes one texel without noise.
    pub fn decode_texel(&self, x: i64, y: i64, mip: usize) -> Result<Vec<T>> {
        self.check_texel(x, y, mip)?;
        let level = &self.pyramid.levels[feature_level_for_mip(mip, self.num_mips)?];
        let builder = InputBuilder::new(&self.pyramid, mip, self.num_mips, self.address_mode);
        let mut input = vec![T::zero(); self.weights.input_width()];
        builder.fill::<rand_chacha::ChaCha8Rng>(level, x, y, None, &mut input);
        let mut scratch: MlpScratch<T> = self.weights.scratch();
        Ok(self
            .weights
            .forward_into(&input, self.activation, &mut scratch)
            .to_vec())
    }
}
