//! Joint optimization of the feature pyramid and decoder against a mip chain.
//!
//! Training runs `steps` iterations with simulated quantization noise, then
//! snaps every grid value to its bin center, freezes the grids and fine-tunes
//! only the network for `finetune_fraction · steps` more iterations. One
//! cosine schedule spans both phases.

mod adam;
mod batch;
mod schedule;

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{AdamParams, Moments};
pub use batch::{batch_loss, loss_and_gradient, loss_and_gradient_into, Batch, Gradients};
pub use schedule::{lod_from_uniform, lr_at_step, sample_lod};

use crate::container::CompressedTexture;
use crate::grid::AddressMode;
use crate::mlp::{Activation, HIDDEN_WIDTH};
use crate::model::Model;
use crate::profile::Profile;
use crate::texture::MipChain;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    L2,
    /// `L2 + λ·(1 − SSIM)`, SSIM averaged per crop and channel.
    L2PlusSsim {
        lambda: f64,
    },
}

impl LossKind {
    pub const DEFAULT_SSIM_LAMBDA: f64 = 0.05;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_crops: usize,
    pub crop_size: usize,
    pub lr_grids: f64,
    pub lr_weights: f64,
    pub uniform_lod_fraction: f64,
    pub finetune_fraction: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub adam: AdamParams,
    pub activation: Activation,
    pub address_mode: AddressMode,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 250_000,
            batch_crops: 8,
            crop_size: 256,
            lr_grids: 0.01,
            lr_weights: 0.005,
            uniform_lod_fraction: 0.05,
            finetune_fraction: 0.05,
            seed: 0,
            loss: LossKind::L2,
            adam: AdamParams::default(),
            activation: Activation::HardGelu,
            address_mode: AddressMode::Clamp,
            hidden_width: HIDDEN_WIDTH,
        }
    }
}

impl TrainConfig {
    pub fn finetune_steps(&self) -> u64 {
        libm::round(self.finetune_fraction * self.steps as f64) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.steps + self.finetune_steps()
    }

    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.batch_crops == 0 || self.crop_size == 0 {
            return bad("batch_crops and crop_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.uniform_lod_fraction) || !(0.0..=1.0).contains(&self.finetune_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.lr_grids >= 0.0 && self.lr_weights >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.hidden_width == 0 {
            return bad("hidden_width must be positive");
        }
        if let LossKind::L2PlusSsim { lambda } = self.loss {
            if !(lambda >= 0.0) {
                return bad("ssim lambda must be non-negative");
            }
        }
        let b = &self.adam;
        if !(0.0..1.0).contains(&b.beta1) || !(0.0..1.0).contains(&b.beta2) || !(b.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Grids train with additive quantization noise.
    Noisy,
    /// Grids hold bin centers and are no longer updated.
    Frozen,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Noisy => "noisy",
            Phase::Frozen => "frozen",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub step: u64,
    pub phase: Phase,
    weight_moments: Vec<Moments<T>>,
    grid_moments: Vec<Moments<T>>,
    rng: ChaCha8Rng,
}

impl<T> TrainState<T> {
    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }
}

/// Outcome of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub lod: usize,
    pub phase: Phase,
    pub lr_grids: f64,
    pub lr_weights: f64,
}

pub struct Trainer<T> {
    config: TrainConfig,
    model: Model<T>,
    state: TrainState<T>,
    grads: Gradients<T>,
}

impl<T: Real> Trainer<T> {
    /// Initializes a model for `chain` from `config.seed`.
    pub fn new(chain: &MipChain, profile: &Profile, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::init(
            profile,
            chain.width(),
            chain.channels(),
            config.hidden_width,
            config.activation,
            config.address_mode,
            &mut rng,
        )?;
        Self::with_rng(model, config, rng)
    }

    /// Trains an existing model; the batch stream is seeded from `config.seed`.
    pub fn from_model(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(model, config, rng)
    }

    fn with_rng(model: Model<T>, config: TrainConfig, rng: ChaCha8Rng) -> Result<Self> {
        let state = TrainState {
            step: 0,
            phase: Phase::Noisy,
            weight_moments: model.weights.param_slices().map(|s| Moments::new(s.len())).collect(),
            grid_moments: model.pyramid.grids().map(|(g, _)| Moments::new(g.data.len())).collect(),
            rng,
        };
        let grads = Gradients::zeros_like(&model);
        Ok(Self {
            config,
            model,
            state,
            grads,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model<T> {
        &mut self.model
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    fn check_chain(&self, chain: &MipChain) -> Result<()> {
        if chain.width() != self.model.width
            || chain.channels() != self.model.channels
            || chain.num_mips() != self.model.num_mips
        {
            return Err(Error::ShapeMismatch(format!(
                "chain {}x{} with {} mips does not match model {}x{} with {} mips",
                chain.width(),
                chain.channels(),
                chain.num_mips(),
                self.model.width,
                self.model.channels,
                self.model.num_mips
            )));
        }
        Ok(())
    }

    /// Samples a batch, computes the loss and gradients, and applies Adam.
    /// Grid values are clamped to their quantization range after the update.
    pub fn train_step(&mut self, chain: &MipChain) -> Result<StepReport> {
        self.check_chain(chain)?;
        let noisy = self.state.phase == Phase::Noisy;
        let batch = Batch::sample(&mut self.state.rng, self.model.num_mips, &self.config, noisy);
        let loss = loss_and_gradient_into(&self.model, chain, &batch, self.config.loss, noisy, &mut self.grads);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.state.step,
                lod: batch.lod,
                phase: self.state.phase.name(),
                loss,
            });
        }

        let total = self.config.total_steps();
        let lr_w = lr_at_step(self.state.step, total, self.config.lr_weights);
        let lr_g = lr_at_step(self.state.step, total, self.config.lr_grids);
        let t = self.state.step + 1;
        let adam = self.config.adam;
        for ((params, grads), moments) in self
            .model
            .weights
            .param_slices_mut()
            .zip(self.grads.weights.param_slices())
            .zip(&mut self.state.weight_moments)
        {
            moments.update(params, grads, lr_w, t, &adam);
        }
        if noisy {
            for (((grid, q), grads), moments) in self
                .model
                .pyramid
                .grids_mut()
                .zip(&self.grads.grids)
                .zip(&mut self.state.grid_moments)
            {
                moments.update(&mut grid.data, grads, lr_g, t, &adam);
                grid.data.iter_mut().for_each(|v| *v = q.clamp(*v));
            }
        }

        let report = StepReport {
            step: self.state.step,
            loss,
            lod: batch.lod,
            phase: self.state.phase,
            lr_grids: lr_g,
            lr_weights: lr_w,
        };
        self.state.step += 1;
        Ok(report)
    }

    /// Snaps grids to bin centers and stops updating them.
    pub fn freeze(&mut self) {
        self.model.pyramid.quantize_in_place();
        self.state.phase = Phase::Frozen;
    }

    /// Full schedule: noisy phase, freeze, fine-tune. `progress` sees every step.
    pub fn run(&mut self, chain: &MipChain, progress: &mut dyn FnMut(&StepReport)) -> Result<()> {
        while self.state.step < self.config.steps {
            let r = self.train_step(chain)?;
            progress(&r);
        }
        self.freeze();
        while self.state.step < self.config.total_steps() {
            let r = self.train_step(chain)?;
            progress(&r);
        }
        Ok(())
    }
}

/// Trains a model for `chain` and packages it as a container.
pub fn compress(chain: &MipChain, profile: &Profile, config: &TrainConfig) -> Result<CompressedTexture> {
    compress_with_progress(chain, profile, config, &mut |_| {})
}

pub fn compress_with_progress(
    chain: &MipChain,
    profile: &Profile,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&StepReport),
) -> Result<CompressedTexture> {
    let mut trainer = Trainer::<f32>::new(chain, profile, config.clone())?;
    trainer.run(chain, progress)?;
    CompressedTexture::new(chain.names().to_vec(), trainer.into_model())
}
