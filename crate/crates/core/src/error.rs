use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("mismatched resolutions: {0}")]
    MismatchedResolutions(String),
    #[error("texture set has no textures")]
    NoTextures,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mip {mip} out of range (chain has {num_mips} mips)")]
    MipOutOfRange { mip: usize, num_mips: usize },
    #[error("texel ({x}, {y}) out of range for a {res}x{res} mip")]
    TexelOutOfRange { x: i64, y: i64, res: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} at step {step} (lod {lod}, phase {phase})")]
    NonFiniteLoss {
        step: u64,
        lod: usize,
        phase: &'static str,
        loss: f64,
    },
    #[error("stochastic filtering requires a random number generator")]
    MissingRng,
    #[error("truncated stream")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("invalid container: {0}")]
    InvalidContainer(String),
}
