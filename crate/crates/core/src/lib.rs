//! Frame-rate up-conversion (FRUC) forging and detection.
//!
//! The forging side turns a source video into a higher frame-rate copy with
//! nearest-neighbour duplication, temporal blending, or motion-compensated
//! interpolation. The detection side cuts six-frame windows into five-plane
//! luminance residual stacks and classifies them with FCDNet, voting over
//! several stacks per video.

pub mod cache;
pub mod channel_plan;
pub mod corpus;
pub mod detect;
pub mod fcdnet;
pub mod metrics;
pub mod motion;
pub mod plan;
pub mod preprocess;
pub mod synth;
pub mod train;
pub mod upconvert;
pub mod video;
pub mod y4m;

pub use fcdnet::{FcdNet, NetConfig};
pub use plan::{plan_conversion, ConversionPlan, Scheme, SlotRole};
pub use preprocess::{extract_stack, sample_stacks, InputKind, ResidualStack};
pub use video::{Fps, Frame, FrameSource, Video};

/// Minimum number of frames a detection window needs.
pub const WINDOW_FRAMES: usize = 6;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error(transparent)]
    Nn(#[from] frucforge_nn::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
