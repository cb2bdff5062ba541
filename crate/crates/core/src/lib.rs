//! Egocentric activity recognition from gaze, ego-motion and visual words.
//!
//! Each channel is turned into a stream of discrete symbols, the symbols are
//! histogrammed over sliding windows, the histograms are concatenated and a
//! random forest labels each window.

pub mod config;
pub mod embeddings;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod forest;
pub mod gaze;
pub mod labels;
pub mod motion;
pub mod session;
pub mod vocab;
pub mod window;

pub use config::{ClassMode, PipelineConfig};
pub use error::{Error, Result};
pub use labels::ActivityLabel;

// Runs the code in the guide as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/gaze.md")]
    mod gaze {}
    #[doc = include_str!("../../../book/src/ego_motion.md")]
    mod ego_motion {}
    #[doc = include_str!("../../../book/src/visual_words.md")]
    mod visual_words {}
    #[doc = include_str!("../../../book/src/windows.md")]
    mod windows {}
    #[doc = include_str!("../../../book/src/forest.md")]
    mod forest {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
