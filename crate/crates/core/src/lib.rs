//! PAD (pitch, amplitude, duration) stress features for speaker
//! recognition.
//!
//! The pipeline runs from audio and phone boundaries to per-frame listings,
//! then per-phone PAD vectors, then per-speaker statistics. Verification
//! and identification compare an utterance's PAD contour against contours
//! assembled from those statistics.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod listing;
pub mod pad;
pub mod pipeline;
pub mod recognition;
pub mod segmentation;
pub mod synth;
