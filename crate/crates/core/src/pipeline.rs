//! Per-utterance PAD extraction: both listings, then one PAD vector per
//! labeled segment.

use thiserror::Error;

use crate::audio::SampledSignal;
use crate::listing::{
    intensity_listing, pitch_listing, IntensityConfig, ListingError, PitchConfig,
};
use crate::pad::{extract_pad, LabeledPads, PadError};
use crate::segmentation::PhoneSegmentation;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Listing(#[from] ListingError),
    #[error(transparent)]
    Pad(#[from] PadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExtractConfig {
    pub pitch: PitchConfig,
    pub intensity: IntensityConfig,
    /// Drop segments without voiced frames instead of failing.
    pub skip_unvoiced: bool,
}

impl ExtractConfig {
    /// Sets one frame step for both listings.
    pub fn with_step(mut self, step: f64) -> Self {
        self.pitch.step = step;
        self.intensity.step = step;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub pads: LabeledPads,
    /// Segments dropped under `skip_unvoiced`, with the reason.
    pub skipped: Vec<PadError>,
}

pub fn extract_pads(
    signal: &SampledSignal,
    segmentation: &PhoneSegmentation,
    cfg: &ExtractConfig,
) -> Result<Extraction, PipelineError> {
    let pitch = pitch_listing(signal, &cfg.pitch)?;
    let intensity = intensity_listing(signal, &cfg.intensity)?;
    let mut out = Extraction::default();
    for segment in segmentation.segments() {
        match extract_pad(&pitch, &intensity, segment) {
            Ok(v) => out.pads.push((segment.label().to_owned(), v)),
            Err(e @ PadError::NoVoicedFrames { .. }) if cfg.skip_unvoiced => out.skipped.push(e),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}
