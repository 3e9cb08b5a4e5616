//! Synthetic labeled utterances and multi-speaker corpora with known PAD
//! ground truth.
//!
//! Every phone is a pure sine whose length is rounded to whole samples, so
//! the emitted segmentation matches the audio exactly. Corpus instances
//! jitter each base value uniformly within `base * (1 ± jitter)`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{synth_sine, write_wav_pcm16, AudioError, SampledSignal};
use crate::segmentation::{to_label_csv, PhoneSegment, PhoneSegmentation, SegmentationError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("malformed corpus spec row {line}: {reason}")]
    MalformedSpec { line: usize, reason: String },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSpec {
    pub label: String,
    pub f0: f64,
    /// Linear peak amplitude in `(0, 1]`.
    pub amplitude: f64,
    pub duration: f64,
    /// Silence appended after the phone, in seconds.
    pub gap_after: f64,
}

impl PhoneSpec {
    pub fn new(
        label: impl Into<String>,
        f0: f64,
        amplitude: f64,
        duration: f64,
        gap_after: f64,
    ) -> Self {
        Self {
            label: label.into(),
            f0,
            amplitude,
            duration,
            gap_after,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), SynthError> {
        let fail = |m: String| {
            Err(SynthError::InvalidSpec(format!(
                "phone {:?}: {m}",
                self.label
            )))
        };
        if self.label.trim().is_empty() {
            return fail("empty label".into());
        }
        let nyquist = sample_rate as f64 / 2.0;
        if self.f0 >= nyquist {
            return Err(AudioError::AliasedFrequency {
                f0: self.f0,
                nyquist,
            }
            .into());
        }
        if !(self.f0 > 0.0) {
            return fail(format!("f0 {} must be positive", self.f0));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return fail(format!("amplitude {} outside (0, 1]", self.amplitude));
        }
        if !(self.duration * self.f0 >= 3.0) || !self.duration.is_finite() {
            return fail(format!(
                "duration {} s is shorter than three periods",
                self.duration
            ));
        }
        if !(self.gap_after >= 0.0) || !self.gap_after.is_finite() {
            return fail(format!("gap {} s must be non-negative", self.gap_after));
        }
        Ok(())
    }
}

fn samples_for(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Concatenates one sine per spec, each followed by its silent gap.
pub fn synth_utterance(
    specs: &[PhoneSpec],
    sample_rate: u32,
) -> Result<(SampledSignal, PhoneSegmentation), SynthError> {
    if specs.is_empty() {
        return Err(SynthError::InvalidSpec("no phones".into()));
    }
    let rate = sample_rate as f64;
    let mut samples = Vec::new();
    let mut segments = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate(sample_rate)?;
        let start = samples.len();
        samples.extend(
            synth_sine(spec.f0, spec.amplitude, spec.duration, sample_rate)?.into_samples(),
        );
        let end = samples.len();
        segments.push(PhoneSegment::new(
            &spec.label,
            start as f64 / rate,
            end as f64 / rate,
        )?);
        samples.resize(end + samples_for(spec.gap_after, sample_rate), 0.0);
    }
    let signal = SampledSignal::new(samples, sample_rate)?;
    Ok((signal, PhoneSegmentation::new(segments, "phones")?))
}

/// Relative half-widths of the uniform instance jitter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jitter {
    pub f0: f64,
    pub amplitude: f64,
    pub duration: f64,
}

impl Jitter {
    pub fn uniform(width: f64) -> Self {
        Self {
            f0: width,
            amplitude: width,
            duration: width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeakerSpec {
    pub speaker_id: String,
    /// Base values, one per phone, in utterance order.
    pub phones: Vec<PhoneSpec>,
    pub jitter: Jitter,
    /// Number of utterances generated for this speaker.
    pub instances: usize,
}

impl SyntheticSpeakerSpec {
    fn validate(&self, sample_rate: u32) -> Result<(), SynthError> {
        let fail = |m: String| {
            Err(SynthError::InvalidSpec(format!(
                "speaker {:?}: {m}",
                self.speaker_id
            )))
        };
        if self.speaker_id.is_empty()
            || self.speaker_id.contains(['/', '\\'])
            || self.speaker_id.starts_with('.')
        {
            return fail("speaker id must be a plain non-empty name".into());
        }
        if self.instances == 0 {
            return fail("instance count must be at least 1".into());
        }
        if self.phones.is_empty() {
            return fail("no phones".into());
        }
        let j = self.jitter;
        for w in [j.f0, j.amplitude, j.duration] {
            if !(0.0..1.0).contains(&w) {
                return fail(format!("jitter {w} outside [0, 1)"));
            }
        }
        // the extremes of the jitter box must still be valid
        for base in &self.phones {
            for (sf, sa, sd) in [
                (1.0 + j.f0, 1.0 + j.amplitude, 1.0 - j.duration),
                (1.0 - j.f0, 1.0 - j.amplitude, 1.0 - j.duration),
            ] {
                PhoneSpec {
                    f0: base.f0 * sf,
                    amplitude: base.amplitude * sa,
                    duration: base.duration * sd,
                    ..base.clone()
                }
                .validate(sample_rate)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub speaker_id: String,
    pub instance: usize,
    /// Realized parameters, with durations rounded to whole samples.
    pub specs: Vec<PhoneSpec>,
    pub signal: SampledSignal,
    pub segmentation: PhoneSegmentation,
}

fn jittered(rng: &mut ChaCha8Rng, base: f64, width: f64) -> f64 {
    if width == 0.0 {
        base
    } else {
        base * (1.0 + width * rng.gen_range(-1.0..=1.0))
    }
}

/// Generates `instances` utterances per speaker. Each speaker draws from its
/// own stream of a ChaCha8 generator seeded with `seed`, so output depends
/// only on the seed and the speaker's position.
pub fn synth_corpus(
    speakers: &[SyntheticSpeakerSpec],
    seed: u64,
    sample_rate: u32,
) -> Result<Vec<SyntheticUtterance>, SynthError> {
    let rate = sample_rate as f64;
    let mut out = Vec::new();
    for (index, speaker) in speakers.iter().enumerate() {
        speaker.validate(sample_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        for instance in 0..speaker.instances {
            let specs: Vec<PhoneSpec> = speaker
                .phones
                .iter()
                .map(|base| {
                    let f0 = jittered(&mut rng, base.f0, speaker.jitter.f0);
                    let amplitude = jittered(&mut rng, base.amplitude, speaker.jitter.amplitude);
                    let duration = jittered(&mut rng, base.duration, speaker.jitter.duration);
                    PhoneSpec {
                        label: base.label.clone(),
                        f0,
                        amplitude,
                        duration: samples_for(duration, sample_rate) as f64 / rate,
                        gap_after: samples_for(base.gap_after, sample_rate) as f64 / rate,
                    }
                })
                .collect();
            let (signal, segmentation) = synth_utterance(&specs, sample_rate)?;
            out.push(SyntheticUtterance {
                speaker_id: speaker.speaker_id.clone(),
                instance,
                specs,
                signal,
                segmentation,
            });
        }
    }
    Ok(out)
}

pub const MANIFEST_HEADER: [&str; 8] = [
    "speaker_id",
    "instance",
    "phone",
    "f0_hz",
    "amp_linear",
    "duration_s",
    "wav_path",
    "labels_path",
];

/// File stem used for an utterance's WAV and label files.
pub fn utterance_stem(u: &SyntheticUtterance) -> String {
    format!("{}_{:03}", u.speaker_id, u.instance)
}

/// Writes each utterance as `<stem>.wav` (16-bit PCM) and `<stem>.labels.csv`
/// under `dir`, plus `manifest.csv`. Returns the manifest text; paths in it
/// are relative to `dir`.
pub fn write_corpus(corpus: &[SyntheticUtterance], dir: &Path) -> Result<String, SynthError> {
    fs::create_dir_all(dir)?;
    let mut manifest = csv::Writer::from_writer(Vec::new());
    manifest.write_record(MANIFEST_HEADER)?;
    for u in corpus {
        let stem = utterance_stem(u);
        let wav = format!("{stem}.wav");
        let labels = format!("{stem}.labels.csv");
        write_wav_pcm16(dir.join(&wav), &u.signal)?;
        fs::write(dir.join(&labels), to_label_csv(&u.segmentation))?;
        for spec in &u.specs {
            manifest.write_record([
                u.speaker_id.clone(),
                u.instance.to_string(),
                spec.label.clone(),
                spec.f0.to_string(),
                spec.amplitude.to_string(),
                spec.duration.to_string(),
                wav.clone(),
                labels.clone(),
            ])?;
        }
    }
    let text = String::from_utf8(manifest.into_inner().map_err(|e| e.into_error())?)
        .expect("manifest is utf-8");
    fs::write(dir.join("manifest.csv"), &text)?;
    Ok(text)
}

pub const CORPUS_SPEC_HEADER: [&str; 10] = [
    "speaker_id",
    "phone",
    "f0_hz",
    "amp_linear",
    "duration_s",
    "gap_s",
    "jitter_f0",
    "jitter_amp",
    "jitter_dur",
    "instances",
];

/// Parses a corpus description with one row per (speaker, phone) in
/// utterance order. Jitter and instance columns must agree across a
/// speaker's rows.
pub fn parse_corpus_spec(text: &str) -> Result<Vec<SyntheticSpeakerSpec>, SynthError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| SynthError::MalformedSpec {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != CORPUS_SPEC_HEADER {
        return Err(SynthError::MalformedSpec {
            line: 1,
            reason: format!("expected header {}", CORPUS_SPEC_HEADER.join(",")),
        });
    }
    let mut speakers: Vec<SyntheticSpeakerSpec> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| SynthError::MalformedSpec {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != CORPUS_SPEC_HEADER.len() {
            return Err(SynthError::MalformedSpec {
                line,
                reason: format!("expected 10 fields, found {}", rec.len()),
            });
        }
        let num = |idx: usize| {
            rec[idx]
                .parse::<f64>()
                .map_err(|e| SynthError::MalformedSpec {
                    line,
                    reason: format!("{}={:?}: {e}", CORPUS_SPEC_HEADER[idx], &rec[idx]),
                })
        };
        let instances = rec[9]
            .parse::<usize>()
            .map_err(|e| SynthError::MalformedSpec {
                line,
                reason: format!("instances={:?}: {e}", &rec[9]),
            })?;
        let phone = PhoneSpec::new(&rec[1], num(2)?, num(3)?, num(4)?, num(5)?);
        let jitter = Jitter {
            f0: num(6)?,
            amplitude: num(7)?,
            duration: num(8)?,
        };
        match speakers.iter_mut().find(|s| s.speaker_id == rec[0]) {
            Some(s) => {
                if s.jitter != jitter || s.instances != instances {
                    return Err(SynthError::MalformedSpec {
                        line,
                        reason: format!(
                            "jitter/instances differ from earlier rows of {:?}",
                            s.speaker_id
                        ),
                    });
                }
                s.phones.push(phone);
            }
            None => speakers.push(SyntheticSpeakerSpec {
                speaker_id: rec[0].to_owned(),
                phones: vec![phone],
                jitter,
                instances,
            }),
        }
    }
    if speakers.is_empty() {
        return Err(SynthError::MalformedSpec {
            line: 2,
            reason: "no rows".into(),
        });
    }
    Ok(speakers)
}
