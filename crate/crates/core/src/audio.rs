//! Mono audio signals, RIFF/WAVE decoding and test-tone synthesis.
//!
//! Decoded samples are normalized by the full-scale value of their integer
//! type (`2^(bits-1)`, so 16-bit divides by 32768) and multi-channel frames
//! are downmixed by arithmetic mean.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a RIFF/WAVE file: {0}")]
    NotWav(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("data chunk truncated: declared {declared} bytes, found {found}")]
    TruncatedData { declared: usize, found: usize },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("frequency {f0} Hz is at or above the Nyquist limit {nyquist} Hz")]
    AliasedFrequency { f0: f64, nyquist: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mono samples in `[-1, 1]` at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSignal(
                "sample rate must be positive".into(),
            ));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(-1.0..=1.0).contains(*s))
        {
            return Err(AudioError::InvalidSignal(format!(
                "sample {i} = {s} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds, `len / sample_rate`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Returns a copy with every sample multiplied by `gain`, provided the
    /// result stays in range.
    pub fn scaled(&self, gain: f64) -> Result<Self, AudioError> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn u16_le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::NotWav(format!(
            "fmt chunk too short ({} bytes)",
            body.len()
        )));
    }
    let mut format = u16_le(&body[0..2]);
    let channels = u16_le(&body[2..4]);
    let sample_rate = u32_le(&body[4..8]);
    let bits_per_sample = u16_le(&body[14..16]);
    if format == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID
        if body.len() < 26 {
            return Err(AudioError::NotWav("extensible fmt chunk too short".into()));
        }
        format = u16_le(&body[24..26]);
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits_per_sample,
    })
}

/// Decodes an in-memory RIFF/WAVE file.
pub fn decode_wav(bytes: &[u8]) -> Result<SampledSignal, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotWav("missing RIFF/WAVE magic".into()));
    }
    let mut fmt = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_le(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(AudioError::NotWav("fmt chunk runs past end of file".into()));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                if size > available {
                    return Err(AudioError::TruncatedData {
                        declared: size,
                        found: available,
                    });
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        // chunks are word aligned
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::NotWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::NotWav("no data chunk".into()))?;
    decode_samples(fmt, data)
}

fn decode_samples(fmt: FmtChunk, data: &[u8]) -> Result<SampledSignal, AudioError> {
    if fmt.channels == 0 {
        return Err(AudioError::NotWav("zero channels".into()));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::NotWav("zero sample rate".into()));
    }
    let bytes_per_sample = match (fmt.format, fmt.bits_per_sample) {
        (FORMAT_PCM, 8) => 1,
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_PCM, 32) => 4,
        (FORMAT_FLOAT, 32) => 4,
        (FORMAT_FLOAT, 64) => 8,
        (FORMAT_PCM | FORMAT_FLOAT, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{bits}-bit samples with format code {}",
                fmt.format
            )))
        }
        (code, _) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format code {code:#06x}"
            )))
        }
    };
    let channels = fmt.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    let frames = data.len() / frame_bytes;
    let decode_one = |b: &[u8]| -> f64 {
        match (fmt.format, bytes_per_sample) {
            (FORMAT_PCM, 1) => (b[0] as f64 - 128.0) / 128.0,
            (FORMAT_PCM, 2) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            (FORMAT_PCM, 3) => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            (FORMAT_PCM, 4) => {
                i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0
            }
            (FORMAT_FLOAT, 4) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            _ => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    };
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let sum: f64 = frame.chunks_exact(bytes_per_sample).map(decode_one).sum();
        let mono = sum / channels as f64;
        // float data may exceed full scale; NaN maps to silence
        let mono = if mono.is_nan() {
            0.0
        } else {
            mono.clamp(-1.0, 1.0)
        };
        samples.push(mono);
    }
    SampledSignal::new(samples, fmt.sample_rate)
}

/// Loads a WAV file from disk.
pub fn load_wav(path: impl AsRef<Path>) -> Result<SampledSignal, AudioError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

/// Encodes a signal as mono 16-bit PCM. Samples are scaled by 32768,
/// rounded and clipped to the `i16` range.
pub fn encode_wav_pcm16(signal: &SampledSignal) -> Vec<u8> {
    let data_len = signal.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate().to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in signal.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, signal: &SampledSignal) -> Result<(), AudioError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_wav_pcm16(signal))?;
    Ok(())
}

/// `amplitude * sin(2π f0 n / rate)` for `round(duration * rate)` samples.
pub fn synth_sine(
    f0: f64,
    amplitude: f64,
    duration: f64,
    sample_rate: u32,
) -> Result<SampledSignal, AudioError> {
    let nyquist = sample_rate as f64 / 2.0;
    if sample_rate == 0 {
        return Err(AudioError::InvalidParameter(
            "sample rate must be positive".into(),
        ));
    }
    if !(f0 > 0.0) {
        return Err(AudioError::InvalidParameter(format!(
            "f0 must be positive, got {f0}"
        )));
    }
    if f0 >= nyquist {
        return Err(AudioError::AliasedFrequency { f0, nyquist });
    }
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(AudioError::InvalidParameter(format!(
            "amplitude {amplitude} outside [0, 1]"
        )));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(AudioError::InvalidParameter(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let n = (duration * sample_rate as f64).round() as usize;
    let w = 2.0 * PI * f0 / sample_rate as f64;
    let samples = (0..n).map(|i| amplitude * (w * i as f64).sin()).collect();
    SampledSignal::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(format: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let block = channels * bits / 8;
        out.extend_from_slice(&(rate * block as u32).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn one_second_of_silence() {
        let data = vec![0u8; 16000];
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 16, &data)).unwrap();
        assert_eq!(sig.len(), 8000);
        assert_eq!(sig.sample_rate(), 8000);
        assert_eq!(sig.duration(), 1.0);
        assert!(sig.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_full_scale_convention() {
        let data = 16384i16.to_le_bytes();
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 16, &data)).unwrap();
        assert_eq!(sig.samples(), &[0.5]);
        let data = i16::MIN.to_le_bytes();
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 16, &data)).unwrap();
        assert_eq!(sig.samples(), &[-1.0]);
    }

    #[test]
    fn stereo_downmix_is_mean() {
        let mut data = Vec::new();
        data.extend_from_slice(&0.2f32.to_le_bytes());
        data.extend_from_slice(&0.4f32.to_le_bytes());
        let sig = decode_wav(&wav_bytes(3, 2, 8000, 32, &data)).unwrap();
        assert!((sig.samples()[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn eight_and_twenty_four_bit() {
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 8, &[128, 192, 0])).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.5, -1.0]);
        // 0x400000 = 2^22 -> 0.5
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 24, &[0x00, 0x00, 0x40])).unwrap();
        assert_eq!(sig.samples(), &[0.5]);
        let sig = decode_wav(&wav_bytes(1, 1, 8000, 24, &[0x00, 0x00, 0x80])).unwrap();
        assert_eq!(sig.samples(), &[-1.0]);
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let plain = wav_bytes(1, 1, 8000, 16, &1000i16.to_le_bytes());
        let mut with_list = plain[..12].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]); // odd size plus pad byte
        with_list.extend_from_slice(&plain[12..]);
        let sig = decode_wav(&with_list).unwrap();
        assert_eq!(sig.samples(), &[1000.0 / 32768.0]);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            decode_wav(b"RIFX\0\0\0\0WAVE"),
            Err(AudioError::NotWav(_))
        ));
        assert!(matches!(decode_wav(b"short"), Err(AudioError::NotWav(_))));
        let alaw = wav_bytes(6, 1, 8000, 8, &[0, 0]);
        assert!(matches!(
            decode_wav(&alaw),
            Err(AudioError::UnsupportedEncoding(_))
        ));
        let mut truncated = wav_bytes(1, 1, 8000, 16, &[0; 10]);
        truncated.truncate(truncated.len() - 4);
        assert!(matches!(
            decode_wav(&truncated),
            Err(AudioError::TruncatedData {
                declared: 10,
                found: 6
            })
        ));
        let no_data = wav_bytes(1, 1, 8000, 16, &[])[..36].to_vec();
        assert!(matches!(decode_wav(&no_data), Err(AudioError::NotWav(_))));
    }

    #[test]
    fn sine_synthesis() {
        let sig = synth_sine(110.0, 0.5, 1.0, 8000).unwrap();
        assert_eq!(sig.len(), 8000);
        assert!(sig.samples().iter().all(|s| s.abs() <= 0.5));
        let silent = synth_sine(110.0, 0.0, 0.5, 8000).unwrap();
        assert!(silent.samples().iter().all(|&s| s == 0.0));
        assert!(matches!(
            synth_sine(4000.0, 0.5, 1.0, 8000),
            Err(AudioError::AliasedFrequency { .. })
        ));
        assert!(synth_sine(110.0, 1.5, 1.0, 8000).is_err());
        assert!(synth_sine(110.0, 0.5, 0.0, 8000).is_err());
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(SampledSignal::new(vec![0.0, 1.5], 8000).is_err());
        assert!(SampledSignal::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn pcm16_round_trip() {
        let sig = synth_sine(317.0, 0.9, 0.25, 8000).unwrap();
        let back = decode_wav(&encode_wav_pcm16(&sig)).unwrap();
        assert_eq!(back.len(), sig.len());
        for (a, b) in sig.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
