//! Pitch and intensity listings: uniformly stepped per-frame tracks.
//!
//! Frames are centered at `(i + 0.5) * step` for `i` in `0..ceil(duration / step)`,
//! so the listing covers `[0, n * step]`, which reaches the end of the signal. Pitch and intensity listings built
//! with the same step share the same frame times.
//!
//! Pitch is estimated per frame by normalized autocorrelation over a window
//! of three periods of the pitch floor. The peak lag is refined by parabolic
//! interpolation. Frames are left undefined when the window sticks out of the
//! signal, when the frame is silent relative to the global peak, when the
//! periodicity peak is below the voicing threshold, when one-period
//! chunks of the window carry uneven energy or fail to match each other (a
//! partly voiced window, or one spanning two tones), or when the two halves
//! of the window disagree on pitch (two close tones).

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::SampledSignal;

/// Tolerance on frame spacing and boundary comparisons, in seconds.
pub const TIME_EPS: f64 = 1e-9;

/// Minimum ratio between the lowest and highest energy of one-period
/// chunks tiling a pitch window. A periodic signal has the same energy in
/// every chunk of exactly one period whatever its phase, so windows that
/// straddle an onset or offset fall below it.
const MIN_PERIOD_ENERGY_RATIO: f64 = 0.95;

/// Minimum normalized correlation between consecutive one-period chunks.
/// A window spanning two different tones falls below it at the junction.
const MIN_PERIOD_CORRELATION: f64 = 0.9;

/// Largest disagreement, in Hz, between the pitch of the two halves of a
/// window. Each half of a pure tone is within about 0.35 Hz, so this only
/// trips on a window that spans two tones of close but different pitch,
/// which the chunk correlation cannot tell apart.
const MAX_HALF_WINDOW_DRIFT_HZ: f64 = 0.8;

/// Peaks within this fraction of the strongest autocorrelation peak are
/// treated as equally good; the shortest such lag wins, which avoids
/// reporting a sub-octave.
const OCTAVE_PEAK_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ListingError {
    #[error("signal of {duration} s is shorter than the {window} s analysis window")]
    SignalTooShort { duration: f64, window: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("signal is empty")]
    EmptySignal,
    #[error("invalid listing: {0}")]
    InvalidListing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListingKind {
    Pitch,
    Intensity,
}

impl fmt::Display for ListingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ListingKind::Pitch => "pitch",
            ListingKind::Intensity => "intensity",
        })
    }
}

/// One frame of a listing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    /// Pitch in Hz.
    Voiced(f64),
    /// Intensity in dB.
    Level(f64),
    Undefined,
}

impl Measurement {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Measurement::Voiced(v) | Measurement::Level(v) => Some(v),
            Measurement::Undefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, Measurement::Undefined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Listing {
    kind: ListingKind,
    step: f64,
    frame_times: Vec<f64>,
    values: Vec<Measurement>,
}

impl Listing {
    pub fn new(
        kind: ListingKind,
        step: f64,
        frame_times: Vec<f64>,
        values: Vec<Measurement>,
    ) -> Result<Self, ListingError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(ListingError::InvalidListing(format!(
                "step must be positive, got {step}"
            )));
        }
        if frame_times.len() != values.len() {
            return Err(ListingError::InvalidListing(format!(
                "{} frame times but {} values",
                frame_times.len(),
                values.len()
            )));
        }
        for w in frame_times.windows(2) {
            if ((w[1] - w[0]) - step).abs() > TIME_EPS {
                return Err(ListingError::InvalidListing(format!(
                    "frame spacing {} differs from step {step}",
                    w[1] - w[0]
                )));
            }
        }
        for v in &values {
            let ok = matches!(
                (kind, v),
                (_, Measurement::Undefined)
                    | (ListingKind::Pitch, Measurement::Voiced(_))
                    | (ListingKind::Intensity, Measurement::Level(_))
            );
            if !ok {
                return Err(ListingError::InvalidListing(format!(
                    "{v:?} in a {kind} listing"
                )));
            }
            if let Measurement::Voiced(hz) = v {
                if !(*hz > 0.0) {
                    return Err(ListingError::InvalidListing(format!(
                        "non-positive pitch {hz}"
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            step,
            frame_times,
            values,
        })
    }

    pub fn kind(&self) -> ListingKind {
        self.kind
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn values(&self) -> &[Measurement] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = (f64, Measurement)> + '_ {
        self.frame_times
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    /// Time span represented by the frames: each frame stands for half a
    /// step on either side of its center.
    pub fn coverage(&self) -> Option<(f64, f64)> {
        let first = *self.frame_times.first()?;
        let last = *self.frame_times.last()?;
        Some((first - self.step / 2.0, last + self.step / 2.0))
    }

    /// Writes `time_s,value` rows; undefined frames have an empty value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time_s,value")?;
        for (t, m) in self.frames() {
            match m.value() {
                Some(v) => writeln!(out, "{t:.6},{v:.3}")?,
                None => writeln!(out, "{t:.6},")?,
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    /// Lowest detectable pitch in Hz; also sets the window to `3 / floor` s.
    pub floor: f64,
    pub ceiling: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames whose RMS is below this fraction of the global absolute peak
    /// are silent.
    pub silence_threshold: f64,
    pub step: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            floor: 75.0,
            ceiling: 600.0,
            voicing_threshold: 0.45,
            silence_threshold: 0.03,
            step: 0.010,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), ListingError> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.floor > 0.0 && self.floor < self.ceiling && self.ceiling < nyquist) {
            return Err(ListingError::InvalidConfig(format!(
                "need 0 < floor ({}) < ceiling ({}) < Nyquist ({nyquist})",
                self.floor, self.ceiling
            )));
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold < 1.0) {
            return Err(ListingError::InvalidConfig(format!(
                "voicing threshold {} outside (0, 1)",
                self.voicing_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.silence_threshold) {
            return Err(ListingError::InvalidConfig(format!(
                "silence threshold {} outside [0, 1)",
                self.silence_threshold
            )));
        }
        validate_step(self.step)
    }

    /// Analysis window length in seconds.
    pub fn window(&self) -> f64 {
        3.0 / self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityConfig {
    pub step: f64,
    /// Offset added to `20 log10(rms)`.
    pub calibration_db: f64,
    /// Levels below this are undefined.
    pub floor_db: f64,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            step: 0.010,
            calibration_db: 94.0,
            floor_db: 0.0,
        }
    }
}

fn validate_step(step: f64) -> Result<(), ListingError> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(ListingError::InvalidConfig(format!(
            "step must be positive, got {step}"
        )))
    }
}

/// Frame centers at `(i + 0.5) * step`, enough frames to cover the whole
/// signal. The last frame may overhang the end by less than half a step.
fn frame_grid(duration: f64, step: f64) -> Vec<f64> {
    let n = ((duration / step) - TIME_EPS).ceil().max(1.0) as usize;
    (0..n).map(|i| (i as f64 + 0.5) * step).collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Normalized autocorrelation of `frame` for every lag in `0..=max_lag`.
/// For lag `t` the products `x[n] x[n+t]` are normalized by the energies of
/// the two overlapping parts, so a pure tone scores close to 1 at its
/// period regardless of level.
fn normalized_autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in frame {
        acc += v * v;
        prefix.push(acc);
    }
    (0..=max_lag)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            let num: f64 = frame[..n - lag]
                .iter()
                .zip(&frame[lag..])
                .map(|(a, b)| a * b)
                .sum();
            let e_head = prefix[n - lag];
            let e_tail = prefix[n] - prefix[lag];
            let denom = (e_head * e_tail).sqrt();
            if denom > 0.0 {
                num / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// Tiles `frame` with chunks of one (fractional) `period` from the start,
/// plus one chunk flush with the end, and compares their energies. Chunk
/// edges between samples take the matching fraction of that sample.
fn period_energy_is_stationary(frame: &[f64], period: f64) -> bool {
    let n = frame.len();
    if !(period >= 1.0) || period > n as f64 {
        return false;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in frame {
        prefix.push(prefix[prefix.len() - 1] + v * v);
    }
    let cumulative = |t: f64| {
        let i = t.floor() as usize;
        if i >= n {
            prefix[n]
        } else {
            prefix[i] + (t - i as f64) * frame[i] * frame[i]
        }
    };
    let whole = (n as f64 / period).floor() as usize;
    let energies = (0..whole)
        .map(|j| cumulative((j + 1) as f64 * period) - cumulative(j as f64 * period))
        .chain([prefix[n] - cumulative(n as f64 - period)]);
    let (lo, hi) = energies.fold((f64::INFINITY, 0.0f64), |(lo, hi), e| {
        (lo.min(e), hi.max(e))
    });
    lo >= MIN_PERIOD_ENERGY_RATIO * hi
}

/// Correlates each one-period chunk with the next, including the last
/// pair flush with the end of `frame`.
fn consecutive_periods_agree(frame: &[f64], lag: usize) -> bool {
    let n = frame.len();
    if lag == 0 || 2 * lag > n {
        return false;
    }
    let starts = (0..=n - 2 * lag).step_by(lag).chain([n - 2 * lag]);
    starts.into_iter().all(|a| {
        let (x, y) = (&frame[a..a + lag], &frame[a + lag..a + 2 * lag]);
        let dot: f64 = x.iter().zip(y).map(|(u, v)| u * v).sum();
        let ex: f64 = x.iter().map(|u| u * u).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        ex > 0.0 && ey > 0.0 && dot >= MIN_PERIOD_CORRELATION * (ex * ey).sqrt()
    })
}

struct PitchAnalyzer {
    cfg: PitchConfig,
    rate: f64,
    window: usize,
    min_lag: usize,
    max_lag: usize,
    silence_rms: f64,
}

impl PitchAnalyzer {
    fn frame_pitch(&self, samples: &[f64], center: f64) -> Measurement {
        let c = (center * self.rate).round() as isize;
        let start = c - (self.window / 2) as isize;
        let end = start + self.window as isize;
        if start < 0 || end > samples.len() as isize {
            return Measurement::Undefined;
        }
        let raw = &samples[start as usize..end as usize];
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let frame: Vec<f64> = raw.iter().map(|v| v - mean).collect();

        let level = rms(&frame);
        if level == 0.0 || level < self.silence_rms {
            return Measurement::Undefined;
        }
        let r = normalized_autocorrelation(&frame, self.max_lag + 1);
        let peaks: Vec<usize> = (self.min_lag..=self.max_lag)
            .filter(|&t| t >= 1 && r[t] > 0.0 && r[t] >= r[t - 1] && r[t] > r[t + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&t| r[t]).reduce(f64::max) else {
            return Measurement::Undefined;
        };
        let lag = peaks
            .iter()
            .copied()
            .find(|&t| r[t] >= OCTAVE_PEAK_RATIO * best)
            .expect("the strongest peak qualifies");
        if r[lag] < self.cfg.voicing_threshold {
            return Measurement::Undefined;
        }
        let (left, mid, right) = (r[lag - 1], r[lag], r[lag + 1]);
        let curvature = left - 2.0 * mid + right;
        let offset = if curvature < 0.0 {
            (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let hz = self.rate / (lag as f64 + offset);
        if hz < self.cfg.floor || hz > self.cfg.ceiling {
            return Measurement::Undefined;
        }
        let period = lag as f64 + offset;
        if !period_energy_is_stationary(&frame, period)
            || !consecutive_periods_agree(&frame, period.round() as usize)
            || !halves_agree(&frame, period, self.rate)
        {
            return Measurement::Undefined;
        }
        Measurement::Voiced(hz)
    }
}

/// Period (in samples, refined) of the strongest normalized
/// cross-correlation peak of `x` against itself within `lo..=hi`.
fn local_period(x: &[f64], lo: usize, hi: usize) -> Option<f64> {
    let n = x.len();
    let lo = lo.max(2);
    let hi = hi.min(n.saturating_sub(3));
    if hi < lo {
        return None;
    }
    let r = |t: usize| {
        let (a, b) = (&x[..n - t], &x[t..]);
        let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
        let ea: f64 = a.iter().map(|u| u * u).sum();
        let eb: f64 = b.iter().map(|u| u * u).sum();
        if ea > 0.0 && eb > 0.0 {
            dot / (ea * eb).sqrt()
        } else {
            0.0
        }
    };
    let scores: Vec<f64> = (lo - 1..=hi + 1).map(r).collect();
    let i = (1..scores.len() - 1).max_by(|&a, &b| scores[a].total_cmp(&scores[b]))?;
    let (left, mid, right) = (scores[i - 1], scores[i], scores[i + 1]);
    let curvature = left - 2.0 * mid + right;
    let offset = if curvature < 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some((lo - 1 + i) as f64 + offset)
}

/// Whether both halves of `frame` oscillate at the same pitch as the
/// whole-window `period`, within [`MAX_HALF_WINDOW_DRIFT_HZ`].
fn halves_agree(frame: &[f64], period: f64, rate: f64) -> bool {
    let (first, second) = frame.split_at(frame.len() / 2);
    let lo = (period * 0.8).floor() as usize;
    let hi = (period * 1.25).ceil() as usize;
    match (local_period(first, lo, hi), local_period(second, lo, hi)) {
        (Some(a), Some(b)) => (rate / a - rate / b).abs() <= MAX_HALF_WINDOW_DRIFT_HZ,
        _ => false,
    }
}

/// Pitch listing of `signal`, one measurement per `cfg.step`.
pub fn pitch_listing(signal: &SampledSignal, cfg: &PitchConfig) -> Result<Listing, ListingError> {
    cfg.validate(signal.sample_rate())?;
    let rate = signal.sample_rate() as f64;
    let window = (cfg.window() * rate).round() as usize;
    if signal.len() < window {
        return Err(ListingError::SignalTooShort {
            duration: signal.duration(),
            window: cfg.window(),
        });
    }
    let min_lag = ((rate / cfg.ceiling).floor() as usize).max(1);
    let max_lag = (rate / cfg.floor).ceil() as usize;
    if max_lag + 2 > window {
        return Err(ListingError::InvalidConfig(format!(
            "window of {window} samples cannot cover lags up to {max_lag}"
        )));
    }
    let peak = signal.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let analyzer = PitchAnalyzer {
        cfg: *cfg,
        rate,
        window,
        min_lag,
        max_lag,
        silence_rms: cfg.silence_threshold * peak,
    };
    let times = frame_grid(signal.duration(), cfg.step);
    let values = times
        .iter()
        .map(|&t| {
            if peak == 0.0 {
                Measurement::Undefined
            } else {
                analyzer.frame_pitch(signal.samples(), t)
            }
        })
        .collect();
    Listing::new(ListingKind::Pitch, cfg.step, times, values)
}

/// Intensity listing: `20 log10(rms) + calibration_db` over a window of two
/// steps centered on each frame. Edge frames use the samples available.
pub fn intensity_listing(
    signal: &SampledSignal,
    cfg: &IntensityConfig,
) -> Result<Listing, ListingError> {
    if signal.is_empty() {
        return Err(ListingError::EmptySignal);
    }
    validate_step(cfg.step)?;
    let rate = signal.sample_rate() as f64;
    let n = signal.len() as isize;
    let min_rms = 10f64.powf((cfg.floor_db - cfg.calibration_db) / 20.0);
    let times = frame_grid(signal.duration(), cfg.step);
    let values = times
        .iter()
        .map(|&t| {
            let lo = ((t - cfg.step) * rate).round() as isize;
            let hi = ((t + cfg.step) * rate).round() as isize;
            let (lo, hi) = (lo.clamp(0, n) as usize, hi.clamp(0, n) as usize);
            let level = rms(&signal.samples()[lo..hi]);
            if level == 0.0 || level < min_rms {
                Measurement::Undefined
            } else {
                Measurement::Level(20.0 * level.log10() + cfg.calibration_db)
            }
        })
        .collect();
    Listing::new(ListingKind::Intensity, cfg.step, times, values)
}
