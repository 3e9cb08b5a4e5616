//! PAD (pitch, amplitude, duration) vectors, per-phone statistics and
//! per-speaker models.
//!
//! Statistics use the population convention: variance divides by the
//! instance count, `%deviation` is the coefficient of variation
//! `100 * sd / mean`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::listing::{Listing, ListingKind, Measurement, TIME_EPS};
use crate::segmentation::PhoneSegment;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PadError {
    #[error("no voiced pitch frame in {phone:?} [{start}, {end})")]
    NoVoicedFrames { phone: String, start: f64, end: f64 },
    #[error("no defined intensity frame in {phone:?} [{start}, {end})")]
    NoIntensityFrames { phone: String, start: f64, end: f64 },
    #[error("{phone:?} [{start}, {end}) extends past the listing coverage [{covered_from}, {covered_to}]")]
    ListingGap {
        phone: String,
        start: f64,
        end: f64,
        covered_from: f64,
        covered_to: f64,
    },
    #[error("listing mismatch: {0}")]
    ListingMismatch(String),
    #[error("no PAD instances")]
    EmptyInstances,
    #[error("mean {param} of {phone:?} is {mean}, %deviation undefined")]
    NonPositiveMean {
        phone: String,
        param: Param,
        mean: f64,
    },
    #[error("invalid PAD vector: {0}")]
    InvalidVector(String),
    #[error("invalid speaker model: {0}")]
    InvalidModel(String),
    #[error("invalid deviation range multiplier {0}")]
    InvalidMultiplier(f64),
    #[error("malformed PAD row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

/// One of the three PAD parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Pitch,
    Amplitude,
    Duration,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Pitch, Param::Amplitude, Param::Duration];
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::Pitch => "pitch",
            Param::Amplitude => "amplitude",
            Param::Duration => "duration",
        })
    }
}

/// A per-parameter triple, serialized as `{"p", "a", "d"}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Triple<T = f64> {
    pub p: T,
    pub a: T,
    pub d: T,
}

impl<T: Copy> Triple<T> {
    pub fn new(p: T, a: T, d: T) -> Self {
        Self { p, a, d }
    }

    pub fn get(&self, param: Param) -> T {
        match param {
            Param::Pitch => self.p,
            Param::Amplitude => self.a,
            Param::Duration => self.d,
        }
    }

    pub fn set(&mut self, param: Param, value: T) {
        match param {
            Param::Pitch => self.p = value,
            Param::Amplitude => self.a = value,
            Param::Duration => self.d = value,
        }
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(Param, T) -> U) -> Triple<U> {
        Triple {
            p: f(Param::Pitch, self.p),
            a: f(Param::Amplitude, self.a),
            d: f(Param::Duration, self.d),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Param, T)> + '_ {
        Param::ALL.into_iter().map(|p| (p, self.get(p)))
    }
}

/// Pitch (Hz), amplitude (dB) and duration (s) of one phone instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Triple", into = "Triple")]
pub struct PadVector {
    pitch: f64,
    amplitude: f64,
    duration: f64,
}

impl PadVector {
    pub fn new(pitch: f64, amplitude: f64, duration: f64) -> Result<Self, PadError> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(PadError::InvalidVector(format!(
                "pitch must be positive, got {pitch}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(PadError::InvalidVector(format!(
                "amplitude must be finite, got {amplitude}"
            )));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(PadError::InvalidVector(format!(
                "duration must be positive, got {duration}"
            )));
        }
        Ok(Self {
            pitch,
            amplitude,
            duration,
        })
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::Pitch => self.pitch,
            Param::Amplitude => self.amplitude,
            Param::Duration => self.duration,
        }
    }

    pub fn as_triple(&self) -> Triple {
        Triple::new(self.pitch, self.amplitude, self.duration)
    }

    /// Copy with one parameter replaced, validated like [`PadVector::new`].
    pub fn with(&self, param: Param, value: f64) -> Result<Self, PadError> {
        let mut t = self.as_triple();
        t.set(param, value);
        Self::try_from(t)
    }
}

impl TryFrom<Triple> for PadVector {
    type Error = PadError;

    fn try_from(t: Triple) -> Result<Self, PadError> {
        PadVector::new(t.p, t.a, t.d)
    }
}

impl From<PadVector> for Triple {
    fn from(v: PadVector) -> Self {
        v.as_triple()
    }
}

fn check_listings(pitch: &Listing, intensity: &Listing) -> Result<(), PadError> {
    if pitch.kind() != ListingKind::Pitch || intensity.kind() != ListingKind::Intensity {
        return Err(PadError::ListingMismatch(format!(
            "expected pitch and intensity listings, got {} and {}",
            pitch.kind(),
            intensity.kind()
        )));
    }
    if (pitch.step() - intensity.step()).abs() > TIME_EPS {
        return Err(PadError::ListingMismatch(format!(
            "pitch step {} differs from intensity step {}",
            pitch.step(),
            intensity.step()
        )));
    }
    Ok(())
}

fn check_coverage(listing: &Listing, segment: &PhoneSegment) -> Result<(), PadError> {
    let gap = |from: f64, to: f64| PadError::ListingGap {
        phone: segment.label().to_owned(),
        start: segment.start(),
        end: segment.end(),
        covered_from: from,
        covered_to: to,
    };
    let (from, to) = listing.coverage().ok_or_else(|| gap(0.0, 0.0))?;
    if segment.start() < from - TIME_EPS || segment.end() > to + TIME_EPS {
        return Err(gap(from, to));
    }
    Ok(())
}

fn max_in_segment(listing: &Listing, segment: &PhoneSegment) -> Option<f64> {
    listing
        .frames()
        .filter(|(t, _)| segment.contains(*t))
        .filter_map(|(_, m)| match m {
            Measurement::Voiced(v) | Measurement::Level(v) => Some(v),
            Measurement::Undefined => None,
        })
        .reduce(f64::max)
}

/// PAD vector of one segment: the largest voiced pitch and the largest
/// intensity level among frames centered in `[start, end)`, and the
/// segment duration.
pub fn extract_pad(
    pitch: &Listing,
    intensity: &Listing,
    segment: &PhoneSegment,
) -> Result<PadVector, PadError> {
    check_listings(pitch, intensity)?;
    check_coverage(pitch, segment)?;
    check_coverage(intensity, segment)?;
    let p = max_in_segment(pitch, segment).ok_or_else(|| PadError::NoVoicedFrames {
        phone: segment.label().to_owned(),
        start: segment.start(),
        end: segment.end(),
    })?;
    let a = max_in_segment(intensity, segment).ok_or_else(|| PadError::NoIntensityFrames {
        phone: segment.label().to_owned(),
        start: segment.start(),
        end: segment.end(),
    })?;
    PadVector::new(p, a, segment.duration())
}

/// Streaming population mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhoneStats {
    #[serde(skip)]
    phone: String,
    count: usize,
    mean: PadVector,
    variance: Triple,
    sd: Triple,
    pct_deviation: Triple,
}

impl PhoneStats {
    pub fn phone(&self) -> &str {
        &self.phone
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &PadVector {
        &self.mean
    }

    pub fn variance(&self) -> &Triple {
        &self.variance
    }

    pub fn sd(&self) -> &Triple {
        &self.sd
    }

    pub fn pct_deviation(&self) -> &Triple {
        &self.pct_deviation
    }

    /// Checks the derived fields against each other.
    pub fn validate(&self) -> Result<(), PadError> {
        let bad = |msg: String| {
            Err(PadError::InvalidModel(format!(
                "phone {:?}: {msg}",
                self.phone
            )))
        };
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        for param in Param::ALL {
            let (mean, var, sd, pct) = (
                self.mean.get(param),
                self.variance.get(param),
                self.sd.get(param),
                self.pct_deviation.get(param),
            );
            if !(var >= 0.0) || !var.is_finite() {
                return bad(format!("{param} variance {var} is negative or not finite"));
            }
            if !close(sd, var.sqrt()) {
                return bad(format!("{param} sd {sd} is not sqrt(variance {var})"));
            }
            if !(mean > 0.0) {
                return bad(format!("{param} mean {mean} is not positive"));
            }
            if !close(pct, 100.0 * sd / mean) {
                return bad(format!("{param} %deviation {pct} is not 100*sd/mean"));
            }
        }
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Mean, population variance, SD and %deviation of one phone's instances.
pub fn build_phone_stats(phone: &str, instances: &[PadVector]) -> Result<PhoneStats, PadError> {
    if instances.is_empty() {
        return Err(PadError::EmptyInstances);
    }
    let mut acc = [Welford::default(); 3];
    for v in instances {
        for (i, param) in Param::ALL.into_iter().enumerate() {
            acc[i].push(v.get(param));
        }
    }
    let mut mean = Triple::default();
    let mut variance = Triple::default();
    for (i, param) in Param::ALL.into_iter().enumerate() {
        mean.set(param, acc[i].mean);
        variance.set(param, acc[i].population_variance());
    }
    for param in Param::ALL {
        let m = mean.get(param);
        if !(m > 0.0) {
            return Err(PadError::NonPositiveMean {
                phone: phone.to_owned(),
                param,
                mean: m,
            });
        }
    }
    let sd = variance.map(|_, v| v.sqrt());
    let pct_deviation = sd.map(|param, s| 100.0 * s / mean.get(param));
    Ok(PhoneStats {
        phone: phone.to_owned(),
        count: instances.len(),
        mean: PadVector::try_from(mean)?,
        variance,
        sd,
        pct_deviation,
    })
}

/// Per-phone statistics for one speaker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeakerModel {
    speaker_id: String,
    phones: BTreeMap<String, PhoneStats>,
    #[serde(skip_serializing_if = "String::is_empty")]
    corpus_note: String,
}

impl SpeakerModel {
    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn phones(&self) -> &BTreeMap<String, PhoneStats> {
        &self.phones
    }

    pub fn phone(&self, label: &str) -> Option<&PhoneStats> {
        self.phones.get(label)
    }

    pub fn corpus_note(&self) -> &str {
        &self.corpus_note
    }

    pub fn with_corpus_note(mut self, note: impl Into<String>) -> Self {
        self.corpus_note = note.into();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a model written by [`SpeakerModel::to_json`].
    pub fn from_json(text: &str) -> Result<Self, PadError> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| PadError::InvalidModel(e.to_string()))?;
        if raw.speaker_id.is_empty() {
            return Err(PadError::InvalidModel("empty speaker_id".into()));
        }
        let phones = raw
            .phones
            .into_iter()
            .map(|(label, s)| {
                let stats = PhoneStats {
                    phone: label.clone(),
                    count: s.count,
                    mean: s.mean,
                    variance: s.variance,
                    sd: s.sd,
                    pct_deviation: s.pct_deviation,
                };
                stats.validate()?;
                Ok((label, stats))
            })
            .collect::<Result<BTreeMap<_, _>, PadError>>()?;
        Ok(Self {
            speaker_id: raw.speaker_id,
            phones,
            corpus_note: raw.corpus_note,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    speaker_id: String,
    phones: BTreeMap<String, RawStats>,
    #[serde(default)]
    corpus_note: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStats {
    count: usize,
    mean: PadVector,
    variance: Triple,
    sd: Triple,
    pct_deviation: Triple,
}

/// Groups labeled instances by phone and builds one [`PhoneStats`] each.
/// Repeated pairs count as separate instances.
pub fn build_speaker_model<'a, I>(speaker_id: &str, instances: I) -> Result<SpeakerModel, PadError>
where
    I: IntoIterator<Item = (&'a str, PadVector)>,
{
    let mut grouped: BTreeMap<String, Vec<PadVector>> = BTreeMap::new();
    for (phone, v) in instances {
        grouped.entry(phone.to_owned()).or_default().push(v);
    }
    if grouped.is_empty() {
        return Err(PadError::EmptyInstances);
    }
    let phones = grouped
        .into_iter()
        .map(|(phone, vs)| build_phone_stats(&phone, &vs).map(|s| (phone, s)))
        .collect::<Result<_, _>>()?;
    Ok(SpeakerModel {
        speaker_id: speaker_id.to_owned(),
        phones,
        corpus_note: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// Inclusive at both ends.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Acceptance interval `mean ± k * sd` for each parameter of a phone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationRange {
    pub k: f64,
    pub pitch: Interval,
    pub amplitude: Interval,
    pub duration: Interval,
}

impl DeviationRange {
    pub fn get(&self, param: Param) -> &Interval {
        match param {
            Param::Pitch => &self.pitch,
            Param::Amplitude => &self.amplitude,
            Param::Duration => &self.duration,
        }
    }

    pub fn contains(&self, v: &PadVector) -> Triple<bool> {
        Triple::new(
            self.pitch.contains(v.pitch()),
            self.amplitude.contains(v.amplitude()),
            self.duration.contains(v.duration()),
        )
    }
}

pub fn deviation_range(stats: &PhoneStats, k: f64) -> Result<DeviationRange, PadError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(PadError::InvalidMultiplier(k));
    }
    let interval = |param: Param| {
        let (m, s) = (stats.mean.get(param), stats.sd.get(param));
        Interval {
            lower: m - k * s,
            upper: m + k * s,
        }
    };
    Ok(DeviationRange {
        k,
        pitch: interval(Param::Pitch),
        amplitude: interval(Param::Amplitude),
        duration: interval(Param::Duration),
    })
}

pub const PAD_CSV_HEADER: [&str; 4] = ["phone", "pitch_hz", "amplitude_db", "duration_s"];

/// Labeled PAD instances in file order.
pub type LabeledPads = Vec<(String, PadVector)>;

pub fn parse_pad_csv(text: &str) -> Result<LabeledPads, PadError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| PadError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != PAD_CSV_HEADER {
        return Err(PadError::MalformedRow {
            line: 1,
            reason: format!("expected header {}", PAD_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PadError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(PadError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        if rec[0].is_empty() {
            return Err(PadError::MalformedRow {
                line,
                reason: "empty phone label".into(),
            });
        }
        let num = |idx: usize| {
            rec[idx].parse::<f64>().map_err(|e| PadError::MalformedRow {
                line,
                reason: format!("{:?}: {e}", &rec[idx]),
            })
        };
        let v = PadVector::new(num(1)?, num(2)?, num(3)?).map_err(|e| PadError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        out.push((rec[0].to_owned(), v));
    }
    Ok(out)
}

/// Writes the PAD instance CSV with shortest round-trip numbers.
pub fn write_pad_csv<W: Write>(out: W, pads: &[(String, PadVector)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAD_CSV_HEADER)?;
    for (phone, v) in pads {
        w.write_record([
            phone.clone(),
            v.pitch().to_string(),
            v.amplitude().to_string(),
            v.duration().to_string(),
        ])?;
    }
    w.flush()
}

pub fn to_pad_csv(pads: &[(String, PadVector)]) -> String {
    let mut buf = Vec::new();
    write_pad_csv(&mut buf, pads).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}
