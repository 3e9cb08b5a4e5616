//! Reference contours, contour distance, and the deviation-range gate used
//! for verification and identification.
//!
//! A reference contour concatenates a speaker's mean PAD vectors along the
//! phone sequence of a test utterance. The distance to the test contour is
//! Euclidean over all entries and parameters after per-parameter weighting.
//! Acceptance is gated per parameter (each test value inside
//! `mean ± k * sd` of its phone) and/or on the SD-weighted distance
//! (at most `k * sqrt(3 * entries)`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pad::{deviation_range, PadError, PadVector, Param, SpeakerModel, Triple};

#[derive(Debug, Error, PartialEq)]
pub enum RecognitionError {
    #[error("phone {0:?} is not in the speaker model")]
    UnknownPhone(String),
    #[error("contour is empty")]
    EmptyContour,
    #[error("contours do not line up: {0}")]
    ContourMismatch(String),
    #[error("{param} of phone {phone:?} has zero deviation but a nonzero difference")]
    DegenerateStats { phone: String, param: Param },
    #[error("no candidate model can score the test contour")]
    NoCandidates,
    #[error("speaker id {0:?} appears more than once")]
    DuplicateSpeaker(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("largest {0} is not positive")]
    NonPositiveMax(Param),
    #[error("{param} value {value} is not positive")]
    NonPositiveValue { param: Param, value: f64 },
    #[error(transparent)]
    Pad(#[from] PadError),
}

/// Labeled PAD vectors in utterance order.
#[derive(Debug, Clone, PartialEq)]
pub struct PadContour {
    entries: Vec<(String, PadVector)>,
}

impl PadContour {
    pub fn new(entries: Vec<(String, PadVector)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, PadVector)] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn select(&self, keep: &[usize]) -> PadContour {
        PadContour {
            entries: keep.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

impl FromIterator<(String, PadVector)> for PadContour {
    fn from_iter<I: IntoIterator<Item = (String, PadVector)>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPhone {
    #[default]
    Strict,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerParameterMax,
    #[default]
    SpeakerSd,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    PerParameter,
    Distance,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub k: f64,
    pub missing_phone: MissingPhone,
    pub normalization: Normalization,
    pub gate: Gate,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            k: 1.0,
            missing_phone: MissingPhone::default(),
            normalization: Normalization::default(),
            gate: Gate::default(),
        }
    }
}

impl MatchPolicy {
    pub fn validate(&self) -> Result<(), RecognitionError> {
        if self.k > 0.0 && self.k.is_finite() {
            Ok(())
        } else {
            Err(RecognitionError::InvalidPolicy(format!(
                "k must be positive, got {}",
                self.k
            )))
        }
    }
}

/// A reference contour plus the bookkeeping needed to align a test
/// contour with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceContour {
    pub contour: PadContour,
    /// Labels left out in skip mode, in sequence order.
    pub skipped: Vec<String>,
    /// Positions in the requested sequence that made it into `contour`.
    pub kept: Vec<usize>,
}

/// Concatenates the model's mean vectors along `phone_sequence`.
pub fn construct_contour<'a>(
    model: &SpeakerModel,
    phone_sequence: impl IntoIterator<Item = &'a str>,
    policy: &MatchPolicy,
) -> Result<ReferenceContour, RecognitionError> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    let mut requested = 0;
    for (i, label) in phone_sequence.into_iter().enumerate() {
        requested += 1;
        match (model.phone(label), policy.missing_phone) {
            (Some(stats), _) => {
                entries.push((label.to_owned(), *stats.mean()));
                kept.push(i);
            }
            (None, MissingPhone::Strict) => {
                return Err(RecognitionError::UnknownPhone(label.to_owned()))
            }
            (None, MissingPhone::Skip) => skipped.push(label.to_owned()),
        }
    }
    if requested == 0 || entries.is_empty() {
        return Err(RecognitionError::EmptyContour);
    }
    Ok(ReferenceContour {
        contour: PadContour::new(entries),
        skipped,
        kept,
    })
}

#[derive(Debug, Clone)]
struct EntryScore {
    delta: Triple,
    /// Weighted delta; `None` where the weight is undefined (zero SD with a
    /// nonzero delta).
    weighted: Triple<Option<f64>>,
}

#[derive(Debug, Clone)]
struct Scored {
    distance: f64,
    entries: Vec<EntryScore>,
    degenerate: Vec<(String, Param)>,
}

fn check_aligned(test: &PadContour, reference: &PadContour) -> Result<(), RecognitionError> {
    if test.is_empty() || reference.is_empty() {
        return Err(RecognitionError::EmptyContour);
    }
    if test.len() != reference.len() {
        return Err(RecognitionError::ContourMismatch(format!(
            "test has {} entries, reference has {}",
            test.len(),
            reference.len()
        )));
    }
    for (i, ((a, _), (b, _))) in test.entries.iter().zip(&reference.entries).enumerate() {
        if a != b {
            return Err(RecognitionError::ContourMismatch(format!(
                "entry {i}: {a:?} vs {b:?}"
            )));
        }
    }
    Ok(())
}

fn score(
    test: &PadContour,
    reference: &PadContour,
    normalization: Normalization,
    model: &SpeakerModel,
) -> Result<Scored, RecognitionError> {
    check_aligned(test, reference)?;
    let global_max = match normalization {
        Normalization::PerParameterMax => {
            let mut m = Triple::new(0.0f64, 0.0, 0.0);
            for (_, v) in test.entries.iter().chain(&reference.entries) {
                for p in Param::ALL {
                    m.set(p, m.get(p).max(v.get(p).abs()));
                }
            }
            Some(m)
        }
        _ => None,
    };
    let mut sum = 0.0;
    let mut entries = Vec::with_capacity(test.len());
    let mut degenerate = Vec::new();
    for ((label, t), (_, r)) in test.entries.iter().zip(&reference.entries) {
        let delta = t.as_triple().map(|p, x| x - r.get(p));
        let sd = match normalization {
            Normalization::SpeakerSd => Some(
                *model
                    .phone(label)
                    .ok_or_else(|| RecognitionError::UnknownPhone(label.clone()))?
                    .sd(),
            ),
            _ => None,
        };
        let weighted = delta.map(|p, d| {
            if d == 0.0 {
                return Some(0.0);
            }
            let scale = match normalization {
                Normalization::None => 1.0,
                Normalization::PerParameterMax => global_max.expect("computed above").get(p),
                Normalization::SpeakerSd => sd.expect("looked up above").get(p),
            };
            (scale > 0.0).then(|| d / scale)
        });
        for (p, w) in weighted.iter() {
            match w {
                Some(w) => sum += w * w,
                None => degenerate.push((label.clone(), p)),
            }
        }
        entries.push(EntryScore { delta, weighted });
    }
    let distance = if degenerate.is_empty() {
        sum.sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Scored {
        distance,
        entries,
        degenerate,
    })
}

/// Weighted Euclidean distance between aligned contours. Zero-SD
/// parameters with a nonzero difference make the distance undefined and
/// yield [`RecognitionError::DegenerateStats`].
pub fn contour_distance(
    test: &PadContour,
    reference: &PadContour,
    policy: &MatchPolicy,
    reference_model: &SpeakerModel,
) -> Result<f64, RecognitionError> {
    let scored = score(test, reference, policy.normalization, reference_model)?;
    match scored.degenerate.into_iter().next() {
        Some((phone, param)) => Err(RecognitionError::DegenerateStats { phone, param }),
        None => Ok(scored.distance),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Genuine,
    Imposter,
    Identified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhoneDiagnostic {
    pub phone: String,
    pub test: Triple,
    pub reference: Triple,
    pub delta: Triple,
    /// Delta in units of the phone's SD; null where the SD is zero and the
    /// delta is not.
    pub sd_units: Triple<Option<f64>>,
    pub in_range: Triple<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<Param>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateReport {
    pub mode: Gate,
    pub k: f64,
    pub per_parameter_pass: bool,
    /// SD-weighted distance used by the distance gate; null when infinite.
    pub gate_distance: f64,
    pub distance_threshold: f64,
    pub distance_pass: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub speaker_id: String,
    pub distance: f64,
    pub passes_gate: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped_phones: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedModel {
    pub speaker_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// Identified speaker, or the best-scoring candidate when rejected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    /// Distance under the policy's normalization; serialized as null when
    /// infinite.
    pub distance: f64,
    pub normalization: Normalization,
    pub gate: GateReport,
    pub per_phone: Vec<PhoneDiagnostic>,
    pub skipped_phones: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_table: Option<Vec<DistanceRow>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedModel>,
}

impl Decision {
    /// True for genuine and identified verdicts.
    pub fn accepted(&self) -> bool {
        matches!(self.verdict, Verdict::Genuine | Verdict::Identified)
    }

    pub fn identified(&self) -> Option<&str> {
        match self.verdict {
            Verdict::Identified => self.speaker_id.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("decision serializes");
        s.push('\n');
        s
    }
}

/// Genuine/imposter decision for `test` against one speaker model.
pub fn verify(
    model: &SpeakerModel,
    test: &PadContour,
    policy: &MatchPolicy,
) -> Result<Decision, RecognitionError> {
    policy.validate()?;
    if test.is_empty() {
        return Err(RecognitionError::EmptyContour);
    }
    let reference = construct_contour(model, test.labels(), policy)?;
    let aligned = test.select(&reference.kept);
    let ranked = score(&aligned, &reference.contour, policy.normalization, model)?;
    let by_sd = if policy.normalization == Normalization::SpeakerSd {
        ranked.clone()
    } else {
        score(
            &aligned,
            &reference.contour,
            Normalization::SpeakerSd,
            model,
        )?
    };

    let mut per_phone = Vec::with_capacity(aligned.len());
    let mut per_parameter_pass = true;
    for (((label, t), (_, r)), entry) in aligned
        .entries
        .iter()
        .zip(&reference.contour.entries)
        .zip(&by_sd.entries)
    {
        let stats = model.phone(label).expect("reference built from this model");
        let in_range = deviation_range(stats, policy.k)?.contains(t);
        per_parameter_pass &= in_range.p && in_range.a && in_range.d;
        per_phone.push(PhoneDiagnostic {
            phone: label.clone(),
            test: t.as_triple(),
            reference: r.as_triple(),
            delta: entry.delta,
            sd_units: entry.weighted,
            in_range,
            degenerate: Param::ALL
                .into_iter()
                .filter(|p| entry.weighted.get(*p).is_none())
                .collect(),
        });
    }
    let distance_threshold = policy.k * (3.0 * aligned.len() as f64).sqrt();
    let distance_pass = by_sd.distance <= distance_threshold;
    let passed = match policy.gate {
        Gate::PerParameter => per_parameter_pass,
        Gate::Distance => distance_pass,
        Gate::Both => per_parameter_pass && distance_pass,
    };
    Ok(Decision {
        verdict: if passed {
            Verdict::Genuine
        } else {
            Verdict::Imposter
        },
        speaker_id: Some(model.speaker_id().to_owned()),
        distance: ranked.distance,
        normalization: policy.normalization,
        gate: GateReport {
            mode: policy.gate,
            k: policy.k,
            per_parameter_pass,
            gate_distance: by_sd.distance,
            distance_threshold,
            distance_pass,
            passed,
        },
        per_phone,
        skipped_phones: reference.skipped,
        distance_table: None,
        excluded: Vec::new(),
    })
}

/// Index of the smallest distance; ties go to the lexicographically
/// smallest id.
fn pick_winner(rows: &[DistanceRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &rows[b];
                let better = row.distance < cur.distance
                    || (row.distance == cur.distance && row.speaker_id < cur.speaker_id);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Minimum-distance speaker among `models`, accepted only if it also passes
/// the verification gate.
///
/// Models that cannot build a reference for the test phones (an unknown
/// phone in strict mode, or nothing left in skip mode) are listed under
/// `excluded` instead of being scored.
pub fn identify(
    models: &[SpeakerModel],
    test: &PadContour,
    policy: &MatchPolicy,
) -> Result<Decision, RecognitionError> {
    policy.validate()?;
    if test.is_empty() {
        return Err(RecognitionError::EmptyContour);
    }
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m.speaker_id()) {
            return Err(RecognitionError::DuplicateSpeaker(
                m.speaker_id().to_owned(),
            ));
        }
    }
    let mut ordered: Vec<&SpeakerModel> = models.iter().collect();
    ordered.sort_by(|a, b| a.speaker_id().cmp(b.speaker_id()));

    let mut decisions = Vec::new();
    let mut excluded = Vec::new();
    for model in ordered {
        match verify(model, test, policy) {
            Ok(d) => decisions.push(d),
            Err(e @ (RecognitionError::UnknownPhone(_) | RecognitionError::EmptyContour)) => {
                excluded.push(ExcludedModel {
                    speaker_id: model.speaker_id().to_owned(),
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let table: Vec<DistanceRow> = decisions
        .iter()
        .map(|d| DistanceRow {
            speaker_id: d.speaker_id.clone().expect("verify records the speaker"),
            distance: d.distance,
            passes_gate: d.gate.passed,
            skipped_phones: d.skipped_phones.clone(),
        })
        .collect();
    let winner = pick_winner(&table).ok_or(RecognitionError::NoCandidates)?;
    let mut decision = decisions.swap_remove(winner);
    decision.verdict = if decision.gate.passed {
        Verdict::Identified
    } else {
        Verdict::Rejected
    };
    decision.distance_table = Some(table);
    decision.excluded = excluded;
    Ok(decision)
}

/// Divides each parameter by its maximum over all vectors, mapping every
/// value into `(0, 1]`.
pub fn normalize_pads(
    vectors: &[(String, PadVector)],
) -> Result<Vec<(String, Triple)>, RecognitionError> {
    if vectors.is_empty() {
        return Err(RecognitionError::EmptyContour);
    }
    let mut max = Triple::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (_, v) in vectors {
        for p in Param::ALL {
            max.set(p, max.get(p).max(v.get(p)));
        }
    }
    for (p, m) in max.iter() {
        if !(m > 0.0) {
            return Err(RecognitionError::NonPositiveMax(p));
        }
    }
    for (_, v) in vectors {
        for p in Param::ALL {
            if !(v.get(p) > 0.0) {
                return Err(RecognitionError::NonPositiveValue {
                    param: p,
                    value: v.get(p),
                });
            }
        }
    }
    Ok(vectors
        .iter()
        .map(|(id, v)| (id.clone(), v.as_triple().map(|p, x| x / max.get(p))))
        .collect())
}
