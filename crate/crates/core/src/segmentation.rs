//! Phone boundary annotations: PRAAT TextGrid (long and short text forms)
//! and a `start_s,end_s,label` CSV interchange format.
//!
//! Segments are closed-open `[start, end)`. Blank labels mark silence and are
//! dropped. Labels are kept verbatim apart from trimming surrounding
//! whitespace.

use std::fmt::Write as _;

use thiserror::Error;

use crate::listing::TIME_EPS;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SegmentationError {
    #[error("malformed TextGrid: {0}")]
    MalformedTextGrid(String),
    #[error("tier {0:?} not found")]
    TierNotFound(String),
    #[error("tier {0:?} is a point tier")]
    PointTierUnsupported(String),
    #[error("malformed label row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-monotonic boundaries: {0}")]
    NonMonotonicBoundaries(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSegment {
    label: String,
    start: f64,
    end: f64,
}

impl PhoneSegment {
    pub fn new(label: impl AsRef<str>, start: f64, end: f64) -> Result<Self, SegmentationError> {
        let label = label.as_ref().trim();
        if label.is_empty() {
            return Err(SegmentationError::InvalidSegment("empty label".into()));
        }
        if !start.is_finite() || !end.is_finite() {
            return Err(SegmentationError::InvalidSegment(format!(
                "non-finite boundary in {label:?}"
            )));
        }
        if !(start < end) {
            return Err(SegmentationError::NonMonotonicBoundaries(format!(
                "{label:?} ends at {end} but starts at {start}"
            )));
        }
        Ok(Self {
            label: label.to_owned(),
            start,
            end,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Closed-open membership test.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSegmentation {
    segments: Vec<PhoneSegment>,
    source_tier: String,
}

impl PhoneSegmentation {
    /// Sorts `segments` by start and rejects overlaps.
    pub fn new(
        mut segments: Vec<PhoneSegment>,
        source_tier: impl Into<String>,
    ) -> Result<Self, SegmentationError> {
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in segments.windows(2) {
            if w[0].end > w[1].start + TIME_EPS {
                return Err(SegmentationError::NonMonotonicBoundaries(format!(
                    "{:?} [{}, {}) overlaps {:?} [{}, {})",
                    w[0].label, w[0].start, w[0].end, w[1].label, w[1].start, w[1].end
                )));
            }
        }
        Ok(Self {
            segments,
            source_tier: source_tier.into(),
        })
    }

    pub fn segments(&self) -> &[PhoneSegment] {
        &self.segments
    }

    pub fn source_tier(&self) -> &str {
        &self.source_tier
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.label())
    }

    /// End time of the last segment, or 0 when empty.
    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Str(String),
    Num(f64),
    Flag(String),
}

/// Splits both TextGrid text forms into the same token stream. Keys such as
/// `xmin =`, bracketed indices like `item [1]:` and `!` comments are
/// dropped, leaving quoted strings, numbers and `<flags>`.
fn tokenize(text: &str) -> Result<Vec<Token>, SegmentationError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            s.push('"');
                        }
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                        None => {
                            return Err(SegmentationError::MalformedTextGrid(
                                "unterminated string".into(),
                            ))
                        }
                    }
                }
                tokens.push(Token::Str(s));
            }
            '[' => {
                for ch in chars.by_ref() {
                    if ch == ']' {
                        break;
                    }
                }
            }
            '!' => {
                for ch in chars.by_ref() {
                    if ch == '\n' {
                        break;
                    }
                }
            }
            '<' => {
                let mut s = String::new();
                for ch in chars.by_ref() {
                    s.push(ch);
                    if ch == '>' {
                        break;
                    }
                }
                tokens.push(Token::Flag(s));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut word = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || matches!(ch, '"' | '[' | '<' | '!') {
                        break;
                    }
                    word.push(ch);
                    chars.next();
                }
                if let Ok(v) = word.parse::<f64>() {
                    tokens.push(Token::Num(v));
                }
            }
        }
    }
    Ok(tokens)
}

struct TokenStream {
    tokens: std::vec::IntoIter<Token>,
}

impl TokenStream {
    fn next(&mut self, what: &str) -> Result<Token, SegmentationError> {
        self.tokens.next().ok_or_else(|| {
            SegmentationError::MalformedTextGrid(format!("unexpected end, expected {what}"))
        })
    }

    fn string(&mut self, what: &str) -> Result<String, SegmentationError> {
        match self.next(what)? {
            Token::Str(s) => Ok(s),
            other => Err(SegmentationError::MalformedTextGrid(format!(
                "expected {what} string, found {other:?}"
            ))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, SegmentationError> {
        match self.next(what)? {
            Token::Num(v) => Ok(v),
            other => Err(SegmentationError::MalformedTextGrid(format!(
                "expected {what} number, found {other:?}"
            ))),
        }
    }

    fn count(&mut self, what: &str) -> Result<usize, SegmentationError> {
        let v = self.number(what)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(SegmentationError::MalformedTextGrid(format!(
                "bad {what} count {v}"
            )));
        }
        Ok(v as usize)
    }
}

enum Tier {
    Interval {
        name: String,
        intervals: Vec<(f64, f64, String)>,
    },
    Point {
        name: String,
    },
}

fn parse_tiers(text: &str) -> Result<Vec<Tier>, SegmentationError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut ts = TokenStream {
        tokens: tokenize(text)?.into_iter(),
    };
    let file_type = ts.string("file type").map_err(|_| {
        SegmentationError::MalformedTextGrid("missing \"ooTextFile\" header".into())
    })?;
    if file_type != "ooTextFile" {
        return Err(SegmentationError::MalformedTextGrid(format!(
            "file type {file_type:?}, expected \"ooTextFile\""
        )));
    }
    let class = ts.string("object class")?;
    if class != "TextGrid" {
        return Err(SegmentationError::MalformedTextGrid(format!(
            "object class {class:?}, expected \"TextGrid\""
        )));
    }
    ts.number("xmin")?;
    ts.number("xmax")?;
    match ts.next("tiers flag")? {
        Token::Flag(f) if f == "<exists>" => {}
        Token::Flag(f) if f == "<absent>" => return Ok(Vec::new()),
        other => {
            return Err(SegmentationError::MalformedTextGrid(format!(
                "expected <exists>, found {other:?}"
            )))
        }
    }
    let n_tiers = ts.count("tier")?;
    let mut tiers = Vec::with_capacity(n_tiers);
    for _ in 0..n_tiers {
        let class = ts.string("tier class")?;
        let name = ts.string("tier name")?;
        ts.number("tier xmin")?;
        ts.number("tier xmax")?;
        let n = ts.count("item")?;
        match class.as_str() {
            "IntervalTier" => {
                let mut intervals = Vec::with_capacity(n);
                for _ in 0..n {
                    let lo = ts.number("interval xmin")?;
                    let hi = ts.number("interval xmax")?;
                    let text = ts.string("interval text")?;
                    intervals.push((lo, hi, text));
                }
                tiers.push(Tier::Interval { name, intervals });
            }
            "TextTier" => {
                for _ in 0..n {
                    ts.number("point time")?;
                    ts.string("point mark")?;
                }
                tiers.push(Tier::Point { name });
            }
            other => {
                return Err(SegmentationError::MalformedTextGrid(format!(
                    "unknown tier class {other:?}"
                )))
            }
        }
    }
    Ok(tiers)
}

/// Parses a PRAAT text TextGrid and returns the labeled intervals of the
/// tier called `tier_name`, or of the first interval tier when `None`.
pub fn parse_textgrid(
    text: &str,
    tier_name: Option<&str>,
) -> Result<PhoneSegmentation, SegmentationError> {
    let tiers = parse_tiers(text)?;
    let (name, intervals) = match tier_name {
        Some(wanted) => match tiers.into_iter().find(|t| match t {
            Tier::Interval { name, .. } | Tier::Point { name } => name == wanted,
        }) {
            Some(Tier::Interval { name, intervals }) => (name, intervals),
            Some(Tier::Point { name }) => {
                return Err(SegmentationError::PointTierUnsupported(name))
            }
            None => return Err(SegmentationError::TierNotFound(wanted.to_owned())),
        },
        None => match tiers.into_iter().find_map(|t| match t {
            Tier::Interval { name, intervals } => Some((name, intervals)),
            Tier::Point { .. } => None,
        }) {
            Some(found) => found,
            None => {
                return Err(SegmentationError::TierNotFound(
                    "<first interval tier>".into(),
                ))
            }
        },
    };
    let segments = intervals
        .into_iter()
        .filter(|(_, _, label)| !label.trim().is_empty())
        .map(|(lo, hi, label)| PhoneSegment::new(label, lo, hi))
        .collect::<Result<Vec<_>, _>>()?;
    PhoneSegmentation::new(segments, name)
}

/// Intervals of a full tier from 0 to `xmax`, with blank intervals filling
/// the gaps between segments.
fn tier_intervals(seg: &PhoneSegmentation, xmax: f64) -> Vec<(f64, f64, &str)> {
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for s in seg.segments() {
        if s.start > cursor {
            out.push((cursor, s.start, ""));
        }
        out.push((s.start, s.end, s.label()));
        cursor = s.end;
    }
    if xmax > cursor {
        out.push((cursor, xmax, ""));
    }
    out
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Writes a single-tier long-form TextGrid spanning `[0, xmax]`. `xmax`
/// is raised to the last segment end if needed.
pub fn to_textgrid(seg: &PhoneSegmentation, xmax: f64) -> String {
    let xmax = xmax.max(seg.end());
    let inner_start = seg.segments().first().map_or(0.0, |s| s.start.min(0.0));
    let intervals = tier_intervals(seg, xmax);
    let mut out = String::new();
    out.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
    let _ = writeln!(
        out,
        "xmin = {inner_start}\nxmax = {xmax}\ntiers? <exists>\nsize = 1\nitem []:"
    );
    let _ = writeln!(out, "    item [1]:\n        class = \"IntervalTier\"");
    let _ = writeln!(out, "        name = {}", quote(seg.source_tier()));
    let _ = writeln!(out, "        xmin = {inner_start}\n        xmax = {xmax}");
    let _ = writeln!(out, "        intervals: size = {}", intervals.len());
    for (i, (lo, hi, label)) in intervals.iter().enumerate() {
        let _ = writeln!(out, "        intervals [{}]:", i + 1);
        let _ = writeln!(out, "            xmin = {lo}\n            xmax = {hi}");
        let _ = writeln!(out, "            text = {}", quote(label));
    }
    out
}

/// Short-form counterpart of [`to_textgrid`].
pub fn to_textgrid_short(seg: &PhoneSegmentation, xmax: f64) -> String {
    let xmax = xmax.max(seg.end());
    let inner_start = seg.segments().first().map_or(0.0, |s| s.start.min(0.0));
    let intervals = tier_intervals(seg, xmax);
    let mut out = String::new();
    out.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
    let _ = writeln!(out, "{inner_start}\n{xmax}\n<exists>\n1\n\"IntervalTier\"");
    let _ = writeln!(
        out,
        "{}\n{inner_start}\n{xmax}\n{}",
        quote(seg.source_tier()),
        intervals.len()
    );
    for (lo, hi, label) in intervals {
        let _ = writeln!(out, "{lo}\n{hi}\n{}", quote(label));
    }
    out
}

pub const LABEL_CSV_HEADER: [&str; 3] = ["start_s", "end_s", "label"];

/// Parses `start_s,end_s,label` rows. Rows with blank labels are dropped.
pub fn parse_label_csv(text: &str) -> Result<PhoneSegmentation, SegmentationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SegmentationError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?;
    if headers.iter().collect::<Vec<_>>() != LABEL_CSV_HEADER {
        return Err(SegmentationError::MalformedRow {
            line: 1,
            reason: format!("expected header {}", LABEL_CSV_HEADER.join(",")),
        });
    }
    let mut segments = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| SegmentationError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(SegmentationError::MalformedRow {
                line,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, SegmentationError> {
            rec[idx]
                .trim()
                .parse::<f64>()
                .map_err(|e| SegmentationError::MalformedRow {
                    line,
                    reason: format!("{:?}: {e}", &rec[idx]),
                })
        };
        let (start, end) = (num(0)?, num(1)?);
        if rec[2].trim().is_empty() {
            continue;
        }
        let seg = PhoneSegment::new(&rec[2], start, end).map_err(|e| match e {
            SegmentationError::NonMonotonicBoundaries(m) => {
                SegmentationError::NonMonotonicBoundaries(format!("row {line}: {m}"))
            }
            SegmentationError::InvalidSegment(reason) => {
                SegmentationError::MalformedRow { line, reason }
            }
            other => other,
        })?;
        segments.push(seg);
    }
    PhoneSegmentation::new(segments, "labels")
}

/// Writes the label CSV form, boundaries in shortest round-trip notation.
pub fn to_label_csv(seg: &PhoneSegmentation) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABEL_CSV_HEADER).expect("in-memory write");
    for s in seg.segments() {
        w.write_record([s.start.to_string(), s.end.to_string(), s.label.clone()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush"))
        .expect("utf-8 input yields utf-8 output")
}

/// Decodes annotation bytes, honoring UTF-16 byte-order marks as written by
/// some PRAAT versions.
pub fn decode_text(bytes: &[u8]) -> Result<String, SegmentationError> {
    let utf16 = |chunks: Vec<u16>| {
        String::from_utf16(&chunks)
            .map_err(|e| SegmentationError::MalformedTextGrid(format!("bad UTF-16: {e}")))
    };
    match bytes {
        [0xFF, 0xFE, rest @ ..] => utf16(
            rest.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        [0xFE, 0xFF, rest @ ..] => utf16(
            rest.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        _ => String::from_utf8(bytes.to_vec())
            .map_err(|e| SegmentationError::MalformedTextGrid(format!("bad UTF-8: {e}"))),
    }
}
