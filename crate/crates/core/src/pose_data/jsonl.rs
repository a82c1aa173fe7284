//! JSON-lines dataset files.
//!
//! One object per line:
//!
//! ```text
//! {"gloss": "book", "signer": 3, "variation": 1, "source": "v12.mp4",
//!  "frames": [[[x, y, present], ... 121 points], ...]}
//! ```
//!
//! `variation` and `source` are optional. Points may also be written as
//! `[x, y]`, in which case a point at exactly (0, 0) is treated as absent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{normalize_gloss, DataError, Dataset, GlossVocabulary, LandmarkLayout, PoseFrame, PoseSequence};

#[derive(Deserialize)]
struct RawRecord {
    gloss: String,
    signer: i64,
    #[serde(default)]
    variation: i64,
    #[serde(default)]
    source: String,
    frames: Vec<Vec<Vec<f64>>>,
}

/// A parsed line whose gloss has not been resolved against a vocabulary yet.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub gloss: String,
    pub signer_id: i64,
    pub variation_id: i64,
    pub source_id: String,
    pub frames: Vec<PoseFrame>,
}

impl Record {
    fn into_sequence(self, gloss_id: usize) -> PoseSequence {
        PoseSequence {
            frames: self.frames,
            gloss_id,
            signer_id: self.signer_id,
            variation_id: self.variation_id,
            source_id: self.source_id,
        }
    }
}

/// Parses one JSON line. `line_no` is 1-based and only used in errors.
pub fn parse_record(text: &str, line_no: usize, layout: &LandmarkLayout) -> Result<Record, DataError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| DataError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    if normalize_gloss(&raw.gloss).is_empty() {
        return Err(DataError::Parse {
            line: line_no,
            message: "empty gloss".into(),
        });
    }
    if raw.frames.is_empty() {
        return Err(DataError::EmptySequence { line: line_no });
    }
    let expected = layout.total_points();
    let mut frames = Vec::with_capacity(raw.frames.len());
    for (f, raw_frame) in raw.frames.into_iter().enumerate() {
        if raw_frame.len() != expected {
            return Err(DataError::Layout {
                line: line_no,
                frame: f,
                found: raw_frame.len(),
                expected,
            });
        }
        let mut points = Vec::with_capacity(expected);
        let mut present = Vec::with_capacity(expected);
        for (p, pt) in raw_frame.into_iter().enumerate() {
            let bad = |message: &str| DataError::InvalidPoint {
                line: line_no,
                frame: f,
                point: p,
                message: message.to_owned(),
            };
            let (x, y, flag) = match pt.as_slice() {
                &[x, y] => (x, y, !(x == 0.0 && y == 0.0)),
                &[x, y, m] if m == 0.0 => (x, y, false),
                &[x, y, m] if m == 1.0 => (x, y, true),
                &[_, _, _] => return Err(bad("presence flag must be 0 or 1")),
                _ => return Err(bad("expected [x, y] or [x, y, present]")),
            };
            if !x.is_finite() || !y.is_finite() {
                return Err(bad("non-finite coordinate"));
            }
            points.push([x, y]);
            present.push(flag);
        }
        frames.push(PoseFrame::new(points, present)?);
    }
    Ok(Record {
        gloss: normalize_gloss(&raw.gloss),
        signer_id: raw.signer,
        variation_id: raw.variation,
        source_id: raw.source,
        frames,
    })
}

/// Outcome of a lenient load: every non-empty line is accounted for either
/// as a sequence or as an error.
#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub errors: Vec<DataError>,
    pub non_empty_lines: usize,
}

/// Parses every line, collecting failures instead of stopping at the first.
///
/// With `vocabulary = None` the vocabulary is the sorted set of glosses seen;
/// otherwise glosses outside it are reported as errors.
pub fn read_dataset_report(text: &str, layout: &LandmarkLayout, vocabulary: Option<&GlossVocabulary>) -> LoadReport {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut non_empty_lines = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        non_empty_lines += 1;
        match parse_record(line, i + 1, layout) {
            Ok(r) => records.push((i + 1, r)),
            Err(e) => errors.push(e),
        }
    }
    let vocabulary = match vocabulary {
        Some(v) => v.clone(),
        None => GlossVocabulary::from_unsorted(records.iter().map(|(_, r)| r.gloss.as_str())),
    };
    let mut sequences = Vec::with_capacity(records.len());
    for (line, r) in records {
        match vocabulary.id(&r.gloss) {
            Some(id) => sequences.push(r.into_sequence(id)),
            None => errors.push(DataError::UnknownGloss { line, gloss: r.gloss }),
        }
    }
    errors.sort_by_key(DataError::line);
    let dataset = Dataset::new(vocabulary, sequences).expect("ids resolved against the vocabulary");
    LoadReport {
        dataset,
        errors,
        non_empty_lines,
    }
}

/// Strict parse: the first error (by line) aborts.
pub fn read_dataset(text: &str, layout: &LandmarkLayout, vocabulary: Option<&GlossVocabulary>) -> Result<Dataset, DataError> {
    let report = read_dataset_report(text, layout, vocabulary);
    match report.errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(report.dataset),
    }
}

pub fn load_dataset(path: impl AsRef<Path>, layout: &LandmarkLayout) -> Result<Dataset, DataError> {
    read_dataset(&read_text(path.as_ref())?, layout, None)
}

/// Loads against a fixed vocabulary (e.g. a validation split against the
/// training vocabulary); unknown glosses are errors.
pub fn load_dataset_with_vocabulary(
    path: impl AsRef<Path>,
    layout: &LandmarkLayout,
    vocabulary: &GlossVocabulary,
) -> Result<Dataset, DataError> {
    read_dataset(&read_text(path.as_ref())?, layout, Some(vocabulary))
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Serializes to JSON lines with explicit presence flags.
pub fn dataset_to_jsonl(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sequences {
        let gloss = d.vocabulary.gloss(s.gloss_id).expect("valid label");
        let _ = write!(
            out,
            "{{\"gloss\":{},\"signer\":{},\"variation\":{},\"source\":{},\"frames\":[",
            serde_json::to_string(gloss).expect("string"),
            s.signer_id,
            s.variation_id,
            serde_json::to_string(&s.source_id).expect("string"),
        );
        for (f, frame) in s.frames.iter().enumerate() {
            if f > 0 {
                out.push(',');
            }
            out.push('[');
            for (i, (pt, &p)) in frame.points().iter().zip(frame.present()).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                // `{:?}` on f64 is the shortest round-trip representation
                let _ = write!(out, "[{:?},{:?},{}]", pt[0], pt[1], u8::from(p));
            }
            out.push(']');
        }
        out.push_str("]}\n");
    }
    out
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, dataset_to_jsonl(d)).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
