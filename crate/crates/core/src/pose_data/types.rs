use std::collections::HashMap;

use super::{DataError, NUM_POINTS};

/// One frame of 121 landmarks in source pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseFrame {
    points: Vec<[f64; 2]>,
    present: Vec<bool>,
}

impl PoseFrame {
    pub fn new(points: Vec<[f64; 2]>, present: Vec<bool>) -> Result<Self, DataError> {
        if points.len() != NUM_POINTS || present.len() != NUM_POINTS {
            return Err(DataError::Layout {
                line: 0,
                frame: 0,
                found: points.len().min(present.len()),
                expected: NUM_POINTS,
            });
        }
        Ok(Self { points, present })
    }

    /// All landmarks absent.
    pub fn empty() -> Self {
        Self {
            points: vec![[0.0, 0.0]; NUM_POINTS],
            present: vec![false; NUM_POINTS],
        }
    }

    /// Presence inferred from coordinates: a point at exactly (0, 0) is absent.
    pub fn from_legacy(points: Vec<[f64; 2]>) -> Result<Self, DataError> {
        let present = points.iter().map(|p| !(p[0] == 0.0 && p[1] == 0.0)).collect();
        Self::new(points, present)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.points
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.present[i]
    }

    pub fn set(&mut self, i: usize, point: [f64; 2]) {
        self.points[i] = point;
        self.present[i] = true;
    }

    pub fn clear(&mut self, i: usize) {
        self.points[i] = [0.0, 0.0];
        self.present[i] = false;
    }

    /// Present points with their indices.
    pub fn present_points(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        self.points
            .iter()
            .zip(&self.present)
            .enumerate()
            .filter(|(_, (_, &p))| p)
            .map(|(i, (pt, _))| (i, *pt))
    }
}

/// A labeled sign instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub gloss_id: usize,
    pub signer_id: i64,
    /// Sign variant within the gloss; 0 when unannotated. Not used in training.
    pub variation_id: i64,
    pub source_id: String,
}

impl PoseSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Applies `f` to every present point of every frame.
    pub fn map_present(&mut self, mut f: impl FnMut(usize, [f64; 2]) -> [f64; 2]) {
        for frame in &mut self.frames {
            for i in 0..NUM_POINTS {
                if frame.present[i] {
                    frame.points[i] = f(i, frame.points[i]);
                }
            }
        }
    }
}

/// Lowercase ASCII, surrounding whitespace trimmed, inner spaces as underscores.
pub fn normalize_gloss(gloss: &str) -> String {
    gloss.trim().to_ascii_lowercase().replace(' ', "_")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GlossVocabulary {
    id_to_gloss: Vec<String>,
    index: HashMap<String, usize>,
}

impl GlossVocabulary {
    /// Glosses in the given order; normalized, duplicates rejected.
    pub fn new<I, S>(glosses: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::default();
        for g in glosses {
            let g = normalize_gloss(g.as_ref());
            if vocab.index.contains_key(&g) {
                return Err(DataError::DuplicateGloss(g));
            }
            vocab.index.insert(g.clone(), vocab.id_to_gloss.len());
            vocab.id_to_gloss.push(g);
        }
        Ok(vocab)
    }

    /// Sorted unique glosses; repeated entries are merged.
    pub fn from_unsorted<I, S>(glosses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut all: Vec<String> = glosses.into_iter().map(|g| normalize_gloss(g.as_ref())).collect();
        all.sort();
        all.dedup();
        Self::new(all).expect("deduplicated")
    }

    pub fn len(&self) -> usize {
        self.id_to_gloss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_gloss.is_empty()
    }

    pub fn id(&self, gloss: &str) -> Option<usize> {
        self.index.get(&normalize_gloss(gloss)).copied()
    }

    pub fn gloss(&self, id: usize) -> Option<&str> {
        self.id_to_gloss.get(id).map(String::as_str)
    }

    pub fn glosses(&self) -> &[String] {
        &self.id_to_gloss
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub vocabulary: GlossVocabulary,
    pub sequences: Vec<PoseSequence>,
}

impl Dataset {
    pub fn new(vocabulary: GlossVocabulary, sequences: Vec<PoseSequence>) -> Result<Self, DataError> {
        for (i, s) in sequences.iter().enumerate() {
            if s.gloss_id >= vocabulary.len() {
                return Err(DataError::InvalidLabel {
                    index: i,
                    gloss_id: s.gloss_id,
                    vocabulary: vocabulary.len(),
                });
            }
            if s.frames.is_empty() {
                return Err(DataError::EmptySequence { line: i + 1 });
            }
        }
        Ok(Self { vocabulary, sequences })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Sequence indices grouped by class id.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.vocabulary.len()];
        for (i, s) in self.sequences.iter().enumerate() {
            by_class[s.gloss_id].push(i);
        }
        by_class
    }

    pub fn labels(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.gloss_id).collect()
    }
}
