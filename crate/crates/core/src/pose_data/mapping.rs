//! Gloss-level class mappings between dataset vocabularies.
//!
//! Mapping files are UTF-8 TSV, `source_gloss<TAB>target_gloss` per line,
//! with `#` starting a comment.

use std::collections::HashMap;

use super::{normalize_gloss, DataError, Dataset, GlossVocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMapping {
    source_vocab: GlossVocabulary,
    target_vocab: GlossVocabulary,
    pairs: Vec<(usize, usize)>,
    lookup: Vec<Option<usize>>,
}

impl ClassMapping {
    /// Validates ids and injectivity. A source id may appear only once, and
    /// no two source ids may share a target.
    pub fn new(
        source_vocab: GlossVocabulary,
        target_vocab: GlossVocabulary,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self, DataError> {
        let mut lookup = vec![None; source_vocab.len()];
        let mut used_targets = vec![None; target_vocab.len()];
        for &(s, t) in &pairs {
            if s >= source_vocab.len() || t >= target_vocab.len() {
                return Err(DataError::Mapping(format!(
                    "pair ({s} -> {t}) outside vocabularies of size {} and {}",
                    source_vocab.len(),
                    target_vocab.len()
                )));
            }
            if let Some(prev) = lookup[s] {
                return Err(DataError::Mapping(format!(
                    "source class {:?} mapped twice (to {:?} and {:?})",
                    source_vocab.gloss(s).unwrap_or_default(),
                    target_vocab.gloss(prev).unwrap_or_default(),
                    target_vocab.gloss(t).unwrap_or_default(),
                )));
            }
            if let Some(other) = used_targets[t] {
                return Err(DataError::Mapping(format!(
                    "mapping is not injective: {:?} and {:?} both map to {:?}",
                    source_vocab.gloss(other).unwrap_or_default(),
                    source_vocab.gloss(s).unwrap_or_default(),
                    target_vocab.gloss(t).unwrap_or_default(),
                )));
            }
            lookup[s] = Some(t);
            used_targets[t] = Some(s);
        }
        Ok(Self {
            source_vocab,
            target_vocab,
            pairs,
            lookup,
        })
    }

    pub fn identity(vocab: &GlossVocabulary) -> Self {
        let pairs = (0..vocab.len()).map(|i| (i, i)).collect();
        Self::new(vocab.clone(), vocab.clone(), pairs).expect("identity is injective")
    }

    /// Resolves gloss pairs against the two vocabularies. Pairs naming a
    /// gloss outside either vocabulary are skipped, since mapping files
    /// usually cover more classes than any one dataset. When `target_vocab`
    /// is `None` it is built from the target column (sorted, unique).
    pub fn from_gloss_pairs(
        pairs: &[(String, String)],
        source_vocab: &GlossVocabulary,
        target_vocab: Option<&GlossVocabulary>,
    ) -> Result<Self, DataError> {
        let target_vocab = match target_vocab {
            Some(v) => v.clone(),
            None => GlossVocabulary::from_unsorted(
                pairs
                    .iter()
                    .filter(|(s, _)| source_vocab.id(s).is_some())
                    .map(|(_, t)| t.as_str()),
            ),
        };
        let mut seen = HashMap::new();
        let mut ids = Vec::new();
        for (s, t) in pairs {
            let (Some(si), Some(ti)) = (source_vocab.id(s), target_vocab.id(t)) else {
                continue;
            };
            // exact duplicate lines are harmless
            if seen.insert((si, ti), ()).is_none() {
                ids.push((si, ti));
            }
        }
        Self::new(source_vocab.clone(), target_vocab, ids)
    }

    pub fn source_vocab(&self) -> &GlossVocabulary {
        &self.source_vocab
    }

    pub fn target_vocab(&self) -> &GlossVocabulary {
        &self.target_vocab
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn map(&self, source_id: usize) -> Option<usize> {
        self.lookup.get(source_id).copied().flatten()
    }

    pub fn inverse(&self) -> Self {
        let pairs = self.pairs.iter().map(|&(s, t)| (t, s)).collect();
        Self::new(self.target_vocab.clone(), self.source_vocab.clone(), pairs).expect("inverse of an injective mapping")
    }
}

/// Parses mapping TSV into normalized gloss pairs.
pub fn parse_mapping_tsv(text: &str) -> Result<Vec<(String, String)>, DataError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default();
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(s), Some(t), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(DataError::Parse {
                line: i + 1,
                message: "expected two tab-separated columns".into(),
            });
        };
        let (s, t) = (normalize_gloss(s), normalize_gloss(t));
        if s.is_empty() || t.is_empty() {
            return Err(DataError::Parse {
                line: i + 1,
                message: "empty gloss".into(),
            });
        }
        pairs.push((s, t));
    }
    Ok(pairs)
}

/// Translates every label through `m`. Sequences of unmapped classes are
/// dropped when `drop_unmapped`, otherwise they are an error.
pub fn map_labels(d: &Dataset, m: &ClassMapping, drop_unmapped: bool) -> Result<Dataset, DataError> {
    if d.vocabulary != m.source_vocab {
        return Err(DataError::VocabularyMismatch);
    }
    let mut sequences = Vec::with_capacity(d.sequences.len());
    for s in &d.sequences {
        match m.map(s.gloss_id) {
            Some(t) => {
                let mut mapped = s.clone();
                mapped.gloss_id = t;
                sequences.push(mapped);
            }
            None if drop_unmapped => {}
            None => {
                return Err(DataError::Unmapped(
                    d.vocabulary.gloss(s.gloss_id).unwrap_or_default().to_owned(),
                ))
            }
        }
    }
    Dataset::new(m.target_vocab.clone(), sequences)
}
