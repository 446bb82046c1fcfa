//! Leave-one-out attribution of a document's OOD score to its segments
//! (typically sentences).
//!
//! The attribution of a segment is `OOD(document) − OOD(document without
//! the segment)`: positive when the segment pushes the document toward OOD.
//! The "without" embedding either comes from re-encoding upstream
//! ([`AttributionMode::Exact`]) or is approximated by re-averaging the
//! remaining segment embeddings ([`AttributionMode::Compositional`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::OodScorer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub token_count: u32,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_embedding: Option<Vec<f64>>,
    /// Embedding of the document re-encoded with the keyed segment removed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variant_embeddings: BTreeMap<String, Vec<f64>>,
}

impl SegmentedDocument {
    pub fn validate(&self) -> Result<usize> {
        let first = self.segments.first().ok_or(Error::EmptyDocument)?;
        let d = first.embedding.len();
        for s in &self.segments {
            check_dim(d, s.embedding.len())?;
            if s.token_count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "segment `{}` has zero tokens",
                    s.segment_id
                )));
            }
        }
        if let Some(full) = &self.full_embedding {
            check_dim(d, full.len())?;
        }
        for v in self.variant_embeddings.values() {
            check_dim(d, v.len())?;
        }
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributionMode {
    Compositional,
    Exact,
}

impl fmt::Display for AttributionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributionMode::Compositional => "compositional",
            AttributionMode::Exact => "exact",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentAttribution {
    pub doc_id: String,
    pub segment_id: String,
    pub attribution: f64,
    pub mode: AttributionMode,
}

/// Token-count-weighted mean `Σ cᵢ·eᵢ / Σ cᵢ`.
pub fn compose_mean<'a, I>(segments: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a Segment>,
{
    let mut iter = segments.into_iter();
    let first = iter.next().ok_or(Error::EmptyDocument)?;
    let mut total = f64::from(first.token_count);
    let mut acc: Vec<f64> = first.embedding.iter().map(|v| v * total).collect();
    for s in iter {
        check_dim(acc.len(), s.embedding.len())?;
        let c = f64::from(s.token_count);
        for (a, v) in acc.iter_mut().zip(&s.embedding) {
            *a += c * v;
        }
        total += c;
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// Leave-one-out attribution for every segment, in segment order.
pub fn sentence_attribution<S: OodScorer + ?Sized>(
    doc: &SegmentedDocument,
    scorer: &S,
    mode: AttributionMode,
) -> Result<Vec<SegmentAttribution>> {
    doc.validate()?;
    let (full, without): (Vec<f64>, Vec<Vec<f64>>) = match mode {
        AttributionMode::Compositional => {
            if doc.segments.len() < 2 {
                return Err(Error::SingleSegment);
            }
            let full = compose_mean(&doc.segments)?;
            let without = (0..doc.segments.len())
                .map(|skip| {
                    compose_mean(
                        doc.segments
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != skip)
                            .map(|(_, s)| s),
                    )
                })
                .collect::<Result<_>>()?;
            (full, without)
        }
        AttributionMode::Exact => {
            let full = doc
                .full_embedding
                .clone()
                .ok_or_else(|| Error::MissingVariant("<full document>".into()))?;
            let without = doc
                .segments
                .iter()
                .map(|s| {
                    doc.variant_embeddings
                        .get(&s.segment_id)
                        .cloned()
                        .ok_or_else(|| Error::MissingVariant(s.segment_id.clone()))
                })
                .collect::<Result<_>>()?;
            (full, without)
        }
    };

    let full_score = scorer.score(&full)?;
    doc.segments
        .iter()
        .zip(&without)
        .map(|(s, w)| {
            Ok(SegmentAttribution {
                doc_id: doc.doc_id.clone(),
                segment_id: s.segment_id.clone(),
                attribution: full_score - scorer.score(w)?,
                mode,
            })
        })
        .collect()
}
