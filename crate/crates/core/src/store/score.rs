use serde::{Deserialize, Serialize};

use super::item::MemoryItem;
use crate::services::cosine;
use crate::text::term_set;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub embedding: f64,
    pub lexical: f64,
    pub weight: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            embedding: 0.5,
            lexical: 0.3,
            weight: 0.2,
        }
    }
}

/// Fraction of distinct query terms found in the item's text or tags.
pub fn lexical_overlap(query: &str, item: &MemoryItem) -> f64 {
    let q = term_set(query);
    if q.is_empty() {
        return 0.0;
    }
    let mut doc = term_set(&item.text);
    for t in &item.tags {
        doc.extend(term_set(t));
    }
    q.intersection(&doc).count() as f64 / q.len() as f64
}

/// Hybrid relevance in [0,1]. `query_vec` is the query embedding, when one
/// could be computed. Items without an embedding are scored on the lexical
/// and weight terms alone, rescaled to the same range.
pub fn score_item(
    query: &str,
    query_vec: Option<&[f64]>,
    item: &MemoryItem,
    w: &ScoreWeights,
) -> f64 {
    let lex = lexical_overlap(query, item);
    match (query_vec, item.embedding.as_deref()) {
        (Some(q), Some(e)) if q.len() == e.len() => {
            let cos = cosine(q, e).max(0.0);
            let total = w.embedding + w.lexical + w.weight;
            ((w.embedding * cos + w.lexical * lex + w.weight * item.weight) / total).clamp(0.0, 1.0)
        }
        _ => {
            let total = w.lexical + w.weight;
            if total == 0.0 {
                0.0
            } else {
                ((w.lexical * lex + w.weight * item.weight) / total).clamp(0.0, 1.0)
            }
        }
    }
}
