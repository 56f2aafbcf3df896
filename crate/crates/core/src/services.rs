//! Model-driven capabilities (embedding, summarization, merge consolidation)
//! behind one interface.
//!
//! [`StubServices`] is the deterministic default: a hashed character-trigram
//! embedding, an extractive focus-scored summarizer and a sentence-dedup
//! merger. [`HttpServices`] speaks a small JSON-over-HTTP protocol to an
//! external model server:
//!
//! | endpoint          | request                                              | response              |
//! |-------------------|------------------------------------------------------|-----------------------|
//! | `POST /embed`     | `{"text": str}`                                      | `{"vector": [f64]}`   |
//! | `POST /summarize` | `{"texts": [str], "focus": str, "max_tokens": int}`  | `{"text": str}`       |
//! | `POST /merge`     | `{"texts": [str]}`                                   | `{"text": str}`       |

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize_whitespace, sentences, term_set, token_count};

pub const DEFAULT_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub name: String,
    pub dimension: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("nothing to summarize")]
    EmptyInput,
    #[error("summary budget must be at least one token")]
    EmptyBudget,
    #[error("merge needs at least two texts, got {0}")]
    TooFew(usize),
    #[error("service returned a vector of dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("remote service error: {0}")]
    Remote(String),
}

pub trait ModelServices: Send + Sync {
    fn descriptor(&self) -> ServiceDescriptor;
    /// Unit-norm vector of length `descriptor().dimension`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, ServiceError>;
    fn summarize(
        &self,
        texts: &[String],
        focus: &str,
        max_tokens: usize,
    ) -> Result<String, ServiceError>;
    fn merge_text(&self, texts: &[String]) -> Result<String, ServiceError>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone)]
pub struct StubServices {
    dimension: usize,
}

impl Default for StubServices {
    fn default() -> Self {
        StubServices::new(DEFAULT_DIMENSION)
    }
}

impl StubServices {
    pub fn new(dimension: usize) -> Self {
        StubServices {
            dimension: dimension.max(1),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(PRIME))
}

/// splitmix64 finalizer; spreads FNV's weak low bits before bucketing.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Character trigrams of the lowercased, whitespace-normalized text padded
/// with one space on each side.
pub fn trigrams(text: &str) -> Vec<String> {
    let padded: Vec<char> = format!(" {} ", normalize_whitespace(&text.to_lowercase()))
        .chars()
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

impl ModelServices for StubServices {
    fn descriptor(&self) -> ServiceDescriptor {
        ServiceDescriptor {
            name: "stub-trigram".into(),
            dimension: self.dimension,
            version: "1".into(),
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyText);
        }
        let mut v = vec![0.0f64; self.dimension];
        for gram in trigrams(text) {
            let h = mix64(fnv1a64(gram.as_bytes()));
            let bucket = (h % self.dimension as u64) as usize;
            // sign bit taken from the top of the hash so collisions cancel in expectation
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every trigram cancelled out; fall back to the unsigned bag
            for gram in trigrams(text) {
                let h = mix64(fnv1a64(gram.as_bytes()));
                v[(h % self.dimension as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }

    fn summarize(
        &self,
        texts: &[String],
        focus: &str,
        max_tokens: usize,
    ) -> Result<String, ServiceError> {
        if max_tokens == 0 {
            return Err(ServiceError::EmptyBudget);
        }
        let units: Vec<String> = texts.iter().flat_map(|t| sentences(t)).collect();
        if units.is_empty() {
            return Err(ServiceError::EmptyInput);
        }
        let focus_terms = term_set(focus);
        let mut ranked: Vec<(usize, usize)> = units
            .iter()
            .enumerate()
            .map(|(i, s)| (i, term_set(s).intersection(&focus_terms).count()))
            .collect();
        // score desc, then source position; zero scores fall back to lead order
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut chosen = Vec::new();
        let mut used = 0;
        for &(i, _) in &ranked {
            let n = token_count(&units[i]);
            if used + n <= max_tokens {
                chosen.push(i);
                used += n;
            }
        }
        if chosen.is_empty() {
            let top = &units[ranked[0].0];
            return Ok(top
                .split_whitespace()
                .take(max_tokens)
                .collect::<Vec<_>>()
                .join(" "));
        }
        chosen.sort_unstable();
        Ok(chosen
            .into_iter()
            .map(|i| units[i].as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn merge_text(&self, texts: &[String]) -> Result<String, ServiceError> {
        if texts.len() < 2 {
            return Err(ServiceError::TooFew(texts.len()));
        }
        let mut seen = HashSet::new();
        let kept: Vec<String> = texts
            .iter()
            .flat_map(|t| sentences(t))
            .filter(|s| seen.insert(s.clone()))
            .collect();
        Ok(kept.join(" "))
    }
}

/// Client for an external model server (see module docs for the protocol).
pub struct HttpServices {
    base_url: String,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

#[derive(Serialize)]
struct SummarizeRequest<'a> {
    texts: &'a [String],
    focus: &'a str,
    max_tokens: usize,
}

#[derive(Serialize)]
struct MergeRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

impl HttpServices {
    pub fn new(base_url: impl Into<String>, dimension: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpServices {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            dimension,
            agent,
        }
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        endpoint: &str,
        body: &Req,
    ) -> Result<Resp, ServiceError> {
        let url = format!("{}/{endpoint}", self.base_url);
        self.agent
            .post(&url)
            .send_json(body)
            .map_err(|e| ServiceError::Remote(format!("{url}: {e}")))?
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| ServiceError::Remote(format!("{url}: {e}")))
    }
}

impl ModelServices for HttpServices {
    fn descriptor(&self) -> ServiceDescriptor {
        ServiceDescriptor {
            name: format!("http:{}", self.base_url),
            dimension: self.dimension,
            version: "1".into(),
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyText);
        }
        let resp: EmbedResponse = self.post("embed", &EmbedRequest { text })?;
        if resp.vector.len() != self.dimension {
            return Err(ServiceError::DimensionMismatch {
                expected: self.dimension,
                got: resp.vector.len(),
            });
        }
        Ok(resp.vector)
    }

    fn summarize(
        &self,
        texts: &[String],
        focus: &str,
        max_tokens: usize,
    ) -> Result<String, ServiceError> {
        if max_tokens == 0 {
            return Err(ServiceError::EmptyBudget);
        }
        if texts.is_empty() {
            return Err(ServiceError::EmptyInput);
        }
        let resp: TextResponse = self.post(
            "summarize",
            &SummarizeRequest {
                texts,
                focus,
                max_tokens,
            },
        )?;
        Ok(resp.text)
    }

    fn merge_text(&self, texts: &[String]) -> Result<String, ServiceError> {
        if texts.len() < 2 {
            return Err(ServiceError::TooFew(texts.len()));
        }
        let resp: TextResponse = self.post("merge", &MergeRequest { texts })?;
        Ok(resp.text)
    }
}
