//! Okapi BM25 over an in-memory passage collection.
//!
//! score(q, d) = Σ_{t ∈ distinct(q)} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! with idf(t) = ln(1 + (N − df + 0.5)/(df + 0.5)), which is never negative.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Bm25Error {
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("unknown document id {0:?}")]
    UnknownDoc(String),
}

/// Lowercase, split on runs of non-alphanumeric characters, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Term statistics for one document, as stored in an index sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocStats {
    pub id: String,
    pub len: u32,
    pub terms: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    by_id: BTreeMap<String, u32>,
    /// term -> (doc slot, tf), slots ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    avg_doc_len: f64,
}

impl Bm25Index {
    /// Index `(doc id, text)` pairs.
    pub fn build<I, A, B>(passages: I, params: Bm25Params) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: AsRef<str>,
    {
        let docs = passages.into_iter().map(|(id, text)| {
            let tokens = tokenize(text.as_ref());
            let mut terms = BTreeMap::new();
            for t in &tokens {
                *terms.entry(t.clone()).or_insert(0u32) += 1;
            }
            DocStats { id: id.into(), len: tokens.len() as u32, terms }
        });
        Self::from_stats(docs, params)
    }

    /// Rebuild from per-document statistics (e.g. a persisted sidecar).
    pub fn from_stats<I>(docs: I, params: Bm25Params) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = DocStats>,
    {
        let mut index = Bm25Index {
            params,
            doc_ids: Vec::new(),
            doc_lengths: Vec::new(),
            by_id: BTreeMap::new(),
            postings: BTreeMap::new(),
            avg_doc_len: 0.0,
        };
        let mut total_len: u64 = 0;
        for doc in docs {
            let slot = index.doc_ids.len() as u32;
            if index.by_id.insert(doc.id.clone(), slot).is_some() {
                return Err(Bm25Error::DuplicateId(doc.id));
            }
            for (term, tf) in doc.terms {
                if tf > 0 {
                    index.postings.entry(term).or_default().push((slot, tf));
                }
            }
            total_len += u64::from(doc.len);
            index.doc_ids.push(doc.id);
            index.doc_lengths.push(doc.len);
        }
        if !index.doc_ids.is_empty() {
            index.avg_doc_len = total_len as f64 / index.doc_ids.len() as f64;
        }
        Ok(index)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.by_id.get(doc_id).map(|&s| self.doc_lengths[s as usize])
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_ids.iter().map(String::as_str)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Per-document statistics in insertion order; inverse of [`Bm25Index::from_stats`].
    pub fn doc_stats(&self) -> Vec<DocStats> {
        let mut out: Vec<DocStats> = self
            .doc_ids
            .iter()
            .zip(&self.doc_lengths)
            .map(|(id, &len)| DocStats { id: id.clone(), len, terms: BTreeMap::new() })
            .collect();
        for (term, list) in &self.postings {
            for &(slot, tf) in list {
                out[slot as usize].terms.insert(term.clone(), tf);
            }
        }
        out
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        math::ln(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * f64::from(len) / self.avg_doc_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    fn query_terms(query: &str) -> BTreeSet<String> {
        tokenize(query).into_iter().collect()
    }

    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64, Bm25Error> {
        let slot = *self
            .by_id
            .get(doc_id)
            .ok_or_else(|| Bm25Error::UnknownDoc(doc_id.into()))?;
        let len = self.doc_lengths[slot as usize];
        let mut total = 0.0;
        for term in Self::query_terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            if let Ok(i) = list.binary_search_by_key(&slot, |&(s, _)| s) {
                total += self.term_weight(self.idf(list.len()), list[i].1, len);
            }
        }
        Ok(total)
    }

    /// Highest scoring documents, descending; ties by ascending doc id.
    /// Documents scoring zero are never returned.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        // Terms in sorted order, same as `score`, so sums are bit-identical.
        for term in Self::query_terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(list.len());
            for &(slot, tf) in list {
                let w = self.term_weight(idf, tf, self.doc_lengths[slot as usize]);
                *acc.entry(slot).or_insert(0.0) += w;
            }
        }
        let mut hits: Vec<(&str, f64)> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(slot, s)| (self.doc_ids[slot as usize].as_str(), s))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        hits.into_iter().take(k).map(|(id, s)| (String::from(id), s)).collect()
    }
}
