use std::collections::BTreeMap;

use recite_core::bm25::Bm25Index;

use crate::fingerprint::content_hash;

/// BM25 index plus passage texts, keyed by the same doc ids.
pub struct Bm25Context {
    index: Bm25Index,
    texts: BTreeMap<String, String>,
    fingerprint: String,
}

impl Bm25Context {
    pub fn new(index: Bm25Index, texts: BTreeMap<String, String>) -> Self {
        let fingerprint = content_hash(&(index.doc_stats(), index.params().k1, index.params().b));
        Bm25Context { index, texts, fingerprint }
    }

    /// Top-scoring passage as (doc id, text).
    pub fn top1(&self, query: &str) -> Option<(String, String)> {
        let (id, _) = self.index.top_k(query, 1).into_iter().next()?;
        let text = self.texts.get(&id)?.clone();
        Some((id, text))
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}
