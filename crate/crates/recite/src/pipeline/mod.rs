//! Answering schemes end to end: prompt, sample, extract, vote.

// A path that fails early travels as the `Err` side of its context result.
#![allow(clippy::result_large_err)]

mod context;
mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use recite_core::eval::{plurality_vote, NormProfile};
use recite_core::extract::{clean_generation, extract_answer_with, split_recitations};
use recite_core::hint::{dedup_hints, hint_dedup_key};
use recite_core::prompting::{
    build_cot_prompt, build_direct_prompt, build_hint_prompts, build_multihop_prompt, build_qa_prompt,
    build_recitation_prompt, numbered_recitation_cue, sample_exemplars, HintExemplar, PromptDialect, PromptError,
    PromptSpec, ANSWER_CUE,
};
use recite_core::{Exemplar, PathStatus, QuestionRecord, RecitationPath, RunRecord, SamplingParams, Scheme, Validate};
use serde::{Deserialize, Serialize};

use crate::backend::{generate_batch, Backend, BackendError, GenerationRequest};
use crate::fingerprint::content_hash;
use crate::promptset::PromptSet;

pub use context::Bm25Context;
pub use run::{read_records_tolerant, run_dataset, RunDir, RunOptions, RunSummary, Timing};

/// What the QA prompt is conditioned on under [`Scheme::ReciteAnswer`].
///
/// `GroundTruth` and `Bm25` replace sampled recitations with the question's
/// gold evidence or the top-1 retrieved passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    #[default]
    Recitation,
    GroundTruth,
    Bm25,
}

/// How K samples are requested from the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// K requests with one sample each; sample `i` uses seed `seed + i`.
    #[default]
    PerRequest,
    /// One request with `n = K`.
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub n_paths: u32,
    pub recitation_params: SamplingParams,
    pub answer_params: SamplingParams,
    pub n_hints: u32,
    pub exemplar_seed: u64,
    pub shots: u32,
    pub recitations_per_hop: u32,
    pub context: ContextSource,
    pub sampling_mode: SamplingMode,
    /// Bound on concurrent backend calls within one question.
    pub path_parallelism: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        SchemeConfig {
            scheme,
            n_paths: if scheme == Scheme::Direct { 1 } else { 20 },
            recitation_params: SamplingParams::top_k(256, 0),
            answer_params: SamplingParams::greedy(32),
            n_hints: 5,
            exemplar_seed: 0,
            shots: 5,
            recitations_per_hop: 2,
            context: ContextSource::Recitation,
            sampling_mode: SamplingMode::PerRequest,
            path_parallelism: 8,
        }
    }

    pub fn with_paths(mut self, k: u32) -> Self {
        self.n_paths = k;
        self
    }

    pub fn with_shots(mut self, shots: u32) -> Self {
        self.shots = shots;
        self
    }
}

impl Validate for SchemeConfig {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.answer_params.is_greedy() {
            out.push("answer_params must be greedy".to_string());
        }
        for v in self.answer_params.violations() {
            out.push(format!("answer_params: {v}"));
        }
        for v in self.recitation_params.violations() {
            out.push(format!("recitation_params: {v}"));
        }
        if self.n_paths == 0 {
            out.push("n_paths must be positive".into());
        }
        if self.scheme == Scheme::Direct && self.n_paths != 1 {
            out.push("direct prompting takes exactly one greedy path".into());
        }
        if self.shots == 0 {
            out.push("shots must be positive".into());
        }
        if self.scheme == Scheme::DiversifiedRecite && self.n_hints == 0 {
            out.push("n_hints must be positive".into());
        }
        if self.scheme == Scheme::MultiHopRecite && self.recitations_per_hop < 2 {
            out.push("recitations_per_hop must be at least 2".into());
        }
        if self.context != ContextSource::Recitation && self.scheme != Scheme::ReciteAnswer {
            out.push("retrieval/ground-truth context applies only to ReciteAnswer".into());
        }
        if self.path_parallelism == 0 {
            out.push("path_parallelism must be positive".into());
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid scheme config: {0}")]
    Config(String),
    #[error("exemplars: {0}")]
    Exemplars(#[from] PromptError),
    #[error("context source {0:?} needs a retrieval index")]
    MissingContext(ContextSource),
}

/// A configured answering pipeline bound to one backend.
pub struct Pipeline {
    backend: Arc<dyn Backend>,
    cfg: SchemeConfig,
    dialect: PromptDialect,
    norm: NormProfile,
    exemplars: Vec<Exemplar>,
    hint_exemplars: Vec<HintExemplar>,
    retrieval: Option<Arc<Bm25Context>>,
    known_hints: Option<Arc<BTreeSet<String>>>,
    fingerprint: String,
}

const FINGERPRINT_VERSION: u32 = 1;

impl Pipeline {
    /// Samples `shots` exemplars with `exemplar_seed` and checks that they
    /// render for the configured scheme.
    pub fn new(
        backend: Arc<dyn Backend>,
        cfg: SchemeConfig,
        prompts: &PromptSet,
        dialect: PromptDialect,
        norm: NormProfile,
    ) -> Result<Self, PipelineError> {
        let v = cfg.violations();
        if !v.is_empty() {
            return Err(PipelineError::Config(v.join("; ")));
        }
        let shots = cfg.shots as usize;
        let pool = if cfg.scheme == Scheme::ChainOfThought { &prompts.cot } else { &prompts.qa };
        let exemplars = sample_exemplars(pool, shots, cfg.exemplar_seed)?;
        let hint_exemplars = if cfg.scheme == Scheme::DiversifiedRecite {
            sample_exemplars(&prompts.hint, shots.min(prompts.hint.len().max(1)), cfg.exemplar_seed)?
        } else {
            Vec::new()
        };
        let mut p = Pipeline {
            backend,
            cfg,
            dialect,
            norm,
            exemplars,
            hint_exemplars,
            retrieval: None,
            known_hints: None,
            fingerprint: String::new(),
        };
        p.probe()?;
        p.fingerprint = p.compute_fingerprint();
        Ok(p)
    }

    /// Attach the BM25 index used by [`ContextSource::Bm25`].
    pub fn with_retrieval(mut self, ctx: Arc<Bm25Context>) -> Self {
        self.retrieval = Some(ctx);
        self.fingerprint = self.compute_fingerprint();
        self
    }

    /// Restrict diversified recitation to hints present in a corpus.
    pub fn with_hint_corpus<I: IntoIterator<Item = String>>(mut self, hints: I) -> Self {
        self.known_hints = Some(Arc::new(hints.into_iter().map(|h| hint_dedup_key(&h)).collect()));
        self.fingerprint = self.compute_fingerprint();
        self
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn norm(&self) -> &NormProfile {
        &self.norm
    }

    /// Render every prompt family the scheme uses against a placeholder
    /// question so broken exemplars fail at startup, not per question.
    fn probe(&self) -> Result<(), PipelineError> {
        let q = "probe question";
        let spec = self.spec(q);
        match self.cfg.scheme {
            Scheme::Direct => {
                build_direct_prompt(&self.exemplars, q, &self.dialect)?;
            }
            Scheme::ReciteAnswer => {
                if self.cfg.context == ContextSource::Recitation {
                    build_recitation_prompt(&spec)?;
                } else if self.cfg.context == ContextSource::Bm25 && self.retrieval.is_none() {
                    // checked again per question; attach happens after construction
                }
                build_qa_prompt(&spec.with_target_recitations(["probe"]))?;
            }
            Scheme::MultiHopRecite => {
                build_multihop_prompt(&spec)?;
                let hops = vec!["probe"; self.cfg.recitations_per_hop as usize];
                build_qa_prompt(&spec.with_target_recitations(hops))?;
            }
            Scheme::DiversifiedRecite => {
                let prompts = build_hint_prompts(q, &self.hint_exemplars, &self.dialect)?;
                prompts.passage_template.render("Probe --- Paragraph #1")?;
                build_qa_prompt(&spec.with_target_recitations(["probe"]))?;
            }
            Scheme::ChainOfThought => {
                build_cot_prompt(&spec)?;
            }
        }
        Ok(())
    }

    fn compute_fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Parts<'a> {
            version: u32,
            backend: &'a str,
            cfg: &'a SchemeConfig,
            dialect: &'a PromptDialect,
            exemplars: &'a [Exemplar],
            hint_exemplars: &'a [HintExemplar],
            norm: &'a NormProfile,
            retrieval: Option<&'a str>,
            hint_corpus: Option<String>,
        }
        content_hash(&Parts {
            version: FINGERPRINT_VERSION,
            backend: self.backend.id(),
            cfg: &self.cfg,
            dialect: &self.dialect,
            exemplars: &self.exemplars,
            hint_exemplars: &self.hint_exemplars,
            norm: &self.norm,
            retrieval: self.retrieval.as_deref().map(Bm25Context::fingerprint),
            hint_corpus: self.known_hints.as_deref().map(content_hash),
        })
    }

    fn spec(&self, question: &str) -> PromptSpec {
        PromptSpec::new(self.cfg.scheme, self.exemplars.clone(), question)
            .with_dialect(self.dialect.clone())
            .with_recitations_per_hop(self.cfg.recitations_per_hop as usize)
    }

    fn block_sep(&self) -> String {
        self.dialect.block_separator()
    }

    fn with_default_stop(&self, params: &SamplingParams, stop: String) -> SamplingParams {
        let mut p = params.clone();
        if p.stop_sequences.is_empty() {
            p.stop_sequences.push(stop);
        }
        p
    }

    /// Answer one question under the configured scheme. Never fails: problems
    /// are recorded on the paths and, when no path can vote, on the record.
    pub async fn answer(&self, q: &QuestionRecord) -> RunRecord {
        let started = Instant::now();
        let paths = match self.cfg.scheme {
            Scheme::Direct => self.direct(q).await,
            Scheme::ReciteAnswer => self.recite_and_answer(q).await,
            Scheme::MultiHopRecite => self.multihop(q).await,
            Scheme::DiversifiedRecite => self.diversified(q).await,
            Scheme::ChainOfThought => self.chain_of_thought(q).await,
        };
        let mut rec = self.finish(q, paths);
        rec.wall_clock_ms = started.elapsed().as_millis() as u64;
        rec
    }

    fn finish(&self, q: &QuestionRecord, paths: Vec<RecitationPath>) -> RunRecord {
        let steps = self.norm.steps_for(q.dataset);
        let answers: Vec<&str> =
            paths.iter().filter(|p| p.votes()).map(|p| p.extracted_answer.as_str()).collect();
        let (voted_answer, error) = match plurality_vote(&answers, steps) {
            Some(v) => (v.winner, None),
            None => {
                let why = paths
                    .iter()
                    .filter_map(|p| p.error.as_deref())
                    .next()
                    .unwrap_or("no path produced an answer");
                (String::new(), Some(format!("all {} paths failed; first error: {why}", paths.len())))
            }
        };
        if let Some(e) = &error {
            log::warn!("question {}: {e}", q.id);
        }
        RunRecord {
            question_id: q.id.clone(),
            scheme: self.cfg.scheme,
            paths,
            voted_answer,
            config_fingerprint: self.fingerprint.clone(),
            wall_clock_ms: 0,
            error,
        }
    }

    /// K completions of one prompt. Per-request mode offsets the seed by the
    /// sample index.
    async fn sample(
        &self,
        prompt: &str,
        params: &SamplingParams,
        k: u32,
    ) -> Vec<Result<(String, BTreeMap<String, String>), BackendError>> {
        if params.is_greedy() || self.cfg.sampling_mode == SamplingMode::PerRequest {
            let reqs: Vec<GenerationRequest> = (0..k)
                .map(|i| {
                    GenerationRequest::new(prompt, params.clone().with_seed(params.seed.wrapping_add(u64::from(i))))
                })
                .collect();
            let out = generate_batch(&self.backend, &reqs, self.cfg.path_parallelism, None)
                .await
                .expect("bound validated and no cancel flag");
            out.into_iter().map(|r| r.map(|g| (g.texts.into_iter().next().unwrap_or_default(), g.meta))).collect()
        } else {
            let req = GenerationRequest::new(prompt, params.clone()).with_samples(k);
            match self.backend.generate(&req).await {
                Ok(g) => g.texts.into_iter().map(|t| Ok((t, g.meta.clone()))).collect(),
                Err(e) => (0..k).map(|_| Err(e.clone())).collect(),
            }
        }
    }

    /// Greedy-decode one answer per context and turn each into a path.
    async fn answer_contexts(
        &self,
        q: &QuestionRecord,
        contexts: Vec<Result<Vec<String>, RecitationPath>>,
        extra_meta: BTreeMap<String, String>,
    ) -> Vec<RecitationPath> {
        let params = self.with_default_stop(&self.cfg.answer_params, self.block_sep());
        let mut slots: Vec<Result<(Vec<String>, String), RecitationPath>> = Vec::with_capacity(contexts.len());
        for ctx in contexts {
            slots.push(ctx.and_then(|recs| {
                let spec = if self.cfg.scheme == Scheme::Direct {
                    build_direct_prompt(&self.exemplars, &q.question, &self.dialect)
                } else {
                    build_qa_prompt(&self.spec(&q.question).with_target_recitations(recs.clone()))
                };
                spec.map(|p| (recs.clone(), p))
                    .map_err(|e| RecitationPath::failed(PathStatus::StructureError, recs, e.to_string()))
            }));
        }
        let reqs: Vec<GenerationRequest> = slots
            .iter()
            .filter_map(|s| s.as_ref().ok())
            .map(|(_, p)| GenerationRequest::new(p.clone(), params.clone()))
            .collect();
        let mut results = generate_batch(&self.backend, &reqs, self.cfg.path_parallelism, None)
            .await
            .expect("bound validated and no cancel flag")
            .into_iter();
        let sep = self.block_sep();
        slots
            .into_iter()
            .map(|slot| {
                let (recs, _) = match slot {
                    Ok(s) => s,
                    Err(failed) => return failed,
                };
                match results.next().expect("one result per request") {
                    Err(e) => RecitationPath::failed(PathStatus::BackendError, recs, e.to_string()),
                    Ok(g) => {
                        let raw = format!("{ANSWER_CUE}{}", g.texts.into_iter().next().unwrap_or_default());
                        let ex = extract_answer_with(&raw, self.cfg.scheme, &sep);
                        let mut meta = g.meta;
                        meta.extend(extra_meta.clone());
                        RecitationPath {
                            recitations: recs,
                            raw_answer_text: raw,
                            extracted_answer: ex.answer,
                            backend_meta: meta,
                            status: if ex.failed { PathStatus::ExtractionFailed } else { PathStatus::Ok },
                            error: ex.failed.then(|| "no answer after cue".to_string()),
                        }
                    }
                }
            })
            .collect()
    }

    async fn direct(&self, q: &QuestionRecord) -> Vec<RecitationPath> {
        self.answer_contexts(q, vec![Ok(Vec::new())], BTreeMap::new()).await
    }

    async fn recite_and_answer(&self, q: &QuestionRecord) -> Vec<RecitationPath> {
        let mut meta = BTreeMap::new();
        let context = match self.cfg.context {
            ContextSource::Recitation => None,
            ContextSource::GroundTruth => Some(match q.gold_evidence.as_deref() {
                Some(e) if !e.trim().is_empty() => Ok(vec![clean_generation(e, &self.block_sep())]),
                _ => Err(RecitationPath::failed(PathStatus::StructureError, vec![], "question has no gold evidence")),
            }),
            ContextSource::Bm25 => Some(match self.retrieval.as_deref().and_then(|r| r.top1(&q.question)) {
                Some((hint, text)) => {
                    meta.insert("retrieved".to_string(), hint);
                    Ok(vec![text])
                }
                None => Err(RecitationPath::failed(PathStatus::StructureError, vec![], "no passage retrieved")),
            }),
        };
        if let Some(ctx) = context {
            // A fixed context with greedy answering gives one distinct path.
            return self.answer_contexts(q, vec![ctx], meta).await;
        }

        let prompt = match build_recitation_prompt(&self.spec(&q.question)) {
            Ok(p) => p,
            Err(e) => return vec![RecitationPath::failed(PathStatus::StructureError, vec![], e.to_string())],
        };
        let sep = self.block_sep();
        let params = self.with_default_stop(&self.cfg.recitation_params, sep.clone());
        let contexts = self
            .sample(&prompt, &params, self.cfg.n_paths)
            .await
            .into_iter()
            .map(|r| match r {
                Err(e) => Err(RecitationPath::failed(PathStatus::BackendError, vec![], e.to_string())),
                Ok((text, _)) => {
                    let rec = clean_generation(&text, &sep);
                    if rec.is_empty() {
                        Err(RecitationPath::failed(PathStatus::StructureError, vec![], "empty recitation"))
                    } else {
                        Ok(vec![rec])
                    }
                }
            })
            .collect();
        self.answer_contexts(q, contexts, BTreeMap::new()).await
    }

    async fn multihop(&self, q: &QuestionRecord) -> Vec<RecitationPath> {
        let prompt = match build_multihop_prompt(&self.spec(&q.question)) {
            Ok(p) => p,
            Err(e) => return vec![RecitationPath::failed(PathStatus::StructureError, vec![], e.to_string())],
        };
        let sep = self.block_sep();
        // Hops are separated by the block separator, so only the exemplar
        // separator can end the one-pass generation.
        let params = self.with_default_stop(&self.cfg.recitation_params, self.dialect.exemplar_separator());
        let hops = self.cfg.recitations_per_hop as usize;
        let cue = numbered_recitation_cue(1);
        let contexts = self
            .sample(&prompt, &params, self.cfg.n_paths)
            .await
            .into_iter()
            .map(|r| match r {
                Err(e) => Err(RecitationPath::failed(PathStatus::BackendError, vec![], e.to_string())),
                Ok((text, _)) => {
                    let raw = format!("{cue}{text}");
                    split_recitations(&raw, hops, &sep).map_err(|e| {
                        let mut p = RecitationPath::failed(PathStatus::StructureError, vec![], e.to_string());
                        p.raw_answer_text = raw;
                        p
                    })
                }
            })
            .collect();
        self.answer_contexts(q, contexts, BTreeMap::new()).await
    }

    async fn chain_of_thought(&self, q: &QuestionRecord) -> Vec<RecitationPath> {
        let prompt = match build_cot_prompt(&self.spec(&q.question)) {
            Ok(p) => p,
            Err(e) => return vec![RecitationPath::failed(PathStatus::StructureError, vec![], e.to_string())],
        };
        let sep = self.block_sep();
        let base = if self.cfg.n_paths > 1 { &self.cfg.recitation_params } else { &self.cfg.answer_params };
        let params = self.with_default_stop(base, sep.clone());
        self.sample(&prompt, &params, self.cfg.n_paths)
            .await
            .into_iter()
            .map(|r| match r {
                Err(e) => RecitationPath::failed(PathStatus::BackendError, vec![], e.to_string()),
                Ok((text, meta)) => {
                    let raw = format!("{ANSWER_CUE}{text}");
                    let ex = extract_answer_with(&raw, Scheme::ChainOfThought, &sep);
                    RecitationPath {
                        recitations: Vec::new(),
                        raw_answer_text: raw,
                        extracted_answer: ex.answer,
                        backend_meta: meta,
                        status: if ex.failed { PathStatus::ExtractionFailed } else { PathStatus::Ok },
                        error: ex.failed.then(|| "no \"So the answer is\" anchor".to_string()),
                    }
                }
            })
            .collect()
    }

    async fn diversified(&self, q: &QuestionRecord) -> Vec<RecitationPath> {
        let fail = |e: String| vec![RecitationPath::failed(PathStatus::StructureError, vec![], e)];
        let prompts = match build_hint_prompts(&q.question, &self.hint_exemplars, &self.dialect) {
            Ok(p) => p,
            Err(e) => return fail(e.to_string()),
        };
        let sep = self.block_sep();
        let hint_params = self.with_default_stop(&self.cfg.recitation_params, sep.clone());
        let mut sampled = Vec::new();
        let mut first_err = None;
        for r in self.sample(&prompts.hint_prompt, &hint_params, self.cfg.n_hints).await {
            match r {
                Ok((t, _)) => {
                    let h = clean_generation(&t, &sep);
                    if !h.is_empty() {
                        sampled.push(h);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let mut hints = dedup_hints(&sampled);
        if let Some(known) = &self.known_hints {
            let before = hints.len();
            hints.retain(|h| known.contains(&hint_dedup_key(h)));
            if hints.len() < before {
                log::debug!("question {}: {} sampled hints not in corpus", q.id, before - hints.len());
            }
        }
        if hints.is_empty() {
            return match first_err {
                Some(e) => vec![RecitationPath::failed(PathStatus::BackendError, vec![], e.to_string())],
                None => fail("no usable hints".into()),
            };
        }

        // Passages are greedy-decoded, one per unique hint.
        let mut passage_params = SamplingParams::greedy(self.cfg.recitation_params.max_tokens);
        passage_params.stop_sequences = vec![sep.clone()];
        let mut kept_hints = Vec::new();
        let mut reqs = Vec::new();
        for h in &hints {
            match prompts.passage_template.render(h) {
                Ok(p) => {
                    kept_hints.push(h.clone());
                    reqs.push(GenerationRequest::new(p, passage_params.clone()));
                }
                Err(e) => log::debug!("question {}: hint {h:?} dropped: {e}", q.id),
            }
        }
        let results = generate_batch(&self.backend, &reqs, self.cfg.path_parallelism, None)
            .await
            .expect("bound validated and no cancel flag");
        let mut passages = Vec::new();
        let mut meta = BTreeMap::new();
        for (h, r) in kept_hints.into_iter().zip(results) {
            match r {
                Ok(g) => {
                    let text = clean_generation(g.texts.first().map(String::as_str).unwrap_or(""), &sep);
                    if text.is_empty() {
                        continue;
                    }
                    passages.push(text);
                    meta.insert(format!("hint_{}", passages.len()), h);
                }
                Err(e) => {
                    log::debug!("question {}: passage for {h:?} failed: {e}", q.id);
                    first_err.get_or_insert(e);
                }
            }
        }
        if passages.is_empty() {
            return match first_err {
                Some(e) => vec![RecitationPath::failed(PathStatus::BackendError, vec![], e.to_string())],
                None => fail("every hint produced an empty passage".into()),
            };
        }
        self.answer_contexts(q, vec![Ok(passages)], meta).await
    }
}
