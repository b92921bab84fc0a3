//! Shared domain types and their invariant checks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::eval::{plurality_vote, NormSteps};
use crate::extract::extract_answer;

/// Source dataset of a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    NQ,
    TriviaQA,
    HotpotQA,
    Custom,
}

/// Answering scheme. Also names the prompt family used to build prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Direct,
    ReciteAnswer,
    MultiHopRecite,
    DiversifiedRecite,
    ChainOfThought,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Direct => "Direct",
            Scheme::ReciteAnswer => "ReciteAnswer",
            Scheme::MultiHopRecite => "MultiHopRecite",
            Scheme::DiversifiedRecite => "DiversifiedRecite",
            Scheme::ChainOfThought => "ChainOfThought",
        }
    }
}

/// One QA item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: Dataset,
    pub question: String,
    /// Answer aliases; any one of them counts as correct.
    pub gold_answers: Vec<String>,
    /// NQ "long answer" passage, when the dataset annotates one.
    #[serde(default)]
    pub gold_evidence: Option<String>,
    pub hop_count: u32,
}

/// One few-shot demonstration.
///
/// An exemplar demonstrates exactly one scheme: recitation exemplars carry
/// `recitations`, chain-of-thought exemplars carry a `rationale`, and direct
/// exemplars carry neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    #[serde(default)]
    pub recitations: Vec<String>,
    pub answer: String,
    #[serde(default)]
    pub rationale: Option<String>,
}

impl Exemplar {
    pub fn direct(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Exemplar {
            question: question.into(),
            recitations: Vec::new(),
            answer: answer.into(),
            rationale: None,
        }
    }

    pub fn recited<I, S>(question: impl Into<String>, recitations: I, answer: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Exemplar {
            question: question.into(),
            recitations: recitations.into_iter().map(Into::into).collect(),
            answer: answer.into(),
            rationale: None,
        }
    }

    pub fn with_rationale(
        question: impl Into<String>,
        rationale: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        Exemplar {
            question: question.into(),
            recitations: Vec::new(),
            answer: answer.into(),
            rationale: Some(rationale.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Greedy,
    TopK,
}

/// Decoding parameters for one generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub strategy: Strategy,
    /// Top-k cutoff. Ignored under greedy decoding.
    #[serde(default)]
    pub k: Option<u32>,
    /// Ignored under greedy decoding.
    #[serde(default)]
    pub temperature: Option<f64>,
    pub seed: u64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl SamplingParams {
    pub const DEFAULT_TOP_K: u32 = 40;
    pub const DEFAULT_TEMPERATURE: f64 = 0.7;

    pub fn greedy(max_tokens: u32) -> Self {
        SamplingParams {
            strategy: Strategy::Greedy,
            k: None,
            temperature: None,
            seed: 0,
            max_tokens,
            stop_sequences: Vec::new(),
        }
    }

    /// Top-k sampling with the default k = 40 and temperature 0.7.
    pub fn top_k(max_tokens: u32, seed: u64) -> Self {
        SamplingParams {
            strategy: Strategy::TopK,
            k: Some(Self::DEFAULT_TOP_K),
            temperature: Some(Self::DEFAULT_TEMPERATURE),
            seed,
            max_tokens,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stop<I, S>(mut self, stops: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop_sequences = stops.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_greedy(&self) -> bool {
        self.strategy == Strategy::Greedy
    }
}

/// Outcome of one self-consistency path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathStatus {
    Ok,
    /// The answer cue was missing; the extracted answer is empty.
    ExtractionFailed,
    /// Multi-hop output lacked the numbered recitation cues.
    StructureError,
    /// The backend failed for this path.
    BackendError,
}

/// One recitation + answer trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecitationPath {
    pub recitations: Vec<String>,
    pub raw_answer_text: String,
    pub extracted_answer: String,
    #[serde(default)]
    pub backend_meta: BTreeMap<String, String>,
    pub status: PathStatus,
    #[serde(default)]
    pub error: Option<String>,
}

impl RecitationPath {
    /// Whether the path's answer takes part in plurality voting.
    pub fn votes(&self) -> bool {
        self.status == PathStatus::Ok
    }

    pub fn failed(status: PathStatus, recitations: Vec<String>, error: impl Into<String>) -> Self {
        RecitationPath {
            recitations,
            raw_answer_text: String::new(),
            extracted_answer: String::new(),
            backend_meta: BTreeMap::new(),
            status,
            error: Some(error.into()),
        }
    }
}

/// Per-question result of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub scheme: Scheme,
    pub paths: Vec<RecitationPath>,
    pub voted_answer: String,
    pub config_fingerprint: String,
    pub wall_clock_ms: u64,
    /// Set when the whole question failed (no path could vote).
    #[serde(default)]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn voting_answers(&self) -> Vec<&str> {
        self.paths
            .iter()
            .filter(|p| p.votes())
            .map(|p| p.extracted_answer.as_str())
            .collect()
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Invariant checking. Never panics; an empty list means valid.
pub trait Validate {
    fn violations(&self) -> Vec<String>;

    fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

impl Validate for QuestionRecord {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push(String::from("id empty"));
        }
        if self.question.is_empty() {
            out.push(String::from("question empty"));
        } else if self.question.trim() != self.question {
            out.push(String::from("question has leading or trailing whitespace"));
        }
        if self.gold_answers.is_empty() {
            out.push(String::from("gold_answers empty"));
        }
        for (i, g) in self.gold_answers.iter().enumerate() {
            if g.is_empty() {
                out.push(format!("gold_answers[{i}] empty"));
            }
        }
        if self.hop_count == 0 {
            out.push(String::from("hop_count must be >= 1"));
        } else if self.dataset == Dataset::HotpotQA && self.hop_count < 2 {
            out.push(format!("HotpotQA record has hop_count {} (< 2)", self.hop_count));
        }
        out
    }
}

impl Validate for Exemplar {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.recitations.is_empty() && self.rationale.is_some() {
            out.push(String::from("exemplar carries both recitations and a rationale"));
        }
        if self.question.is_empty() {
            out.push(String::from("question empty"));
        }
        out
    }
}

impl Validate for SamplingParams {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_tokens == 0 {
            out.push(String::from("max_tokens must be positive"));
        }
        if self.strategy == Strategy::TopK {
            match self.k {
                None => out.push(String::from("top-k sampling requires k")),
                Some(0) => out.push(String::from("k must be positive")),
                Some(_) => {}
            }
            match self.temperature {
                None => out.push(String::from("top-k sampling requires temperature")),
                Some(t) if !t.is_finite() || t < 0.0 => {
                    out.push(format!("temperature must be a positive finite number, got {t}"))
                }
                Some(0.0) => out.push(String::from("temperature 0 under top-k (use greedy)")),
                Some(_) => {}
            }
        }
        out
    }
}

impl RunRecord {
    /// Invariant check with an explicit normalization profile for the vote.
    pub fn violations_with(&self, steps: &NormSteps) -> Vec<String> {
        let mut out = Vec::new();
        if self.question_id.is_empty() {
            out.push(String::from("question_id empty"));
        }
        if self.paths.is_empty() {
            out.push(String::from("paths empty"));
        }
        if self.scheme == Scheme::Direct {
            for (i, p) in self.paths.iter().enumerate() {
                if !p.recitations.is_empty() {
                    out.push(format!("direct scheme path {i} has recitations"));
                }
            }
        }
        for (i, p) in self.paths.iter().enumerate() {
            if p.status == PathStatus::Ok {
                let re = extract_answer(&p.raw_answer_text, self.scheme);
                if re.answer != p.extracted_answer {
                    out.push(format!(
                        "path {i}: extracted_answer {:?} does not re-derive from raw text ({:?})",
                        p.extracted_answer, re.answer
                    ));
                }
            }
        }
        let answers = self.voting_answers();
        match plurality_vote(&answers, steps) {
            Some(vote) => {
                if vote.winner != self.voted_answer {
                    out.push(format!(
                        "voted_answer {:?} differs from plurality winner {:?}",
                        self.voted_answer, vote.winner
                    ));
                }
            }
            None => {
                if !self.voted_answer.is_empty() {
                    out.push(String::from("voted_answer set although no path votes"));
                }
                if self.error.is_none() && !self.paths.is_empty() {
                    out.push(String::from("no voting path but record not marked failed"));
                }
            }
        }
        out
    }
}

impl Validate for RunRecord {
    fn violations(&self) -> Vec<String> {
        self.violations_with(&NormSteps::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn nq() -> QuestionRecord {
        QuestionRecord {
            id: "nq-1".into(),
            dataset: Dataset::NQ,
            question: "when was london bridge opened".into(),
            gold_answers: vec!["17 March 1973".into()],
            gold_evidence: Some("London Bridge was opened on 17 March 1973.".into()),
            hop_count: 1,
        }
    }

    #[test]
    fn empty_gold_answers() {
        let mut q = nq();
        q.gold_answers.clear();
        assert_eq!(q.violations(), vec![String::from("gold_answers empty")]);
    }

    #[test]
    fn well_formed_nq() {
        assert!(nq().violations().is_empty());
    }

    #[test]
    fn hotpot_single_hop() {
        let mut q = nq();
        q.dataset = Dataset::HotpotQA;
        q.hop_count = 1;
        assert_eq!(q.violations().len(), 1);
    }

    #[test]
    fn exemplar_one_scheme_only() {
        let mut e = Exemplar::recited("q", ["r"], "a");
        assert!(e.is_valid());
        e.rationale = Some("because".into());
        assert_eq!(e.violations().len(), 1);
    }

    #[test]
    fn topk_zero_temperature_rejected() {
        let mut p = SamplingParams::top_k(64, 1);
        assert!(p.is_valid());
        p.temperature = Some(0.0);
        assert!(!p.is_valid());
        // greedy ignores k and temperature entirely
        let mut g = SamplingParams::greedy(16);
        g.temperature = Some(0.0);
        assert!(g.is_valid());
    }

    fn ok_path(answer: &str) -> RecitationPath {
        RecitationPath {
            recitations: vec!["r".into()],
            raw_answer_text: format!("Answer: {answer}"),
            extracted_answer: answer.into(),
            backend_meta: BTreeMap::new(),
            status: PathStatus::Ok,
            error: None,
        }
    }

    #[test]
    fn run_record_vote_is_rechecked() {
        let mut r = RunRecord {
            question_id: "q".into(),
            scheme: Scheme::ReciteAnswer,
            paths: vec![ok_path("rome"), ok_path("paris"), ok_path("rome")],
            voted_answer: "rome".into(),
            config_fingerprint: "x".into(),
            wall_clock_ms: 0,
            error: None,
        };
        assert!(r.violations().is_empty(), "{:?}", r.violations());
        r.voted_answer = "paris".into();
        assert_eq!(r.violations().len(), 1);
    }

    #[test]
    fn direct_paths_have_no_recitations() {
        let r = RunRecord {
            question_id: "q".into(),
            scheme: Scheme::Direct,
            paths: vec![ok_path("rome")],
            voted_answer: "rome".into(),
            config_fingerprint: "x".into(),
            wall_clock_ms: 0,
            error: None,
        };
        assert_eq!(r.violations().len(), 1);
    }

    #[test]
    fn validate_is_total_on_garbage() {
        let r = RunRecord {
            question_id: String::new(),
            scheme: Scheme::ChainOfThought,
            paths: Vec::new(),
            voted_answer: "x".into(),
            config_fingerprint: String::new(),
            wall_clock_ms: 0,
            error: None,
        };
        assert!(!r.violations().is_empty());
    }
}
