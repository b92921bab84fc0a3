//! Few-shot prompt assembly for every prompt family.
//!
//! Components inside an exemplar block are joined by the dialect's intra
//! separator (`"\n\n"`), and every exemplar block is followed by the inter
//! separator (`"\n\n\n"`). The target block comes last and ends in a cue the
//! model continues from. A prompt with `n` exemplar blocks therefore holds
//! exactly `n` inter separators, none after the cue.
//!
//! Exemplar text is never escaped: text that contains a separator, or that
//! starts or ends with a newline (which would fuse with a separator), is
//! rejected.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hint::{parse_hint, HintError};
use crate::model::{Exemplar, Scheme};

pub const INTRA_SEPARATOR: &str = "\n\n";
pub const INTER_SEPARATOR: &str = "\n\n\n";

pub const QUESTION_CUE: &str = "Question:";
pub const RECITATION_CUE: &str = "Recitation:";
pub const ANSWER_CUE: &str = "Answer:";
pub const HINT_CUE: &str = "Hint:";
pub const COT_ANSWER_ANCHOR: &str = "So the answer is";

/// Cue for the i-th (1-based) recitation of a multi-recitation block.
pub fn numbered_recitation_cue(i: usize) -> String {
    format!("Recitation {i}:")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DialectName {
    Default,
    UL2,
}

/// Model-specific rewriting applied after a prompt is assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDialect {
    pub name: DialectName,
    pub intra_separator: String,
    pub inter_separator: String,
    pub newline_replacement: Option<String>,
    pub wrapper_prefix: Option<String>,
    pub wrapper_suffix: Option<String>,
}

impl Default for PromptDialect {
    fn default() -> Self {
        PromptDialect {
            name: DialectName::Default,
            intra_separator: INTRA_SEPARATOR.into(),
            inter_separator: INTER_SEPARATOR.into(),
            newline_replacement: None,
            wrapper_prefix: None,
            wrapper_suffix: None,
        }
    }
}

impl PromptDialect {
    /// UL2's vocabulary has no newline: `\n` becomes ` ; ` and the prompt is
    /// wrapped in `[NLG]` ... `[extra_id_0]` for prefix-LM mode.
    pub fn ul2() -> Self {
        PromptDialect {
            name: DialectName::UL2,
            newline_replacement: Some(" ; ".into()),
            wrapper_prefix: Some("[NLG]".into()),
            wrapper_suffix: Some("[extra_id_0]".into()),
            ..PromptDialect::default()
        }
    }

    pub fn from_name(name: DialectName) -> Self {
        match name {
            DialectName::Default => PromptDialect::default(),
            DialectName::UL2 => PromptDialect::ul2(),
        }
    }

    fn rewrite(&self, text: &str) -> String {
        match &self.newline_replacement {
            Some(r) => text.replace('\n', r),
            None => text.to_string(),
        }
    }

    /// Rewrite and wrap an assembled prompt.
    pub fn apply(&self, text: &str) -> String {
        let body = self.rewrite(text);
        let mut out = String::with_capacity(body.len() + 24);
        if let Some(p) = &self.wrapper_prefix {
            out.push_str(p);
        }
        out.push_str(&body);
        if let Some(s) = &self.wrapper_suffix {
            out.push_str(s);
        }
        out
    }

    /// The intra-block separator as it appears in model-visible text.
    pub fn block_separator(&self) -> String {
        self.rewrite(&self.intra_separator)
    }

    /// The inter-exemplar separator as it appears in model-visible text.
    pub fn exemplar_separator(&self) -> String {
        self.rewrite(&self.inter_separator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("scheme {found:?} cannot build this prompt (expected {expected})")]
    WrongScheme { expected: &'static str, found: Scheme },
    #[error("exemplar {index} has no recitations")]
    MissingRecitations { index: usize },
    #[error("exemplar {index} has no rationale")]
    MissingRationale { index: usize },
    #[error("exemplar {index} has {found} recitations, expected {expected}")]
    RecitationCountMismatch { index: usize, expected: usize, found: usize },
    #[error("target recitations are empty")]
    EmptyTargetRecitations,
    #[error("{field} contains a prompt separator or a leading/trailing newline")]
    SeparatorInjection { field: String },
    #[error("{field} is empty")]
    EmptyText { field: String },
    #[error("no exemplars given")]
    NoExemplars,
    #[error("multi-hop prompts need at least 2 recitations per hop, got {0}")]
    TooFewHops(usize),
    #[error("hint exemplar {index}: {source}")]
    InvalidHint { index: usize, source: HintError },
    #[error("requested {requested} exemplars from a pool of {pool}")]
    PoolTooSmall { pool: usize, requested: usize },
    #[error("requested zero exemplars")]
    ZeroShots,
}

/// Everything needed to render one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub scheme: Scheme,
    pub exemplars: Vec<Exemplar>,
    pub target_question: String,
    pub target_recitations: Option<Vec<String>>,
    pub recitations_per_hop: usize,
    pub dialect: PromptDialect,
}

impl PromptSpec {
    pub fn new(scheme: Scheme, exemplars: Vec<Exemplar>, target_question: impl Into<String>) -> Self {
        PromptSpec {
            scheme,
            exemplars,
            target_question: target_question.into(),
            target_recitations: None,
            recitations_per_hop: if scheme == Scheme::MultiHopRecite { 2 } else { 1 },
            dialect: PromptDialect::default(),
        }
    }

    pub fn with_target_recitations<I, S>(mut self, recitations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.target_recitations = Some(recitations.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_dialect(mut self, dialect: PromptDialect) -> Self {
        self.dialect = dialect;
        self
    }

    pub fn with_recitations_per_hop(mut self, n: usize) -> Self {
        self.recitations_per_hop = n;
        self
    }
}

struct Assembler<'a> {
    dialect: &'a PromptDialect,
    out: String,
}

impl<'a> Assembler<'a> {
    fn new(dialect: &'a PromptDialect) -> Self {
        Assembler { dialect, out: String::new() }
    }

    fn check(&self, field: impl FnOnce() -> String, text: &str) -> Result<(), PromptError> {
        let d = self.dialect;
        if text.contains(d.intra_separator.as_str())
            || text.contains(d.inter_separator.as_str())
            || text.starts_with('\n')
            || text.ends_with('\n')
        {
            return Err(PromptError::SeparatorInjection { field: field() });
        }
        Ok(())
    }

    fn exemplar_block(&mut self, parts: &[String]) {
        self.out.push_str(&parts.join(self.dialect.intra_separator.as_str()));
        self.out.push_str(&self.dialect.inter_separator);
    }

    fn finish(mut self, target: &[String]) -> String {
        self.out.push_str(&target.join(self.dialect.intra_separator.as_str()));
        self.dialect.apply(&self.out)
    }
}

fn cued(cue: &str, text: &str) -> String {
    format!("{cue} {text}")
}

/// `Recitation: r` for a single passage, `Recitation i: r_i` for several.
fn recitation_lines(recitations: &[String]) -> Vec<String> {
    if recitations.len() == 1 {
        return alloc::vec![cued(RECITATION_CUE, &recitations[0])];
    }
    recitations
        .iter()
        .enumerate()
        .map(|(i, r)| cued(&numbered_recitation_cue(i + 1), r))
        .collect()
}

fn check_question(asm: &Assembler<'_>, q: &str, field: impl FnOnce() -> String) -> Result<(), PromptError> {
    if q.trim().is_empty() {
        return Err(PromptError::EmptyText { field: field() });
    }
    asm.check(field, q)
}

fn check_exemplar_text(asm: &Assembler<'_>, i: usize, e: &Exemplar) -> Result<(), PromptError> {
    check_question(asm, &e.question, || format!("exemplars[{i}].question"))?;
    asm.check(|| format!("exemplars[{i}].answer"), &e.answer)?;
    for (j, r) in e.recitations.iter().enumerate() {
        asm.check(|| format!("exemplars[{i}].recitations[{j}]"), r)?;
    }
    if let Some(r) = &e.rationale {
        asm.check(|| format!("exemplars[{i}].rationale"), r)?;
    }
    Ok(())
}

fn check_recitations(asm: &Assembler<'_>, recs: &[String], what: &str) -> Result<(), PromptError> {
    for (j, r) in recs.iter().enumerate() {
        if r.trim().is_empty() {
            return Err(PromptError::EmptyText { field: format!("{what}[{j}]") });
        }
        asm.check(|| format!("{what}[{j}]"), r)?;
    }
    Ok(())
}

/// Question → recitation prompt ending in the `Recitation:` cue.
pub fn build_recitation_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    if spec.scheme != Scheme::ReciteAnswer {
        return Err(PromptError::WrongScheme { expected: "ReciteAnswer", found: spec.scheme });
    }
    let mut asm = Assembler::new(&spec.dialect);
    check_question(&asm, &spec.target_question, || "target_question".into())?;
    for (i, e) in spec.exemplars.iter().enumerate() {
        check_exemplar_text(&asm, i, e)?;
        if e.recitations.is_empty() {
            return Err(PromptError::MissingRecitations { index: i });
        }
        let mut parts = alloc::vec![cued(QUESTION_CUE, &e.question)];
        parts.extend(recitation_lines(&e.recitations));
        asm.exemplar_block(&parts);
    }
    Ok(asm.finish(&[cued(QUESTION_CUE, &spec.target_question), RECITATION_CUE.into()]))
}

/// Recitation(s) → question → answer prompt ending in the `Answer:` cue.
///
/// Under [`Scheme::Direct`] recitations are left out everywhere and the
/// prompt degenerates to plain question/answer blocks.
pub fn build_qa_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    let direct = match spec.scheme {
        Scheme::Direct => true,
        Scheme::ReciteAnswer | Scheme::MultiHopRecite | Scheme::DiversifiedRecite => false,
        Scheme::ChainOfThought => {
            return Err(PromptError::WrongScheme { expected: "a question-answering scheme", found: spec.scheme })
        }
    };
    let mut asm = Assembler::new(&spec.dialect);
    check_question(&asm, &spec.target_question, || "target_question".into())?;
    let target_recs: &[String] = spec.target_recitations.as_deref().unwrap_or(&[]);
    if !direct {
        if target_recs.is_empty() {
            return Err(PromptError::EmptyTargetRecitations);
        }
        check_recitations(&asm, target_recs, "target_recitations")?;
    }
    for (i, e) in spec.exemplars.iter().enumerate() {
        check_exemplar_text(&asm, i, e)?;
        let mut parts = Vec::new();
        if !direct {
            if e.recitations.is_empty() {
                return Err(PromptError::MissingRecitations { index: i });
            }
            parts.extend(recitation_lines(&e.recitations));
        }
        parts.push(cued(QUESTION_CUE, &e.question));
        parts.push(cued(ANSWER_CUE, &e.answer));
        asm.exemplar_block(&parts);
    }
    let mut target = Vec::new();
    if !direct {
        target.extend(recitation_lines(target_recs));
    }
    target.push(cued(QUESTION_CUE, &spec.target_question));
    target.push(ANSWER_CUE.into());
    Ok(asm.finish(&target))
}

/// Standard prompting: `Question:` / `Answer:` blocks only.
pub fn build_direct_prompt(
    exemplars: &[Exemplar],
    question: &str,
    dialect: &PromptDialect,
) -> Result<String, PromptError> {
    let spec = PromptSpec::new(Scheme::Direct, exemplars.to_vec(), question).with_dialect(dialect.clone());
    build_qa_prompt(&spec)
}

/// Multi-hop recitation prompt with numbered cues. The target block stops at
/// `Recitation 1:` so all hops are generated in one decoding pass.
pub fn build_multihop_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    if spec.scheme != Scheme::MultiHopRecite {
        return Err(PromptError::WrongScheme { expected: "MultiHopRecite", found: spec.scheme });
    }
    if spec.recitations_per_hop < 2 {
        return Err(PromptError::TooFewHops(spec.recitations_per_hop));
    }
    let mut asm = Assembler::new(&spec.dialect);
    check_question(&asm, &spec.target_question, || "target_question".into())?;
    for (i, e) in spec.exemplars.iter().enumerate() {
        check_exemplar_text(&asm, i, e)?;
        if e.recitations.len() != spec.recitations_per_hop {
            return Err(PromptError::RecitationCountMismatch {
                index: i,
                expected: spec.recitations_per_hop,
                found: e.recitations.len(),
            });
        }
        let mut parts = alloc::vec![cued(QUESTION_CUE, &e.question)];
        parts.extend(recitation_lines(&e.recitations));
        asm.exemplar_block(&parts);
    }
    Ok(asm.finish(&[cued(QUESTION_CUE, &spec.target_question), numbered_recitation_cue(1)]))
}

/// Chain-of-thought prompt: question → rationale → `So the answer is X.`
pub fn build_cot_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    if spec.scheme != Scheme::ChainOfThought {
        return Err(PromptError::WrongScheme { expected: "ChainOfThought", found: spec.scheme });
    }
    let mut asm = Assembler::new(&spec.dialect);
    check_question(&asm, &spec.target_question, || "target_question".into())?;
    for (i, e) in spec.exemplars.iter().enumerate() {
        check_exemplar_text(&asm, i, e)?;
        let rationale = e.rationale.as_deref().ok_or(PromptError::MissingRationale { index: i })?;
        let answer = format!("{ANSWER_CUE} {rationale} {COT_ANSWER_ANCHOR} {}.", e.answer);
        asm.exemplar_block(&[cued(QUESTION_CUE, &e.question), answer]);
    }
    Ok(asm.finish(&[cued(QUESTION_CUE, &spec.target_question), ANSWER_CUE.into()]))
}

/// One demonstration for hint-based recitation: question → hint → passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintExemplar {
    pub question: String,
    pub hint: String,
    pub passage: String,
}

/// Renders the hint → passage prompt once a hint has been sampled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassagePromptTemplate {
    prefix: String,
    dialect: PromptDialect,
}

impl PassagePromptTemplate {
    /// Prompt whose target block is `Hint: <hint>` followed by the `Recitation:` cue.
    pub fn render(&self, hint: &str) -> Result<String, PromptError> {
        let asm = Assembler::new(&self.dialect);
        if hint.trim().is_empty() {
            return Err(PromptError::EmptyText { field: "hint".into() });
        }
        asm.check(|| "hint".into(), hint)?;
        let mut raw = self.prefix.clone();
        raw.push_str(&cued(HINT_CUE, hint));
        raw.push_str(&self.dialect.intra_separator);
        raw.push_str(RECITATION_CUE);
        Ok(self.dialect.apply(&raw))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintPrompts {
    /// Question → hint prompt ending in the `Hint:` cue.
    pub hint_prompt: String,
    pub passage_template: PassagePromptTemplate,
}

pub fn build_hint_prompts(
    question: &str,
    exemplars: &[HintExemplar],
    dialect: &PromptDialect,
) -> Result<HintPrompts, PromptError> {
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    let mut hint_asm = Assembler::new(dialect);
    let mut passage_asm = Assembler::new(dialect);
    check_question(&hint_asm, question, || "question".into())?;
    for (i, e) in exemplars.iter().enumerate() {
        check_question(&hint_asm, &e.question, || format!("exemplars[{i}].question"))?;
        hint_asm.check(|| format!("exemplars[{i}].hint"), &e.hint)?;
        check_recitations(&hint_asm, core::slice::from_ref(&e.passage), &format!("exemplars[{i}].passage"))?;
        parse_hint(&e.hint).map_err(|source| PromptError::InvalidHint { index: i, source })?;
        hint_asm.exemplar_block(&[cued(QUESTION_CUE, &e.question), cued(HINT_CUE, &e.hint)]);
        passage_asm.exemplar_block(&[cued(HINT_CUE, &e.hint), cued(RECITATION_CUE, &e.passage)]);
    }
    let hint_prompt = hint_asm.finish(&[cued(QUESTION_CUE, question), HINT_CUE.into()]);
    Ok(HintPrompts {
        hint_prompt,
        passage_template: PassagePromptTemplate { prefix: passage_asm.out, dialect: dialect.clone() },
    })
}

/// One (evidence passage, question) pair for synthetic question generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QgenExemplar {
    pub evidence: String,
    pub question: String,
}

/// Passage → question prompt: evidence blocks first, then the target passage
/// and a `Question:` cue.
pub fn build_question_generation_prompt(
    passage: &str,
    exemplars: &[QgenExemplar],
    dialect: &PromptDialect,
) -> Result<String, PromptError> {
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    let mut asm = Assembler::new(dialect);
    if passage.trim().is_empty() {
        return Err(PromptError::EmptyText { field: "passage".into() });
    }
    asm.check(|| "passage".into(), passage)?;
    for (i, e) in exemplars.iter().enumerate() {
        check_recitations(&asm, core::slice::from_ref(&e.evidence), &format!("exemplars[{i}].evidence"))?;
        check_question(&asm, &e.question, || format!("exemplars[{i}].question"))?;
        asm.exemplar_block(&[cued(RECITATION_CUE, &e.evidence), cued(QUESTION_CUE, &e.question)]);
    }
    Ok(asm.finish(&[cued(RECITATION_CUE, passage), QUESTION_CUE.into()]))
}

/// Uniform sample of `n` items without replacement, then uniformly shuffled.
/// Deterministic in `seed`.
pub fn sample_exemplars<T: Clone>(pool: &[T], n: usize, seed: u64) -> Result<Vec<T>, PromptError> {
    if n == 0 {
        return Err(PromptError::ZeroShots);
    }
    if pool.len() < n {
        return Err(PromptError::PoolTooSmall { pool: pool.len(), requested: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), n).into_vec();
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}
