#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recite::backend::ScriptEntry;
use recite::jsonl;
use recite::promptset::PromptSet;
use recite_core::prompting::{build_qa_prompt, build_recitation_prompt, sample_exemplars, PromptSpec};
use recite_core::{Dataset, Exemplar, QuestionRecord, Scheme};

pub const SHOTS: u32 = 4;
pub const EXEMPLAR_SEED: u64 = 7;

pub fn qa_pool() -> Vec<Exemplar> {
    [
        ("When was the current London Bridge opened?", "The current London Bridge was opened on 17 March 1973.", "17 March 1973"),
        ("Who wrote Hamlet?", "Hamlet is a tragedy written by William Shakespeare.", "William Shakespeare"),
        ("What is the capital of Australia?", "Canberra is the capital city of Australia.", "Canberra"),
        ("Who painted the Mona Lisa?", "The Mona Lisa is a portrait painted by Leonardo da Vinci.", "Leonardo da Vinci"),
        ("What is the chemical symbol for gold?", "Gold is a chemical element with the symbol Au.", "Au"),
        ("How many moons does Mars have?", "Mars has two small moons, Phobos and Deimos.", "two"),
    ]
    .into_iter()
    .map(|(q, r, a)| Exemplar::recited(q, [r], a))
    .collect()
}

pub fn questions(n: usize) -> Vec<QuestionRecord> {
    (0..n)
        .map(|i| QuestionRecord {
            id: format!("q{i:03}"),
            dataset: Dataset::NQ,
            question: format!("Which city hosts landmark number {i}?"),
            gold_answers: vec![format!("City {i}")],
            gold_evidence: Some(format!("Landmark number {i} stands in the centre of City {i}.")),
            hop_count: 1,
        })
        .collect()
}

/// Exemplars the pipeline will pick for the fixture config.
pub fn fixture_exemplars() -> Vec<Exemplar> {
    exemplars_for_seed(EXEMPLAR_SEED)
}

pub fn exemplars_for_seed(seed: u64) -> Vec<Exemplar> {
    sample_exemplars(&qa_pool(), SHOTS as usize, seed).unwrap()
}

/// Script for recite-and-answer with `k` paths per question.
///
/// With `correct == k` every path recites the gold evidence and answers
/// the gold. Otherwise path recitations are distinct and `correct` of the
/// `k` answers (at shuffled positions) are gold, the rest one shared wrong
/// answer. `answered` limits how many questions get answer entries at all,
/// so later questions fail on a script miss.
pub fn recite_script(qs: &[QuestionRecord], k: usize, correct: usize, answered: usize) -> Vec<ScriptEntry> {
    recite_script_with(&fixture_exemplars(), qs, k, correct, answered)
}

pub fn recite_script_with(
    ex: &[Exemplar],
    qs: &[QuestionRecord],
    k: usize,
    correct: usize,
    answered: usize,
) -> Vec<ScriptEntry> {
    let ex = ex.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = Vec::new();
    for (qi, q) in qs.iter().enumerate() {
        let evidence = q.gold_evidence.clone().unwrap();
        let recs: Vec<String> = if correct == k {
            vec![evidence]
        } else {
            (0..k).map(|j| format!("{evidence} Variant {j}.")).collect()
        };
        let rprompt = build_recitation_prompt(&PromptSpec::new(Scheme::ReciteAnswer, ex.clone(), &q.question)).unwrap();
        out.push(entry(rprompt, recs.iter().map(|r| format!(" {r}\n\nQuestion: next")).collect()));
        if qi >= answered {
            continue;
        }
        let mut positions: Vec<usize> = (0..recs.len()).collect();
        positions.shuffle(&mut rng);
        let n_correct = if correct == k { recs.len() } else { correct };
        for (rank, &j) in positions.iter().enumerate() {
            let ans = if rank < n_correct { q.gold_answers[0].clone() } else { "Atlantis".to_string() };
            let prompt = build_qa_prompt(
                &PromptSpec::new(Scheme::ReciteAnswer, ex.clone(), &q.question).with_target_recitations([recs[j].clone()]),
            )
            .unwrap();
            out.push(entry(prompt, vec![format!(" {ans}")]));
        }
    }
    out
}

fn entry(prompt: String, responses: Vec<String>) -> ScriptEntry {
    ScriptEntry { prompt_hash: None, prompt: Some(prompt), responses, error: None, error_times: None }
}

/// Lay out prompts, questions, script and `run.toml` under `dir`.
pub fn write_run_fixture(dir: &Path, qs: &[QuestionRecord], script: &[ScriptEntry], k: usize) -> PathBuf {
    PromptSet { qa: qa_pool(), ..Default::default() }.save(&dir.join("prompts")).unwrap();
    jsonl::write_all(&dir.join("questions.jsonl"), qs.iter()).unwrap();
    jsonl::write_all(&dir.join("script.jsonl"), script.iter()).unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"out_dir = "out"
prompts = "prompts"

[dataset]
path = "questions.jsonl"
adapter = "jsonl"

[scheme]
name = "ReciteAnswer"
paths = {k}
shots = {SHOTS}
exemplar_seed = {EXEMPLAR_SEED}

[backend]
kind = "scripted"
script = "script.jsonl"

[parallelism]
questions = 4
paths = 8
"#
        ),
    )
    .unwrap();
    config
}
