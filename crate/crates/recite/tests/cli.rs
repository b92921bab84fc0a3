mod common;

use std::path::Path;
use std::process::{Command, Output};

use recite::backend::ScriptEntry;
use recite::corpus::CorpusStore;
use recite::jsonl;
use recite::promptset::PromptSet;
use recite_core::prompting::{build_question_generation_prompt, PromptDialect, QgenExemplar};

fn recite(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recite"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const DUMP: &str = r#"{"title": "London Bridge", "lead": "London Bridge crosses the River Thames in central London.\n\nThe current bridge opened in 1973.", "sections": [{"title": "History", "text": "A Roman bridge stood near the site.", "sections": []}]}
{"title": "Hamlet", "lead": "Hamlet is a tragedy by William Shakespeare set in Denmark."}
{"title": "Canberra", "lead": "Canberra is the capital city of Australia.", "sections": [{"title": "Geography", "text": "The city lies at the northern end of the Australian Capital Territory."}]}
"#;

fn build_corpus(dir: &Path) {
    std::fs::write(dir.join("dump.jsonl"), DUMP).unwrap();
    let o = recite(&["build-corpus", "dump.jsonl", "--out", "corpus"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("6 passages from 3 pages"), "{}", stdout(&o));
}

#[test]
fn build_index_query() {
    let dir = tempfile::tempdir().unwrap();
    build_corpus(dir.path());
    let o = recite(&["index", "build", "corpus"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("corpus/bm25.jsonl").exists());

    let o = recite(&["index", "query", "corpus/bm25.jsonl", "capital of Australia", "--top", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(first.starts_with("1\t"), "{first}");
    assert!(first.ends_with("\tCanberra --- Paragraph #1"), "{first}");

    let o = recite(&["index", "query", "corpus/bm25.jsonl", "roman bridge"], dir.path());
    assert!(stdout(&o).lines().next().unwrap().ends_with("London Bridge --- History --- Paragraph #1"));
}

#[test]
fn invalid_dump_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("dump.jsonl"), "{\"title\": \"A\", \"lead\": \"x\"}\n\n{\"lead\": \"no title\"}\n").unwrap();
    let o = recite(&["build-corpus", "dump.jsonl", "--out", "corpus"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("dump.jsonl:3:"), "{}", stderr(&o));
}

fn qgen_pool() -> Vec<QgenExemplar> {
    (0..5)
        .map(|i| QgenExemplar { evidence: format!("Fact number {i} is true."), question: format!("Is fact {i} true?") })
        .collect()
}

#[test]
fn gen_questions_emits_n_triples() {
    let dir = tempfile::tempdir().unwrap();
    build_corpus(dir.path());
    let pool = qgen_pool();
    PromptSet { qgen: pool.clone(), ..Default::default() }.save(&dir.path().join("prompts")).unwrap();
    let store = CorpusStore::load(&dir.path().join("corpus")).unwrap();
    let script: Vec<ScriptEntry> = store
        .passages()
        .iter()
        .map(|p| ScriptEntry {
            prompt_hash: None,
            prompt: Some(build_question_generation_prompt(&p.text, &pool, &PromptDialect::default()).unwrap()),
            responses: vec![format!(" What does the passage on {} say?\n\nRecitation: more", p.page_title)],
            error: None,
            error_times: None,
        })
        .collect();
    jsonl::write_all(&dir.path().join("script.jsonl"), script.iter()).unwrap();

    let args = ["gen-questions", "--corpus", "corpus", "--prompts", "prompts", "--n", "4", "--seed", "3", "--out", "triples.jsonl", "--scripted", "script.jsonl"];
    let o = recite(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let triples: Vec<serde_json::Value> = jsonl::read_all(&dir.path().join("triples.jsonl")).unwrap();
    assert_eq!(triples.len(), 4);
    for t in &triples {
        let hint = t["hint"].as_str().unwrap();
        let passage = store.by_hint(hint).unwrap();
        assert_eq!(t["passage"], passage.text.as_str());
        assert_eq!(t["question"], format!("What does the passage on {} say?", passage.page_title).as_str());
    }
    let again = recite(&args, dir.path());
    assert!(again.status.success());
    assert_eq!(jsonl::read_all::<serde_json::Value>(&dir.path().join("triples.jsonl")).unwrap(), triples);

    let o = recite(&["gen-questions", "--corpus", "corpus", "--prompts", "prompts", "--n", "99", "--out", "t.jsonl", "--scripted", "script.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

fn scripted_run_dir(n: usize, k: usize, correct: usize, answered: usize) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let qs = common::questions(n);
    let config = common::write_run_fixture(dir.path(), &qs, &common::recite_script(&qs, k, correct, answered), k);
    (dir, config.to_string_lossy().into_owned())
}

#[test]
fn run_resume_and_analyze() {
    let (dir, config) = scripted_run_dir(10, 6, 4, 10);
    let o = recite(&["run", "--config", &config, "--limit", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("EM 100.00"), "{}", stdout(&o));
    assert!(stdout(&o).contains("4 executed, 0 reused"), "{}", stdout(&o));

    let o = recite(&["run", "--config", &config, "--resume"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("6 executed, 4 reused"), "{}", stdout(&o));

    let out = dir.path().join("out");
    for f in ["run.json", "records.jsonl", "questions.jsonl", "report.json", "meta.json", "timings.jsonl", "categories.txt", "quadrants.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let o = recite(&["analyze", "out", "--counts", "1,3,6,20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "paths,trials,em_mean,em_std,f1_mean,f1_std");
    assert_eq!(rows.len(), 4, "counts above the stored 6 paths are skipped: {csv}");
    assert!(rows[3].starts_with("6,5,1.000000,0.000000"), "{csv}");

    // Four category rows whose percentages sum to 100.00 within rounding.
    let table = std::fs::read_to_string(out.join("categories.txt")).unwrap();
    let pcts: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().rev().nth(1).unwrap().trim_end_matches('%').parse().unwrap())
        .collect();
    assert_eq!(pcts.len(), 4);
    assert!((pcts.iter().sum::<f64>() - 100.0).abs() <= 0.011, "{table}");
    assert!(table.contains("Hits@6-Path"), "{table}");
}

#[test]
fn analyze_empty_dir_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = recite(&["analyze", "empty"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no readable records"), "{}", stderr(&o));
    assert_eq!(recite(&["analyze", "missing"], dir.path()).status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let (dir, config) = scripted_run_dir(3, 2, 2, 3);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, std::fs::read_to_string(&config).unwrap().replace("paths = 2", "paths = 0")).unwrap();
    let o = recite(&["run", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("scheme"), "{}", stderr(&o));

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, std::fs::read_to_string(&config).unwrap().replace("[parallelism]", "[parallelism]\nquestons = 2")).unwrap();
    let o = recite(&["run", "--config", typo.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("questons"), "{}", stderr(&o));

    // Every question failing on the backend is fatal; some failing is not.
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = recite(&["run", "--config", &config, "--scripted", "empty.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("out/report.json").exists());

    let (dir, config) = scripted_run_dir(3, 2, 2, 2);
    let o = recite(&["run", "--config", &config], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 failed"), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_failed"], 1);

    std::fs::write(dir.path().join("questions.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let o = recite(&["run", "--config", &config], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn seed_sweep() {
    let (dir, config) = scripted_run_dir(2, 2, 2, 2);
    let o = recite(&["seed-sweep", "--config", &config, "--seeds", "4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least two seeds"), "{}", stderr(&o));

    // Under exemplar seed 1 every scripted answer is wrong, so the two seeds
    // score 1 and 0 and the summary shows the per-seed re-sampling.
    let qs = common::questions(2);
    let mut script = common::recite_script(&qs, 2, 2, 2);
    script.extend(common::recite_script_with(&common::exemplars_for_seed(1), &qs, 2, 0, 2));
    jsonl::write_all(&dir.path().join("script.jsonl"), script.iter()).unwrap();
    let run = || {
        let o = recite(&["seed-sweep", "--config", &config, "--seeds", "7,1"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(dir.path().join("out/sweep.json")).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["seeds"][0]["em"], 1.0);
    assert_eq!(v["seeds"][1]["em"], 0.0);
    assert_eq!(v["em_mean"], 0.5);
    assert!(dir.path().join("out/seed-7/records.jsonl").exists());
}
