use std::collections::BTreeMap;

use proptest::prelude::*;
use recite_core::bm25::{tokenize, Bm25Index, Bm25Params};
use recite_core::eval::{exact_match, normalize, plurality_vote, token_f1, NormSteps};
use recite_core::hint::{make_hint, parse_hint};
use recite_core::prompting::{
    build_qa_prompt, build_recitation_prompt, sample_exemplars, PromptDialect, PromptSpec,
};
use recite_core::{Exemplar, Scheme};

fn component() -> impl Strategy<Value = String> {
    // Mix of plain words, dashes, and spaces so delimiter edge cases show up.
    proptest::string::string_regex("[A-Za-z0-9 #\\-]{1,16}").unwrap()
}

proptest! {
    #[test]
    fn hint_round_trip(title in component(), path in proptest::collection::vec(component(), 0..4), idx in 1u32..10_000) {
        match make_hint(&title, &path, idx) {
            Ok(h) => {
                let p = parse_hint(&h).unwrap();
                prop_assert_eq!(p.page_title, title);
                prop_assert_eq!(p.section_path, path);
                prop_assert_eq!(p.para_index, idx);
            }
            Err(_) => {
                // rejected only for the delimiter cases
                let bad = |c: &str| c.contains(" --- ") || c.ends_with(" ---");
                prop_assert!(bad(&title) || path.iter().any(|c| bad(c)));
            }
        }
    }

    #[test]
    fn normalize_idempotent(s in "\\PC{0,40}") {
        let steps = NormSteps::default();
        let once = normalize(&s, &steps);
        prop_assert_eq!(normalize(&once, &steps), once);
    }

    #[test]
    fn f1_dominates_em(pred in "[a-c ]{0,12}", golds in proptest::collection::vec("[a-c ]{0,12}", 1..4)) {
        let steps = NormSteps::default();
        let f1 = token_f1(&pred, &golds, &steps);
        prop_assert!((0.0..=1.0).contains(&f1));
        if exact_match(&pred, &golds, &steps) {
            prop_assert_eq!(f1, 1.0);
        }
    }

    #[test]
    fn vote_dominance_and_order(answers in proptest::collection::vec("[abc]", 1..12), rot in 0usize..12) {
        let steps = NormSteps::default();
        let v = plurality_vote(&answers, &steps).unwrap();
        let best = v.winner_count();
        prop_assert!(v.groups.iter().all(|g| g.count <= best));
        let total: usize = v.groups.iter().map(|g| g.count).sum();
        prop_assert_eq!(total, answers.len());

        // a permutation can only change the winner among tied groups
        let mut rotated = answers.clone();
        rotated.rotate_left(rot % answers.len());
        let w = plurality_vote(&rotated, &steps).unwrap();
        prop_assert_eq!(w.winner_count(), best);
        prop_assert_eq!(plurality_vote(&rotated, &steps).unwrap(), w);
    }

    #[test]
    fn separator_law(n in 0usize..6, ul2 in any::<bool>()) {
        let exemplars: Vec<Exemplar> = (0..n)
            .map(|i| Exemplar::recited(format!("q{i}"), [format!("line a\nline b {i}")], format!("a{i}")))
            .collect();
        let dialect = if ul2 { PromptDialect::ul2() } else { PromptDialect::default() };
        let spec = PromptSpec::new(Scheme::ReciteAnswer, exemplars, "target").with_dialect(dialect);
        let rec = build_recitation_prompt(&spec).unwrap();
        let qa = build_qa_prompt(&spec.clone().with_target_recitations(["ctx"])).unwrap();
        for p in [&rec, &qa] {
            if ul2 {
                prop_assert!(!p.contains('\n'));
                prop_assert!(p.starts_with("[NLG]") && p.ends_with("[extra_id_0]"));
            } else {
                prop_assert_eq!(p.matches("\n\n\n").count(), n);
                prop_assert!(!p.ends_with('\n'));
            }
        }
        // purity
        prop_assert_eq!(build_recitation_prompt(&spec).unwrap(), rec);
    }

    #[test]
    fn ul2_is_rewrite_of_default(n in 1usize..4) {
        let exemplars: Vec<Exemplar> = (0..n)
            .map(|i| Exemplar::recited(format!("q{i}"), [format!("r\n{i}")], format!("a{i}")))
            .collect();
        let spec = PromptSpec::new(Scheme::ReciteAnswer, exemplars, "t");
        let plain = build_recitation_prompt(&spec).unwrap();
        let ul2 = build_recitation_prompt(&spec.clone().with_dialect(PromptDialect::ul2())).unwrap();
        prop_assert_eq!(ul2, format!("[NLG]{}[extra_id_0]", plain.replace('\n', " ; ")));
    }

    #[test]
    fn bm25_permutation_and_zero_law(
        docs in proptest::collection::vec("[a-e ]{0,20}", 1..15),
        query in "[a-f ]{1,8}",
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i:03}")).collect();
        let pairs: Vec<(String, String)> = ids.iter().cloned().zip(docs.iter().cloned()).collect();
        let mut shuffled = pairs.clone();
        let order = sample_exemplars(&(0..pairs.len()).collect::<Vec<_>>(), pairs.len(), seed).unwrap();
        for (slot, i) in order.into_iter().enumerate() {
            shuffled[slot] = pairs[i].clone();
        }
        let a = Bm25Index::build(pairs.clone(), Bm25Params::default()).unwrap();
        let b = Bm25Index::build(shuffled, Bm25Params::default()).unwrap();
        let qterms = tokenize(&query);
        for (id, text) in &pairs {
            let sa = a.score(&query, id).unwrap();
            prop_assert_eq!(sa, b.score(&query, id).unwrap());
            let dterms = tokenize(text);
            let overlap = qterms.iter().any(|t| dterms.contains(t));
            prop_assert_eq!(sa == 0.0, !overlap);
            prop_assert!(sa >= 0.0 && sa.is_finite());
        }
        prop_assert_eq!(a.top_k(&query, 5), b.top_k(&query, 5));
    }
}

#[test]
fn exemplar_sampling_is_near_uniform() {
    // 10,000 draws of 5 from 20: each item expected 2,500 times (sd ≈ 43).
    let pool: Vec<usize> = (0..20).collect();
    let mut counts = [0usize; 20];
    for seed in 0..10_000u64 {
        let s = sample_exemplars(&pool, 5, seed).unwrap();
        let mut uniq = s.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 5, "sampling must be without replacement");
        for i in s {
            counts[i] += 1;
        }
    }
    for (i, c) in counts.iter().enumerate() {
        assert!((2350..=2650).contains(c), "item {i} drawn {c} times");
    }
}

#[test]
fn exemplar_sampling_shuffles_positions() {
    // The first slot should also be uniform over the pool, not biased to low indices.
    let pool: Vec<usize> = (0..20).collect();
    let mut first = BTreeMap::new();
    for seed in 0..10_000u64 {
        *first.entry(sample_exemplars(&pool, 5, seed).unwrap()[0]).or_insert(0usize) += 1;
    }
    for c in first.values() {
        assert!((350..=650).contains(c), "{first:?}");
    }
}
