use std::collections::{BTreeMap, BTreeSet};

use disfluency::channel::{
    brute_force_nbest, nbest, train_channel, Analysis, CandidateList, ChannelError, ChannelModel, ChannelParams,
    NbestConfig, OpKind,
};
use disfluency::corpus::grammar::Grammar;
use disfluency::corpus::{grammar_channel, synthesize_corpus, FillerLexicon, Label, Utterance};
use disfluency::ngram::{train_ngram, NgramConfig, NgramModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &["a", "flight", "to", "boston", "denver", "uh", "i", "mean", "the", "go"];

fn params(p_start: f64) -> ChannelParams {
    let vocab: BTreeSet<String> = WORDS.iter().map(|s| s.to_string()).collect();
    let mut substitutions: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    substitutions.insert("denver".into(), [("boston".to_string(), 3.0)].into_iter().collect());
    substitutions.insert("<none>".into(), [("the".to_string(), 2.0), ("i".to_string(), 1.0)].into_iter().collect());
    ChannelParams {
        op_probs: [
            [0.6, 0.2, 0.15, 0.05],
            [0.5, 0.3, 0.1, 0.1],
            [0.3, 0.5, 0.1, 0.1],
            [0.25, 0.25, 0.4, 0.1],
            [0.4, 0.3, 0.1, 0.2],
        ],
        p_start,
        p_stop: 0.4,
        p_filler: 0.3,
        alpha: 0.1,
        vocab,
        substitutions,
    }
}

fn model(p_start: f64) -> ChannelModel {
    ChannelModel::from_params(params(p_start), FillerLexicon::default()).unwrap()
}

fn bigram() -> NgramModel {
    let lines = [
        "a flight to denver",
        "a flight to boston",
        "i go to denver",
        "the flight to boston",
        "go to the flight",
    ];
    let c: Vec<Vec<&str>> = lines.iter().map(|l| l.split(' ').collect()).collect();
    train_ngram(&c, NgramConfig::bigram()).unwrap()
}

fn labels(codes: &str) -> Vec<Label> {
    codes
        .chars()
        .map(|c| Label::from_code(&c.to_string()).unwrap())
        .collect()
}

fn assert_same(a: &CandidateList, b: &CandidateList) {
    assert_eq!(a.candidates.len(), b.candidates.len(), "{:?}", a.utterance.words());
    for (x, y) in a.candidates.iter().zip(&b.candidates) {
        assert_eq!(x.labels, y.labels, "{:?}", a.utterance.words());
        assert!((x.channel_logprob - y.channel_logprob).abs() < 1e-9);
        assert!((x.ncm_total_logprob - y.ncm_total_logprob).abs() < 1e-9);
    }
}

fn check_candidate(utt: &Utterance, a: &Analysis) {
    let p = a.channel_logprob.exp();
    assert!(p > 0.0 && p <= 1.0);
    let fluent: Vec<&str> = utt
        .words()
        .into_iter()
        .zip(&a.labels)
        .filter(|(_, l)| **l == Label::Fluent)
        .map(|(w, _)| w)
        .collect();
    assert_eq!(a.fluent_refs(), fluent);
    assert_eq!(a.n_edits, a.labels.iter().filter(|l| **l == Label::Edited).count());
    assert!((a.ncm_total_logprob - a.channel_logprob - a.ncm_lm_logprob).abs() < 1e-12);
}

#[test]
fn one_token_has_two_analyses() {
    let utt = Utterance::new("x", &["go"]);
    let (m, lm) = (model(0.1), bigram());
    let brute = brute_force_nbest(&utt, &m, &lm, 25).unwrap();
    assert_eq!(brute.candidates.len(), 2);
    let fast = nbest(&utt, &m, &lm, &NbestConfig::default());
    assert_same(&brute, &fast);
    let restart = brute.candidates.iter().find(|a| a.labels == [Label::Edited]).unwrap();
    assert_eq!(restart.repairs[0].alignment[0].kind, OpKind::Insert);
    assert!(restart.repairs[0].repair.is_empty());
}

#[test]
fn thirteen_tokens_is_too_long() {
    let words = ["a"; 13];
    let utt = Utterance::new("x", &words);
    assert!(matches!(
        brute_force_nbest(&utt, &model(0.1), &bigram(), 5),
        Err(ChannelError::TooLong(13))
    ));
}

#[test]
fn boston_denver_analysis_is_proposed() {
    let words = ["a", "flight", "to", "boston", "uh", "i", "mean", "to", "denver"];
    let utt = Utterance::new("ex1", &words);
    let list = nbest(&utt, &model(0.1), &bigram(), &NbestConfig::default());
    let want = labels("OOEEFFFOO");
    let hit = list.candidates.iter().find(|a| a.labels == want).expect("analysis in the 25-best");
    assert_eq!(hit.fluent, ["a", "flight", "to", "denver"]);
    let region = &hit.repairs[0];
    assert_eq!((region.interregnum.start, region.interregnum.end), (4, 7));
    let kinds: Vec<OpKind> = region.alignment.iter().map(|o| o.kind).collect();
    assert_eq!(kinds, [OpKind::Copy, OpKind::Substitute]);
    for a in &list.candidates {
        check_candidate(&utt, a);
    }
}

#[test]
fn tiny_start_probability_prefers_all_fluent() {
    let utt = Utterance::new("x", &["a", "flight", "to", "denver"]);
    let list = nbest(&utt, &model(1e-9), &bigram(), &NbestConfig::default());
    assert!(list.top().unwrap().is_all_fluent());
}

#[test]
fn all_fluent_is_always_present() {
    let m = model(0.9);
    let lm = bigram();
    let utt = Utterance::new("x", &["to", "to", "to", "boston", "boston", "uh", "to", "to"]);
    for n in [1, 2, 5] {
        let list = nbest(&utt, &m, &lm, &NbestConfig { n, ..Default::default() });
        assert_eq!(list.candidates.len(), n);
        assert!(list.candidates.iter().any(Analysis::is_all_fluent));
    }
}

#[test]
fn brute_force_is_a_sub_distribution() {
    let m = model(0.1);
    let lm = bigram();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for len in 1..=8 {
        let words = random_words(&mut rng, len);
        let utt = Utterance::new("x", &words);
        let all = brute_force_nbest(&utt, &m, &lm, 1 << len).unwrap();
        let mass: f64 = all.candidates.iter().map(|a| a.channel_logprob.exp()).sum();
        assert!(mass <= 1.0 + 1e-12, "{words:?}: {mass}");
    }
}

fn random_words(rng: &mut ChaCha8Rng, len: usize) -> Vec<&'static str> {
    use rand::seq::SliceRandom;
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn nbest_matches_brute_force(words in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..=10),
                                 n in 1usize..40, p_start in 0.02f64..0.6) {
        let m = model(p_start);
        let lm = bigram();
        let utt = Utterance::new("p", &words);
        let brute = brute_force_nbest(&utt, &m, &lm, n).unwrap();
        let fast = nbest(&utt, &m, &lm, &NbestConfig::exhaustive(n));
        assert_same(&brute, &fast);
    }

    #[test]
    fn larger_n_keeps_earlier_candidates(words in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..=12),
                                         n in 1usize..20) {
        let m = model(0.2);
        let lm = bigram();
        let utt = Utterance::new("p", &words);
        let small = nbest(&utt, &m, &lm, &NbestConfig { n, ..Default::default() });
        let large = nbest(&utt, &m, &lm, &NbestConfig { n: n + 7, ..Default::default() });
        for a in &small.candidates {
            prop_assert!(large.candidates.iter().any(|b| b.labels == a.labels));
        }
        for a in &large.candidates {
            check_candidate(&utt, a);
        }
    }
}

#[test]
fn training_recovers_known_op_distribution() {
    let truth = grammar_channel();
    let g = Grammar::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fluent: Vec<Utterance> = (0..9000)
        .map(|i| Utterance::new(format!("s{i}"), &g.sentence(&mut rng)))
        .collect();
    let noisy = synthesize_corpus(&fluent, &truth, 1.0, 6);
    let repairs: usize = noisy
        .iter()
        .map(|u| disfluency::channel::region_frames(u.gold.as_ref().unwrap()).len())
        .sum();
    assert!(repairs >= 10_000, "{repairs}");
    let learned = train_channel(&noisy, truth.lexicon(), 0.1).unwrap();
    // Rows after INSERT and DELETE see a few hundred events at this size, and
    // unit-cost alignment reads some INSERT/DELETE pairs as SUBSTITUTE.
    let rows = [
        (None, 0.05),
        (Some(OpKind::Copy), 0.05),
        (Some(OpKind::Substitute), 0.05),
        (Some(OpKind::Insert), 0.1),
        (Some(OpKind::Delete), 0.1),
    ];
    for (prev, tol) in rows {
        for kind in OpKind::ALL {
            let (t, l) = (truth.op_prob(prev, kind), learned.op_prob(prev, kind));
            assert!((t - l).abs() < tol, "p({kind:?}|{prev:?}): truth {t}, learned {l}");
        }
    }
}
