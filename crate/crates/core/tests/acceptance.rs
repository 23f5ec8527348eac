//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use disfluency::channel::{brute_force_nbest, nbest, CandidateList, NbestConfig};
use disfluency::corpus::grammar::Grammar;
use disfluency::corpus::{grammar_channel, synthesize_corpus, Label, Utterance};
use disfluency::eval::score;
use disfluency::features::{FeatureVector, LmSelection};
use disfluency::lm::{Direction, BOS};
use disfluency::lstm::{check_gradients, LstmConfig, LstmModel, Vocab};
use disfluency::ngram::{train_ngram, NgramConfig};
use disfluency::pipeline::{
    ablation_matrix, prepare, run_pipeline, Condition, DataSource, LstmPreset, LstmSettings, PipelineConfig,
    RerankerSettings, Split,
};
use disfluency::reranker::{prepare as prepare_objective, train_reranker, TrainingInstance};

const NBEST_TOL: f64 = 1e-9;
const NBEST_LIMIT: Duration = Duration::from_secs(120);
const GRAD_TOL: f64 = 1e-4;
const GRAD_LIMIT: Duration = Duration::from_secs(300);
const KN_SUM_TOL: f64 = 1e-6;
const KN_HAND_TOL: f64 = 1e-9;
const RERANK_GRAD_TOL: f64 = 1e-5;
const E2E_MARGIN: f64 = 0.02;
const E2E_LIMIT: Duration = Duration::from_secs(30 * 60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("n-best search equals brute force", nbest_oracle),
        ("LSTM gradient check", lstm_gradients),
        ("Kneser-Ney normalization and hand values", kneser_ney),
        ("reranker gradient and separable toy set", reranker),
        ("end-to-end ordering on synthetic data", end_to_end),
        ("metric unit suite", metrics),
        ("determinism", determinism),
        ("fold discipline at k=20", fold_discipline),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {tag}  {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn same_lists(a: &CandidateList, b: &CandidateList) -> Option<f64> {
    if a.candidates.len() != b.candidates.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.candidates.iter().zip(&b.candidates) {
        if x.labels != y.labels {
            return None;
        }
        worst = worst
            .max((x.channel_logprob - y.channel_logprob).abs())
            .max((x.ncm_total_logprob - y.ncm_total_logprob).abs());
    }
    Some(worst)
}

fn nbest_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let g = Grammar::default();
    let sentences: Vec<Vec<String>> = (0..2000).map(|_| g.sentence(&mut rng)).collect();
    let bigram = train_ngram(&sentences, NgramConfig::bigram()).unwrap();
    let channel = grammar_channel();
    let short: Vec<Utterance> = sentences
        .iter()
        .filter(|s| s.len() <= 8)
        .take(400)
        .enumerate()
        .map(|(i, s)| Utterance::new(format!("g{i}"), s))
        .collect();
    let mut utts: Vec<Utterance> = synthesize_corpus(&short, &channel, 0.5, 5)
        .into_iter()
        .filter(|u| u.len() <= 10)
        .take(400)
        .collect();
    let vocab: Vec<String> = Grammar::vocab().into_iter().chain(["uh".into(), "i".into(), "mean".into()]).collect();
    while utts.len() < 500 {
        let len = rng.gen_range(1..=10);
        let words: Vec<&String> = (0..len).map(|_| vocab.choose(&mut rng).unwrap()).collect();
        utts.push(Utterance::new(format!("r{}", utts.len()), &words));
    }
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    let mut longest = 0;
    for (i, u) in utts.iter().enumerate() {
        let n = 10 + i % 30;
        let brute = brute_force_nbest(u, &channel, &bigram, n).unwrap();
        let fast = nbest(u, &channel, &bigram, &NbestConfig::exhaustive(n));
        longest = longest.max(u.len());
        match same_lists(&brute, &fast) {
            Some(d) => worst = worst.max(d),
            None => mismatches += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && worst <= NBEST_TOL && elapsed < NBEST_LIMIT,
        format!(
            "{} utterances (longest {longest}), {mismatches} candidate-set mismatches, max score gap {worst:.1e} (tol {NBEST_TOL:.0e}), {:.1}s of {}s",
            utts.len(),
            elapsed.as_secs_f64(),
            NBEST_LIMIT.as_secs()
        ),
    )
}

fn lstm_gradients() -> Outcome {
    let start = Instant::now();
    const W: &[&str] = &["a", "b", "c", "d", "e", "f"];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut max_hidden = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let sents: Vec<Vec<&str>> = (0..3)
            .map(|_| (0..rng.gen_range(1..7)).map(|_| W[rng.gen_range(0..W.len())]).collect())
            .collect();
        let hidden = 2 + (seed as usize * 14) / 19;
        max_hidden = max_hidden.max(hidden);
        let cfg = LstmConfig {
            hidden,
            embed: 2 + seed as usize % 5,
            layers: 1 + seed as usize % 2,
            init_scale: 0.5,
            seed,
            direction: if seed % 2 == 0 { Direction::Forward } else { Direction::Backward },
            ..Default::default()
        };
        let vocab_src: Vec<Vec<&str>> = vec![W.to_vec()];
        let m = LstmModel::init(cfg, Vocab::build(&vocab_src)).unwrap();
        let report = check_gradients(&m, &sents);
        worst = worst.max(report.max_rel_error());
        checked += report.checked;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRAD_TOL && elapsed < GRAD_LIMIT,
        format!(
            "20 models (hidden 2..={max_hidden}), {checked} parameters, max relative error {worst:.2e} (tol {GRAD_TOL:.0e}), {:.1}s of {}s",
            elapsed.as_secs_f64(),
            GRAD_LIMIT.as_secs()
        ),
    )
}

fn kneser_ney() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let g = Grammar::default();
    let sentences: Vec<Vec<String>> = (0..1500).map(|_| g.sentence(&mut rng)).collect();
    let vocab: Vec<String> = Grammar::vocab().into_iter().chain([BOS.to_string(), "zzz".into()]).collect();
    let mut worst_sum: f64 = 0.0;
    for cfg in [NgramConfig::bigram(), NgramConfig::fourgram(Direction::Forward)] {
        let m = train_ngram(&sentences, cfg).unwrap();
        let outcomes: Vec<String> = m.outcomes().map(String::from).collect();
        for _ in 0..100 {
            let len = rng.gen_range(0..m.order());
            let ctx: Vec<&str> = (0..len).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
            let total: f64 = outcomes.iter().map(|w| m.prob(&ctx, w)).sum();
            worst_sum = worst_sum.max((total - 1.0).abs());
        }
    }

    // Exact rationals from the hand calculation of interpolated modified KN.
    let corpus = |lines: &[&str]| -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split(' ').map(String::from).collect()).collect()
    };
    let exact = |n| NgramConfig {
        order: n,
        min_count: 1,
        direction: Direction::Forward,
    };
    let bi = train_ngram(&corpus(&["a b", "b a b", "a c"]), exact(2)).unwrap();
    let four = train_ngram(
        &corpus(&["the dog runs", "the dog sleeps", "a dog runs fast", "the cat runs", "a cat sleeps"]),
        exact(4),
    )
    .unwrap();
    let hand: [(&disfluency::ngram::NgramModel, &[&str], &str, f64); 7] = [
        (&bi, &["<s>"], "a", 2236.0 / 3675.0),
        (&bi, &["c"], "a", 138.0 / 1225.0),
        (&bi, &["a"], "<unk>", 16.0 / 3675.0),
        (&four, &["<s>", "the", "dog"], "runs", 9289.0 / 17952.0),
        (&four, &["a", "dog", "runs"], "fast", 10961.0 / 17952.0),
        (&four, &["cat", "runs"], "</s>", 695.0 / 1122.0),
        (&four, &["dog"], "sleeps", 811.0 / 3927.0),
    ];
    let worst_hand = hand
        .iter()
        .map(|(m, ctx, w, p)| (m.prob(ctx, w) - p).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_sum <= KN_SUM_TOL && worst_hand <= KN_HAND_TOL,
        format!(
            "200 contexts, max |sum - 1| {worst_sum:.1e} (tol {KN_SUM_TOL:.0e}); {} hand values, max gap {worst_hand:.1e} (tol {KN_HAND_TOL:.0e})",
            hand.len()
        ),
    )
}

fn random_instances(rng: &mut ChaCha8Rng, n: usize) -> Vec<TrainingInstance> {
    const NAMES: &[&str] = &["s1", "s2", "s3", "CopyFlags_1_0", "WordsFlags_0_1_0"];
    let random_labels = |rng: &mut ChaCha8Rng, len: usize| -> Vec<Label> {
        (0..len)
            .map(|_| if rng.gen_bool(0.3) { Label::Edited } else { Label::Fluent })
            .collect()
    };
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..8);
            let gold = random_labels(rng, len);
            let k = rng.gen_range(1..6);
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..k {
                let mut fv = FeatureVector::new();
                for name in NAMES {
                    if name.contains("Flags") {
                        if rng.gen_bool(0.5) {
                            fv.insert(name.to_string(), 1.0);
                        }
                    } else {
                        fv.insert(name.to_string(), rng.gen_range(-20.0..5.0));
                    }
                }
                feats.push(fv);
                labels.push(random_labels(rng, len));
            }
            TrainingInstance::new(feats, &labels, &gold)
        })
        .collect()
}

fn separable(n: usize) -> Vec<TrainingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gold = vec![Label::Fluent, Label::Edited, Label::Fluent, Label::Fluent];
    (0..n)
        .map(|i| {
            let k = 2 + i % 4;
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for c in 0..k {
                let mut fv = FeatureVector::new();
                fv.insert("noise".into(), rng.gen_range(-3.0..3.0));
                if c == i % k {
                    fv.insert("Oracle_flag".into(), 1.0);
                    labels.push(gold.clone());
                } else {
                    let mut l = vec![Label::Fluent; 4];
                    l[(c + 2) % 4] = Label::Edited;
                    labels.push(l);
                }
                feats.push(fv);
            }
            TrainingInstance::new(feats, &labels, &gold)
        })
        .collect()
}

fn reranker() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let insts = random_instances(&mut rng, 12);
        let (_, obj) = prepare_objective(&insts, 1e-2).unwrap();
        let w: Vec<f64> = (0..obj.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = obj.gradient(&w);
        let h = 1e-5;
        for k in 0..obj.dim {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[k] += h;
            down[k] -= h;
            let numeric = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            worst = worst.max((g[k] - numeric).abs() / g[k].abs().max(numeric.abs()).max(1e-6));
        }
    }
    let toy = separable(40);
    let m = train_reranker(&toy, 1e-4, 200).unwrap();
    let solved = toy
        .iter()
        .enumerate()
        .filter(|(i, inst)| m.choose(&inst.features).unwrap() == i % inst.features.len())
        .count();
    outcome(
        worst < RERANK_GRAD_TOL && solved == toy.len(),
        format!(
            "20 sets, max relative gradient error {worst:.1e} (tol {RERANK_GRAD_TOL:.0e}); separable toy {solved}/{} oracle picks",
            toy.len()
        ),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig {
        k_folds: 5,
        lstm: LstmSettings {
            preset: LstmPreset::Desk,
            ..Default::default()
        },
        ..Default::default()
    };
    let conds = [Condition::ncm_alone(), Condition::baseline(), Condition::both()];
    let out = match ablation_matrix(&cfg, &conds) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let elapsed = start.elapsed();
    let [ncm, base, lstm] = [0, 1, 2].map(|i| &out.results[i].test);
    let f_order = ncm.f_score < base.f_score && base.f_score <= lstm.f_score;
    let margin = lstm.f_score - ncm.f_score;
    let err_order = ncm.error_rate > base.error_rate && base.error_rate >= lstm.error_rate;
    outcome(
        f_order && margin >= E2E_MARGIN && err_order && elapsed < E2E_LIMIT,
        format!(
            "test F ncm {:.2} / baseline {:.2} / +lstm {:.2} (margin {:.2}, need {:.0}); error {:.2} / {:.2} / {:.2}; {:.0}s of {}s",
            100.0 * ncm.f_score,
            100.0 * base.f_score,
            100.0 * lstm.f_score,
            100.0 * margin,
            100.0 * E2E_MARGIN,
            100.0 * ncm.error_rate,
            100.0 * base.error_rate,
            100.0 * lstm.error_rate,
            elapsed.as_secs_f64(),
            E2E_LIMIT.as_secs()
        ),
    )
}

fn metrics() -> Outcome {
    use Label::{Edited as E, Filler as F, Fluent as O};
    let one = |p: Vec<Label>, g: Vec<Label>| score(&["u".to_string()], &[p], &[g]).unwrap();
    let mut failures = Vec::new();
    let r = one(vec![O, O, E, E, O], vec![O, E, E, O, O]);
    if (r.precision, r.recall, r.f_score, r.error_rate) != (0.5, 0.5, 0.5, 1.0) {
        failures.push("overlapping spans");
    }
    let r = one(vec![E, F, E, O], vec![E, F, E, O]);
    if (r.f_score, r.error_rate) != (1.0, 0.0) {
        failures.push("perfect prediction");
    }
    let r = one(vec![O, F, O], vec![O, F, O]);
    if (r.f_score, r.error_rate) != (0.0, 0.0) {
        failures.push("empty gold");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let labels = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<Label>> {
        (0..n)
            .map(|_| (0..rng.gen_range(1..10)).map(|_| [O, E, F][rng.gen_range(0..3)]).collect())
            .collect()
    };
    for _ in 0..50 {
        let (na, nb) = (rng.gen_range(1..20), rng.gen_range(1..20));
        let (ga, gb) = (labels(&mut rng, na), labels(&mut rng, nb));
        let pa: Vec<Vec<Label>> = ga.iter().map(|g| g.iter().map(|_| [O, E][rng.gen_range(0..2)]).collect()).collect();
        let pb: Vec<Vec<Label>> = gb.iter().map(|g| g.iter().map(|_| [O, E][rng.gen_range(0..2)]).collect()).collect();
        let ids = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let a = score(&ids(na, "a"), &pa, &ga).unwrap();
        let b = score(&ids(nb, "b"), &pb, &gb).unwrap();
        let joined_ids = [ids(na, "a"), ids(nb, "b")].concat();
        let whole = score(&joined_ids, &[pa, pb].concat(), &[ga, gb].concat()).unwrap();
        let (tp, fp, fn_) = (
            a.true_positives + b.true_positives,
            a.false_positives + b.false_positives,
            a.false_negatives + b.false_negatives,
        );
        let pooled = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        if (whole.f_score - pooled).abs() > 1e-12 || a.concat(&b).f_score != whole.f_score {
            failures.push("pooled concatenation");
            break;
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "3 worked examples exact; 50 random corpus pairs pool".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn small_config(utterances: usize, k: usize) -> PipelineConfig {
    PipelineConfig {
        data: DataSource::Synthetic {
            utterances,
            rate: 0.15,
            seed: 7,
            dev_fraction: 0.1,
            test_fraction: 0.1,
        },
        n_best: 10,
        k_folds: k,
        lstm: LstmSettings {
            preset: LstmPreset::Tiny,
            ..Default::default()
        },
        reranker: RerankerSettings {
            iterations: 60,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut snaps = Vec::new();
    for d in &dirs {
        let cfg = PipelineConfig {
            out_dir: Some(d.path().to_path_buf()),
            ..small_config(400, 4)
        };
        if let Err(e) = run_pipeline(&cfg) {
            return outcome(false, format!("pipeline failed: {e}"));
        }
        snaps.push(snapshot(d.path()));
    }
    let names: Vec<&str> = snaps[0].iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = snaps[0]
        .iter()
        .zip(&snaps[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let models = names.iter().filter(|n| n.ends_with(".dfls") || n.ends_with(".dfrr") || n.ends_with(".dfng")).count();
    let has_report = names.contains(&"report.json");
    outcome(
        snaps[0].len() == snaps[1].len() && differing.is_empty() && has_report && models >= 3,
        format!(
            "{} files compared ({models} model files, report.json {}); {} differ",
            names.len(),
            if has_report { "present" } else { "missing" },
            differing.len()
        ),
    )
}

fn fold_discipline() -> Outcome {
    let cfg = small_config(600, 20);
    let both = LmSelection {
        fwd_lstm: true,
        bwd_lstm: true,
        fwd_4g: true,
        bwd_4g: true,
    };
    let prep = match prepare(&cfg, &both) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let split = &prep.corpora.split;
    let summary = match prep.provenance.audit(split) {
        Ok(s) => s,
        Err(v) => return outcome(false, format!("audit failed: {v}")),
    };
    let lstm_fold_models = prep
        .provenance
        .models
        .iter()
        .filter(|m| m.lm.starts_with("lstm") && m.held_out_fold.is_some())
        .count();
    // A single redirected score must be caught.
    let mut tampered = prep.provenance.clone();
    let i = tampered.scores.iter().position(|s| s.split == Split::Train).unwrap();
    tampered.scores[i].model = format!("{}/all", tampered.scores[i].lm);
    let caught = tampered.audit(split).is_err();
    outcome(
        split.k() == 20 && lstm_fold_models == 40 && summary.train_scores == 4 * split.train.len() && caught,
        format!(
            "k={}, {lstm_fold_models} LSTM fold models, {} training scores and {} held-out scores audited, tampered record {}",
            split.k(),
            summary.train_scores,
            summary.held_out_scores,
            if caught { "caught" } else { "missed" }
        ),
    )
}
