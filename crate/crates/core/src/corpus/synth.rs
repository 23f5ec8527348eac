use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grammar::Grammar;
use super::{FillerLexicon, Label, Token, Utterance};
use crate::channel::{region_frames, ChannelModel, ChannelParams, OpKind};

/// Probability of one more region once an utterance has been made disfluent.
const EXTRA_REGION: f64 = 0.2;
const MAX_REGIONS: usize = 3;
const MAX_TRIES: usize = 50;

/// Counts over a labeled corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    pub utterances: usize,
    pub disfluent: usize,
    pub regions: usize,
    pub edited: usize,
    pub filler: usize,
}

impl SynthStats {
    pub fn of(utts: &[Utterance]) -> SynthStats {
        let mut s = SynthStats {
            utterances: utts.len(),
            ..Default::default()
        };
        for gold in utts.iter().filter_map(|u| u.gold.as_ref()) {
            let regions = region_frames(gold).len();
            s.regions += regions;
            s.disfluent += usize::from(regions > 0);
            s.edited += gold.iter().filter(|l| **l == Label::Edited).count();
            s.filler += gold.iter().filter(|l| **l == Label::Filler).count();
        }
        s
    }
}

/// Adds disfluencies to fluent utterances by running the channel's generative
/// story forward: a fraction `rate` of utterances gets a repair region (and
/// then possibly more), each with an alignment chain sampled from the model,
/// a reparandum built from that chain and an interregnum of filler phrases.
///
/// Tokens from the filler lexicon already present in the input are labeled
/// FILLER; everything else starts out FLUENT.
pub fn synthesize_corpus(fluent: &[Utterance], channel: &ChannelModel, rate: f64, seed: u64) -> Vec<Utterance> {
    let rate = rate.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = channel.lexicon();
    fluent
        .iter()
        .map(|utt| {
            let mut words: Vec<String> = utt.words().iter().map(|w| w.to_string()).collect();
            let mut labels: Vec<Label> = lexicon
                .mark(&words)
                .into_iter()
                .map(|f| if f { Label::Filler } else { Label::Fluent })
                .collect();
            if rng.gen_bool(rate) {
                let mut roles = vec![Role::Free; words.len()];
                let mut regions = 0;
                loop {
                    if inject(&mut words, &mut labels, &mut roles, channel, &mut rng) {
                        regions += 1;
                    }
                    if regions >= MAX_REGIONS || !rng.gen_bool(EXTRA_REGION) {
                        break;
                    }
                }
            }
            Utterance {
                id: utt.id.clone(),
                tokens: words.into_iter().map(Token::new).collect(),
                gold: Some(labels),
            }
        })
        .collect()
}

/// What a token already belongs to, so later regions leave earlier ones intact.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Free,
    Reparandum,
    Interregnum,
    Repair,
}

/// Inserts one repair region; returns false when no placement was found.
fn inject<R: Rng>(
    words: &mut Vec<String>,
    labels: &mut Vec<Label>,
    roles: &mut Vec<Role>,
    channel: &ChannelModel,
    rng: &mut R,
) -> bool {
    let n = words.len();
    // FLUENT run length starting at each position
    let mut run = vec![0usize; n + 1];
    for p in (0..n).rev() {
        run[p] = if labels[p] == Label::Fluent { run[p + 1] + 1 } else { 0 };
    }
    let starts: Vec<usize> = (0..n)
        .filter(|&j| {
            labels[j] == Label::Fluent
                && roles[j] == Role::Free
                && (j == 0 || !matches!(roles[j - 1], Role::Reparandum | Role::Interregnum))
        })
        .collect();
    if starts.is_empty() {
        return false;
    }
    let p_stop = channel.params().p_stop;
    for _ in 0..MAX_TRIES {
        let mut kinds = vec![channel.sample_op(None, rng)];
        while !rng.gen_bool(p_stop) {
            kinds.push(channel.sample_op(kinds.last().copied(), rng));
        }
        let needed = kinds.iter().filter(|k| k.takes_repair()).count();
        let fits: Vec<usize> = starts.iter().copied().filter(|&j| run[j] >= needed).collect();
        if fits.is_empty() || !kinds.iter().any(|k| k.takes_reparandum()) {
            continue;
        }
        let j = *fits.choose(rng).expect("non-empty");
        let mut reparandum = Vec::new();
        let mut m = j;
        let mut ok = true;
        for kind in &kinds {
            match kind {
                OpKind::Copy => reparandum.push(words[m].clone()),
                OpKind::Substitute => match channel.sample_word(Some(&words[m]), rng) {
                    Some(w) => reparandum.push(w),
                    None => ok = false,
                },
                OpKind::Insert => match channel.sample_word(None, rng) {
                    Some(w) => reparandum.push(w),
                    None => ok = false,
                },
                OpKind::Delete => {}
            }
            if kind.takes_repair() {
                m += 1;
            }
        }
        if !ok {
            continue;
        }
        let mut interregnum: Vec<String> = Vec::new();
        let phrases = channel.lexicon().phrases();
        while !phrases.is_empty() && rng.gen_bool(channel.params().p_filler) {
            interregnum.extend(phrases.choose(rng).expect("non-empty").iter().cloned());
        }
        roles[j..j + needed].iter_mut().for_each(|r| *r = Role::Repair);
        let inserted: Vec<(String, Label, Role)> = reparandum
            .into_iter()
            .map(|w| (w, Label::Edited, Role::Reparandum))
            .chain(interregnum.into_iter().map(|w| (w, Label::Filler, Role::Interregnum)))
            .collect();
        words.splice(j..j, inserted.iter().map(|t| t.0.clone()));
        labels.splice(j..j, inserted.iter().map(|t| t.1));
        roles.splice(j..j, inserted.iter().map(|t| t.2));
        return true;
    }
    false
}

/// Channel with fixed, known parameters over the [`Grammar`] vocabulary.
/// Substitutions stay within a grammatical class; inserted words are uniform.
pub fn grammar_channel() -> ChannelModel {
    let mut substitutions: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for class in Grammar::classes() {
        for m in &class {
            let row = substitutions.entry(m.clone()).or_default();
            for w in class.iter().filter(|w| *w != m) {
                *row.entry(w.clone()).or_default() += 2.0;
            }
        }
    }
    let params = ChannelParams {
        op_probs: [
            [0.63, 0.3, 0.05, 0.02],
            [0.7, 0.26, 0.02, 0.02],
            [0.55, 0.41, 0.02, 0.02],
            [0.85, 0.1, 0.03, 0.02],
            [0.85, 0.1, 0.03, 0.02],
        ],
        p_start: 0.02,
        p_stop: 0.5,
        p_filler: 0.35,
        alpha: 0.1,
        vocab: Grammar::vocab(),
        substitutions,
    };
    ChannelModel::from_params(params, FillerLexicon::default()).expect("reference parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fluent(n: usize, seed: u64) -> Vec<Utterance> {
        let g = Grammar::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Utterance::new(format!("s{i}"), &g.sentence(&mut rng)))
            .collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let src = fluent(50, 1);
        let out = synthesize_corpus(&src, &grammar_channel(), 0.0, 7);
        for (a, b) in src.iter().zip(&out) {
            assert_eq!(a.words(), b.words());
            assert!(b.gold.as_ref().unwrap().iter().all(|l| *l == Label::Fluent));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let src = fluent(200, 2);
        let ch = grammar_channel();
        assert_eq!(synthesize_corpus(&src, &ch, 0.3, 5), synthesize_corpus(&src, &ch, 0.3, 5));
        assert_ne!(synthesize_corpus(&src, &ch, 0.3, 5), synthesize_corpus(&src, &ch, 0.3, 6));
    }

    #[test]
    fn removing_marked_tokens_recovers_source() {
        let src = fluent(300, 3);
        let out = synthesize_corpus(&src, &grammar_channel(), 0.5, 11);
        for (a, b) in src.iter().zip(&out) {
            assert_eq!(a.words(), b.fluent_words());
        }
        let stats = SynthStats::of(&out);
        assert!(stats.disfluent > 100 && stats.disfluent < 200, "{stats:?}");
        assert!(stats.regions >= stats.disfluent);
    }

    #[test]
    fn gold_regions_are_well_formed() {
        let src = fluent(300, 4);
        let ch = grammar_channel();
        for u in synthesize_corpus(&src, &ch, 1.0, 12) {
            let gold = u.gold.as_ref().unwrap();
            let mask = ch.lexicon().mark(&u.words());
            for (l, f) in gold.iter().zip(&mask) {
                assert_eq!(*l == Label::Filler, *f, "{:?}", u.words());
            }
        }
    }
}
