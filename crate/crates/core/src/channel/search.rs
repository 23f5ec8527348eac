use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::align::ChainGrid;
use super::{
    all_fluent_labels, finalize_candidates, region_frames, Analysis, CandidateList, ChannelModel,
    RepairRegion, Span,
};
use crate::corpus::{Label, Utterance};
use crate::lm::BigramLm;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbestConfig {
    pub n: usize,
    /// Maximum number of DP states kept per position.
    pub beam: usize,
    /// Maximum number of repair regions per analysis; `None` is unbounded.
    pub max_regions: Option<usize>,
}

impl Default for NbestConfig {
    fn default() -> Self {
        NbestConfig {
            n: 25,
            beam: 100,
            max_regions: Some(3),
        }
    }
}

impl NbestConfig {
    /// Settings under which the search is exact for short utterances.
    pub fn exhaustive(n: usize) -> Self {
        NbestConfig {
            n,
            beam: usize::MAX,
            max_regions: None,
        }
    }
}

/// Builds the analysis a labeling implies: regions from the maximal runs,
/// each aligned by [`best_alignment`](super::best_alignment), then scored.
pub fn analysis_from_labels<L: BigramLm>(
    utt: &Utterance,
    model: &ChannelModel,
    lm: &L,
    labels: Vec<Label>,
) -> Result<Analysis, super::ChannelError> {
    let words = utt.words();
    if labels.len() != words.len() {
        return Err(super::ChannelError::MalformedSpan(format!(
            "{} labels for {} tokens",
            labels.len(),
            words.len()
        )));
    }
    let repairs = region_frames(&labels)
        .into_iter()
        .map(|f| {
            let rep = &words[f.start..f.reparandum_end];
            let avail = &words[f.repair_start..f.avail_end];
            let (_, ops) = super::best_alignment(model, rep, avail);
            let used = ops.iter().filter(|o| o.kind.takes_repair()).count();
            RepairRegion {
                reparandum: Span::new(f.start, f.reparandum_end),
                interregnum: Span::new(f.reparandum_end, f.repair_start),
                repair: Span::new(f.repair_start, f.repair_start + used),
                alignment: ops,
            }
        })
        .collect();
    finish_analysis(utt, model, lm, labels, repairs)
}

/// Fills in the fluent string and all scores of an aligned analysis.
pub(crate) fn finish_analysis<L: BigramLm>(
    utt: &Utterance,
    model: &ChannelModel,
    lm: &L,
    labels: Vec<Label>,
    repairs: Vec<RepairRegion>,
) -> Result<Analysis, super::ChannelError> {
    let words = utt.words();
    let fluent: Vec<String> = words
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Label::Fluent)
        .map(|(w, _)| w.to_string())
        .collect();
    let n_edits = labels.iter().filter(|l| **l == Label::Edited).count();
    let mut analysis = Analysis {
        utterance_id: utt.id.clone(),
        labels,
        fluent,
        repairs,
        channel_logprob: 0.0,
        ncm_lm_logprob: 0.0,
        ncm_total_logprob: 0.0,
        n_edits,
    };
    analysis.channel_logprob = model.score(&words, &analysis)?;
    analysis.ncm_lm_logprob = lm.sentence_logprob(&analysis.fluent_refs());
    analysis.ncm_total_logprob = analysis.channel_logprob + analysis.ncm_lm_logprob;
    Ok(analysis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    must_edit: bool,
    last: u32,
    regions: u8,
}

#[derive(Clone, Debug)]
struct Hyp {
    score: f64,
    labels: Vec<Label>,
}

fn push_hyp(list: &mut Vec<Hyp>, hyp: Hyp, keep: usize) {
    let pos = list
        .binary_search_by(|h| {
            hyp.score
                .total_cmp(&h.score)
                .then_with(|| h.labels.cmp(&hyp.labels))
        })
        .unwrap_or_else(|p| p);
    if pos < keep {
        list.insert(pos, hyp);
        list.truncate(keep);
    }
}

const BOS_ID: u32 = u32::MAX;

/// n-best analyses by dynamic programming over positions, with states keyed
/// by (pending EDITED token, last fluent word, regions used).
///
/// Every labeling corresponds to exactly one path: a FLUENT run either ends
/// at a filler or right before a reparandum, and a region transition covers
/// its reparandum, its interregnum and the whole FLUENT run it aligns against.
/// Each state keeps its top `2n` partial hypotheses; survivors are rescored
/// through [`ChannelModel::score`] before the final ranking.
pub fn nbest<L: BigramLm>(
    utt: &Utterance,
    model: &ChannelModel,
    lm: &L,
    config: &NbestConfig,
) -> CandidateList {
    let n_best = config.n.max(1);
    let keep = 2 * n_best;
    let words = utt.words();
    let n = words.len();
    let mask = model.lexicon().mark(&words);

    let mut ids: HashMap<&str, u32> = HashMap::new();
    let wid: Vec<u32> = words
        .iter()
        .map(|w| {
            let next = ids.len() as u32;
            *ids.entry(w).or_insert(next)
        })
        .collect();
    let mut distinct: Vec<&str> = vec![""; ids.len()];
    for (w, &i) in &ids {
        distinct[i as usize] = w;
    }
    // lm_step[prev][t]: transition into token t (t == n is end of sentence)
    let mut lm_cache: HashMap<(u32, usize), f64> = HashMap::new();
    let mut lm_step = |prev: u32, t: usize| -> f64 {
        *lm_cache.entry((prev, t)).or_insert_with(|| {
            let p = (prev != BOS_ID).then(|| distinct[prev as usize]);
            let next = (t < n).then(|| words[t]);
            lm.transition_logprob(p, next)
        })
    };

    let mut run_end = vec![n; n + 1];
    let mut filler_end = vec![n; n + 1];
    for p in (0..n).rev() {
        run_end[p] = if mask[p] { p } else { run_end[p + 1] };
        filler_end[p] = if mask[p] { filler_end[p + 1] } else { p };
    }

    let logs = model.chain_logs();
    let sub: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| model.substitution_logprob(words[i], Some(words[j]))).collect())
        .collect();
    let ins: Vec<f64> = (0..n).map(|i| model.substitution_logprob(words[i], None)).collect();
    let no_start = model.log_no_start();

    let mut states: Vec<BTreeMap<Key, Vec<Hyp>>> = vec![BTreeMap::new(); n + 1];
    states[0].insert(
        Key {
            must_edit: false,
            last: BOS_ID,
            regions: 0,
        },
        vec![Hyp {
            score: 0.0,
            labels: Vec::new(),
        }],
    );

    for p in 0..n {
        let mut here: Vec<(Key, Vec<Hyp>)> = std::mem::take(&mut states[p]).into_iter().collect();
        if here.len() > config.beam {
            here.sort_by(|a, b| b.1[0].score.total_cmp(&a.1[0].score).then_with(|| a.0.cmp(&b.0)));
            here.truncate(config.beam);
        }
        for (key, hyps) in here {
            let mut emit = |target: usize, next: Key, delta: f64, suffix: &[(Label, usize)]| {
                let list = states[target].entry(next).or_default();
                for h in &hyps {
                    let mut labels = Vec::with_capacity(target);
                    labels.extend_from_slice(&h.labels);
                    for &(label, count) in suffix {
                        labels.extend(std::iter::repeat(label).take(count));
                    }
                    push_hyp(list, Hyp { score: h.score + delta, labels }, keep);
                }
            };

            if mask[p] {
                let q = filler_end[p];
                emit(q, Key { must_edit: false, ..key }, 0.0, &[(Label::Filler, q - p)]);
                continue;
            }
            let m = run_end[p];

            if !key.must_edit {
                let mut delta = 0.0;
                let mut last = key.last;
                for e in p + 1..=m {
                    delta += no_start + lm_step(last, e - 1);
                    last = wid[e - 1];
                    let next = Key {
                        must_edit: e < m,
                        last,
                        regions: key.regions,
                    };
                    emit(e, next, delta, &[(Label::Fluent, e - p)]);
                }
            }

            let capped = config.max_regions.is_some();
            if config.max_regions.is_some_and(|cap| key.regions as usize >= cap) {
                continue;
            }
            for b in p + 1..=m {
                let (c, interregnum) = if b < m || b == n {
                    (b, 0)
                } else {
                    (filler_end[b], filler_end[b] - b)
                };
                let avail_end = if c < n { run_end[c] } else { n };
                let grid = ChainGrid::fill(
                    &logs,
                    b - p,
                    avail_end - c,
                    |i, j| wid[p + i] == wid[c + j],
                    |i, j| sub[p + i][c + j],
                    |i| ins[p + i],
                );
                let chain = grid.best_within(logs.stop);
                let head = model.log_start() + interregnum as f64 * model.log_filler();
                let first_e = if b < m { c + 1 } else { c };
                let mut fluent = 0.0;
                let mut last = key.last;
                for e in c..=avail_end {
                    if e > c {
                        fluent += no_start + lm_step(last, e - 1);
                        last = wid[e - 1];
                    }
                    if e < first_e {
                        continue;
                    }
                    let next = Key {
                        must_edit: e < avail_end,
                        last,
                        regions: if capped { key.regions + 1 } else { 0 },
                    };
                    let delta = head + chain[e - c] + fluent;
                    emit(
                        e,
                        next,
                        delta,
                        &[(Label::Edited, b - p), (Label::Filler, interregnum), (Label::Fluent, e - c)],
                    );
                }
            }
        }
    }

    let mut finals: Vec<Hyp> = Vec::new();
    for (key, hyps) in std::mem::take(&mut states[n]) {
        let end = lm_step(key.last, n);
        for h in hyps {
            push_hyp(
                &mut finals,
                Hyp {
                    score: h.score + end,
                    labels: h.labels,
                },
                keep,
            );
        }
    }

    let ranked: Vec<Analysis> = finals
        .into_iter()
        .map(|h| analysis_from_labels(utt, model, lm, h.labels).expect("search labels are well-formed"))
        .collect();
    let all_fluent = analysis_from_labels(utt, model, lm, all_fluent_labels(&mask))
        .expect("all-fluent labels are well-formed");
    CandidateList {
        utterance: utt.clone(),
        candidates: finalize_candidates(ranked, all_fluent, n_best),
        n: n_best,
    }
}
