use std::collections::HashMap;

use super::search::finish_analysis;
use super::{
    all_fluent_labels, finalize_candidates, region_frames, AlignOp, CandidateList, ChannelError,
    ChannelModel, OpKind, RepairRegion, Span,
};
use crate::corpus::{Label, Utterance};
use crate::lm::BigramLm;

pub const BRUTE_FORCE_MAX_TOKENS: usize = 12;

/// Reference n-best: enumerates every labeling (filler-lexicon tokens fixed
/// to FILLER, every other token FLUENT or EDITED) and, for each region, every
/// op sequence against every repair length. No region cap, no pruning.
pub fn brute_force_nbest<L: BigramLm>(
    utt: &Utterance,
    model: &ChannelModel,
    lm: &L,
    n: usize,
) -> Result<CandidateList, ChannelError> {
    let words = utt.words();
    if words.len() > BRUTE_FORCE_MAX_TOKENS {
        return Err(ChannelError::TooLong(words.len()));
    }
    let n = n.max(1);
    let mask = model.lexicon().mark(&words);
    let free: Vec<usize> = (0..words.len()).filter(|&i| !mask[i]).collect();
    let base = all_fluent_labels(&mask);
    let mut memo: HashMap<(usize, usize, usize, usize), (f64, Vec<AlignOp>)> = HashMap::new();

    let mut all = Vec::with_capacity(1 << free.len());
    for bits in 0u32..(1u32 << free.len()) {
        let mut labels = base.clone();
        for (k, &pos) in free.iter().enumerate() {
            if bits >> k & 1 == 1 {
                labels[pos] = Label::Edited;
            }
        }
        let repairs = region_frames(&labels)
            .into_iter()
            .map(|f| {
                let key = (f.start, f.reparandum_end, f.repair_start, f.avail_end);
                let (_, ops) = memo
                    .entry(key)
                    .or_insert_with(|| {
                        exhaustive_alignment(
                            model,
                            &words[f.start..f.reparandum_end],
                            &words[f.repair_start..f.avail_end],
                        )
                    })
                    .clone();
                let used = ops.iter().filter(|o| o.kind.takes_repair()).count();
                RepairRegion {
                    reparandum: Span::new(f.start, f.reparandum_end),
                    interregnum: Span::new(f.reparandum_end, f.repair_start),
                    repair: Span::new(f.repair_start, f.repair_start + used),
                    alignment: ops,
                }
            })
            .collect();
        all.push(finish_analysis(utt, model, lm, labels, repairs)?);
    }
    let fluent_labels = all_fluent_labels(&mask);
    let all_fluent = all
        .iter()
        .find(|a| a.labels == fluent_labels)
        .cloned()
        .expect("enumeration includes the all-fluent labeling");
    Ok(CandidateList {
        utterance: utt.clone(),
        candidates: finalize_candidates(all, all_fluent, n),
        n,
    })
}

/// Walks every op sequence that consumes all of `rep` and a prefix of
/// `avail`, scoring each with [`ChannelModel::chain_logprob`].
fn exhaustive_alignment(model: &ChannelModel, rep: &[&str], avail: &[&str]) -> (f64, Vec<AlignOp>) {
    fn walk(
        model: &ChannelModel,
        rep: &[&str],
        avail: &[&str],
        i: usize,
        j: usize,
        ops: &mut Vec<AlignOp>,
        best: &mut (f64, Vec<AlignOp>),
    ) {
        if i == rep.len() {
            let score = model.chain_logprob(ops);
            if score > best.0 {
                *best = (score, ops.clone());
            }
        }
        if i < rep.len() && j < avail.len() {
            let kind = if rep[i] == avail[j] {
                OpKind::Copy
            } else {
                OpKind::Substitute
            };
            ops.push(AlignOp::new(kind, Some(rep[i]), Some(avail[j])));
            walk(model, rep, avail, i + 1, j + 1, ops, best);
            ops.pop();
        }
        if i < rep.len() {
            ops.push(AlignOp::new(OpKind::Insert, Some(rep[i]), None));
            walk(model, rep, avail, i + 1, j, ops, best);
            ops.pop();
        }
        if j < avail.len() {
            ops.push(AlignOp::new(OpKind::Delete, None, Some(avail[j])));
            walk(model, rep, avail, i, j + 1, ops, best);
            ops.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    walk(model, rep, avail, 0, 0, &mut Vec::new(), &mut best);
    best
}
