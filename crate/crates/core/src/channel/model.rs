use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::align::min_edit_alignment;
use super::{region_frames, AlignOp, Analysis, ChannelError, OpKind};
use crate::corpus::{FillerLexicon, Label, Utterance};
use crate::lm::UNK;

/// Conditioning key for reparandum words generated without a repair word (INSERT).
pub const NO_REPAIR: &str = "<none>";

/// Row index of the chain-initial state in [`ChannelParams::op_probs`].
pub const START_ROW: usize = 0;

/// Raw channel parameters. Row 0 of `op_probs` conditions on the start of a
/// chain, rows 1..=4 on the previous op (COPY, SUBSTITUTE, INSERT, DELETE);
/// columns follow [`OpKind::ALL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub op_probs: [[f64; 4]; 5],
    pub p_start: f64,
    pub p_stop: f64,
    pub p_filler: f64,
    pub alpha: f64,
    pub vocab: BTreeSet<String>,
    /// Pseudo-counts of reparandum word given repair word (or [`NO_REPAIR`]).
    pub substitutions: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Log-domain view of the chain parameters used by the alignment DP.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ChainLogs {
    pub op: [[f64; 4]; 5],
    pub cont: f64,
    pub stop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredChannel", into = "StoredChannel")]
pub struct ChannelModel {
    params: ChannelParams,
    lexicon: FillerLexicon,
    derived: Derived,
}

#[derive(Clone, Debug, PartialEq)]
struct Derived {
    chain: [[f64; 4]; 5],
    log_start: f64,
    log_no_start: f64,
    log_stop: f64,
    log_continue: f64,
    log_filler: f64,
    totals: BTreeMap<String, f64>,
    smoothing_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct StoredChannel {
    format: String,
    params: ChannelParams,
    lexicon: FillerLexicon,
}

const FORMAT_TAG: &str = "DFCH1";

impl TryFrom<StoredChannel> for ChannelModel {
    type Error = ChannelError;

    fn try_from(s: StoredChannel) -> Result<Self, Self::Error> {
        if s.format != FORMAT_TAG {
            return Err(ChannelError::InvalidModel(format!("unknown format {:?}", s.format)));
        }
        ChannelModel::from_params(s.params, s.lexicon)
    }
}

impl From<ChannelModel> for StoredChannel {
    fn from(m: ChannelModel) -> Self {
        StoredChannel {
            format: FORMAT_TAG.to_string(),
            params: m.params,
            lexicon: m.lexicon,
        }
    }
}

fn in_open_unit(p: f64) -> bool {
    p.is_finite() && p > 0.0 && p < 1.0
}

impl ChannelModel {
    /// Builds a model from explicit parameters and validates them.
    pub fn from_params(params: ChannelParams, lexicon: FillerLexicon) -> Result<Self, ChannelError> {
        for (name, p) in [
            ("p_start", params.p_start),
            ("p_stop", params.p_stop),
            ("p_filler", params.p_filler),
        ] {
            if !in_open_unit(p) {
                return Err(ChannelError::InvalidModel(format!("{name} = {p} not in (0,1)")));
            }
        }
        for (r, row) in params.op_probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || !row.iter().all(|&p| in_open_unit(p)) {
                return Err(ChannelError::InvalidModel(format!("op row {r} = {row:?}")));
            }
        }
        if !(params.alpha > 0.0 && params.alpha.is_finite()) {
            return Err(ChannelError::InvalidModel(format!("alpha = {}", params.alpha)));
        }
        for (cond, row) in &params.substitutions {
            if row.values().any(|&c| !(c >= 0.0 && c.is_finite())) {
                return Err(ChannelError::InvalidModel(format!("bad counts for {cond:?}")));
            }
        }
        let mut chain = [[0.0; 4]; 5];
        for (r, row) in params.op_probs.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                chain[r][k] = p.ln();
            }
        }
        let totals = params
            .substitutions
            .iter()
            .map(|(m, row)| (m.clone(), row.values().sum()))
            .collect();
        let derived = Derived {
            chain,
            log_start: params.p_start.ln(),
            log_no_start: (1.0 - params.p_start).ln(),
            log_stop: params.p_stop.ln(),
            log_continue: (1.0 - params.p_stop).ln(),
            log_filler: params.p_filler.ln(),
            totals,
            smoothing_mass: params.alpha * (params.vocab.len() + 1) as f64,
        };
        Ok(ChannelModel {
            params,
            lexicon,
            derived,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn lexicon(&self) -> &FillerLexicon {
        &self.lexicon
    }

    pub fn op_prob(&self, prev: Option<OpKind>, kind: OpKind) -> f64 {
        self.params.op_probs[prev.map_or(START_ROW, |k| k.index() + 1)][kind.index()]
    }

    pub fn log_start(&self) -> f64 {
        self.derived.log_start
    }

    pub fn log_no_start(&self) -> f64 {
        self.derived.log_no_start
    }

    pub fn log_filler(&self) -> f64 {
        self.derived.log_filler
    }

    pub(crate) fn chain_logs(&self) -> ChainLogs {
        ChainLogs {
            op: self.derived.chain,
            cont: self.derived.log_continue,
            stop: self.derived.log_stop,
        }
    }

    /// Smoothed p(reparandum word | repair word); `None` conditions on an INSERT.
    pub fn substitution_prob(&self, word: &str, repair: Option<&str>) -> f64 {
        let cond = repair.unwrap_or(NO_REPAIR);
        let key = if self.params.vocab.contains(word) { word } else { UNK };
        let alpha = self.params.alpha;
        match self.params.substitutions.get(cond) {
            Some(row) => {
                let count = row.get(key).copied().unwrap_or(0.0);
                (count + alpha) / (self.derived.totals[cond] + self.derived.smoothing_mass)
            }
            None => alpha / self.derived.smoothing_mass,
        }
    }

    pub fn substitution_logprob(&self, word: &str, repair: Option<&str>) -> f64 {
        self.substitution_prob(word, repair).ln()
    }

    /// Log-probability of one alignment chain, stop event included.
    pub fn chain_logprob(&self, ops: &[AlignOp]) -> f64 {
        let mut lp = 0.0;
        let mut prev = START_ROW;
        for (t, op) in ops.iter().enumerate() {
            if t > 0 {
                lp += self.derived.log_continue;
            }
            lp += self.derived.chain[prev][op.kind.index()];
            lp += match op.kind {
                OpKind::Substitute => self.substitution_logprob(
                    op.reparandum_word.as_deref().unwrap_or(UNK),
                    op.repair_word.as_deref(),
                ),
                OpKind::Insert => {
                    self.substitution_logprob(op.reparandum_word.as_deref().unwrap_or(UNK), None)
                }
                OpKind::Copy | OpKind::Delete => 0.0,
            };
            prev = op.kind.index() + 1;
        }
        lp + self.derived.log_stop
    }

    /// log P(Y|X) of an analysis: a no-start decision per FLUENT token and,
    /// per repair region, the start decision, the alignment chain and a fixed
    /// per-token interregnum cost. Stand-alone fillers cost nothing.
    pub fn score<S: AsRef<str>>(&self, words: &[S], analysis: &Analysis) -> Result<f64, ChannelError> {
        validate(words, analysis)?;
        let n_fluent = analysis.labels.iter().filter(|l| **l == Label::Fluent).count();
        let mut lp = n_fluent as f64 * self.derived.log_no_start;
        for region in &analysis.repairs {
            lp += self.derived.log_start;
            lp += region.interregnum.len() as f64 * self.derived.log_filler;
            lp += self.chain_logprob(&region.alignment);
        }
        Ok(lp)
    }

    /// Draws the next op kind given the previous one.
    pub fn sample_op<R: Rng>(&self, prev: Option<OpKind>, rng: &mut R) -> OpKind {
        let row = &self.params.op_probs[prev.map_or(START_ROW, |k| k.index() + 1)];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for kind in OpKind::ALL {
            acc += row[kind.index()];
            if u < acc {
                return kind;
            }
        }
        OpKind::Delete
    }

    /// Draws a reparandum word from p(.|repair), never the repair word itself
    /// and never UNK.
    pub fn sample_word<R: Rng>(&self, repair: Option<&str>, rng: &mut R) -> Option<String> {
        let candidates: Vec<(&String, f64)> = self
            .params
            .vocab
            .iter()
            .filter(|w| Some(w.as_str()) != repair && !self.lexicon.contains_word(w))
            .map(|w| (w, self.substitution_prob(w, repair)))
            .collect();
        let total: f64 = candidates.iter().map(|(_, p)| p).sum();
        if candidates.is_empty() || total <= 0.0 {
            return None;
        }
        let mut u = rng.gen::<f64>() * total;
        for (w, p) in &candidates {
            if u < *p {
                return Some((*w).clone());
            }
            u -= p;
        }
        candidates.last().map(|(w, _)| (*w).clone())
    }
}

pub(crate) fn validate<S: AsRef<str>>(words: &[S], a: &Analysis) -> Result<(), ChannelError> {
    let bad = |msg: String| Err(ChannelError::MalformedSpan(msg));
    let n = words.len();
    if a.labels.len() != n {
        return bad(format!("{} labels for {n} tokens", a.labels.len()));
    }
    let n_edits = a.labels.iter().filter(|l| **l == Label::Edited).count();
    if a.n_edits != n_edits {
        return bad(format!("n_edits = {} but {n_edits} EDITED labels", a.n_edits));
    }
    let fluent: Vec<&str> = words
        .iter()
        .zip(&a.labels)
        .filter(|(_, l)| **l == Label::Fluent)
        .map(|(w, _)| w.as_ref())
        .collect();
    if fluent.len() != a.fluent.len() || fluent.iter().zip(&a.fluent).any(|(x, y)| *x != y) {
        return bad("fluent string does not match labels".into());
    }
    let mut covered = vec![false; n];
    let mut cursor = 0;
    for (r, region) in a.repairs.iter().enumerate() {
        let (rep, int, fix) = (region.reparandum, region.interregnum, region.repair);
        if rep.start < cursor {
            return bad(format!("region {r} overlaps the previous one"));
        }
        if rep.is_empty() || rep.end != int.start || int.end != fix.start || int.start > int.end
            || fix.start > fix.end || fix.end > n
        {
            return bad(format!("region {r} spans out of order: {rep:?} {int:?} {fix:?}"));
        }
        let all = |span: super::Span, label: Label| a.labels[span.start..span.end].iter().all(|l| *l == label);
        if !all(rep, Label::Edited) || !all(int, Label::Filler) || !all(fix, Label::Fluent) {
            return bad(format!("region {r} labels disagree with its spans"));
        }
        covered[rep.start..rep.end].iter_mut().for_each(|c| *c = true);

        let (mut i, mut j) = (rep.start, fix.start);
        for op in &region.alignment {
            if !op.is_consistent() {
                return bad(format!("region {r}: inconsistent op {op:?}"));
            }
            if op.kind.takes_reparandum() {
                if i >= rep.end || op.reparandum_word.as_deref() != Some(words[i].as_ref()) {
                    return bad(format!("region {r}: alignment does not match reparandum"));
                }
                i += 1;
            }
            if op.kind.takes_repair() {
                if j >= fix.end || op.repair_word.as_deref() != Some(words[j].as_ref()) {
                    return bad(format!("region {r}: alignment does not match repair"));
                }
                j += 1;
            }
        }
        if i != rep.end || j != fix.end {
            return bad(format!("region {r}: alignment does not cover its spans"));
        }
        cursor = fix.end.max(int.end);
    }
    if a.labels.iter().zip(&covered).any(|(l, c)| (*l == Label::Edited) != *c) {
        return bad("EDITED token outside every reparandum".into());
    }
    Ok(())
}

/// Estimates a channel model from gold-labeled utterances using the
/// minimum-edit-distance alignment of each reparandum to its repair, with
/// add-`alpha` smoothing throughout.
pub fn train_channel(
    annotated: &[Utterance],
    lexicon: &FillerLexicon,
    alpha: f64,
) -> Result<ChannelModel, ChannelError> {
    let mut tally = Tally::default();
    for (words, gold) in labeled(annotated) {
        tally.utterance(&words, gold);
        for frame in region_frames(gold) {
            let rep = &words[frame.start..frame.reparandum_end];
            let avail = &words[frame.repair_start..frame.avail_end];
            tally.chain(&min_edit_alignment(rep, avail), 1.0);
        }
    }
    tally.finish(alpha, lexicon)
}

fn labeled(annotated: &[Utterance]) -> impl Iterator<Item = (Vec<&str>, &[Label])> {
    annotated
        .iter()
        .filter_map(|u| u.gold.as_deref().map(|g| (u.words(), g)))
}

/// Sufficient statistics of the channel.
#[derive(Default)]
struct Tally {
    ops: [[f64; 4]; 5],
    substitutions: BTreeMap<String, BTreeMap<String, f64>>,
    vocab: BTreeSet<String>,
    n_ops: f64,
    regions: usize,
    fluent: usize,
    interregnum: usize,
}

impl Tally {
    fn utterance(&mut self, words: &[&str], gold: &[Label]) {
        self.vocab.extend(words.iter().map(|w| w.to_string()));
        self.fluent += gold.iter().filter(|l| **l == Label::Fluent).count();
        for frame in region_frames(gold) {
            self.regions += 1;
            self.interregnum += frame.repair_start - frame.reparandum_end;
        }
    }

    fn emission(&mut self, word: &str, repair: Option<&str>, weight: f64) {
        *self
            .substitutions
            .entry(repair.unwrap_or(NO_REPAIR).to_string())
            .or_default()
            .entry(word.to_string())
            .or_default() += weight;
    }

    fn chain(&mut self, ops: &[AlignOp], weight: f64) {
        let mut prev = START_ROW;
        for op in ops {
            self.ops[prev][op.kind.index()] += weight;
            self.n_ops += weight;
            prev = op.kind.index() + 1;
            if let (OpKind::Substitute | OpKind::Insert, Some(w)) = (op.kind, &op.reparandum_word) {
                let repair = if op.kind == OpKind::Insert { None } else { op.repair_word.as_deref() };
                self.emission(w, repair, weight);
            }
        }
    }

    fn finish(self, alpha: f64, lexicon: &FillerLexicon) -> Result<ChannelModel, ChannelError> {
        if self.regions == 0 {
            return Err(ChannelError::NoRepairs);
        }
        let smooth = |num: f64, den: f64, outcomes: f64| (num + alpha) / (den + alpha * outcomes);
        let mut op_probs = [[0.0; 4]; 5];
        for (r, row) in self.ops.iter().enumerate() {
            let total: f64 = row.iter().sum();
            for k in 0..4 {
                op_probs[r][k] = smooth(row[k], total, 4.0);
            }
        }
        let regions = self.regions as f64;
        let interregnum = self.interregnum as f64;
        let params = ChannelParams {
            op_probs,
            p_start: smooth(regions, regions + self.fluent as f64, 2.0),
            p_stop: smooth(regions, self.n_ops, 2.0),
            p_filler: smooth(interregnum, interregnum + regions, 2.0),
            alpha,
            vocab: self.vocab,
            substitutions: self.substitutions,
        };
        ChannelModel::from_params(params, lexicon.clone())
    }
}
