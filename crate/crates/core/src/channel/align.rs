use super::model::{ChainLogs, START_ROW};
use super::{AlignOp, ChannelModel, OpKind};

/// Unit-cost edit alignment of a reparandum against the best prefix of the
/// FLUENT words that follow it. COPY is free; SUBSTITUTE, INSERT and DELETE
/// cost 1. Among equally cheap alignments the one with more COPY ops wins,
/// then the prefix closest in length to the reparandum, then the shorter one.
pub fn min_edit_alignment<S: AsRef<str>>(reparandum: &[S], avail: &[S]) -> Vec<AlignOp> {
    let (a, l) = (reparandum.len(), avail.len());
    // an edit outweighs every possible copy bonus
    let edit = (a + l + 2) as i64;
    let idx = |i: usize, j: usize| i * (l + 1) + j;
    let step = |i: usize, j: usize| -> i64 {
        if reparandum[i].as_ref() == avail[j].as_ref() {
            -1
        } else {
            edit
        }
    };
    let mut cost = vec![i64::MAX; (a + 1) * (l + 1)];
    cost[0] = 0;
    for i in 0..=a {
        for j in 0..=l {
            let here = cost[idx(i, j)];
            if here == i64::MAX {
                continue;
            }
            if i < a && j < l {
                let t = &mut cost[idx(i + 1, j + 1)];
                *t = (*t).min(here + step(i, j));
            }
            if i < a {
                let t = &mut cost[idx(i + 1, j)];
                *t = (*t).min(here + edit);
            }
            if j < l {
                let t = &mut cost[idx(i, j + 1)];
                *t = (*t).min(here + edit);
            }
        }
    }
    let best_j = (0..=l)
        .min_by_key(|&j| (cost[idx(a, j)], a.abs_diff(j), j))
        .unwrap_or(0);

    // backtrace preferring diagonal moves, then INSERT, then DELETE
    let mut ops = Vec::with_capacity(a + best_j);
    let (mut i, mut j) = (a, best_j);
    while i > 0 || j > 0 {
        let here = cost[idx(i, j)];
        if i > 0 && j > 0 && cost[idx(i - 1, j - 1)] != i64::MAX && cost[idx(i - 1, j - 1)] + step(i - 1, j - 1) == here {
            let same = reparandum[i - 1].as_ref() == avail[j - 1].as_ref();
            let kind = if same { OpKind::Copy } else { OpKind::Substitute };
            ops.push(AlignOp::new(kind, Some(reparandum[i - 1].as_ref()), Some(avail[j - 1].as_ref())));
            i -= 1;
            j -= 1;
            continue;
        }
        if i > 0 && cost[idx(i - 1, j)] != i64::MAX && cost[idx(i - 1, j)] + edit == here {
            ops.push(AlignOp::new(OpKind::Insert, Some(reparandum[i - 1].as_ref()), None));
            i -= 1;
            continue;
        }
        ops.push(AlignOp::new(OpKind::Delete, None, Some(avail[j - 1].as_ref())));
        j -= 1;
    }
    ops.reverse();
    ops
}

/// Max-product alignment lattice over (reparandum words consumed, repair
/// words consumed, last op). Row `START_ROW` of the op dimension is only
/// live at the origin.
pub(crate) struct ChainGrid {
    a: usize,
    l: usize,
    score: Vec<f64>,
    back: Vec<u8>,
}

const STATES: usize = 5;
const NONE: u8 = u8::MAX;

impl ChainGrid {
    fn at(&self, i: usize, j: usize, s: usize) -> usize {
        (i * (self.l + 1) + j) * STATES + s
    }

    /// `same(i, j)`: reparandum word i equals repair word j.
    /// `sub(i, j)` / `ins(i)`: emission log-probs for SUBSTITUTE / INSERT.
    pub(crate) fn fill(
        logs: &ChainLogs,
        a: usize,
        l: usize,
        same: impl Fn(usize, usize) -> bool,
        sub: impl Fn(usize, usize) -> f64,
        ins: impl Fn(usize) -> f64,
    ) -> ChainGrid {
        let size = (a + 1) * (l + 1) * STATES;
        let mut g = ChainGrid {
            a,
            l,
            score: vec![f64::NEG_INFINITY; size],
            back: vec![NONE; size],
        };
        let origin = g.at(0, 0, START_ROW);
        g.score[origin] = 0.0;
        for i in 0..=a {
            for j in 0..=l {
                for s in 0..STATES {
                    let here = g.score[g.at(i, j, s)];
                    if here == f64::NEG_INFINITY {
                        continue;
                    }
                    let base = if s == START_ROW { here } else { here + logs.cont };
                    let mut relax = |ni: usize, nj: usize, kind: OpKind, emit: f64| {
                        let cand = base + logs.op[s][kind.index()] + emit;
                        let t = g.at(ni, nj, kind.index() + 1);
                        if cand > g.score[t] {
                            g.score[t] = cand;
                            g.back[t] = s as u8;
                        }
                    };
                    if i < a && j < l {
                        if same(i, j) {
                            relax(i + 1, j + 1, OpKind::Copy, 0.0);
                        } else {
                            relax(i + 1, j + 1, OpKind::Substitute, sub(i, j));
                        }
                    }
                    if i < a {
                        relax(i + 1, j, OpKind::Insert, ins(i));
                    }
                    if j < l {
                        relax(i, j + 1, OpKind::Delete, 0.0);
                    }
                }
            }
        }
        g
    }

    /// Best complete chain consuming the whole reparandum and exactly `j`
    /// repair words, stop event included, with its final op state.
    fn complete(&self, j: usize, stop: f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, START_ROW);
        for s in 1..STATES {
            let v = self.score[self.at(self.a, j, s)];
            if v > best.0 {
                best = (v, s);
            }
        }
        (best.0 + stop, best.1)
    }

    /// `out[j]` = best chain using at most `j` repair words.
    pub(crate) fn best_within(&self, stop: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.l + 1);
        let mut running = f64::NEG_INFINITY;
        for j in 0..=self.l {
            running = running.max(self.complete(j, stop).0);
            out.push(running);
        }
        out
    }

    /// Recovers the op sequence of the best chain using at most `limit` repair words.
    pub(crate) fn backtrace(&self, stop: f64, limit: usize) -> (f64, usize, Vec<OpKind>) {
        let mut best = (f64::NEG_INFINITY, 0, START_ROW);
        for j in 0..=limit.min(self.l) {
            let (v, s) = self.complete(j, stop);
            if v > best.0 {
                best = (v, j, s);
            }
        }
        let (score, j_end, mut s) = best;
        let mut kinds = Vec::new();
        let (mut i, mut j) = (self.a, j_end);
        while s != START_ROW {
            let kind = OpKind::ALL[s - 1];
            kinds.push(kind);
            let prev = self.back[self.at(i, j, s)] as usize;
            if kind.takes_reparandum() {
                i -= 1;
            }
            if kind.takes_repair() {
                j -= 1;
            }
            s = prev;
        }
        debug_assert_eq!((i, j), (0, 0));
        kinds.reverse();
        (score, j_end, kinds)
    }
}

/// Highest-scoring alignment of `reparandum` against a prefix of `avail`
/// under the channel model. Returns the chain log-probability and the ops.
pub fn best_alignment<S: AsRef<str>>(
    model: &ChannelModel,
    reparandum: &[S],
    avail: &[S],
) -> (f64, Vec<AlignOp>) {
    let logs = model.chain_logs();
    let grid = ChainGrid::fill(
        &logs,
        reparandum.len(),
        avail.len(),
        |i, j| reparandum[i].as_ref() == avail[j].as_ref(),
        |i, j| model.substitution_logprob(reparandum[i].as_ref(), Some(avail[j].as_ref())),
        |i| model.substitution_logprob(reparandum[i].as_ref(), None),
    );
    let (score, _, kinds) = grid.backtrace(logs.stop, avail.len());
    (score, ops_from_kinds(&kinds, reparandum, avail))
}

pub(crate) fn ops_from_kinds<S: AsRef<str>>(kinds: &[OpKind], reparandum: &[S], avail: &[S]) -> Vec<AlignOp> {
    let (mut i, mut j) = (0, 0);
    kinds
        .iter()
        .map(|&kind| {
            let r = kind.takes_reparandum().then(|| {
                i += 1;
                reparandum[i - 1].as_ref()
            });
            let m = kind.takes_repair().then(|| {
                j += 1;
                avail[j - 1].as_ref()
            });
            AlignOp::new(kind, r, m)
        })
        .collect()
}
