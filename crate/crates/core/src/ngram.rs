//! Interpolated Kneser-Ney n-gram language models with a single discount per
//! order.
//!
//! Sentences are wrapped as `<s> w1 .. wk </s>` with a single start symbol, so
//! early positions use shorter contexts. Counts are raw at the highest order
//! and for n-grams that begin with `<s>`; every other n-gram is counted by the
//! number of distinct words seen to its left. The lowest level interpolates
//! with a uniform distribution over the vocabulary plus `<unk>` and `</s>`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{BigramLm, Direction, LanguageModel, BOS, EOS, UNK};

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("order {0} is out of range (1..=5)")]
    BadOrder(usize),
    #[error("bad model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub order: usize,
    /// Training words seen fewer times than this become `<unk>`.
    pub min_count: usize,
    pub direction: Direction,
}

impl NgramConfig {
    pub fn bigram() -> Self {
        NgramConfig {
            order: 2,
            min_count: 1,
            direction: Direction::Forward,
        }
    }

    pub fn fourgram(direction: Direction) -> Self {
        NgramConfig {
            order: 4,
            min_count: 2,
            direction,
        }
    }
}

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

#[derive(Clone, Debug, Default, PartialEq)]
struct Context {
    total: u64,
    distinct: u64,
    next: HashMap<u32, u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    /// Index 0..3 hold `<s>`, `</s>`, `<unk>`; the rest are sorted words.
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    discounts: Vec<f64>,
    /// `levels[k - 1]` maps a context of length `k - 1` to its adjusted counts.
    levels: Vec<HashMap<Vec<u32>, Context>>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    config: NgramConfig,
    vocab: Vec<String>,
    discounts: Vec<f64>,
    /// Per order: (n-gram ids, adjusted count), sorted.
    counts: Vec<Vec<(Vec<u32>, u64)>>,
}

const MAGIC: &str = "DFNG1";

/// Discount from the adjusted count-of-counts of one order. Falls back to 0.5
/// when there are no singletons or no doubletons.
fn discount(n1: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        0.5
    } else {
        n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)
    }
}

pub fn train_ngram<S: AsRef<str>>(sentences: &[Vec<S>], config: NgramConfig) -> Result<NgramModel, NgramError> {
    if !(1..=5).contains(&config.order) {
        return Err(NgramError::BadOrder(config.order));
    }
    if sentences.is_empty() {
        return Err(NgramError::EmptyCorpus);
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sentences {
        for w in s {
            *freq.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
    vocab.extend(
        freq.iter()
            .filter(|(w, c)| **c >= config.min_count && ![BOS, EOS, UNK].contains(w))
            .map(|(w, _)| w.to_string()),
    );
    let ids: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

    let n = config.order;
    let mut raw: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); n];
    for s in sentences {
        let oriented = config.direction.orient(s);
        let mut seq = vec![BOS_ID];
        seq.extend(oriented.iter().map(|w| *ids.get(*w).unwrap_or(&UNK_ID)));
        seq.push(EOS_ID);
        for i in 1..seq.len() {
            for k in 1..=n.min(i + 1) {
                *raw[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_default() += 1;
            }
        }
    }
    let mut counts: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); n];
    counts[n - 1] = raw[n - 1].clone();
    for k in (1..n).rev() {
        let mut left: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        for g in raw[k].keys() {
            *left.entry(g[1..].to_vec()).or_default() += 1;
        }
        for (g, &c) in &raw[k - 1] {
            let adjusted = if g[0] == BOS_ID { c } else { left.get(g).copied().unwrap_or(0) };
            if adjusted > 0 {
                counts[k - 1].insert(g.clone(), adjusted);
            }
        }
    }
    let discounts = counts
        .iter()
        .map(|level| {
            let n1 = level.values().filter(|&&c| c == 1).count() as u64;
            let n2 = level.values().filter(|&&c| c == 2).count() as u64;
            discount(n1, n2)
        })
        .collect();
    Ok(NgramModel::assemble(config, vocab, discounts, counts))
}

impl NgramModel {
    fn assemble(
        config: NgramConfig,
        vocab: Vec<String>,
        discounts: Vec<f64>,
        counts: Vec<BTreeMap<Vec<u32>, u64>>,
    ) -> NgramModel {
        let ids = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let levels = counts
            .iter()
            .map(|level| {
                let mut ctx: HashMap<Vec<u32>, Context> = HashMap::new();
                for (g, &c) in level {
                    let e = ctx.entry(g[..g.len() - 1].to_vec()).or_default();
                    e.total += c;
                    e.distinct += 1;
                    e.next.insert(g[g.len() - 1], c);
                }
                ctx
            })
            .collect();
        NgramModel {
            config,
            vocab,
            ids,
            discounts,
            levels,
        }
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn direction(&self) -> Direction {
        self.config.direction
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    /// Every outcome the model predicts: the training vocabulary, `<unk>` and `</s>`.
    pub fn outcomes(&self) -> impl Iterator<Item = &str> {
        self.vocab[1..].iter().map(String::as_str)
    }

    fn id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().filter(|&i| i != BOS_ID).unwrap_or(UNK_ID)
    }

    fn context_id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(UNK_ID)
    }

    fn prob_ids(&self, context: &[u32], w: u32) -> f64 {
        let k = context.len() + 1;
        let lower = if context.is_empty() {
            1.0 / (self.vocab.len() - 1) as f64
        } else {
            self.prob_ids(&context[1..], w)
        };
        match self.levels[k - 1].get(context) {
            Some(ctx) if ctx.total > 0 => {
                let d = self.discounts[k - 1];
                let c = ctx.next.get(&w).copied().unwrap_or(0) as f64;
                let total = ctx.total as f64;
                (c - d).max(0.0) / total + d * ctx.distinct as f64 / total * lower
            }
            _ => lower,
        }
    }

    /// p(word | context) in the model's reading direction. `context` is oldest
    /// first and may start with `<s>`; only its last `order - 1` words are used.
    /// Unknown words are scored as `<unk>`.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let keep = context.len().min(self.order() - 1);
        let ctx: Vec<u32> = context[context.len() - keep..].iter().map(|w| self.context_id(w)).collect();
        self.prob_ids(&ctx, self.id(word))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), NgramError> {
        let counts = self
            .levels
            .iter()
            .map(|level| {
                let mut rows: Vec<(Vec<u32>, u64)> = level
                    .iter()
                    .flat_map(|(ctx, c)| {
                        c.next.iter().map(move |(&w, &n)| {
                            let mut g = ctx.clone();
                            g.push(w);
                            (g, n)
                        })
                    })
                    .collect();
                rows.sort();
                rows
            })
            .collect();
        let stored = Stored {
            config: self.config,
            vocab: self.vocab.clone(),
            discounts: self.discounts.clone(),
            counts,
        };
        writeln!(w, "{MAGIC}")?;
        serde_json::to_writer(&mut w, &stored).map_err(|e| NgramError::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<NgramModel, NgramError> {
        let mut magic = String::new();
        r.read_line(&mut magic)?;
        if magic.trim_end() != MAGIC {
            return Err(NgramError::Format(format!("expected {MAGIC}, found {:?}", magic.trim_end())));
        }
        let s: Stored = serde_json::from_reader(r).map_err(|e| NgramError::Format(e.to_string()))?;
        if s.counts.len() != s.config.order || s.discounts.len() != s.config.order || s.vocab.len() < 3 {
            return Err(NgramError::Format("inconsistent order".into()));
        }
        let counts = s.counts.into_iter().map(|rows| rows.into_iter().collect()).collect();
        Ok(NgramModel::assemble(s.config, s.vocab, s.discounts, counts))
    }
}

impl LanguageModel for NgramModel {
    fn logprob(&self, sentence: &[&str]) -> f64 {
        let oriented = self.direction().orient(sentence);
        let mut seq = vec![BOS_ID];
        seq.extend(oriented.iter().map(|w| self.id(w)));
        seq.push(EOS_ID);
        let keep = self.order() - 1;
        (1..seq.len())
            .map(|i| {
                let lo = i.saturating_sub(keep);
                self.prob_ids(&seq[lo..i], seq[i]).ln()
            })
            .sum()
    }
}

impl BigramLm for NgramModel {
    fn transition_logprob(&self, prev: Option<&str>, next: Option<&str>) -> f64 {
        self.prob(&[prev.unwrap_or(BOS)], next.unwrap_or(EOS)).ln()
    }
}
