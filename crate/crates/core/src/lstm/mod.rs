//! Two-layer LSTM language model trained with truncated BPTT and plain SGD.
//!
//! The end-of-sentence symbol doubles as the start input: a sentence
//! `w1 .. wn` is fed as `</s> w1 .. wn` and predicts `w1 .. wn </s>`.

mod gradcheck;
mod io;
pub mod net;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{Direction, LanguageModel, EOS, UNK};
pub use gradcheck::{check_gradients, check_gradients_with, GradCheckReport};
pub use net::Params;
pub use train::{train_lstm, TrainReport};

/// Sentences scored together by [`LanguageModel::logprob_batch`].
const SCORE_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("bad model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    /// Learning rate stays at `lr` for epochs `1..=decay_after`.
    pub decay_after: usize,
    pub max_len: usize,
    pub bptt: usize,
    pub clip: f64,
    pub init_scale: f64,
    pub seed: u64,
    pub direction: Direction,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            layers: 2,
            hidden: 200,
            embed: 200,
            batch: 20,
            epochs: 13,
            lr: 1.0,
            decay: 0.5,
            decay_after: 4,
            max_len: 50,
            bptt: 20,
            clip: 5.0,
            init_scale: 0.05,
            seed: 1,
            direction: Direction::Forward,
        }
    }
}

impl LstmConfig {
    /// Small model that trains in seconds on one core.
    pub fn desk() -> Self {
        LstmConfig {
            hidden: 64,
            embed: 64,
            ..Default::default()
        }
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch.saturating_sub(self.decay_after) as i32)
    }

    fn validate(&self) -> Result<(), LstmError> {
        let bad = |m: &str| Err(LstmError::Config(m.to_string()));
        if self.layers == 0 || self.hidden == 0 || self.embed == 0 {
            return bad("layers, hidden and embed must be positive");
        }
        if self.batch == 0 || self.bptt == 0 || self.max_len == 0 {
            return bad("batch, bptt and max_len must be positive");
        }
        if !(self.lr > 0.0 && self.decay > 0.0 && self.clip > 0.0 && self.init_scale > 0.0) {
            return bad("lr, decay, clip and init_scale must be positive");
        }
        Ok(())
    }
}

/// Word list with `</s>` at id 0 and `<unk>` at id 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>]) -> Vocab {
        let set: BTreeSet<&str> = sentences
            .iter()
            .flatten()
            .map(AsRef::as_ref)
            .filter(|w| *w != EOS && *w != UNK)
            .collect();
        let words = [EOS, UNK]
            .into_iter()
            .chain(set)
            .map(String::from)
            .collect();
        Vocab::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(1)
    }

    /// Ids of a sentence in the model's reading direction.
    pub fn encode<S: AsRef<str>>(&self, sentence: &[S], direction: Direction) -> Vec<usize> {
        direction.orient(sentence).into_iter().map(|w| self.id(w)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel {
    config: LstmConfig,
    vocab: Vocab,
    params: Params,
}

impl LstmModel {
    pub fn new(config: LstmConfig, vocab: Vocab, params: Params) -> Result<LstmModel, LstmError> {
        config.validate()?;
        let expect = Params::zeros(vocab.len(), config.embed, config.hidden, config.layers).shapes();
        if params.shapes() != expect {
            return Err(LstmError::Format("tensor shapes do not match the configuration".into()));
        }
        Ok(LstmModel { config, vocab, params })
    }

    /// Fresh model with uniform initialization drawn from `config.seed`.
    pub fn init(config: LstmConfig, vocab: Vocab) -> Result<LstmModel, LstmError> {
        use rand::SeedableRng;
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::uniform(
            vocab.len(),
            config.embed,
            config.hidden,
            config.layers,
            config.init_scale,
            &mut rng,
        );
        Ok(LstmModel { config, vocab, params })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn direction(&self) -> Direction {
        self.config.direction
    }

    /// Distribution over the vocabulary for the word after `prefix`
    /// (given in reading order).
    pub fn next_distribution(&self, prefix: &[&str]) -> Vec<f64> {
        let mut ids = vec![0];
        ids.extend(prefix.iter().map(|w| self.vocab.id(w)));
        net::final_distribution(&self.params, &ids)
    }

    fn score_ids(&self, seqs: &[Vec<usize>]) -> Vec<f64> {
        let batch = net::Batch::from_sequences(seqs, 0);
        let state = net::State::zeros(self.params.layers.len(), seqs.len(), self.config.hidden);
        let out = net::run(&self.params, &batch, &state, false);
        out.logp.sum_axis(ndarray::Axis(0)).to_vec()
    }
}

impl LanguageModel for LstmModel {
    fn logprob(&self, sentence: &[&str]) -> f64 {
        self.score_ids(&[self.vocab.encode(sentence, self.config.direction)])[0]
    }

    /// Groups sentences of similar length so padding stays small; each
    /// result equals the one-at-a-time score up to float rounding.
    fn logprob_batch(&self, sentences: &[Vec<&str>]) -> Vec<f64> {
        let seqs: Vec<Vec<usize>> = sentences
            .iter()
            .map(|s| self.vocab.encode(s, self.config.direction))
            .collect();
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_by_key(|&i| (seqs[i].len(), i));
        let mut out = vec![0.0; seqs.len()];
        for chunk in order.chunks(SCORE_BATCH) {
            let group: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            for (&i, lp) in chunk.iter().zip(self.score_ids(&group)) {
                out[i] = lp;
            }
        }
        out
    }
}
