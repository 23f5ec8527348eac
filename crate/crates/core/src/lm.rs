//! Language-model roles shared by the n-gram and LSTM implementations.

use serde::{Deserialize, Serialize};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Reading direction of a language model. Backward models see every
/// sentence reversed, both in training and in scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn orient<'a, S: AsRef<str>>(self, sentence: &'a [S]) -> Vec<&'a str> {
        let it = sentence.iter().map(AsRef::as_ref);
        match self {
            Direction::Forward => it.collect(),
            Direction::Backward => it.rev().collect(),
        }
    }
}

/// Anything that assigns a log-probability (natural log) to a whole sentence,
/// end-of-sentence event included.
pub trait LanguageModel {
    fn logprob(&self, sentence: &[&str]) -> f64;

    fn logprob_batch(&self, sentences: &[Vec<&str>]) -> Vec<f64> {
        sentences.iter().map(|s| self.logprob(s)).collect()
    }
}

/// A first-order Markov language model: the score of a sentence is the sum
/// of word-to-word transitions. `None` stands for a sentence boundary.
pub trait BigramLm {
    fn transition_logprob(&self, prev: Option<&str>, next: Option<&str>) -> f64;

    fn sentence_logprob(&self, sentence: &[&str]) -> f64 {
        let mut prev = None;
        let mut total = 0.0;
        for &w in sentence {
            total += self.transition_logprob(prev, Some(w));
            prev = Some(w);
        }
        total + self.transition_logprob(prev, None)
    }
}
