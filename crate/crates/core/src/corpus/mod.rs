//! Transcript ingestion: tokens, gold labels, normalization, file formats,
//! cross-validation folds and synthetic disfluent corpora.

mod dps;
mod folds;
pub mod grammar;
mod synth;
mod tsv;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dps::parse_dps;
pub use folds::{make_folds, CorpusSplit};
pub use synth::{grammar_channel, synthesize_corpus, SynthStats};
pub use tsv::{parse_tsv, write_tsv};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: unbalanced bracket: {message}")]
    UnbalancedBracket { line: usize, message: String },
    #[error("k = {k} is out of range for {n} training utterances (need 2 <= k <= n)")]
    FoldsOutOfRange { k: usize, n: usize },
    #[error("utterance {id}: {n_labels} labels for {n_tokens} tokens")]
    LabelLength {
        id: String,
        n_labels: usize,
        n_tokens: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-token disfluency label.
///
/// The derived ordering (`Fluent < Edited < Filler`) is the tie-break order
/// used when ranking candidate analyses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "O")]
    Fluent,
    #[serde(rename = "E")]
    Edited,
    #[serde(rename = "F")]
    Filler,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::Fluent => 'O',
            Label::Edited => 'E',
            Label::Filler => 'F',
        }
    }

    pub fn from_code(code: &str) -> Option<Label> {
        match code {
            "O" => Some(Label::Fluent),
            "E" => Some(Label::Edited),
            "F" => Some(Label::Filler),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub is_partial: bool,
    pub is_punct: bool,
}

impl Token {
    /// Builds a token and derives its partial/punctuation flags from the surface.
    ///
    /// A partial word ends in `-` and has at least two characters; punctuation
    /// is any token without a single alphanumeric character.
    pub fn new(surface: impl Into<String>) -> Token {
        let surface = surface.into();
        debug_assert!(!surface.is_empty());
        let is_punct = !surface.chars().any(char::is_alphanumeric);
        let is_partial = !is_punct && surface.ends_with('-') && surface.chars().count() >= 2;
        Token {
            surface,
            is_partial,
            is_punct,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub gold: Option<Vec<Label>>,
}

impl Utterance {
    pub fn new<S: AsRef<str>>(id: impl Into<String>, words: &[S]) -> Utterance {
        Utterance {
            id: id.into(),
            tokens: words.iter().map(|w| Token::new(w.as_ref())).collect(),
            gold: None,
        }
    }

    pub fn labeled<S: AsRef<str>>(
        id: impl Into<String>,
        words: &[S],
        gold: Vec<Label>,
    ) -> Result<Utterance, CorpusError> {
        let mut utt = Utterance::new(id, words);
        if gold.len() != utt.tokens.len() {
            return Err(CorpusError::LabelLength {
                id: utt.id,
                n_labels: gold.len(),
                n_tokens: utt.tokens.len(),
            });
        }
        utt.gold = Some(gold);
        Ok(utt)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// The gold fluent string: tokens labeled neither EDITED nor FILLER.
    /// Unlabeled utterances are returned whole.
    pub fn fluent_words(&self) -> Vec<&str> {
        match &self.gold {
            Some(gold) => self
                .tokens
                .iter()
                .zip(gold)
                .filter(|(_, l)| **l == Label::Fluent)
                .map(|(t, _)| t.surface.as_str())
                .collect(),
            None => self.words(),
        }
    }
}

/// Drops partial words and punctuation (gold labels follow in lockstep) and
/// lowercases the remaining surfaces.
pub fn normalize(raw: &Utterance) -> Utterance {
    let mut tokens = Vec::with_capacity(raw.tokens.len());
    let mut gold = raw.gold.as_ref().map(|_| Vec::with_capacity(raw.tokens.len()));
    for (i, tok) in raw.tokens.iter().enumerate() {
        if tok.is_partial || tok.is_punct {
            continue;
        }
        tokens.push(Token::new(tok.surface.to_lowercase()));
        if let (Some(out), Some(src)) = (gold.as_mut(), raw.gold.as_ref()) {
            out.push(src[i]);
        }
    }
    Utterance {
        id: raw.id.clone(),
        tokens,
        gold,
    }
}

/// Closed set of filled pauses and discourse markers. Multi-word entries
/// are matched as phrases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerLexicon {
    phrases: Vec<Vec<String>>,
}

impl Default for FillerLexicon {
    fn default() -> Self {
        FillerLexicon::new(["uh", "um", "uh-huh", "i mean", "you know", "well", "like"])
    }
}

impl FillerLexicon {
    pub fn new<I, S>(entries: I) -> FillerLexicon
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut phrases: Vec<Vec<String>> = entries
            .into_iter()
            .map(|e| e.as_ref().split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|p| !p.is_empty())
            .collect();
        // longest first so greedy matching prefers "i mean" over a bare "i"
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        phrases.dedup();
        FillerLexicon { phrases }
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.phrases.iter().any(|p| p.iter().any(|w| w == word))
    }

    /// Greedy left-to-right longest match; returns a per-token filler mask.
    pub fn mark<S: AsRef<str>>(&self, words: &[S]) -> Vec<bool> {
        let mut mask = vec![false; words.len()];
        let mut i = 0;
        while i < words.len() {
            let hit = self.phrases.iter().find(|p| {
                i + p.len() <= words.len()
                    && p.iter().zip(&words[i..]).all(|(a, b)| a == b.as_ref())
            });
            match hit {
                Some(p) => {
                    mask[i..i + p.len()].iter_mut().for_each(|m| *m = true);
                    i += p.len();
                }
                None => i += 1,
            }
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(codes: &str) -> Vec<Label> {
        codes.chars().map(|c| Label::from_code(&c.to_string()).unwrap()).collect()
    }

    #[test]
    fn token_flags() {
        assert!(Token::new("wan-").is_partial);
        assert!(!Token::new("-").is_partial);
        assert!(Token::new("-").is_punct);
        assert!(Token::new(",").is_punct);
        assert!(Token::new("...").is_punct);
        assert!(!Token::new("uh-huh").is_partial);
        assert!(!Token::new("uh-huh").is_punct);
        assert!(!Token::new("i").is_punct);
    }

    #[test]
    fn normalize_drops_partials_and_punct_with_labels() {
        let raw = Utterance::labeled("u", &["i", "wan-", "want", ","], labels("OEOO")).unwrap();
        let out = normalize(&raw);
        assert_eq!(out.words(), vec!["i", "want"]);
        assert_eq!(out.gold, Some(labels("OO")));
    }

    #[test]
    fn normalize_identity_and_empty() {
        let u = Utterance::new("u", &["a", "flight"]);
        assert_eq!(normalize(&u), u);
        let u = Utterance::new("u", &[","]);
        assert!(normalize(&u).is_empty());
    }

    #[test]
    fn normalize_lowercases() {
        let u = Utterance::new("u", &["I", "Want", "BOSTON"]);
        assert_eq!(normalize(&u).words(), vec!["i", "want", "boston"]);
    }

    #[test]
    fn filler_mask_is_greedy_longest_match() {
        let lex = FillerLexicon::default();
        let words = ["to", "boston", "uh", "i", "mean", "to", "denver"];
        assert_eq!(
            lex.mark(&words),
            vec![false, false, true, true, true, false, false]
        );
        assert_eq!(lex.mark(&["i", "want"]), vec![false, false]);
        assert_eq!(lex.mark(&["you", "know", "uh-huh"]), vec![true, true, true]);
    }

    fn arb_word() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z]{1,5}",
            "[a-z]{1,4}-",
            Just(",".to_string()),
            Just("-".to_string()),
            Just("?!".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(words in prop::collection::vec(arb_word(), 0..12)) {
            let gold: Vec<Label> = (0..words.len()).map(|i| [Label::Fluent, Label::Edited, Label::Filler][i % 3]).collect();
            let u = Utterance::labeled("p", &words, gold).unwrap();
            let once = normalize(&u);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(once.tokens.iter().all(|t| !t.is_partial && !t.is_punct));
            prop_assert_eq!(once.gold.as_ref().unwrap().len(), once.tokens.len());
        }
    }
}
