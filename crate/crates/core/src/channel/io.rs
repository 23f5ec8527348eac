use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Analysis, CandidateList};
use crate::corpus::{Label, Token, Utterance};

/// One line of the candidate interchange file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub candidates: Vec<ScoredLabels>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabels {
    /// One character per token: `O`, `E` or `F`.
    pub labels: String,
    pub channel_lp: f64,
    pub lm_lp: f64,
    pub total_lp: f64,
    pub n_edits: usize,
}

impl From<&CandidateList> for CandidateRecord {
    fn from(list: &CandidateList) -> Self {
        CandidateRecord {
            id: list.utterance.id.clone(),
            tokens: list.utterance.words().iter().map(|w| w.to_string()).collect(),
            candidates: list
                .candidates
                .iter()
                .map(|a| ScoredLabels {
                    labels: a.labels.iter().map(|l| l.as_char()).collect(),
                    channel_lp: a.channel_logprob,
                    lm_lp: a.ncm_lm_logprob,
                    total_lp: a.ncm_total_logprob,
                    n_edits: a.n_edits,
                })
                .collect(),
        }
    }
}

impl CandidateRecord {
    /// Rebuilds a candidate list. Alignments are not part of the interchange,
    /// so `repairs` comes back empty; `gold` is attached to the utterance.
    pub fn into_list(self, gold: Option<Vec<Label>>) -> Result<CandidateList, String> {
        let n = self.candidates.len();
        let mut candidates = Vec::with_capacity(n);
        for c in self.candidates {
            let labels: Vec<Label> = c
                .labels
                .chars()
                .map(|ch| Label::from_code(ch.encode_utf8(&mut [0; 4])).ok_or(format!("bad label {ch:?}")))
                .collect::<Result<_, _>>()?;
            if labels.len() != self.tokens.len() {
                return Err(format!("{}: label/token length mismatch", self.id));
            }
            let fluent = self
                .tokens
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == Label::Fluent)
                .map(|(w, _)| w.clone())
                .collect();
            candidates.push(Analysis {
                utterance_id: self.id.clone(),
                labels,
                fluent,
                repairs: Vec::new(),
                channel_logprob: c.channel_lp,
                ncm_lm_logprob: c.lm_lp,
                ncm_total_logprob: c.total_lp,
                n_edits: c.n_edits,
            });
        }
        Ok(CandidateList {
            utterance: Utterance {
                id: self.id,
                tokens: self.tokens.into_iter().map(Token::new).collect(),
                gold,
            },
            candidates,
            n,
        })
    }
}

/// Scores are written in scientific notation with 17 significant digits,
/// which round-trips every `f64` exactly.
fn number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

pub fn write_candidates_jsonl<W: Write>(mut w: W, lists: &[CandidateList]) -> std::io::Result<()> {
    for list in lists {
        let rec = CandidateRecord::from(list);
        let mut line = String::new();
        line.push_str("{\"id\":");
        line.push_str(&serde_json::to_string(&rec.id).expect("string"));
        line.push_str(",\"tokens\":");
        line.push_str(&serde_json::to_string(&rec.tokens).expect("strings"));
        line.push_str(",\"candidates\":[");
        for (i, c) in rec.candidates.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(
                line,
                "{{\"labels\":\"{}\",\"channel_lp\":{},\"lm_lp\":{},\"total_lp\":{},\"n_edits\":{}}}",
                c.labels,
                number(c.channel_lp),
                number(c.lm_lp),
                number(c.total_lp),
                c.n_edits
            );
        }
        line.push_str("]}");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_candidates_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<CandidateRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}
