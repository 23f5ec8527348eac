use std::io::{BufRead, Write};

use super::{CorpusError, Label, Token, Utterance};

/// Reads the one-token-per-line format: `token<TAB>label` with labels in
/// {O, E, F}, or a bare `token` column for unlabeled text. A blank line ends
/// an utterance. Utterances are numbered `{id_prefix}{index}`.
pub fn parse_tsv<R: BufRead>(reader: R, id_prefix: &str) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut labeled: Option<bool> = None;

    let mut flush = |tokens: &mut Vec<Token>, labels: &mut Vec<Label>, labeled: &mut Option<bool>| {
        if tokens.is_empty() {
            return;
        }
        let gold = match labeled.take() {
            Some(true) => Some(std::mem::take(labels)),
            _ => None,
        };
        out.push(Utterance {
            id: format!("{id_prefix}{}", out.len()),
            tokens: std::mem::take(tokens),
            gold,
        });
        labels.clear();
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            flush(&mut tokens, &mut labels, &mut labeled);
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let malformed = |message: String| CorpusError::MalformedLine {
            line: lineno,
            message,
        };
        if cols[0].is_empty() {
            return Err(malformed("empty token".into()));
        }
        let has_label = match cols.len() {
            1 => false,
            2 => true,
            n => return Err(malformed(format!("expected 1 or 2 columns, found {n}"))),
        };
        match labeled {
            None => labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(malformed("mixed labeled and unlabeled lines in one utterance".into()))
            }
            _ => {}
        }
        if has_label {
            let label = Label::from_code(cols[1])
                .ok_or_else(|| malformed(format!("unknown label {:?}", cols[1])))?;
            labels.push(label);
        }
        tokens.push(Token::new(cols[0]));
    }
    flush(&mut tokens, &mut labels, &mut labeled);
    Ok(out)
}

/// Inverse of [`parse_tsv`]: utterances separated by one blank line.
pub fn write_tsv<W: Write>(mut writer: W, utterances: &[Utterance]) -> std::io::Result<()> {
    for (i, utt) in utterances.iter().enumerate() {
        if i > 0 {
            writeln!(writer)?;
        }
        for (j, tok) in utt.tokens.iter().enumerate() {
            match &utt.gold {
                Some(gold) => writeln!(writer, "{}\t{}", tok.surface, gold[j])?,
                None => writeln!(writer, "{}", tok.surface)?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    #[test]
    fn parses_boston_denver() {
        let text = "a\tO\nflight\tO\nto\tE\nboston\tE\nuh\tF\ni\tF\nmean\tF\nto\tO\ndenver\tO\n";
        let utts = parse_tsv(text.as_bytes(), "u").unwrap();
        assert_eq!(utts.len(), 1);
        assert_eq!(
            utts[0].gold.as_deref().unwrap(),
            &[Fluent, Fluent, Edited, Edited, Filler, Filler, Filler, Fluent, Fluent]
        );
        assert_eq!(utts[0].id, "u0");
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_tsv("".as_bytes(), "u").unwrap().is_empty());
    }

    #[test]
    fn three_columns_is_malformed() {
        let err = parse_tsv("a\tO\nb\tO\textra\n".as_bytes(), "u").unwrap_err();
        match err {
            CorpusError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_mixed_columns() {
        assert!(parse_tsv("a\tX\n".as_bytes(), "u").is_err());
        assert!(parse_tsv("a\tO\nb\n".as_bytes(), "u").is_err());
    }

    #[test]
    fn unlabeled_and_multiple_utterances() {
        let utts = parse_tsv("a\nb\n\nc\n".as_bytes(), "s").unwrap();
        assert_eq!(utts.len(), 2);
        assert!(utts[0].gold.is_none());
        assert_eq!(utts[1].words(), vec!["c"]);
        assert_eq!(utts[1].id, "s1");
    }

    proptest! {
        #[test]
        fn tsv_round_trips(sents in prop::collection::vec(
            prop::collection::vec(("[a-z,.-]{1,6}", 0usize..3), 1..8), 0..6)) {
            let utts: Vec<Utterance> = sents.iter().enumerate().map(|(i, s)| {
                let words: Vec<&str> = s.iter().map(|(w, _)| w.as_str()).collect();
                let gold = s.iter().map(|(_, l)| [Fluent, Edited, Filler][*l]).collect();
                let mut u = Utterance::labeled(format!("r{i}"), &words, gold).unwrap();
                u.id = format!("r{i}");
                u
            }).collect();
            let mut buf = Vec::new();
            write_tsv(&mut buf, &utts).unwrap();
            let parsed = parse_tsv(buf.as_slice(), "r").unwrap();
            prop_assert_eq!(&parsed, &utts);
            let mut again = Vec::new();
            write_tsv(&mut again, &parsed).unwrap();
            prop_assert_eq!(again, buf);
        }
    }
}
