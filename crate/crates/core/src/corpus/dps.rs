use std::io::BufRead;

use super::{CorpusError, Label, Token, Utterance};

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Reparandum,
    Repair,
}

/// Reads bracketed transcripts, one utterance per line:
/// `[ reparandum + {interregnum} repair ]`, with nesting allowed and `{...}`
/// filler groups anywhere. Tokens inside any open reparandum are EDITED,
/// tokens inside braces are FILLER, everything else is FLUENT.
pub fn parse_dps<R: BufRead>(reader: R, id_prefix: &str) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (tokens, gold) = parse_line(&line, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        out.push(Utterance {
            id: format!("{id_prefix}{}", out.len()),
            tokens,
            gold: Some(gold),
        });
    }
    Ok(out)
}

fn lex(line: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    for chunk in line.split_whitespace() {
        let mut start = 0;
        for (i, ch) in chunk.char_indices() {
            if matches!(ch, '[' | ']' | '+' | '{' | '}') {
                if start < i {
                    pieces.push(&chunk[start..i]);
                }
                pieces.push(&chunk[i..i + 1]);
                start = i + 1;
            }
        }
        if start < chunk.len() {
            pieces.push(&chunk[start..]);
        }
    }
    pieces
}

fn parse_line(line: &str, lineno: usize) -> Result<(Vec<Token>, Vec<Label>), CorpusError> {
    let unbalanced = |message: &str| CorpusError::UnbalancedBracket {
        line: lineno,
        message: message.to_string(),
    };
    let mut stack: Vec<Phase> = Vec::new();
    let mut in_braces = false;
    let mut tokens = Vec::new();
    let mut gold = Vec::new();

    for piece in lex(line) {
        match piece {
            "[" => stack.push(Phase::Reparandum),
            "+" => match stack.last_mut() {
                Some(phase @ Phase::Reparandum) => *phase = Phase::Repair,
                Some(Phase::Repair) => return Err(unbalanced("second '+' in one bracket")),
                None => return Err(unbalanced("'+' outside brackets")),
            },
            "]" => match stack.pop() {
                Some(Phase::Repair) => {}
                Some(Phase::Reparandum) => return Err(unbalanced("']' before '+'")),
                None => return Err(unbalanced("']' without matching '['")),
            },
            "{" => {
                if in_braces {
                    return Err(unbalanced("nested '{'"));
                }
                in_braces = true;
            }
            "}" => {
                if !in_braces {
                    return Err(unbalanced("'}' without matching '{'"));
                }
                in_braces = false;
            }
            word => {
                let label = if in_braces {
                    Label::Filler
                } else if stack.contains(&Phase::Reparandum) {
                    Label::Edited
                } else {
                    Label::Fluent
                };
                tokens.push(Token::new(word));
                gold.push(label);
            }
        }
    }
    if !stack.is_empty() {
        return Err(unbalanced("unclosed '['"));
    }
    if in_braces {
        return Err(unbalanced("unclosed '{'"));
    }
    Ok((tokens, gold))
}
