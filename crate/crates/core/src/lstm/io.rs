//! `DFLS1` files: magic line, one JSON header line, then every tensor as
//! little-endian f64 in serialization order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::net::Params;
use super::{LstmConfig, LstmError, LstmModel, Vocab};

const MAGIC: &str = "DFLS1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: LstmConfig,
    vocab: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

impl LstmModel {
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), LstmError> {
        let header = Header {
            config: self.config.clone(),
            vocab: self.vocab.words().to_vec(),
            shapes: self.params.shapes(),
        };
        let json = serde_json::to_string(&header).map_err(|e| LstmError::Format(e.to_string()))?;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{json}")?;
        for (_, t) in self.params.tensors() {
            for x in t {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<LstmModel, LstmError> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(LstmError::Format(format!("expected {MAGIC} header")));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line).map_err(|e| LstmError::Format(e.to_string()))?;
        let vocab = Vocab::from_words(header.vocab);
        let c = &header.config;
        let mut params = Params::zeros(vocab.len(), c.embed, c.hidden, c.layers);
        if params.shapes() != header.shapes {
            return Err(LstmError::Format("tensor shapes do not match the configuration".into()));
        }
        let mut buf = [0u8; 8];
        for (_, t) in params.tensors_mut() {
            for x in t.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| LstmError::Format("truncated tensor data".into()))?;
                *x = f64::from_le_bytes(buf);
            }
        }
        if r.read(&mut buf)? != 0 {
            return Err(LstmError::Format("trailing bytes".into()));
        }
        LstmModel::new(header.config, vocab, params)
    }
}
