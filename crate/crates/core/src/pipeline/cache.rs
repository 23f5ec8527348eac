//! Content-addressed artifact store. Keys are SHA-256 digests of everything
//! that determines an artifact; writes go through a temporary file and a
//! rename so readers never see a partial file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
}

/// Incremental key builder.
#[derive(Clone, Default)]
pub struct Key(Sha256);

impl Key {
    pub fn new(stage: &str) -> Key {
        let mut k = Key(Sha256::new());
        k.add(stage.as_bytes());
        k
    }

    /// Length-prefixed, so concatenations cannot collide.
    pub fn add(&mut self, bytes: &[u8]) -> &mut Key {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn add_json<T: serde::Serialize>(&mut self, value: &T) -> &mut Key {
        let text = serde_json::to_vec(value).expect("key material serializes");
        self.add(&text)
    }

    pub fn add_sentences<S: AsRef<str>>(&mut self, sentences: &[Vec<S>]) -> &mut Key {
        for s in sentences {
            let line: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
            self.add(line.join(" ").as_bytes());
        }
        self
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Cache {
        Cache { dir }
    }

    pub fn path(&self, key: &Key, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.{ext}", key.hex())))
    }

    pub fn read(&self, key: &Key, ext: &str) -> Option<Vec<u8>> {
        self.path(key, ext).and_then(|p| fs::read(p).ok())
    }

    pub fn write(&self, key: &Key, ext: &str, bytes: &[u8]) -> io::Result<()> {
        match self.path(key, ext) {
            Some(p) => write_atomic(&p, bytes),
            None => Ok(()),
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
