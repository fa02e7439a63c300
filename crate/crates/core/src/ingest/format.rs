//! On-disk snapshot layout: `vocab.json`, `contexts.bin`, `stats.json`.
//!
//! `contexts.bin` is little-endian:
//!
//! ```text
//! magic      4 bytes  "CTX1"
//! vocab_len  u32
//! users      u64
//! per user:
//!   name_len u32, name (UTF-8)
//!   entries  u32
//!   per entry: vocab index u32, count u32
//! ```
//!
//! Users are sorted by name and entries by vocab index, so the file is a
//! pure function of the corpus.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::snapshot::{SnapshotCorpus, SnapshotStats, UserContext};
use crate::{Error, MonthId, Result};

const MAGIC: &[u8; 4] = b"CTX1";

#[derive(Serialize, Deserialize)]
struct StatsFile {
    month: MonthId,
    #[serde(flatten)]
    stats: SnapshotStats,
}

impl SnapshotCorpus {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vocab: BTreeMap<&str, u64> = self.vocab.iter().map(|(s, c)| (s.as_str(), *c)).collect();
        write_file(&dir.join("vocab.json"), serde_json::to_vec_pretty(&vocab)?)?;
        write_file(&dir.join("contexts.bin"), self.encode_contexts())?;
        let stats = StatsFile {
            month: self.month,
            stats: self.stats.clone(),
        };
        write_file(&dir.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let vocab: BTreeMap<String, u64> = serde_json::from_slice(&read_file(&dir.join("vocab.json"))?)?;
        let stats: StatsFile = serde_json::from_slice(&read_file(&dir.join("stats.json"))?)?;
        let path = dir.join("contexts.bin");
        let contexts = decode_contexts(&read_file(&path)?, vocab.len()).map_err(|message| Error::Format {
            path: path.clone(),
            message,
        })?;
        Ok(SnapshotCorpus {
            month: stats.month,
            vocab: vocab.into_iter().collect(),
            contexts,
            stats: stats.stats,
        })
    }

    pub fn encode_contexts(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.contexts.len() as u64).to_le_bytes());
        for ctx in &self.contexts {
            out.extend_from_slice(&(ctx.user.len() as u32).to_le_bytes());
            out.extend_from_slice(ctx.user.as_bytes());
            out.extend_from_slice(&(ctx.tokens.len() as u32).to_le_bytes());
            for &(idx, count) in &ctx.tokens {
                out.extend_from_slice(&idx.to_le_bytes());
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
        out
    }
}

fn decode_contexts(mut bytes: &[u8], vocab_len: usize) -> std::result::Result<Vec<UserContext>, String> {
    let mut magic = [0u8; 4];
    bytes.read_exact(&mut magic).map_err(|_| "truncated header")?;
    if &magic != MAGIC {
        return Err("bad magic".into());
    }
    let declared = read_u32(&mut bytes)? as usize;
    if declared != vocab_len {
        return Err(format!("vocab length {declared} does not match vocab.json ({vocab_len})"));
    }
    let users = read_u64(&mut bytes)?;
    let mut contexts = Vec::with_capacity(users.min(1 << 24) as usize);
    for _ in 0..users {
        let len = read_u32(&mut bytes)? as usize;
        if bytes.len() < len {
            return Err("truncated user name".into());
        }
        let (name, rest) = bytes.split_at(len);
        bytes = rest;
        let user = String::from_utf8(name.to_vec()).map_err(|_| "user name is not UTF-8")?;
        let entries = read_u32(&mut bytes)?;
        let mut tokens = Vec::with_capacity(entries as usize);
        for _ in 0..entries {
            let idx = read_u32(&mut bytes)?;
            let count = read_u32(&mut bytes)?;
            if idx as usize >= vocab_len {
                return Err(format!("vocab index {idx} out of range"));
            }
            tokens.push((idx, count));
        }
        contexts.push(UserContext { user, tokens });
    }
    if !bytes.is_empty() {
        return Err("trailing bytes".into());
    }
    Ok(contexts)
}

fn read_u32(bytes: &mut &[u8]) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    bytes.read_exact(&mut b).map_err(|_| "unexpected end of file")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(bytes: &mut &[u8]) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    bytes.read_exact(&mut b).map_err(|_| "unexpected end of file")?;
    Ok(u64::from_le_bytes(b))
}

fn write_file(path: &PathBuf, bytes: Vec<u8>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_directory() {
        let month: MonthId = "2021-07".parse().unwrap();
        let corpus = SnapshotCorpus::from_contexts(
            month,
            vec![
                ("bob", vec![("aww", 2), ("pics", 1)]),
                ("alice", vec![("pics", 3)]),
                ("carol", vec![("aww", 1)]),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.write_dir(dir.path()).unwrap();
        let back = SnapshotCorpus::read_dir(dir.path()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.stats().users_short_context, 1);
    }

    #[test]
    fn rejects_corrupt_contexts() {
        assert!(decode_contexts(b"XXXX", 0).is_err());
        let mut ok = Vec::new();
        ok.extend_from_slice(MAGIC);
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.extend_from_slice(&1u64.to_le_bytes());
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.push(b'a');
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.extend_from_slice(&5u32.to_le_bytes());
        ok.extend_from_slice(&2u32.to_le_bytes());
        assert!(decode_contexts(&ok, 1).unwrap_err().contains("out of range"));
    }
}
