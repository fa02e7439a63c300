use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Exec, MonthId, Result};

/// Author name the dump uses for deleted accounts.
pub const DELETED_AUTHOR: &str = "[deleted]";

const ZSTD_MAGIC: [u8; 4] = [0x28, 0xb5, 0x2f, 0xfd];
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const BATCH_LINES: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyState {
    Present,
    Deleted,
    Removed,
}

impl BodyState {
    fn from_body(body: &str) -> Self {
        match body {
            "[deleted]" => BodyState::Deleted,
            "[removed]" => BodyState::Removed,
            _ => BodyState::Present,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub author: String,
    pub subreddit: String,
    pub created_utc: i64,
    pub body_state: BodyState,
    pub id: String,
}

impl CommentRecord {
    pub fn month(&self) -> Option<MonthId> {
        MonthId::from_timestamp(self.created_utc)
    }
}

/// Line counts from one pass over a dump.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTally {
    pub lines: u64,
    pub records: u64,
    pub malformed: u64,
    /// Well-formed records whose timestamp falls outside the requested month.
    pub out_of_month: u64,
}

#[derive(Debug)]
pub struct ParsedDump {
    pub records: Vec<CommentRecord>,
    pub tally: ParseTally,
}

// Older dumps encode created_utc as a string.
#[derive(Deserialize)]
#[serde(untagged)]
enum Timestamp {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Timestamp {
    fn seconds(&self) -> Option<i64> {
        match self {
            Timestamp::Int(v) => Some(*v),
            Timestamp::Float(v) if v.is_finite() => Some(*v as i64),
            Timestamp::Float(_) => None,
            Timestamp::Text(s) => s.trim().parse().ok(),
        }
    }
}

#[derive(Deserialize)]
struct RawLine {
    author: String,
    subreddit: String,
    created_utc: Timestamp,
    id: String,
    body: String,
}

/// Parses one dump line. `None` means the line is malformed.
pub fn parse_line(line: &[u8]) -> Option<CommentRecord> {
    let raw: RawLine = serde_json::from_slice(line).ok()?;
    let created_utc = raw.created_utc.seconds()?;
    if raw.id.is_empty() || raw.subreddit.is_empty() || created_utc <= 0 {
        return None;
    }
    Some(CommentRecord {
        author: raw.author,
        subreddit: raw.subreddit,
        created_utc,
        body_state: BodyState::from_body(&raw.body),
        id: raw.id,
    })
}

fn open_decoder<'a, R: Read + 'a>(reader: R) -> Result<Box<dyn BufRead + 'a>> {
    let mut buffered = BufReader::with_capacity(1 << 16, reader);
    let head = buffered
        .fill_buf()
        .map_err(|e| Error::CorruptStream(e.to_string()))?
        .to_vec();
    if head.starts_with(&ZSTD_MAGIC) {
        let mut dec = zstd::stream::read::Decoder::with_buffer(buffered)
            .map_err(|e| Error::CorruptStream(e.to_string()))?;
        // Monthly dumps are written with long-distance windows.
        dec.window_log_max(31)
            .map_err(|e| Error::CorruptStream(e.to_string()))?;
        Ok(Box::new(BufReader::with_capacity(1 << 16, dec)))
    } else if head.starts_with(&GZIP_MAGIC) {
        let dec = flate2::bufread::MultiGzDecoder::new(buffered);
        Ok(Box::new(BufReader::with_capacity(1 << 16, dec)))
    } else {
        Ok(Box::new(buffered))
    }
}

/// Decodes a zstd, gzip or plain line-delimited dump.
///
/// Malformed lines are tallied and skipped; a stream that fails to
/// decompress is a fatal [`Error::CorruptStream`].
pub fn parse_dump<R: Read>(reader: R, month: MonthId) -> Result<ParsedDump> {
    parse_dump_with(reader, month, Exec::default())
}

pub fn parse_dump_with<R: Read>(reader: R, month: MonthId, exec: Exec) -> Result<ParsedDump> {
    let mut input = open_decoder(reader)?;
    let mut tally = ParseTally::default();
    let mut records = Vec::new();
    let mut batch: Vec<Vec<u8>> = Vec::with_capacity(BATCH_LINES);

    let mut flush = |batch: &mut Vec<Vec<u8>>, tally: &mut ParseTally| {
        let parsed = exec.map(batch, |line| parse_line(line));
        for rec in parsed {
            match rec {
                None => tally.malformed += 1,
                Some(r) if r.month() != Some(month) => tally.out_of_month += 1,
                Some(r) => {
                    tally.records += 1;
                    records.push(r);
                }
            }
        }
        batch.clear();
    };

    loop {
        let mut line = Vec::new();
        let n = input
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::CorruptStream(e.to_string()))?;
        if n == 0 {
            break;
        }
        while matches!(line.last(), Some(b'\n' | b'\r')) {
            line.pop();
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        tally.lines += 1;
        batch.push(line);
        if batch.len() == BATCH_LINES {
            flush(&mut batch, &mut tally);
        }
    }
    flush(&mut batch, &mut tally);
    Ok(ParsedDump { records, tally })
}

pub fn parse_dump_path(path: &Path, month: MonthId) -> Result<ParsedDump> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dump(file, month)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn month() -> MonthId {
        "2021-04".parse().unwrap()
    }

    #[test]
    fn maps_fields() {
        let line = br#"{"author":"alice","subreddit":"aww","created_utc":1617250000,"body":"hi","id":"c1"}"#;
        let rec = parse_line(line).unwrap();
        assert_eq!(rec.author, "alice");
        assert_eq!(rec.subreddit, "aww");
        assert_eq!(rec.created_utc, 1_617_250_000);
        assert_eq!(rec.body_state, BodyState::Present);
        assert_eq!(rec.id, "c1");
    }

    #[test]
    fn removed_and_deleted_bodies() {
        let removed = br#"{"author":"a","subreddit":"s","created_utc":"1617250000","body":"[removed]","id":"x"}"#;
        assert_eq!(parse_line(removed).unwrap().body_state, BodyState::Removed);
        let deleted = br#"{"author":"a","subreddit":"s","created_utc":1617250000,"body":"[deleted]","id":"x"}"#;
        assert_eq!(parse_line(deleted).unwrap().body_state, BodyState::Deleted);
    }

    #[test]
    fn rejects_invariant_violations() {
        assert!(parse_line(br#"{"author":"a","subreddit":"","created_utc":1,"body":"b","id":"x"}"#).is_none());
        assert!(parse_line(br#"{"author":"a","subreddit":"s","created_utc":0,"body":"b","id":"x"}"#).is_none());
        assert!(parse_line(br#"{"author":"a","subreddit":"s","created_utc":5,"body":"b","id":""}"#).is_none());
        assert!(parse_line(br#"{"author":"a","subreddit":"s","created_utc":5,"id":"x"}"#).is_none());
    }

    fn dump_bytes() -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(br#"{"author":"alice","subreddit":"aww","created_utc":1617250000,"body":"hi","id":"c1"}"#);
        v.push(b'\n');
        v.extend_from_slice(&[0xff, 0xfe, 0x00, 0x13, b'{', b'\n']);
        v.extend_from_slice(br#"{"author":"bob","subreddit":"aww","created_utc":1617250001,"body":"yo","id":"c2"}"#);
        v.push(b'\n');
        v
    }

    #[test]
    fn garbage_line_is_counted_not_fatal() {
        let parsed = parse_dump(&dump_bytes()[..], month()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.tally.malformed, 1);
        assert_eq!(parsed.records[0].id, "c1");
        assert_eq!(parsed.records[1].id, "c2");
    }

    #[test]
    fn decodes_gzip_and_zstd() {
        let raw = dump_bytes();
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&raw).unwrap();
        let gz = gz.finish().unwrap();
        let zs = zstd::encode_all(&raw[..], 3).unwrap();
        for bytes in [gz, zs] {
            let parsed = parse_dump(&bytes[..], month()).unwrap();
            assert_eq!(parsed.records.len(), 2);
            assert_eq!(parsed.tally.malformed, 1);
        }
    }

    #[test]
    fn truncated_compressed_stream_is_fatal() {
        let raw = dump_bytes().repeat(200);
        let zs = zstd::encode_all(&raw[..], 3).unwrap();
        let cut = &zs[..zs.len() / 2];
        assert!(matches!(parse_dump(cut, month()), Err(Error::CorruptStream(_))));
    }

    #[test]
    fn out_of_month_records_are_tallied() {
        let line = br#"{"author":"a","subreddit":"s","created_utc":1625097600,"body":"b","id":"x"}"#;
        let parsed = parse_dump(&line[..], month()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.tally.out_of_month, 1);
    }
}
