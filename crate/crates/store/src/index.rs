//! The index file: a rebuildable summary of the log.
//!
//! ```text
//! LIVEIA-IDX 1 <log length in bytes>\n
//! <id>\t<offset>\t<frame length>\t<live|deleted>\n   (one line per id, sorted by id)
//! ```
//!
//! `offset` points at the latest put record for the id. The index is trusted
//! only when the recorded log length equals the actual one; otherwise it is
//! rebuilt by replaying the log.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const MAGIC: &str = "LIVEIA-IDX 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub offset: u64,
    pub frame_len: u64,
    pub deleted: bool,
}

pub fn render(log_len: u64, entries: &[IndexEntry]) -> String {
    let mut out = format!("{MAGIC} {log_len}\n");
    for e in entries {
        let status = if e.deleted { "deleted" } else { "live" };
        out.push_str(&format!("{}\t{}\t{}\t{}\n", e.id, e.offset, e.frame_len, status));
    }
    out
}

/// Parses an index; `None` if it is malformed.
pub fn parse(text: &str) -> Option<(u64, Vec<IndexEntry>)> {
    let mut lines = text.lines();
    let log_len = lines.next()?.strip_prefix(MAGIC)?.strip_prefix(' ')?.parse().ok()?;
    let mut entries = Vec::new();
    for line in lines {
        let mut f = line.split('\t');
        let id = f.next()?.to_string();
        let offset = f.next()?.parse().ok()?;
        let frame_len = f.next()?.parse().ok()?;
        let deleted = match f.next()? {
            "live" => false,
            "deleted" => true,
            _ => return None,
        };
        if f.next().is_some() || id.is_empty() {
            return None;
        }
        entries.push(IndexEntry { id, offset, frame_len, deleted });
    }
    Some((log_len, entries))
}

/// Replaces the index file atomically.
pub fn write(path: &Path, text: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
