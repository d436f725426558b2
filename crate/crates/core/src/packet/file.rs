//! Toy file containers standing in for the DOC and MPEG payloads.
//!
//! DOC: ASCII `%DOC1\n`, then `AUTHOR:<name>\n`, then free-form body.
//! MPEG: the program-stream pack header `00 00 01 BA` followed by anything.

use serde::{Deserialize, Serialize};

use super::FormatError;

pub const DOC_MAGIC: &[u8] = b"%DOC1\n";
pub const MPEG_MAGIC: &[u8] = &[0x00, 0x00, 0x01, 0xBA];

const AUTHOR_PREFIX: &[u8] = b"AUTHOR:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Doc,
    Mpeg,
    Unknown,
}

impl FileKind {
    /// Media type a request carrying this kind must declare.
    pub fn content_type(self) -> Option<&'static str> {
        match self {
            FileKind::Doc => Some("application/msword"),
            FileKind::Mpeg => Some("video/mpeg"),
            FileKind::Unknown => None,
        }
    }
}

pub fn detect_file_kind(bytes: &[u8]) -> FileKind {
    if bytes.starts_with(DOC_MAGIC) {
        FileKind::Doc
    } else if bytes.starts_with(MPEG_MAGIC) {
        FileKind::Mpeg
    } else {
        FileKind::Unknown
    }
}

pub fn extract_author(doc: &[u8]) -> Result<String, FormatError> {
    let rest = doc.strip_prefix(DOC_MAGIC).ok_or(FormatError::NotDoc)?;
    let line = match rest.iter().position(|&b| b == b'\n') {
        Some(end) => &rest[..end],
        None => rest,
    };
    let author = line
        .strip_prefix(AUTHOR_PREFIX)
        .ok_or(FormatError::MissingAuthor)?;
    let author = author.strip_suffix(b"\r").unwrap_or(author);
    String::from_utf8(author.to_vec()).map_err(|_| FormatError::Utf8)
}

pub fn make_doc(author: &str, body: &[u8]) -> Vec<u8> {
    let mut out = DOC_MAGIC.to_vec();
    out.extend_from_slice(AUTHOR_PREFIX);
    out.extend_from_slice(author.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(body);
    out
}

pub fn make_mpeg(body: &[u8]) -> Vec<u8> {
    let mut out = MPEG_MAGIC.to_vec();
    out.extend_from_slice(body);
    out
}
