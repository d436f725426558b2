use super::ParseError;

/// Verbs whose control line is followed by the file contents in the same
/// payload. CP is not a standard FTP verb but is treated as an upload.
pub const UPLOAD_VERBS: &[&str] = &["STOR", "STOU", "APPE", "CP"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpCommand {
    pub verb: String,
    pub argument: String,
}

impl FtpCommand {
    pub fn new(verb: &str, argument: &str) -> Self {
        FtpCommand {
            verb: verb.to_ascii_uppercase(),
            argument: argument.to_string(),
        }
    }

    pub fn is_upload(&self) -> bool {
        UPLOAD_VERBS.contains(&self.verb.as_str())
    }

    pub fn to_line(&self) -> Vec<u8> {
        let mut out = self.verb.clone().into_bytes();
        if !self.argument.is_empty() {
            out.push(b' ');
            out.extend_from_slice(self.argument.as_bytes());
        }
        out.extend_from_slice(b"\r\n");
        out
    }
}

fn strip_eol(line: &[u8]) -> &[u8] {
    line.strip_suffix(b"\r\n")
        .or_else(|| line.strip_suffix(b"\n"))
        .unwrap_or(line)
}

pub fn parse_ftp_command(line: &[u8]) -> Result<FtpCommand, ParseError> {
    let line = std::str::from_utf8(strip_eol(line)).map_err(|_| ParseError::Utf8)?;
    if line.is_empty() {
        return Err(ParseError::EmptyCommand);
    }
    let (verb, argument) = line.split_once(' ').unwrap_or((line, ""));
    if verb.is_empty() || !verb.bytes().all(|b| b.is_ascii_alphabetic()) {
        return Err(ParseError::BadVerb(verb.to_string()));
    }
    Ok(FtpCommand {
        verb: verb.to_ascii_uppercase(),
        argument: argument.to_string(),
    })
}

/// Position just past the first CRLF (or LF), or the whole buffer when the
/// line is unterminated.
fn line_end(bytes: &[u8]) -> usize {
    bytes
        .iter()
        .position(|&b| b == b'\n')
        .map_or(bytes.len(), |i| i + 1)
}

/// One client-to-server FTP payload: a control line, optionally followed by
/// in-band transfer data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpMessage {
    pub line: Vec<u8>,
    pub data: Vec<u8>,
}

impl FtpMessage {
    pub fn new(command: &FtpCommand, data: impl Into<Vec<u8>>) -> Self {
        FtpMessage {
            line: command.to_line(),
            data: data.into(),
        }
    }

    pub fn decode(payload: &[u8]) -> Self {
        let end = line_end(payload);
        FtpMessage {
            line: payload[..end].to_vec(),
            data: payload[end..].to_vec(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.line.clone();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn command(&self) -> Result<FtpCommand, ParseError> {
        parse_ftp_command(&self.line)
    }

    /// The control line without its terminator, lossily decoded.
    pub fn line_text(&self) -> String {
        String::from_utf8_lossy(strip_eol(&self.line)).into_owned()
    }
}

/// Server-to-client reply: `<code> <text>\r\n` plus optional download data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpReply {
    pub code: u16,
    pub text: String,
    pub data: Vec<u8>,
}

impl FtpReply {
    pub fn new(code: u16, text: &str) -> Self {
        FtpReply {
            code,
            text: text.to_string(),
            data: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{} {}\r\n", self.code, self.text).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(payload: &[u8]) -> Option<Self> {
        let end = line_end(payload);
        let line = std::str::from_utf8(strip_eol(&payload[..end])).ok()?;
        let (code, text) = line.split_once(' ').unwrap_or((line, ""));
        if code.len() != 3 {
            return None;
        }
        Some(FtpReply {
            code: code.parse().ok()?,
            text: text.to_string(),
            data: payload[end..].to_vec(),
        })
    }
}
