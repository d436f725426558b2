use super::ParseError;

const CRLF: &[u8] = b"\r\n";
const HEADER_END: &[u8] = b"\r\n\r\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartLine {
    Request {
        method: String,
        target: String,
        version: String,
    },
    Response {
        version: String,
        status: u16,
        reason: String,
    },
}

/// An HTTP/1.x message with its header list kept exactly as it appeared on
/// the wire: order preserved, duplicates preserved, names in their original
/// case. Lookups are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    pub start: StartLine,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpMessage {
    pub fn request(method: &str, target: &str) -> Self {
        HttpMessage {
            start: StartLine::Request {
                method: method.to_string(),
                target: target.to_string(),
                version: "HTTP/1.1".to_string(),
            },
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn response(status: u16, reason: &str) -> Self {
        HttpMessage {
            start: StartLine::Response {
                version: "HTTP/1.1".to_string(),
                status,
                reason: reason.to_string(),
            },
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }

    /// Every value of `name`, in wire order.
    pub fn header_values<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers
            .iter()
            .filter(move |(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn header_count(&self, name: &str) -> usize {
        self.headers
            .iter()
            .filter(|(n, _)| n.eq_ignore_ascii_case(name))
            .count()
    }

    pub fn method(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { method, .. } => Some(method),
            StartLine::Response { .. } => None,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { target, .. } => Some(target),
            StartLine::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match &self.start {
            StartLine::Response { status, .. } => Some(*status),
            StartLine::Request { .. } => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serialize_http(self)
    }
}

/// Splits `bytes` into (head text, body). The body is everything after the
/// first blank line; no Content-Length reconciliation happens here.
fn split_head(bytes: &[u8]) -> Result<(&str, &[u8]), ParseError> {
    let end = bytes
        .windows(HEADER_END.len())
        .position(|w| w == HEADER_END)
        .ok_or(ParseError::MissingHeaderTerminator)?;
    let head = std::str::from_utf8(&bytes[..end]).map_err(|_| ParseError::Utf8)?;
    Ok((head, &bytes[end + HEADER_END.len()..]))
}

fn parse_headers<'a>(
    lines: impl Iterator<Item = &'a str>,
) -> Result<Vec<(String, String)>, ParseError> {
    lines
        .map(|line| {
            let (name, value) = line
                .split_once(':')
                .ok_or_else(|| ParseError::HeaderLine(line.to_string()))?;
            if name.is_empty() || name.bytes().any(|b| b.is_ascii_whitespace()) {
                return Err(ParseError::HeaderLine(line.to_string()));
            }
            Ok((name.to_string(), value.trim_matches([' ', '\t']).to_string()))
        })
        .collect()
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_graphic())
}

pub fn parse_http_request(bytes: &[u8]) -> Result<HttpMessage, ParseError> {
    let (head, body) = split_head(bytes)?;
    let mut lines = head.split("\r\n");
    let start = lines.next().unwrap_or_default();
    let mut parts = start.split(' ');
    let (method, target, version) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(t), Some(v), None)
            if is_token(m) && is_token(t) && is_token(v) && v.starts_with("HTTP/") =>
        {
            (m, t, v)
        }
        _ => return Err(ParseError::StartLine(start.to_string())),
    };
    Ok(HttpMessage {
        start: StartLine::Request {
            method: method.to_string(),
            target: target.to_string(),
            version: version.to_string(),
        },
        headers: parse_headers(lines)?,
        body: body.to_vec(),
    })
}

pub fn parse_http_response(bytes: &[u8]) -> Result<HttpMessage, ParseError> {
    let (head, body) = split_head(bytes)?;
    let mut lines = head.split("\r\n");
    let start = lines.next().unwrap_or_default();
    let bad = || ParseError::StartLine(start.to_string());
    let mut parts = start.splitn(3, ' ');
    let version = parts.next().filter(|v| v.starts_with("HTTP/")).ok_or_else(bad)?;
    let status = parts
        .next()
        .filter(|s| s.len() == 3)
        .and_then(|s| s.parse::<u16>().ok())
        .ok_or_else(bad)?;
    let reason = parts.next().unwrap_or_default();
    Ok(HttpMessage {
        start: StartLine::Response {
            version: version.to_string(),
            status,
            reason: reason.to_string(),
        },
        headers: parse_headers(lines)?,
        body: body.to_vec(),
    })
}

pub fn serialize_http(msg: &HttpMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + msg.body.len());
    match &msg.start {
        StartLine::Request {
            method,
            target,
            version,
        } => out.extend_from_slice(format!("{method} {target} {version}").as_bytes()),
        StartLine::Response {
            version,
            status,
            reason,
        } => out.extend_from_slice(format!("{version} {status} {reason}").as_bytes()),
    }
    out.extend_from_slice(CRLF);
    for (name, value) in &msg.headers {
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(CRLF);
    }
    out.extend_from_slice(CRLF);
    out.extend_from_slice(&msg.body);
    out
}
