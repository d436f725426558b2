//! HTTP inspection: framing normalization, URL filtering, content routing and
//! author whitelisting.

use serde::Serialize;

use crate::packet::{detect_file_kind, extract_author, parse_http_request, FileKind, HttpMessage, IpAddr};
use crate::pattern::match_budgeted;
use crate::policy::{HeaderMode, PolicySet};

/// Upper bound on requests recovered from one payload in last-wins mode.
pub const MAX_PIPELINED: usize = 16;

/// Testbed correlation header copied from a request onto every response it
/// causes, so scenario oracles can pair them up.
pub const FUZZ_ID_HEADER: &str = "X-Fuzz-Id";

const CONTENT_LENGTH: &str = "Content-Length";
const CONTENT_TYPE: &str = "Content-Type";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub status: u16,
    pub reason: String,
}

impl Reject {
    pub fn new(status: u16, reason: impl Into<String>) -> Self {
        Reject {
            status,
            reason: reason.into(),
        }
    }

    /// The response the ALG sends back in place of the rejected request.
    pub fn to_response(&self, request: Option<&HttpMessage>) -> HttpMessage {
        let phrase = match self.status {
            400 => "Bad Request",
            403 => "Forbidden",
            415 => "Unsupported Media Type",
            _ => "Error",
        };
        let mut resp = HttpMessage::response(self.status, phrase)
            .with_header(CONTENT_TYPE, "text/plain")
            .with_header(CONTENT_LENGTH, &self.reason.len().to_string())
            .with_body(self.reason.as_bytes());
        if let Some(id) = request.and_then(|r| r.header(FUZZ_ID_HEADER)) {
            resp = resp.with_header(FUZZ_ID_HEADER, id);
        }
        resp
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedRequest {
    /// The request with at most one Content-Length and one Content-Type
    /// (the authoritative occurrence) and its body cut to `content_length`.
    pub message: HttpMessage,
    pub content_length: usize,
    pub content_type: Option<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub request: NormalizedRequest,
    /// Bytes past the resolved body length. Always empty in strict mode.
    pub residual: Vec<u8>,
}

fn parse_length(value: &str) -> Option<usize> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    value.parse().ok()
}

/// Resolves message framing under `mode`.
///
/// Strict rejects any duplicated Content-Length or Content-Type and any
/// Content-Length that does not describe the whole body. Last-wins takes the
/// final occurrence of each header as authoritative and hands back whatever
/// follows the resolved body as `residual`, which a pipelining peer would
/// read as the next request.
pub fn normalize(req: &HttpMessage, mode: HeaderMode) -> Result<Normalized, Reject> {
    let lengths: Vec<&str> = req.header_values(CONTENT_LENGTH).collect();
    let types: Vec<&str> = req.header_values(CONTENT_TYPE).collect();
    let mut notes = Vec::new();
    if lengths.len() > 1 {
        notes.push(format!("duplicate content-length: {}", lengths.join(", ")));
    }
    if types.len() > 1 {
        notes.push(format!("duplicate content-type: {}", types.join(", ")));
    }
    if mode == HeaderMode::Strict {
        if lengths.len() > 1 {
            return Err(Reject::new(400, "duplicate content-length"));
        }
        if types.len() > 1 {
            return Err(Reject::new(400, "duplicate content-type"));
        }
    }

    let content_length = match lengths.last() {
        None => 0,
        Some(v) => parse_length(v).ok_or_else(|| Reject::new(400, "invalid content-length"))?,
    };
    if content_length > req.body.len() {
        return Err(Reject::new(400, "incomplete body"));
    }
    if mode == HeaderMode::Strict && content_length != req.body.len() {
        return Err(Reject::new(400, "content-length mismatch"));
    }
    let residual = req.body[content_length..].to_vec();
    if !residual.is_empty() {
        notes.push(format!("{} bytes beyond content-length", residual.len()));
    }

    let last_cl = req
        .headers
        .iter()
        .rposition(|(n, _)| n.eq_ignore_ascii_case(CONTENT_LENGTH));
    let last_ct = req
        .headers
        .iter()
        .rposition(|(n, _)| n.eq_ignore_ascii_case(CONTENT_TYPE));
    let headers = req
        .headers
        .iter()
        .enumerate()
        .filter_map(|(i, (name, value))| {
            if name.eq_ignore_ascii_case(CONTENT_LENGTH) {
                (Some(i) == last_cl).then(|| (name.clone(), content_length.to_string()))
            } else if name.eq_ignore_ascii_case(CONTENT_TYPE) {
                (Some(i) == last_ct).then(|| (name.clone(), value.clone()))
            } else {
                Some((name.clone(), value.clone()))
            }
        })
        .collect();

    Ok(Normalized {
        request: NormalizedRequest {
            message: HttpMessage {
                start: req.start.clone(),
                headers,
                body: req.body[..content_length].to_vec(),
            },
            content_length,
            content_type: types.last().map(|s| s.to_string()),
            notes,
        },
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteDecision {
    Redirect {
        dest_ip: IpAddr,
        dest_port: u16,
        kind: FileKind,
    },
    Reject(Reject),
}

/// Picks the content route bound to (`ingress_port`, `src_ip`) and checks
/// that both the body magic and the declared Content-Type match its kind.
pub fn route_by_content(
    policy: &PolicySet,
    req: &NormalizedRequest,
    ingress_port: u16,
    src_ip: IpAddr,
) -> RouteDecision {
    let Some(route) = policy
        .content_routes
        .iter()
        .find(|r| r.ingress_port == ingress_port && r.allowed_src_ip == src_ip)
    else {
        return RouteDecision::Reject(Reject::new(403, "no route for this port and client"));
    };
    let kind = detect_file_kind(&req.message.body);
    let declared = req.content_type.as_deref();
    if kind != route.required_kind || declared != route.required_kind.content_type() {
        return RouteDecision::Reject(Reject::new(415, "content does not match the route"));
    }
    RouteDecision::Redirect {
        dest_ip: route.dest_ip,
        dest_port: route.dest_port,
        kind,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Allow,
    Deny(String),
}

pub fn check_author(policy: &PolicySet, doc_body: &[u8]) -> Admission {
    match extract_author(doc_body) {
        Err(_) => Admission::Deny("unparseable-document".into()),
        Ok(author) if policy.author_whitelist.contains(&author) => Admission::Allow,
        Ok(_) => Admission::Deny("author-not-whitelisted".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlCheck {
    pub admission: Admission,
    pub steps: u64,
}

/// Case-sensitive, unanchored match of `target` against every blocklist
/// pattern on the budgeted engine. Running out of budget counts as a match.
pub fn filter_url(policy: &PolicySet, target: &str) -> UrlCheck {
    let mut steps = 0;
    for pattern in &policy.url_blocklist {
        match match_budgeted(pattern, target.as_bytes(), policy.url_filter_budget) {
            Ok(r) => {
                steps += r.steps;
                if r.matched {
                    return UrlCheck {
                        admission: Admission::Deny(format!("url-blocked:{pattern}")),
                        steps,
                    };
                }
            }
            Err(_) => {
                return UrlCheck {
                    admission: Admission::Deny(format!("url-filter-budget:{pattern}")),
                    steps: steps + policy.url_filter_budget,
                }
            }
        }
    }
    UrlCheck {
        admission: Admission::Allow,
        steps,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpOutcome {
    /// Proxy the request to a server.
    Forward {
        dest_ip: IpAddr,
        dest_port: u16,
        request: HttpMessage,
    },
    /// Answer the client directly.
    Respond(HttpMessage),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HttpInspection {
    pub outcomes: Vec<HttpOutcome>,
    pub steps: u64,
    pub notes: Vec<String>,
}

fn admit_one(
    policy: &PolicySet,
    req: NormalizedRequest,
    ingress_port: u16,
    src_ip: IpAddr,
    steps: &mut u64,
) -> HttpOutcome {
    let reject = |r: Reject| HttpOutcome::Respond(r.to_response(Some(&req.message)));
    let url = filter_url(policy, req.message.target().unwrap_or_default());
    *steps += url.steps;
    if let Admission::Deny(reason) = url.admission {
        return reject(Reject::new(403, reason));
    }
    let (dest_ip, dest_port) = match route_by_content(policy, &req, ingress_port, src_ip) {
        RouteDecision::Reject(r) => return reject(r),
        RouteDecision::Redirect {
            dest_ip,
            dest_port,
            kind,
        } => {
            if kind == FileKind::Doc {
                if let Admission::Deny(reason) = check_author(policy, &req.message.body) {
                    return reject(Reject::new(403, reason));
                }
            }
            (dest_ip, dest_port)
        }
    };
    let mut request = req.message;
    request.headers.push(("X-Forwarded-For".into(), src_ip.to_string()));
    HttpOutcome::Forward {
        dest_ip,
        dest_port,
        request,
    }
}

/// Full HTTP pipeline for one client payload arriving on `ingress_port`.
/// Each request recovered from the payload yields exactly one outcome.
pub fn inspect_http(
    policy: &PolicySet,
    payload: &[u8],
    ingress_port: u16,
    src_ip: IpAddr,
) -> HttpInspection {
    let mut out = HttpInspection::default();
    let mut current = match parse_http_request(payload) {
        Ok(m) => m,
        Err(e) => {
            out.notes.push(format!("parse error: {e}"));
            out.outcomes.push(HttpOutcome::Respond(
                Reject::new(400, "malformed request").to_response(None),
            ));
            return out;
        }
    };
    loop {
        let normalized = match normalize(&current, policy.header_mode) {
            Ok(n) => n,
            Err(r) => {
                out.outcomes.push(HttpOutcome::Respond(r.to_response(Some(&current))));
                return out;
            }
        };
        out.notes.extend(normalized.request.notes.iter().cloned());
        let outcome = admit_one(policy, normalized.request, ingress_port, src_ip, &mut out.steps);
        out.outcomes.push(outcome);
        if normalized.residual.is_empty() {
            return out;
        }
        if out.outcomes.len() == MAX_PIPELINED {
            out.notes.push("pipelined request limit reached".into());
            return out;
        }
        match parse_http_request(&normalized.residual) {
            Ok(next) => current = next,
            Err(e) => {
                out.notes.push(format!("unparseable residual dropped: {e}"));
                return out;
            }
        }
    }
}
