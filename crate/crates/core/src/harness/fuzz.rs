//! Seeded generation and mutation fuzzers.
//!
//! Both draw from ChaCha8 seeded with `seed_from_u64`, so a given seed gives
//! the same sequence on every platform.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dpi::http::FUZZ_ID_HEADER;
use crate::packet::{make_doc, make_mpeg, FileKind, HttpMessage};

/// Pools the HTTP generator draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpTemplate {
    pub method: String,
    pub target: String,
    pub ports: Vec<u16>,
    pub kinds: Vec<FileKind>,
    pub content_types: Vec<String>,
    /// Authors put in DOC bodies when `whitelisted_author_share` says so.
    /// Otherwise a random alphanumeric name is drawn.
    pub authors: Vec<String>,
    pub whitelisted_author_share: f64,
    /// Extra Content-Type headers per request are drawn from 0..=this.
    pub max_duplicate_content_types: usize,
}

impl Default for HttpTemplate {
    fn default() -> Self {
        HttpTemplate {
            method: "POST".into(),
            target: "/upload".into(),
            ports: vec![8080, 8085, 8081],
            kinds: vec![FileKind::Mpeg, FileKind::Doc, FileKind::Unknown],
            content_types: vec![
                "video/mpeg".into(),
                "application/msword".into(),
                "text/plain".into(),
            ],
            authors: vec!["alice".into(), "bob".into()],
            whitelisted_author_share: 0.5,
            max_duplicate_content_types: 3,
        }
    }
}

/// One generated request together with what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzRequest {
    pub id: usize,
    pub ingress_port: u16,
    /// Kind of the body magic.
    pub kind: FileKind,
    /// Every Content-Type header, in wire order.
    pub content_types: Vec<String>,
    pub author: Option<String>,
    pub message: HttpMessage,
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let len = rng.random_range(1..=12);
    (0..len)
        .map(|_| *ALPHABET.choose(rng).expect("alphabet is not empty") as char)
        .collect()
}

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> Vec<u8> {
    let len = rng.random_range(1..=max);
    (0..len).map(|_| rng.random_range(b'a'..=b'z')).collect()
}

fn or_default<T: Clone>(pool: &[T], fallback: &[T]) -> Vec<T> {
    if pool.is_empty() { fallback.to_vec() } else { pool.to_vec() }
}

/// Generates `n` requests. Each carries its index in an `X-Fuzz-Id` header.
///
/// Empty pools fall back to the default template's pool.
pub fn gen_fuzz_http(template: &HttpTemplate, seed: u64, n: usize) -> Vec<FuzzRequest> {
    let defaults = HttpTemplate::default();
    let ports = or_default(&template.ports, &defaults.ports);
    let kinds = or_default(&template.kinds, &defaults.kinds);
    let types = or_default(&template.content_types, &defaults.content_types);
    let share = template.whitelisted_author_share.clamp(0.0, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let ingress_port = *ports.choose(&mut rng).expect("non-empty");
            let kind = *kinds.choose(&mut rng).expect("non-empty");
            let mut author = None;
            let body = match kind {
                FileKind::Mpeg => make_mpeg(&random_text(&mut rng, 24)),
                FileKind::Doc => {
                    let name = match template.authors.choose(&mut rng) {
                        Some(a) if rng.random_bool(share) => a.clone(),
                        _ => random_name(&mut rng),
                    };
                    let body = make_doc(&name, &random_text(&mut rng, 24));
                    author = Some(name);
                    body
                }
                FileKind::Unknown => random_text(&mut rng, 32),
            };
            let extra = rng.random_range(0..=template.max_duplicate_content_types);
            let content_types: Vec<String> = (0..=extra)
                .map(|_| types.choose(&mut rng).expect("non-empty").clone())
                .collect();
            let mut message = HttpMessage::request(&template.method, &template.target)
                .with_header("Host", "alg");
            for ct in &content_types {
                message = message.with_header("Content-Type", ct);
            }
            let message = message
                .with_header("Content-Length", &body.len().to_string())
                .with_header(FUZZ_ID_HEADER, &id.to_string())
                .with_body(body);
            FuzzRequest {
                id,
                ingress_port,
                kind,
                content_types,
                author,
                message,
            }
        })
        .collect()
}

/// Largest repeat count used by run-length expansion.
pub const MAX_EXPANSION: usize = 64;

/// Mutation operators. Each mutant applies exactly one to the seed bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// XOR one bit of one byte.
    ByteFlip { at: usize, bit: u8 },
    /// Repeat the `index`-th space-separated token.
    TokenDuplication { index: usize },
    /// Repeat `seed[start..start + len]` `times` times in place.
    RunExpansion { start: usize, len: usize, times: usize },
}

impl Mutation {
    pub fn apply(self, seed: &[u8]) -> Vec<u8> {
        match self {
            Mutation::ByteFlip { at, bit } => {
                let mut out = seed.to_vec();
                if let Some(b) = out.get_mut(at) {
                    *b ^= 1 << (bit % 8);
                }
                out
            }
            Mutation::TokenDuplication { index } => {
                let tokens: Vec<&[u8]> = seed.split(|&b| b == b' ').collect();
                let mut out = Vec::with_capacity(seed.len() * 2);
                for (i, t) in tokens.iter().enumerate() {
                    if i > 0 {
                        out.push(b' ');
                    }
                    out.extend_from_slice(t);
                    if i == index {
                        out.push(b' ');
                        out.extend_from_slice(t);
                    }
                }
                out
            }
            Mutation::RunExpansion { start, len, times } => {
                let start = start.min(seed.len());
                let end = (start + len).min(seed.len());
                let mut out = seed[..start].to_vec();
                for _ in 0..times {
                    out.extend_from_slice(&seed[start..end]);
                }
                out.extend_from_slice(&seed[end..]);
                out
            }
        }
    }
}

fn draw_mutation(rng: &mut ChaCha8Rng, seed: &[u8]) -> Mutation {
    let len = seed.len();
    match rng.random_range(0..3) {
        0 => Mutation::ByteFlip {
            at: rng.random_range(0..len),
            bit: rng.random_range(0..8),
        },
        1 => Mutation::TokenDuplication {
            index: rng.random_range(0..seed.split(|&b| b == b' ').count()),
        },
        _ => {
            let start = rng.random_range(0..len);
            Mutation::RunExpansion {
                start,
                len: rng.random_range(1..=(len - start).min(4)),
                times: rng.random_range(2..=MAX_EXPANSION),
            }
        }
    }
}

/// The mutation operators `mutate` would apply, in order.
pub fn mutations(seed_bytes: &[u8], seed: u64, n: usize) -> Vec<Mutation> {
    if seed_bytes.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw_mutation(&mut rng, seed_bytes)).collect()
}

/// `n` single-operator mutants of `seed_bytes`. An empty seed has no
/// mutants.
pub fn mutate(seed_bytes: &[u8], seed: u64, n: usize) -> Vec<Vec<u8>> {
    mutations(seed_bytes, seed, n)
        .into_iter()
        .map(|m| m.apply(seed_bytes))
        .collect()
}
