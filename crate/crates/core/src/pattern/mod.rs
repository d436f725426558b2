//! A small byte-oriented regex dialect with two interchangeable engines.
//!
//! Supported syntax: literals, `.`, classes (`[a-z]`, `[^0-9]`), grouping,
//! alternation, the `*`, `+` and `?` quantifiers, and the `^` / `$` anchors.
//! A backslash escapes any metacharacter. There are no captures and no
//! backreferences.
//!
//! Both engines answer the same question ("does the pattern match anywhere
//! in the input?") and count work in exact, deterministic steps:
//!
//! * [`match_backtracking`] walks the program depth-first and retries every
//!   alternative on failure. One step is one instruction visit. Ambiguous
//!   quantified alternations such as `(a|a)*b` make it exponential.
//! * [`match_budgeted`] advances the set of live program states in lock-step
//!   over the input. One step is one insertion into a state set, so the work
//!   is at most `states * (input_len + 1)`, and it refuses to go past the
//!   caller's budget.

mod ast;
mod backtrack;
mod pike;
mod program;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Ast, ByteClass, RepeatKind};
use program::Program;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {position}: {message}")]
pub struct SyntaxError {
    pub position: usize,
    pub message: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Backtracking,
    Budgeted,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Backtracking => "backtracking",
            Engine::Budgeted => "budgeted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchResult {
    pub matched: bool,
    pub steps: u64,
    pub engine: Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{engine} engine exceeded its budget of {budget} steps")]
pub struct BudgetExceeded {
    pub engine: Engine,
    pub budget: u64,
}

/// A compiled pattern. Immutable; clone freely.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    ast: Ast,
    program: Program,
}

impl Pattern {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    /// Number of program states; bounds the budgeted engine's per-position work.
    pub fn state_count(&self) -> usize {
        self.program.len()
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

pub fn compile(text: &str) -> Result<Pattern, SyntaxError> {
    let ast = ast::parse(text)?;
    let program = Program::compile(&ast);
    Ok(Pattern {
        source: text.to_string(),
        ast,
        program,
    })
}

/// Unbounded backtracking search. Exponential on evil inputs; callers that
/// cannot afford that should use [`match_backtracking_limited`].
pub fn match_backtracking(pattern: &Pattern, input: &[u8]) -> MatchResult {
    match backtrack::search(&pattern.program, input, u64::MAX) {
        Ok(r) => r,
        Err(_) => unreachable!("u64::MAX steps cannot be exhausted in practice"),
    }
}

/// Backtracking search with a watchdog: gives up after `limit` steps.
pub fn match_backtracking_limited(
    pattern: &Pattern,
    input: &[u8],
    limit: u64,
) -> Result<MatchResult, BudgetExceeded> {
    backtrack::search(&pattern.program, input, limit)
}

pub fn match_budgeted(
    pattern: &Pattern,
    input: &[u8],
    budget: u64,
) -> Result<MatchResult, BudgetExceeded> {
    pike::search(&pattern.program, input, budget)
}

/// Runs `engine` with `limit` as its budget (budgeted) or watchdog (backtracking).
pub fn run(
    engine: Engine,
    pattern: &Pattern,
    input: &[u8],
    limit: u64,
) -> Result<MatchResult, BudgetExceeded> {
    match engine {
        Engine::Backtracking => match_backtracking_limited(pattern, input, limit),
        Engine::Budgeted => match_budgeted(pattern, input, limit),
    }
}
