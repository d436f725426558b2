use std::fmt;

use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepeatKind {
    Star,
    Plus,
    Optional,
}

impl RepeatKind {
    fn symbol(self) -> char {
        match self {
            RepeatKind::Star => '*',
            RepeatKind::Plus => '+',
            RepeatKind::Optional => '?',
        }
    }
}

/// Ranges are kept in source order so printing reproduces the class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteClass {
    pub negated: bool,
    pub ranges: Vec<(u8, u8)>,
}

impl ByteClass {
    pub fn contains(&self, b: u8) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo <= b && b <= hi) != self.negated
    }
}

/// Parsed pattern. The parser flattens nested concatenations and
/// alternations and drops empty groups inside concatenations, so each
/// pattern has one canonical tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ast {
    Empty,
    Byte(u8),
    Any,
    Class(ByteClass),
    StartAnchor,
    EndAnchor,
    Concat(Vec<Ast>),
    Alternate(Vec<Ast>),
    Repeat { kind: RepeatKind, node: Box<Ast> },
}

impl Ast {
    pub fn nullable(&self) -> bool {
        match self {
            Ast::Empty | Ast::StartAnchor | Ast::EndAnchor => true,
            Ast::Byte(_) | Ast::Any | Ast::Class(_) => false,
            Ast::Concat(items) => items.iter().all(Ast::nullable),
            Ast::Alternate(branches) => branches.iter().any(Ast::nullable),
            Ast::Repeat { kind, node } => match kind {
                RepeatKind::Star | RepeatKind::Optional => true,
                RepeatKind::Plus => node.nullable(),
            },
        }
    }
}

const META: &[u8] = b"\\.[]()|*+?^$";
const CLASS_META: &[u8] = b"\\]^-[";

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

pub fn parse(text: &str) -> Result<Ast, SyntaxError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    if let Some(bad) = p.src.iter().position(|b| !b.is_ascii()) {
        return Err(p.err_at(bad, "non-ASCII character"));
    }
    let ast = p.alternation()?;
    if p.pos < p.src.len() {
        return Err(p.err("unmatched ')'"));
    }
    Ok(ast)
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn err(&self, message: &'static str) -> SyntaxError {
        self.err_at(self.pos, message)
    }

    fn err_at(&self, position: usize, message: &'static str) -> SyntaxError {
        SyntaxError { position, message }
    }

    fn alternation(&mut self) -> Result<Ast, SyntaxError> {
        let mut branches = Vec::new();
        push_flat_alt(&mut branches, self.concatenation()?);
        while self.peek() == Some(b'|') {
            self.bump();
            push_flat_alt(&mut branches, self.concatenation()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Ast::Alternate(branches)
        })
    }

    fn concatenation(&mut self) -> Result<Ast, SyntaxError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == b'|' || c == b')' {
                break;
            }
            match self.repetition()? {
                Ast::Empty => {}
                Ast::Concat(inner) => items.extend(inner),
                other => items.push(other),
            }
        }
        Ok(match items.len() {
            0 => Ast::Empty,
            1 => items.pop().unwrap(),
            _ => Ast::Concat(items),
        })
    }

    fn repetition(&mut self) -> Result<Ast, SyntaxError> {
        let mut node = self.atom()?;
        while let Some(kind) = match self.peek() {
            Some(b'*') => Some(RepeatKind::Star),
            Some(b'+') => Some(RepeatKind::Plus),
            Some(b'?') => Some(RepeatKind::Optional),
            _ => None,
        } {
            self.bump();
            node = Ast::Repeat {
                kind,
                node: Box::new(node),
            };
        }
        Ok(node)
    }

    fn atom(&mut self) -> Result<Ast, SyntaxError> {
        let start = self.pos;
        let c = self.bump().ok_or_else(|| self.err("unexpected end of pattern"))?;
        Ok(match c {
            b'(' => {
                let inner = self.alternation()?;
                if self.bump() != Some(b')') {
                    return Err(self.err_at(self.pos.min(self.src.len()), "unclosed group"));
                }
                inner
            }
            b'.' => Ast::Any,
            b'^' => Ast::StartAnchor,
            b'$' => Ast::EndAnchor,
            b'[' => Ast::Class(self.class(start)?),
            b'\\' => Ast::Byte(self.bump().ok_or_else(|| self.err("dangling escape"))?),
            b'*' | b'+' | b'?' => return Err(self.err_at(start, "nothing to repeat")),
            b']' => return Err(self.err_at(start, "unmatched ']'")),
            other => Ast::Byte(other),
        })
    }

    fn class_byte(&mut self) -> Result<u8, SyntaxError> {
        match self.bump() {
            Some(b'\\') => self.bump().ok_or_else(|| self.err("dangling escape")),
            Some(b) => Ok(b),
            None => Err(self.err("unclosed class")),
        }
    }

    fn class(&mut self, open: usize) -> Result<ByteClass, SyntaxError> {
        let negated = self.peek() == Some(b'^');
        if negated {
            self.bump();
        }
        let mut ranges = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unclosed class")),
                Some(b']') => {
                    self.bump();
                    break;
                }
                Some(_) => {
                    let lo = self.class_byte()?;
                    let hi = if self.peek() == Some(b'-')
                        && self.src.get(self.pos + 1).is_some_and(|&b| b != b']')
                    {
                        self.bump();
                        let hi = self.class_byte()?;
                        if hi < lo {
                            return Err(self.err("reversed class range"));
                        }
                        hi
                    } else {
                        lo
                    };
                    ranges.push((lo, hi));
                }
            }
        }
        if ranges.is_empty() {
            return Err(self.err_at(open, "empty class"));
        }
        Ok(ByteClass { negated, ranges })
    }
}

fn push_flat_alt(branches: &mut Vec<Ast>, node: Ast) {
    match node {
        Ast::Alternate(inner) => branches.extend(inner),
        other => branches.push(other),
    }
}

// Printing precedence: alternation < concatenation < repetition < atom.
const PREC_ALT: u8 = 0;
const PREC_CONCAT: u8 = 1;
const PREC_REPEAT: u8 = 2;
const PREC_ATOM: u8 = 3;

fn write_byte(f: &mut fmt::Formatter<'_>, b: u8, meta: &[u8]) -> fmt::Result {
    if meta.contains(&b) {
        write!(f, "\\{}", b as char)
    } else {
        write!(f, "{}", b as char)
    }
}

impl Ast {
    fn write(&self, f: &mut fmt::Formatter<'_>, ctx: u8) -> fmt::Result {
        match self {
            Ast::Empty => {
                if ctx >= PREC_REPEAT {
                    f.write_str("()")?;
                }
                Ok(())
            }
            Ast::Byte(b) => write_byte(f, *b, META),
            Ast::Any => f.write_str("."),
            Ast::StartAnchor => f.write_str("^"),
            Ast::EndAnchor => f.write_str("$"),
            Ast::Class(class) => {
                f.write_str("[")?;
                if class.negated {
                    f.write_str("^")?;
                }
                for &(lo, hi) in &class.ranges {
                    write_byte(f, lo, CLASS_META)?;
                    if hi != lo {
                        f.write_str("-")?;
                        write_byte(f, hi, CLASS_META)?;
                    }
                }
                f.write_str("]")
            }
            Ast::Concat(items) => {
                let parens = ctx > PREC_CONCAT;
                if parens {
                    f.write_str("(")?;
                }
                for item in items {
                    item.write(f, PREC_REPEAT)?;
                }
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Ast::Alternate(branches) => {
                let parens = ctx > PREC_ALT;
                if parens {
                    f.write_str("(")?;
                }
                for (i, branch) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    branch.write(f, PREC_CONCAT)?;
                }
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Ast::Repeat { kind, node } => {
                // a repetition of a repetition needs no parentheses: `a*?`
                let inner_ctx = if matches!(**node, Ast::Repeat { .. }) {
                    PREC_REPEAT
                } else {
                    PREC_ATOM
                };
                node.write(f, inner_ctx)?;
                write!(f, "{}", kind.symbol())
            }
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, PREC_ALT)
    }
}
