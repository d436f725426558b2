use super::ast::{Ast, ByteClass, RepeatKind};

/// 256-bit membership set for a character class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ClassSet([u64; 4]);

impl ClassSet {
    fn from_class(class: &ByteClass) -> Self {
        let mut bits = [0u64; 4];
        for b in 0..=255u8 {
            if class.contains(b) {
                bits[(b >> 6) as usize] |= 1 << (b & 63);
            }
        }
        ClassSet(bits)
    }

    pub(crate) fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1 << (b & 63)) != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Anchor {
    Start,
    End,
}

impl Anchor {
    pub(crate) fn holds(self, pos: usize, len: usize) -> bool {
        match self {
            Anchor::Start => pos == 0,
            Anchor::End => pos == len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Inst {
    Byte(u8),
    Any,
    Class(ClassSet),
    Assert(Anchor),
    /// Try the first target, fall back to the second.
    Split(usize, usize),
    Jmp(usize),
    /// Record the position at which a loop iteration starts.
    LoopEnter(usize),
    /// Fail the iteration if it consumed nothing. Only emitted for loops
    /// whose body can match empty, so backtracking cannot spin forever.
    LoopCheck(usize),
    Match,
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub(crate) insts: Vec<Inst>,
    pub(crate) loop_slots: usize,
}

impl Program {
    pub(crate) fn compile(ast: &Ast) -> Program {
        let mut c = Compiler {
            insts: Vec::new(),
            loop_slots: 0,
        };
        c.node(ast);
        c.insts.push(Inst::Match);
        Program {
            insts: c.insts,
            loop_slots: c.loop_slots,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.insts.len()
    }
}

struct Compiler {
    insts: Vec<Inst>,
    loop_slots: usize,
}

impl Compiler {
    fn pc(&self) -> usize {
        self.insts.len()
    }

    fn emit(&mut self, inst: Inst) -> usize {
        self.insts.push(inst);
        self.insts.len() - 1
    }

    fn node(&mut self, ast: &Ast) {
        match ast {
            Ast::Empty => {}
            Ast::Byte(b) => {
                self.emit(Inst::Byte(*b));
            }
            Ast::Any => {
                self.emit(Inst::Any);
            }
            Ast::Class(class) => {
                self.emit(Inst::Class(ClassSet::from_class(class)));
            }
            Ast::StartAnchor => {
                self.emit(Inst::Assert(Anchor::Start));
            }
            Ast::EndAnchor => {
                self.emit(Inst::Assert(Anchor::End));
            }
            Ast::Concat(items) => items.iter().for_each(|i| self.node(i)),
            Ast::Alternate(branches) => {
                let mut exits = Vec::new();
                let (last, rest) = branches.split_last().expect("alternation has branches");
                for branch in rest {
                    let split = self.emit(Inst::Split(0, 0));
                    self.node(branch);
                    exits.push(self.emit(Inst::Jmp(0)));
                    self.insts[split] = Inst::Split(split + 1, self.pc());
                }
                self.node(last);
                let end = self.pc();
                for j in exits {
                    self.insts[j] = Inst::Jmp(end);
                }
            }
            Ast::Repeat { kind, node } => match kind {
                RepeatKind::Optional => {
                    let split = self.emit(Inst::Split(0, 0));
                    self.node(node);
                    self.insts[split] = Inst::Split(split + 1, self.pc());
                }
                RepeatKind::Star => self.star(node),
                RepeatKind::Plus if node.nullable() => {
                    self.node(node);
                    self.star(node);
                }
                RepeatKind::Plus => {
                    let top = self.pc();
                    self.node(node);
                    let split = self.emit(Inst::Split(top, 0));
                    self.insts[split] = Inst::Split(top, split + 1);
                }
            },
        }
    }

    fn star(&mut self, body: &Ast) {
        let top = self.emit(Inst::Split(0, 0));
        if body.nullable() {
            let slot = self.loop_slots;
            self.loop_slots += 1;
            self.emit(Inst::LoopEnter(slot));
            self.node(body);
            self.emit(Inst::LoopCheck(slot));
        } else {
            self.node(body);
        }
        self.emit(Inst::Jmp(top));
        self.insts[top] = Inst::Split(top + 1, self.pc());
    }
}
