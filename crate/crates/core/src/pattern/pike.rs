use super::program::{Inst, Program};
use super::{BudgetExceeded, Engine, MatchResult};

/// Sparse set over program counters: O(1) insert, membership and clear.
struct StateSet {
    dense: Vec<usize>,
    sparse: Vec<usize>,
}

impl StateSet {
    fn new(capacity: usize) -> Self {
        StateSet {
            dense: Vec::with_capacity(capacity),
            sparse: vec![0; capacity],
        }
    }

    fn contains(&self, pc: usize) -> bool {
        let i = self.sparse[pc];
        i < self.dense.len() && self.dense[i] == pc
    }

    fn insert(&mut self, pc: usize) {
        self.sparse[pc] = self.dense.len();
        self.dense.push(pc);
    }

    fn clear(&mut self) {
        self.dense.clear();
    }
}

struct Sim<'a> {
    prog: &'a Program,
    len: usize,
    steps: u64,
    budget: u64,
    stack: Vec<usize>,
}

impl Sim<'_> {
    /// Adds `pc` and its epsilon closure at `pos`. Returns true once a
    /// `Match` state is inserted.
    fn add(&mut self, set: &mut StateSet, pc: usize, pos: usize) -> Result<bool, BudgetExceeded> {
        self.stack.push(pc);
        while let Some(pc) = self.stack.pop() {
            if set.contains(pc) {
                continue;
            }
            if self.steps >= self.budget {
                self.stack.clear();
                return Err(BudgetExceeded {
                    engine: Engine::Budgeted,
                    budget: self.budget,
                });
            }
            self.steps += 1;
            set.insert(pc);
            match self.prog.insts[pc] {
                Inst::Split(first, second) => {
                    self.stack.push(second);
                    self.stack.push(first);
                }
                Inst::Jmp(target) => self.stack.push(target),
                Inst::Assert(anchor) => {
                    if anchor.holds(pos, self.len) {
                        self.stack.push(pc + 1);
                    }
                }
                // set semantics already discard empty iterations
                Inst::LoopEnter(_) | Inst::LoopCheck(_) => self.stack.push(pc + 1),
                Inst::Match => {
                    self.stack.clear();
                    return Ok(true);
                }
                Inst::Byte(_) | Inst::Any | Inst::Class(_) => {}
            }
        }
        Ok(false)
    }
}

pub(crate) fn search(
    prog: &Program,
    input: &[u8],
    budget: u64,
) -> Result<MatchResult, BudgetExceeded> {
    let mut sim = Sim {
        prog,
        len: input.len(),
        steps: 0,
        budget,
        stack: Vec::new(),
    };
    let mut current = StateSet::new(prog.len());
    let mut next = StateSet::new(prog.len());
    let done = |steps, matched| MatchResult {
        matched,
        steps,
        engine: Engine::Budgeted,
    };

    for pos in 0..=input.len() {
        // unanchored search: a fresh thread starts at every position
        if sim.add(&mut current, 0, pos)? {
            return Ok(done(sim.steps, true));
        }
        let Some(&byte) = input.get(pos) else { break };
        next.clear();
        for i in 0..current.dense.len() {
            let pc = current.dense[i];
            let advances = match prog.insts[pc] {
                Inst::Byte(b) => b == byte,
                Inst::Any => true,
                Inst::Class(set) => set.contains(byte),
                _ => false,
            };
            if advances && sim.add(&mut next, pc + 1, pos + 1)? {
                return Ok(done(sim.steps, true));
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(done(sim.steps, false))
}
