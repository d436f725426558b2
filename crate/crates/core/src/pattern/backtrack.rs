use super::program::{Inst, Program};
use super::{BudgetExceeded, Engine, MatchResult};

enum Job {
    Run { pc: usize, pos: usize },
    RestoreSlot { slot: usize, value: usize },
}

/// Depth-first search with no memoization: every alternative is retried on
/// failure, at every start position. That is exactly what makes it slow on
/// ambiguous patterns.
pub(crate) fn search(
    prog: &Program,
    input: &[u8],
    limit: u64,
) -> Result<MatchResult, BudgetExceeded> {
    let mut steps: u64 = 0;
    let mut stack = Vec::new();
    let mut slots = vec![usize::MAX; prog.loop_slots];

    for start in 0..=input.len() {
        stack.clear();
        slots.iter_mut().for_each(|s| *s = usize::MAX);
        stack.push(Job::Run { pc: 0, pos: start });

        while let Some(job) = stack.pop() {
            let (mut pc, mut pos) = match job {
                Job::Run { pc, pos } => (pc, pos),
                Job::RestoreSlot { slot, value } => {
                    slots[slot] = value;
                    continue;
                }
            };
            loop {
                if steps >= limit {
                    return Err(BudgetExceeded {
                        engine: Engine::Backtracking,
                        budget: limit,
                    });
                }
                steps += 1;
                match prog.insts[pc] {
                    Inst::Byte(b) => {
                        if input.get(pos) != Some(&b) {
                            break;
                        }
                        pc += 1;
                        pos += 1;
                    }
                    Inst::Any => {
                        if pos >= input.len() {
                            break;
                        }
                        pc += 1;
                        pos += 1;
                    }
                    Inst::Class(set) => match input.get(pos) {
                        Some(&b) if set.contains(b) => {
                            pc += 1;
                            pos += 1;
                        }
                        _ => break,
                    },
                    Inst::Assert(anchor) => {
                        if !anchor.holds(pos, input.len()) {
                            break;
                        }
                        pc += 1;
                    }
                    Inst::Split(first, second) => {
                        stack.push(Job::Run { pc: second, pos });
                        pc = first;
                    }
                    Inst::Jmp(target) => pc = target,
                    Inst::LoopEnter(slot) => {
                        stack.push(Job::RestoreSlot {
                            slot,
                            value: slots[slot],
                        });
                        slots[slot] = pos;
                        pc += 1;
                    }
                    Inst::LoopCheck(slot) => {
                        if slots[slot] == pos {
                            break;
                        }
                        pc += 1;
                    }
                    Inst::Match => {
                        return Ok(MatchResult {
                            matched: true,
                            steps,
                            engine: Engine::Backtracking,
                        })
                    }
                }
            }
        }
    }

    Ok(MatchResult {
        matched: false,
        steps,
        engine: Engine::Backtracking,
    })
}
