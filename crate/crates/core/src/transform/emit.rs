//! Instruction sequences emitted for one target node.
//!
//! Every node has the same shape:
//!
//! ```text
//! prologue   unfold the activity mask, load r0..r7/sp from the slab
//! body       passivated block body, terminator lowering, masked epilogue
//! trailer    key accumulation, route swap, routing bit, next mask, dispatch
//! ```
//!
//! Registers are live program values only inside the body; prologue and
//! trailer use them as scratch.

use crate::isa::{Instruction, Opcode, Operand, Reg, GENERAL_REGS};
use crate::layout::{
    reg_slot, CMP_SLOT, EMPTY_RECORD, HOP_SLOT, MASK_SLOT, MCUR_SLOT, NEXT_SLOT, NOTM_SLOT,
    OUT_RECORD, PATH_SLOT, REG_SLAB, SPILL_SLOTS, TRASH_ADDR, WORD,
};

use super::gadget::{EXTRA_MASK, EXTRA_SHIFT, INVERSE_ROUNDS, LEN_MASK};
use super::TransformError;

/// Per-node constants baked into the emitted code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeContext {
    pub node: usize,
    pub node_key: u64,
    /// 0 or all-ones; folded into the stored mask of this node.
    pub polarity: u64,
    /// Flip-gadget multiplier: odd flips the routing bit.
    pub gadget: u64,
    /// Target successors; bit 1 selects the first, bit 0 the second.
    pub succ: Vec<usize>,
    pub succ_polarity: Vec<u64>,
    /// Masked next-route word for the taken (or only) source edge.
    pub route_to_left: u64,
    /// Masked next-route word for the fallthrough source edge.
    pub route_to_right: u64,
    pub trash_address: u64,
}

pub fn node_label(v: usize) -> String {
    format!("n{v}")
}

pub fn halt_label(v: usize) -> String {
    format!("h{v}")
}

fn r(i: u8) -> Operand {
    Operand::Reg(Reg::general(i))
}

fn reg(x: Reg) -> Operand {
    Operand::Reg(x)
}

fn imm(v: u64) -> Operand {
    Operand::Imm(v)
}

fn abs(a: u64) -> Operand {
    Operand::abs(a)
}

fn at(x: Reg, off: i64) -> Operand {
    Operand::mem(x, off)
}

fn sp() -> Operand {
    Operand::Reg(Reg::SP)
}

#[derive(Default)]
struct Seq(Vec<Instruction>);

impl Seq {
    fn op(&mut self, op: Opcode, ops: Vec<Operand>) -> &mut Self {
        self.0.push(Instruction::new(op, ops));
        self
    }
    fn i2(&mut self, op: Opcode, a: Operand, b: Operand) -> &mut Self {
        self.op(op, vec![a, b])
    }
    fn i1(&mut self, op: Opcode, a: Operand) -> &mut Self {
        self.op(op, vec![a])
    }
    fn spill(&mut self, t: Reg, slot: usize) -> &mut Self {
        self.i2(Opcode::Store, abs(SPILL_SLOTS[slot]), reg(t))
    }
    fn restore(&mut self, t: Reg, slot: usize) -> &mut Self {
        self.i2(Opcode::Load, reg(t), abs(SPILL_SLOTS[slot]))
    }
    /// `into = ((A ^ T) & ~m) ^ T` for a memory operand `A`.
    fn masked_address(&mut self, into: Reg, mem: &Operand, helper: Reg, trash: u64) -> &mut Self {
        match mem {
            Operand::Mem { base: Some(b), offset } => {
                self.i2(Opcode::Mov, reg(into), reg(*b));
                if *offset != 0 {
                    self.i2(Opcode::Add, reg(into), imm(*offset as u64));
                }
                self.i2(Opcode::Xor, reg(into), imm(trash))
                    .i2(Opcode::Load, reg(helper), abs(NOTM_SLOT))
                    .i2(Opcode::And, reg(into), reg(helper))
                    .i2(Opcode::Xor, reg(into), imm(trash))
            }
            Operand::Mem { base: None, offset } => self.masked_const(into, *offset as u64, trash),
            other => unreachable!("masked address of non-memory operand {other}"),
        }
    }
    /// Single-register form for a constant address.
    fn masked_const(&mut self, into: Reg, addr: u64, trash: u64) -> &mut Self {
        self.i2(Opcode::Load, reg(into), abs(NOTM_SLOT))
            .i2(Opcode::And, reg(into), imm(addr ^ trash))
            .i2(Opcode::Xor, reg(into), imm(trash))
    }
    /// `x = (x == 0) ? 0 : 1`, clobbering `tmp`.
    fn nonzero(&mut self, x: u8, tmp: u8) -> &mut Self {
        self.i2(Opcode::Mov, r(tmp), imm(0))
            .i2(Opcode::Sub, r(tmp), r(x))
            .i2(Opcode::Or, r(x), r(tmp))
            .i2(Opcode::Shr, r(x), imm(63))
    }
}

fn pick_temps(used: &[Reg], k: usize) -> Vec<Reg> {
    let t: Vec<Reg> = (0..GENERAL_REGS as u8)
        .map(Reg::general)
        .filter(|x| !used.contains(x))
        .take(k)
        .collect();
    debug_assert_eq!(t.len(), k);
    t
}

fn regs_of(ops: &[Operand]) -> Vec<Reg> {
    ops.iter()
        .filter_map(|o| match o {
            Operand::Reg(x) => Some(*x),
            Operand::Mem { base: Some(b), .. } => Some(*b),
            _ => None,
        })
        .collect()
}

fn writes_sp(ins: &Instruction) -> bool {
    use Opcode::*;
    matches!(
        ins.opcode,
        Mov | Add | Sub | Mul | And | Or | Xor | Shl | Shr | Not | Rand | Load
    ) && ins.operands.first() == Some(&sp())
}

/// Keep `sp` at its pre-instruction value when passive.
fn wrap_sp(s: &mut Seq, inner: impl FnOnce(&mut Seq)) {
    s.i2(Opcode::Store, abs(SPILL_SLOTS[3]), sp());
    inner(s);
    let (a, b) = (Reg::general(0), Reg::general(1));
    s.spill(a, 0)
        .spill(b, 1)
        .i2(Opcode::Mov, reg(a), sp())
        .i2(Opcode::Load, reg(b), abs(SPILL_SLOTS[3]))
        .i2(Opcode::Xor, reg(b), reg(a))
        .i2(Opcode::Load, reg(a), abs(MCUR_SLOT))
        .i2(Opcode::And, reg(b), reg(a))
        .i2(Opcode::Xor, sp(), reg(b))
        .restore(a, 0)
        .restore(b, 1);
}

fn unsupported(pc: usize, what: &str) -> TransformError {
    TransformError::Unsupported { pc, reason: what.to_string() }
}

/// Rewrite one non-terminator instruction so that its memory, stack and
/// output effects vanish under the passive mask.
fn passivate_instruction(
    s: &mut Seq,
    ins: &Instruction,
    pc: usize,
    ctx: &NodeContext,
) -> Result<(), TransformError> {
    use Opcode::*;
    let trash = ctx.trash_address;
    match ins.opcode {
        Load => {
            let (Operand::Reg(dst), mem) = (&ins.operands[0], &ins.operands[1]) else {
                return Err(unsupported(pc, "malformed load"));
            };
            let used = regs_of(&ins.operands);
            if dst.is_sp() {
                wrap_sp(s, |s| {
                    let t = pick_temps(&used, 2);
                    s.spill(t[0], 0).spill(t[1], 1);
                    s.masked_address(t[0], mem, t[1], trash);
                    s.i2(Load, sp(), at(t[0], 0)).restore(t[0], 0).restore(t[1], 1);
                });
            } else {
                let t = pick_temps(&used, 1)[0];
                s.spill(t, 0)
                    .masked_address(*dst, mem, t, trash)
                    .i2(Load, reg(*dst), at(*dst, 0))
                    .restore(t, 0);
            }
        }
        Store => {
            let t = pick_temps(&regs_of(&ins.operands), 2);
            s.spill(t[0], 0)
                .spill(t[1], 1)
                .masked_address(t[0], &ins.operands[0], t[1], trash)
                .i2(Store, at(t[0], 0), ins.operands[1].clone())
                .restore(t[0], 0)
                .restore(t[1], 1);
        }
        Push => {
            let val = &ins.operands[0];
            let t = pick_temps(&regs_of(&ins.operands), 3);
            s.spill(t[0], 0).spill(t[1], 1);
            let stored = if let Operand::LabelAddr(_) = val {
                s.spill(t[2], 2).i2(Mov, reg(t[2]), val.clone());
                reg(t[2])
            } else {
                val.clone()
            };
            s.masked_address(t[0], &at(Reg::SP, -(WORD as i64)), t[1], trash)
                .i2(Store, at(t[0], 0), stored)
                .i2(Sub, sp(), imm(WORD))
                .i2(Load, reg(t[0]), abs(MCUR_SLOT))
                .i2(And, reg(t[0]), imm(WORD))
                .i2(Add, sp(), reg(t[0]))
                .restore(t[0], 0)
                .restore(t[1], 1);
            if let Operand::LabelAddr(_) = val {
                s.restore(t[2], 2);
            }
        }
        Pop => {
            let Operand::Reg(dst) = ins.operands[0] else {
                return Err(unsupported(pc, "malformed pop"));
            };
            if dst.is_sp() {
                return Err(unsupported(pc, "pop into sp"));
            }
            let t = pick_temps(&[dst], 1)[0];
            s.spill(t, 0)
                .i2(Load, reg(t), abs(MCUR_SLOT))
                .i2(And, reg(t), imm(WORD))
                .i2(Sub, sp(), reg(t))
                .masked_address(dst, &at(Reg::SP, 0), t, trash)
                .i2(Load, reg(dst), at(dst, 0))
                .i2(Add, sp(), imm(WORD))
                .restore(t, 0);
        }
        Out => s.0.extend(passivate_external_call(ins, ctx)?),
        Jmp | Jz | Jnz | Call | Ret | Halt => {
            return Err(unsupported(pc, "control transfer inside a block body"));
        }
        _ if writes_sp(ins) => wrap_sp(s, |s| {
            s.0.push(ins.clone());
        }),
        _ => s.0.push(ins.clone()),
    }
    Ok(())
}

/// Passivated body of a block. `capture` is the index (within `body`) of
/// the comparison whose difference feeds a conditional terminator.
pub fn passivate_block(
    body: &[Instruction],
    first_pc: usize,
    capture: Option<usize>,
    ctx: &NodeContext,
) -> Result<Vec<Instruction>, TransformError> {
    let mut s = Seq::default();
    for (i, ins) in body.iter().enumerate() {
        passivate_instruction(&mut s, ins, first_pc + i, ctx)?;
        if capture == Some(i) {
            let (a, b) = (&ins.operands[0], &ins.operands[1]);
            let t = pick_temps(&regs_of(&ins.operands), 1)[0];
            s.spill(t, 0)
                .i2(Opcode::Mov, reg(t), a.clone())
                .i2(Opcode::Sub, reg(t), b.clone())
                .i2(Opcode::Store, abs(CMP_SLOT), reg(t))
                .restore(t, 0);
        }
    }
    Ok(s.0)
}

/// Output through a two-word record; a passive node prints the empty record.
pub fn passivate_external_call(
    ins: &Instruction,
    ctx: &NodeContext,
) -> Result<Vec<Instruction>, TransformError> {
    use Opcode::*;
    if ins.opcode != Out {
        return Err(unsupported(0, "external call other than out"));
    }
    let mut s = Seq::default();
    let t = pick_temps(&regs_of(&ins.operands), 2);
    s.spill(t[0], 0).spill(t[1], 1);
    match &ins.operands[0] {
        Operand::Reg(v) => {
            s.i2(Store, abs(OUT_RECORD), imm(1))
                .i2(Store, abs(OUT_RECORD + WORD), reg(*v))
                .masked_const(t[0], OUT_RECORD, EMPTY_RECORD);
        }
        mem => {
            s.masked_address(t[0], mem, t[1], EMPTY_RECORD);
        }
    }
    let _ = ctx;
    s.i1(Out, at(t[0], 0)).restore(t[0], 0).restore(t[1], 1);
    Ok(s.0)
}

/// Masked store of a constant next-route word.
pub fn store_route(route: u64, ctx: &NodeContext) -> Vec<Instruction> {
    let mut s = Seq::default();
    let t = Reg::general(0);
    s.spill(t, 0)
        .masked_const(t, NEXT_SLOT, ctx.trash_address)
        .i2(Opcode::Store, at(t, 0), imm(route))
        .restore(t, 0);
    s.0
}

/// Branch-free selection of the next route from the captured comparison.
pub fn lower_jump(cond: Opcode, ctx: &NodeContext) -> Vec<Instruction> {
    use Opcode::*;
    let mut s = Seq::default();
    let (a, b) = (Reg::general(0), Reg::general(1));
    s.spill(a, 0).spill(b, 1).i2(Load, reg(a), abs(CMP_SLOT)).nonzero(0, 1);
    // a = all-ones when the jump is taken.
    if cond == Jz {
        s.i2(Sub, reg(a), imm(1));
    } else {
        s.i2(Mov, reg(b), imm(0)).i2(Sub, reg(b), reg(a)).i2(Mov, reg(a), reg(b));
    }
    s.i2(Mov, reg(b), imm(ctx.route_to_left ^ ctx.route_to_right))
        .i2(And, reg(b), reg(a))
        .i2(Xor, reg(b), imm(ctx.route_to_right))
        .masked_const(a, NEXT_SLOT, ctx.trash_address)
        .i2(Store, at(a, 0), reg(b))
        .restore(a, 0)
        .restore(b, 1);
    s.0
}

/// Call lowering: passivated push of the return landing, then the route
/// to the callee.
pub fn lower_call(landing: &str, ctx: &NodeContext, pc: usize) -> Result<Vec<Instruction>, TransformError> {
    let mut s = Seq::default();
    let push = Instruction::op1(Opcode::Push, Operand::LabelAddr(landing.to_string()));
    passivate_instruction(&mut s, &push, pc, ctx)?;
    s.0.extend(store_route(ctx.route_to_left, ctx));
    Ok(s.0)
}

pub fn prologue(ctx: &NodeContext) -> Vec<Instruction> {
    use Opcode::*;
    let mut s = Seq::default();
    s.i2(Load, r(0), abs(MASK_SLOT))
        .i2(Xor, r(0), imm(ctx.polarity))
        .i2(Store, abs(MCUR_SLOT), r(0))
        .i1(Not, r(0))
        .i2(Store, abs(NOTM_SLOT), r(0));
    for i in 0..GENERAL_REGS as u8 {
        s.i2(Load, r(i), abs(reg_slot(i as usize)));
    }
    s.i2(Load, sp(), abs(reg_slot(GENERAL_REGS)));
    s.0
}

/// Masked write-back of the register file.
pub fn epilogue(ctx: &NodeContext) -> Vec<Instruction> {
    use Opcode::*;
    let mut s = Seq::default();
    let base = Reg::general(7);
    s.spill(base, 0).masked_const(base, REG_SLAB, ctx.trash_address);
    for i in 0..7u8 {
        s.i2(Store, at(base, i as i64 * WORD as i64), r(i));
    }
    s.i2(Store, at(base, GENERAL_REGS as i64 * WORD as i64), sp())
        .i2(Mov, r(0), reg(base))
        .restore(Reg::general(1), 0)
        .i2(Store, at(Reg::general(0), 7 * WORD as i64), r(1));
    s.0
}

/// Terminal behaviour of the node beyond plain dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Dispatch,
    /// Stop here when active.
    Halt,
    /// Genuine return when active, routed return when passive.
    Ret,
}

/// Trailer common to all nodes. `next_in_layout` enables a fallthrough
/// to the node emitted right after this one.
pub fn emit_dispatch(
    ctx: &NodeContext,
    tail: Tail,
    next_in_layout: Option<usize>,
) -> Result<Vec<Instruction>, TransformError> {
    use Opcode::*;
    if ctx.succ.is_empty() && tail == Tail::Dispatch {
        return Err(TransformError::NoSuccessors(ctx.node));
    }
    let left = ctx.succ.first().copied().unwrap_or(ctx.node);
    let right = ctx.succ.get(1).copied().unwrap_or(left);
    let pl = ctx.succ_polarity.first().copied().unwrap_or(0);
    let pr = ctx.succ_polarity.get(1).copied().unwrap_or(pl);
    let mut s = Seq::default();
    if tail == Tail::Halt {
        s.i2(Load, r(0), abs(MCUR_SLOT))
            .i2(Cmp, r(0), imm(0))
            .i1(Jz, Operand::Label(halt_label(ctx.node)));
    }
    // Onion layer: NEXT ^= key.
    s.i2(Load, r(0), abs(NEXT_SLOT))
        .i2(Xor, r(0), imm(ctx.node_key))
        .i2(Store, abs(NEXT_SLOT), r(0));
    // Swap once every hop of the current word is consumed.
    s.i2(Load, r(1), abs(HOP_SLOT))
        .i2(Load, r(2), abs(PATH_SLOT))
        .i2(Mov, r(3), r(2))
        .i2(And, r(3), imm(LEN_MASK))
        .i2(Mov, r(4), r(2))
        .i2(Shr, r(4), imm(EXTRA_SHIFT as u64))
        .i2(And, r(4), imm(EXTRA_MASK))
        .i2(Add, r(3), r(4))
        .i2(Xor, r(3), r(1))
        .nonzero(3, 4)
        .i2(Sub, r(3), imm(1))
        .i2(Mov, r(4), r(2))
        .i2(Xor, r(4), r(0))
        .i2(And, r(4), r(3))
        .i2(Xor, r(2), r(4))
        .i1(Not, r(3))
        .i2(And, r(1), r(3))
        .i2(Store, abs(PATH_SLOT), r(2));
    // Raw routing bit.
    s.i2(Mov, r(4), imm(63))
        .i2(Sub, r(4), r(1))
        .i2(Mov, r(3), r(2))
        .i2(Shr, r(3), r(4))
        .i2(And, r(3), imm(1))
        .i2(Add, r(1), imm(1))
        .i2(Store, abs(HOP_SLOT), r(1));
    // Flip gadget: d = (c·a + b·a) · a⁻¹ mod 2.
    s.i1(Rand, r(4))
        .i2(Or, r(4), imm(1))
        .i2(Mov, r(5), r(4))
        .i2(Mul, r(5), imm(ctx.gadget))
        .i2(Mov, r(6), r(3))
        .i2(Mul, r(6), r(4))
        .i2(Add, r(5), r(6))
        .i2(Mov, r(6), r(4));
    for _ in 0..INVERSE_ROUNDS {
        s.i2(Mov, r(7), r(4))
            .i2(Mul, r(7), r(6))
            .i2(Mov, r(3), imm(2))
            .i2(Sub, r(3), r(7))
            .i2(Mul, r(6), r(3));
    }
    s.i2(Mul, r(5), r(6)).i2(And, r(5), imm(1));
    // Next mask: active iff the hop just taken reaches the word's length.
    s.i2(Mov, r(3), r(2))
        .i2(And, r(3), imm(LEN_MASK))
        .i2(Xor, r(3), r(1))
        .nonzero(3, 4)
        .i2(Mov, r(4), imm(0))
        .i2(Sub, r(4), r(3))
        .i2(Mov, r(6), imm(0))
        .i2(Sub, r(6), r(5))
        .i2(Mov, r(7), imm(pl ^ pr))
        .i2(And, r(7), r(6))
        .i2(Xor, r(7), imm(pr))
        .i2(Xor, r(4), r(7))
        .i2(Store, abs(MASK_SLOT), r(4));
    match tail {
        Tail::Ret => ret_tail(&mut s, left, right, ctx.trash_address),
        Tail::Dispatch | Tail::Halt if ctx.succ.is_empty() => {
            s.op(Halt, vec![]);
        }
        _ => {
            let fall = next_in_layout;
            if left == right {
                if fall != Some(left) {
                    s.i1(Jmp, Operand::Label(node_label(left)));
                }
            } else {
                s.i2(Cmp, r(5), imm(0));
                if fall == Some(right) {
                    s.i1(Jnz, Operand::Label(node_label(left)));
                } else if fall == Some(left) {
                    s.i1(Jz, Operand::Label(node_label(right)));
                } else {
                    s.i1(Jnz, Operand::Label(node_label(left)))
                        .i1(Jmp, Operand::Label(node_label(right)));
                }
            }
        }
    }
    Ok(s.0)
}

/// Return sequence. Active: clear the routing state and pop the genuine
/// landing address. Passive: return through a trash word holding the
/// routed successor.
fn ret_tail(s: &mut Seq, left: usize, right: usize, trash: u64) {
    use Opcode::*;
    let slab_sp = reg_slot(GENERAL_REGS);
    s.i2(Mov, r(6), imm(0))
        .i2(Sub, r(6), r(5))
        .i2(Mov, r(7), Operand::LabelAddr(node_label(right)))
        .i2(Mov, r(3), Operand::LabelAddr(node_label(left)))
        .i2(Xor, r(3), r(7))
        .i2(And, r(3), r(6))
        .i2(Xor, r(7), r(3))
        .i2(Load, r(0), abs(MCUR_SLOT));
    for slot in [PATH_SLOT, HOP_SLOT, MASK_SLOT] {
        s.i2(Load, r(1), abs(slot)).i2(And, r(1), r(0)).i2(Store, abs(slot), r(1));
    }
    s.i2(Load, r(1), abs(slab_sp))
        .i2(Mov, r(2), r(1))
        .i2(Add, r(2), imm(WORD))
        .masked_const(r3(), slab_sp, trash)
        .i2(Store, at(r3(), 0), r(2))
        .i2(Load, r(4), abs(MCUR_SLOT))
        .i2(And, r(4), imm(trash ^ SPILL_SLOTS[0]))
        .i2(Xor, r(4), imm(SPILL_SLOTS[0]))
        .i2(Store, at(Reg::general(4), 0), r(7))
        .i2(Mov, r(2), r(1))
        .i2(Xor, r(2), imm(trash))
        .i2(And, r(2), r(0))
        .i2(Xor, r(1), r(2))
        .i2(Mov, sp(), r(1))
        .op(Ret, vec![]);
}

fn r3() -> Reg {
    Reg::general(3)
}

/// Straight-line code before the entry node.
pub fn init_code(entry_mask: u64, init_word: u64) -> Vec<Instruction> {
    use Opcode::*;
    let mut s = Seq::default();
    for i in 0..GENERAL_REGS as u8 {
        s.i2(Store, abs(reg_slot(i as usize)), r(i));
    }
    s.i2(Store, abs(reg_slot(GENERAL_REGS)), sp())
        .i2(Store, abs(PATH_SLOT), imm(init_word))
        .i2(Store, abs(HOP_SLOT), imm(0))
        .i2(Store, abs(NEXT_SLOT), imm(0))
        .i2(Store, abs(MASK_SLOT), imm(entry_mask));
    s.0
}

pub fn default_trash() -> u64 {
    TRASH_ADDR
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{parse_program, Program};
    use crate::layout::{is_trash, STACK_TOP};
    use crate::vm::{Code, Machine};
    use std::collections::BTreeMap;

    fn ctx() -> NodeContext {
        NodeContext {
            node: 0,
            node_key: 1,
            polarity: 0,
            gadget: 4,
            succ: vec![0],
            succ_polarity: vec![0],
            route_to_left: 0xaaaa,
            route_to_right: 0x5555,
            trash_address: TRASH_ADDR,
        }
    }

    /// Run `seq` with the mask slots preset to `m` and the given registers.
    fn exec(seq: Vec<Instruction>, m: u64, regs: &[(usize, u64)], pre: &[(u64, u64)]) -> Machine {
        let mut ins = seq;
        ins.push(Instruction::op0(Opcode::Halt));
        let code = Code::new(&Program::new(ins, BTreeMap::new())).unwrap();
        let mut vm = Machine::new(&[], 0);
        for &(i, v) in regs {
            vm.regs[i] = v;
        }
        for &(a, v) in pre {
            vm.write(a, v).unwrap();
        }
        vm.write(MCUR_SLOT, m).unwrap();
        vm.write(NOTM_SLOT, !m).unwrap();
        while vm.status == crate::vm::Status::Running {
            vm.step(&code).unwrap();
        }
        vm
    }

    fn body(src: &str) -> Vec<Instruction> {
        let mut ins = parse_program(src).unwrap().instructions;
        ins.retain(|i| i.opcode != Opcode::Halt);
        ins
    }

    fn non_reserved_equal(a: &Machine, b: &Machine) -> bool {
        let lim = (crate::layout::RESERVED_BASE / WORD) as usize;
        a.mem[..lim] == b.mem[..lim]
    }

    #[test]
    fn push_active_and_passive() {
        let seq = passivate_block(&body("push r1\nhalt"), 0, None, &ctx()).unwrap();
        let base = Machine::new(&[], 0);
        let act = exec(seq.clone(), 0, &[(1, 42)], &[]);
        assert_eq!(act.sp(), STACK_TOP - 8);
        assert_eq!(act.peek(STACK_TOP - 8), 42);
        assert_eq!(act.regs[1], 42);
        let pas = exec(seq, !0, &[(1, 42)], &[]);
        assert_eq!(pas.sp(), STACK_TOP);
        assert!(non_reserved_equal(&pas, &base));
        assert_eq!(pas.peek(TRASH_ADDR), 42);
    }

    #[test]
    fn pop_active_and_passive() {
        let seq = passivate_block(&body("pop r2\nhalt"), 0, None, &ctx()).unwrap();
        let act = exec(seq.clone(), 0, &[(8, STACK_TOP - 8)], &[(STACK_TOP - 8, 9)]);
        assert_eq!((act.regs[2], act.sp()), (9, STACK_TOP));
        let pas = exec(seq, !0, &[(8, STACK_TOP - 8), (2, 5)], &[(STACK_TOP - 8, 9)]);
        assert_eq!(pas.sp(), STACK_TOP - 8);
        assert_ne!(pas.regs[2], 9);
    }

    #[test]
    fn store_lands_in_trash_when_passive() {
        let seq = passivate_block(&body("store [r2+0], r3\nhalt"), 0, None, &ctx()).unwrap();
        let act = exec(seq.clone(), 0, &[(2, 0x100), (3, 7)], &[]);
        assert_eq!(act.peek(0x100), 7);
        assert_eq!((act.regs[0], act.regs[1]), (0, 0));
        let pas = exec(seq, !0, &[(2, 0x100), (3, 7)], &[]);
        assert_eq!(pas.peek(0x100), 0);
        assert_eq!(pas.peek(TRASH_ADDR), 7);
        assert!(is_trash(TRASH_ADDR));
    }

    #[test]
    fn load_and_sp_write() {
        let seq = passivate_block(&body("load r0, [r0+8]\nsub sp, 16\nhalt"), 0, None, &ctx())
            .unwrap();
        let act = exec(seq.clone(), 0, &[(0, 0x200)], &[(0x208, 3)]);
        assert_eq!((act.regs[0], act.sp()), (3, STACK_TOP - 16));
        let pas = exec(seq, !0, &[(0, 0x200)], &[(0x208, 3)]);
        assert_eq!(pas.sp(), STACK_TOP);
    }

    #[test]
    fn out_active_and_passive() {
        let seq = passivate_block(&body("out r0\nhalt"), 0, None, &ctx()).unwrap();
        assert_eq!(exec(seq.clone(), 0, &[(0, 7)], &[]).output, vec![7]);
        assert!(exec(seq, !0, &[(0, 7)], &[]).output.is_empty());
    }

    #[test]
    fn jump_selects_route() {
        let c = ctx();
        for (cond, d, want) in [
            (Opcode::Jz, 0u64, 0xaaaa),
            (Opcode::Jz, 5, 0x5555),
            (Opcode::Jnz, 0, 0x5555),
            (Opcode::Jnz, u64::MAX, 0xaaaa),
        ] {
            let vm = exec(lower_jump(cond, &c), 0, &[], &[(CMP_SLOT, d)]);
            assert_eq!(vm.peek(NEXT_SLOT), want);
            let vm = exec(lower_jump(cond, &c), !0, &[], &[(CMP_SLOT, d), (NEXT_SLOT, 1)]);
            assert_eq!(vm.peek(NEXT_SLOT), 1);
        }
    }

    #[test]
    fn epilogue_round_trip() {
        let mut seq = epilogue(&ctx());
        seq.extend(prologue(&NodeContext { polarity: !0, ..ctx() }));
        let regs: Vec<(usize, u64)> = (0..9).map(|i| (i, 100 + i as u64)).collect();
        let vm = exec(seq.clone(), 0, &regs, &[(MASK_SLOT, !0)]);
        for (i, v) in &regs {
            assert_eq!(vm.regs[*i], *v);
        }
        assert_eq!(vm.peek(MCUR_SLOT), 0);
        let vm = exec(seq, !0, &regs, &[(MASK_SLOT, !0)]);
        assert_eq!(vm.regs[3], 0);
    }
}
