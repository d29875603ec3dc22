//! Deterministic interpreter for mini-ISA programs.
//!
//! The machine is split from the code it runs: [`Code`] is a decoded,
//! label-resolved program and [`Machine`] is the architectural state. A
//! caller can single-step a machine against different code images, which
//! the dynamic attack uses to patch one node visit at a time.

use std::ops::Range;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::isa::{Opcode, Operand, Program, REG_COUNT};
use crate::layout::{MEM_BYTES, MEM_WORDS, STACK_TOP, WORD};

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("step limit of {limit} exceeded")]
    StepLimit { limit: u64 },
    #[error("pc {pc}: memory access out of bounds at {addr:#x}")]
    OutOfBounds { pc: usize, addr: u64 },
    #[error("pc {pc}: misaligned memory access at {addr:#x}")]
    Misaligned { pc: usize, addr: u64 },
    #[error("pc {pc}: stack underflow")]
    StackUnderflow { pc: usize },
    #[error("pc {pc}: ret with empty stack")]
    RetEmptyStack { pc: usize },
    #[error("pc {pc}: return address {target:#x} is not an instruction")]
    BadReturn { pc: usize, target: u64 },
    #[error("pc {pc}: execution ran past the last instruction")]
    FellOffEnd { pc: usize },
    #[error("program has unresolved label `{0}`")]
    UnresolvedLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arg {
    Reg(usize),
    Imm(u64),
    Mem(Option<usize>, i64),
    Target(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Decoded {
    op: Opcode,
    a: Option<Arg>,
    b: Option<Arg>,
}

/// A label-resolved program image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    ins: Vec<Decoded>,
}

impl Code {
    pub fn new(p: &Program) -> Result<Code, VmError> {
        let index = p.label_index();
        let resolve = |op: &Operand| -> Result<Arg, VmError> {
            Ok(match op {
                Operand::Reg(r) => Arg::Reg(r.index()),
                Operand::Imm(v) => Arg::Imm(*v),
                Operand::Mem { base, offset } => Arg::Mem(base.map(|r| r.index()), *offset),
                Operand::Label(l) => Arg::Target(
                    *index.get(l.as_str()).ok_or_else(|| VmError::UnresolvedLabel(l.clone()))?,
                ),
                Operand::LabelAddr(l) => Arg::Imm(
                    *index.get(l.as_str()).ok_or_else(|| VmError::UnresolvedLabel(l.clone()))?
                        as u64,
                ),
            })
        };
        let ins = p
            .instructions
            .iter()
            .map(|i| {
                Ok(Decoded {
                    op: i.opcode,
                    a: i.operands.first().map(resolve).transpose()?,
                    b: i.operands.get(1).map(resolve).transpose()?,
                })
            })
            .collect::<Result<Vec<_>, VmError>>()?;
        Ok(Code { ins })
    }

    pub fn len(&self) -> usize {
        self.ins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ins.is_empty()
    }

    pub fn opcode(&self, pc: usize) -> Option<Opcode> {
        self.ins.get(pc).map(|d| d.op)
    }

    /// Replace instruction `pc` with a register self-move.
    pub fn neutralize(&mut self, pc: usize) {
        self.ins[pc] = Decoded { op: Opcode::Mov, a: Some(Arg::Reg(0)), b: Some(Arg::Reg(0)) };
    }
}

/// xorshift64* generator behind the RAND instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng64(u64);

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        let s = seed ^ 0x9E37_79B9_7F4A_7C15;
        Rng64(if s == 0 { 0x2545_F491_4F6C_DD1D } else { s })
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_steps: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_steps: DEFAULT_MAX_STEPS }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceEvent {
    pub pc: usize,
    pub write: Option<(u64, u64)>,
    pub out: Vec<u64>,
}

impl Serialize for TraceEvent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("pc", &self.pc)?;
        if let Some((addr, val)) = self.write {
            m.serialize_entry("write", &[addr, val])?;
        }
        match self.out.as_slice() {
            [] => {}
            [v] => m.serialize_entry("out", v)?,
            many => m.serialize_entry("out", many)?,
        }
        m.end()
    }
}

pub type Trace = Vec<TraceEvent>;

/// Render a trace as JSON lines.
pub fn trace_to_json_lines(trace: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in trace {
        s.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub regs: [u64; REG_COUNT],
    pub zf: bool,
    pub mem: Vec<u64>,
    pub pc: usize,
    pub steps: u64,
    pub output: Vec<u64>,
    pub rng: Rng64,
    pub status: Status,
}

impl Machine {
    /// Fresh machine; `inputs` seed `r0..` in order, missing registers are 0.
    pub fn new(inputs: &[u64], rng_seed: u64) -> Machine {
        let mut regs = [0u64; REG_COUNT];
        for (r, v) in regs.iter_mut().zip(inputs.iter().take(REG_COUNT - 1)) {
            *r = *v;
        }
        regs[REG_COUNT - 1] = STACK_TOP;
        Machine {
            regs,
            zf: false,
            mem: vec![0; MEM_WORDS],
            pc: 0,
            steps: 0,
            output: Vec::new(),
            rng: Rng64::new(rng_seed),
            status: Status::Running,
        }
    }

    pub fn sp(&self) -> u64 {
        self.regs[REG_COUNT - 1]
    }

    fn word_index(&self, addr: u64) -> Result<usize, VmError> {
        if !addr.is_multiple_of(WORD) {
            return Err(VmError::Misaligned { pc: self.pc, addr });
        }
        if addr >= MEM_BYTES {
            return Err(VmError::OutOfBounds { pc: self.pc, addr });
        }
        Ok((addr / WORD) as usize)
    }

    pub fn read(&self, addr: u64) -> Result<u64, VmError> {
        Ok(self.mem[self.word_index(addr)?])
    }

    pub fn write(&mut self, addr: u64, val: u64) -> Result<(), VmError> {
        let i = self.word_index(addr)?;
        self.mem[i] = val;
        Ok(())
    }

    /// Word at `addr`, or 0 when the address is invalid.
    pub fn peek(&self, addr: u64) -> u64 {
        self.read(addr).unwrap_or(0)
    }

    fn value(&self, a: Arg) -> u64 {
        match a {
            Arg::Reg(r) => self.regs[r],
            Arg::Imm(v) => v,
            Arg::Target(t) => t as u64,
            Arg::Mem(..) => unreachable!("memory operand used as value"),
        }
    }

    fn address(&self, a: Arg) -> u64 {
        match a {
            Arg::Mem(Some(base), off) => self.regs[base].wrapping_add(off as u64),
            Arg::Mem(None, off) => off as u64,
            _ => unreachable!("non-memory operand used as address"),
        }
    }

    /// Execute one instruction of `code`.
    pub fn step(&mut self, code: &Code) -> Result<TraceEvent, VmError> {
        let pc = self.pc;
        let d = *code.ins.get(pc).ok_or(VmError::FellOffEnd { pc })?;
        let mut ev = TraceEvent { pc, ..TraceEvent::default() };
        let reg = |a: Option<Arg>| match a {
            Some(Arg::Reg(r)) => r,
            _ => unreachable!("validated register operand"),
        };
        let target = |a: Option<Arg>| match a {
            Some(Arg::Target(t)) => t,
            _ => unreachable!("validated label operand"),
        };
        let mut next = pc + 1;
        self.steps += 1;
        match d.op {
            Opcode::Mov => {
                let v = self.value(d.b.unwrap());
                self.regs[reg(d.a)] = v;
            }
            Opcode::Load => {
                let addr = self.address(d.b.unwrap());
                self.regs[reg(d.a)] = self.read(addr)?;
            }
            Opcode::Store => {
                let addr = self.address(d.a.unwrap());
                let v = self.value(d.b.unwrap());
                self.write(addr, v)?;
                ev.write = Some((addr, v));
            }
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::And
            | Opcode::Or
            | Opcode::Xor
            | Opcode::Shl
            | Opcode::Shr => {
                let r = reg(d.a);
                let x = self.regs[r];
                let y = self.value(d.b.unwrap());
                self.regs[r] = match d.op {
                    Opcode::Add => x.wrapping_add(y),
                    Opcode::Sub => x.wrapping_sub(y),
                    Opcode::Mul => x.wrapping_mul(y),
                    Opcode::And => x & y,
                    Opcode::Or => x | y,
                    Opcode::Xor => x ^ y,
                    Opcode::Shl => x.wrapping_shl((y & 63) as u32),
                    _ => x.wrapping_shr((y & 63) as u32),
                };
            }
            Opcode::Not => {
                let r = reg(d.a);
                self.regs[r] = !self.regs[r];
            }
            Opcode::Cmp => {
                self.zf = self.regs[reg(d.a)] == self.value(d.b.unwrap());
            }
            Opcode::Jmp => next = target(d.a),
            Opcode::Jz => {
                if self.zf {
                    next = target(d.a)
                }
            }
            Opcode::Jnz => {
                if !self.zf {
                    next = target(d.a)
                }
            }
            Opcode::Push => {
                let v = self.value(d.a.unwrap());
                let sp = self.push(v)?;
                ev.write = Some((sp, v));
            }
            Opcode::Pop => {
                if self.sp() == STACK_TOP {
                    return Err(VmError::StackUnderflow { pc });
                }
                let v = self.pop()?;
                self.regs[reg(d.a)] = v;
            }
            Opcode::Call => {
                let sp = self.push((pc + 1) as u64)?;
                ev.write = Some((sp, (pc + 1) as u64));
                next = target(d.a);
            }
            Opcode::Ret => {
                if self.sp() == STACK_TOP {
                    return Err(VmError::RetEmptyStack { pc });
                }
                let t = self.pop()?;
                if t >= code.len() as u64 {
                    return Err(VmError::BadReturn { pc, target: t });
                }
                next = t as usize;
            }
            Opcode::Out => match d.a.unwrap() {
                Arg::Reg(r) => ev.out.push(self.regs[r]),
                mem @ Arg::Mem(..) => {
                    let base = self.address(mem);
                    let len = self.read(base)?;
                    for i in 0..len {
                        let v = self.read(base.wrapping_add((i + 1).wrapping_mul(WORD)))?;
                        ev.out.push(v);
                    }
                }
                _ => unreachable!("validated output operand"),
            },
            Opcode::Rand => {
                let v = self.rng.next_u64();
                self.regs[reg(d.a)] = v;
            }
            Opcode::Halt => {
                self.status = Status::Halted;
                next = pc;
            }
        }
        self.output.extend_from_slice(&ev.out);
        self.pc = next;
        Ok(ev)
    }

    fn push(&mut self, v: u64) -> Result<u64, VmError> {
        let sp = self.sp().wrapping_sub(WORD);
        self.write(sp, v)?;
        self.regs[REG_COUNT - 1] = sp;
        Ok(sp)
    }

    fn pop(&mut self) -> Result<u64, VmError> {
        let sp = self.sp();
        let v = self.read(sp)?;
        self.regs[REG_COUNT - 1] = sp.wrapping_add(WORD);
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: Vec<u64>,
    pub state: Machine,
    pub trace: Trace,
}

/// Run from entry until HALT.
pub fn run(p: &Program, inputs: &[u64], limits: Limits) -> Result<RunResult, VmError> {
    run_seeded(p, inputs, 0, limits)
}

pub fn run_seeded(
    p: &Program,
    inputs: &[u64],
    rng_seed: u64,
    limits: Limits,
) -> Result<RunResult, VmError> {
    let code = Code::new(p)?;
    let mut m = Machine::new(inputs, rng_seed);
    let mut trace = Vec::new();
    while m.status == Status::Running {
        if m.steps >= limits.max_steps {
            return Err(VmError::StepLimit { limit: limits.max_steps });
        }
        trace.push(m.step(&code)?);
    }
    Ok(RunResult { output: m.output.clone(), state: m, trace })
}

/// Run without recording a trace; returns the output log and step count.
pub fn run_output(p: &Program, inputs: &[u64], limits: Limits) -> Result<(Vec<u64>, u64), VmError> {
    let code = Code::new(p)?;
    let mut m = Machine::new(inputs, 0);
    while m.status == Status::Running {
        if m.steps >= limits.max_steps {
            return Err(VmError::StepLimit { limit: limits.max_steps });
        }
        m.step(&code)?;
    }
    Ok((m.output, m.steps))
}

/// Snapshot at the first time `pc` enters `span`, or `None` if the program
/// halts or exhausts `limits` first.
pub fn run_until(
    p: &Program,
    inputs: &[u64],
    span: Range<usize>,
    limits: Limits,
) -> Result<Option<Machine>, VmError> {
    let code = Code::new(p)?;
    let mut m = Machine::new(inputs, 0);
    loop {
        if span.contains(&m.pc) {
            return Ok(Some(m));
        }
        if m.status == Status::Halted || m.steps >= limits.max_steps {
            return Ok(None);
        }
        m.step(&code)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    fn out(src: &str, inputs: &[u64]) -> Vec<u64> {
        run(&parse_program(src).unwrap(), inputs, Limits::default()).unwrap().output
    }

    #[test]
    fn mov_out_halt() {
        assert_eq!(out("mov r0, 7\nout r0\nhalt", &[]), vec![7]);
    }

    #[test]
    fn infinite_loop_hits_step_limit() {
        let p = parse_program("l: jmp l").unwrap();
        let e = run(&p, &[], Limits { max_steps: 1000 }).unwrap_err();
        assert_eq!(e, VmError::StepLimit { limit: 1000 });
    }

    #[test]
    fn stack_round_trip() {
        let p = parse_program("push r1\npop r2\nout r2\nhalt").unwrap();
        let r = run(&p, &[0, 42], Limits::default()).unwrap();
        assert_eq!(r.output, vec![42]);
        assert_eq!(r.state.sp(), STACK_TOP);
        assert_eq!(r.state.steps as usize, r.trace.len());
    }

    #[test]
    fn errors() {
        let lim = Limits::default();
        assert!(matches!(
            run(&parse_program("ret").unwrap(), &[], lim),
            Err(VmError::RetEmptyStack { pc: 0 })
        ));
        assert!(matches!(
            run(&parse_program("pop r0").unwrap(), &[], lim),
            Err(VmError::StackUnderflow { .. })
        ));
        assert!(matches!(
            run(&parse_program("load r0, [0x7fffffff0]\nhalt").unwrap(), &[], lim),
            Err(VmError::OutOfBounds { .. })
        ));
        assert!(matches!(
            run(&parse_program("store [0x3], 1\nhalt").unwrap(), &[], lim),
            Err(VmError::Misaligned { .. })
        ));
        assert!(matches!(
            run(&parse_program("mov r0, 1").unwrap(), &[], lim),
            Err(VmError::FellOffEnd { pc: 1 })
        ));
    }

    #[test]
    fn call_ret_and_label_values() {
        let src = "call f\nout r0\nhalt\nf: mov r0, 5\nret";
        assert_eq!(out(src, &[]), vec![5]);
        let src = "push @t\nret\nhalt\nt: mov r0, 9\nout r0\nhalt";
        assert_eq!(out(src, &[]), vec![9]);
    }

    #[test]
    fn output_record() {
        let src = "store [0x100], 2\nstore [0x108], 11\nstore [0x110], 12\nmov r1, 0x100\nout [r1+0]\nout [0x200]\nhalt";
        assert_eq!(out(src, &[]), vec![11, 12]);
    }

    #[test]
    fn run_until_breakpoints() {
        let p = parse_program("mov r0, 1\nl: jmp l\nunreached: halt").unwrap();
        let at_entry = run_until(&p, &[], 0..1, Limits::default()).unwrap().unwrap();
        assert_eq!(at_entry.steps, 0);
        let never = run_until(&p, &[], 2..3, Limits { max_steps: 100 }).unwrap();
        assert!(never.is_none());
        let a = run_until(&p, &[3], 1..2, Limits::default()).unwrap();
        let b = run_until(&p, &[3], 1..2, Limits::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_rand() {
        let p = parse_program("rand r0\nout r0\nrand r0\nout r0\nhalt").unwrap();
        let a = run_seeded(&p, &[], 7, Limits::default()).unwrap();
        let b = run_seeded(&p, &[], 7, Limits::default()).unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.output[0], a.output[1]);
    }

    #[test]
    fn trace_json_lines() {
        let p = parse_program("store [0x10], 3\nmov r0, 4\nout r0\nhalt").unwrap();
        let r = run(&p, &[], Limits::default()).unwrap();
        let text = trace_to_json_lines(&r.trace);
        let lines: Vec<serde_json::Value> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["write"], serde_json::json!([16, 3]));
        assert_eq!(lines[2]["out"], serde_json::json!(4));
        assert!(lines[1].get("write").is_none());
    }
}
