//! The mini-ISA: instructions, operand signatures, and the assembler text format.
//!
//! Text format, one instruction or label per line:
//!
//! ```text
//! loop:   add r0, 1        ; comment
//!         store [r1+8], r0
//!         push @loop       ; label address as an immediate
//!         jnz loop
//! ```
//!
//! Registers are `r0`..`r7` and `sp`. Memory operands are `[rK+imm]`,
//! `[rK-imm]` or an absolute `[imm]`. Immediates are decimal (optionally
//! negative, stored two's complement) or `0x` hex.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Number of general purpose registers.
pub const GENERAL_REGS: usize = 8;
/// Total register file size: `r0..r7` plus `sp`.
pub const REG_COUNT: usize = GENERAL_REGS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const SP: Reg = Reg(8);

    pub fn general(index: u8) -> Reg {
        assert!((index as usize) < GENERAL_REGS, "general register out of range");
        Reg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_sp(self) -> bool {
        self.0 == 8
    }

    /// All registers, `sp` last.
    pub fn all() -> impl Iterator<Item = Reg> {
        (0..REG_COUNT as u8).map(Reg)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sp() {
            f.write_str("sp")
        } else {
            write!(f, "r{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Mov,
    Load,
    Store,
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Not,
    Shl,
    Shr,
    Cmp,
    Jmp,
    Jz,
    Jnz,
    Push,
    Pop,
    Call,
    Ret,
    Out,
    Rand,
    Halt,
}

impl Opcode {
    pub const ALL: [Opcode; 23] = [
        Opcode::Mov,
        Opcode::Load,
        Opcode::Store,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Not,
        Opcode::Shl,
        Opcode::Shr,
        Opcode::Cmp,
        Opcode::Jmp,
        Opcode::Jz,
        Opcode::Jnz,
        Opcode::Push,
        Opcode::Pop,
        Opcode::Call,
        Opcode::Ret,
        Opcode::Out,
        Opcode::Rand,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Not => "not",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::Cmp => "cmp",
            Opcode::Jmp => "jmp",
            Opcode::Jz => "jz",
            Opcode::Jnz => "jnz",
            Opcode::Push => "push",
            Opcode::Pop => "pop",
            Opcode::Call => "call",
            Opcode::Ret => "ret",
            Opcode::Out => "out",
            Opcode::Rand => "rand",
            Opcode::Halt => "halt",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        let lower = s.to_ascii_lowercase();
        Opcode::ALL.iter().copied().find(|op| op.mnemonic() == lower)
    }

    /// Operand signature: one entry per operand position, each a set of
    /// accepted kinds.
    pub fn signature(self) -> &'static [&'static [OperandKind]] {
        use OperandKind::*;
        const REG: &[OperandKind] = &[Register];
        const VALUE: &[OperandKind] = &[Register, Immediate, LabelAddr];
        const REG_OR_IMM: &[OperandKind] = &[Register, Immediate];
        const MEM: &[OperandKind] = &[Memory];
        const TARGET: &[OperandKind] = &[Label];
        const REG_OR_MEM: &[OperandKind] = &[Register, Memory];
        match self {
            Opcode::Mov => &[REG, VALUE],
            Opcode::Load => &[REG, MEM],
            Opcode::Store => &[MEM, REG_OR_IMM],
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::And
            | Opcode::Or
            | Opcode::Xor
            | Opcode::Shl
            | Opcode::Shr
            | Opcode::Cmp => &[REG, REG_OR_IMM],
            Opcode::Not | Opcode::Pop | Opcode::Rand => &[REG],
            Opcode::Jmp | Opcode::Jz | Opcode::Jnz | Opcode::Call => &[TARGET],
            Opcode::Push => &[VALUE],
            Opcode::Out => &[REG_OR_MEM],
            Opcode::Ret | Opcode::Halt => &[],
        }
    }

    pub fn is_jump(self) -> bool {
        matches!(self, Opcode::Jmp | Opcode::Jz | Opcode::Jnz)
    }

    pub fn is_conditional_jump(self) -> bool {
        matches!(self, Opcode::Jz | Opcode::Jnz)
    }

    /// Instructions after which a new basic block starts.
    pub fn ends_block(self) -> bool {
        matches!(
            self,
            Opcode::Jmp | Opcode::Jz | Opcode::Jnz | Opcode::Call | Opcode::Ret | Opcode::Halt
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperandKind {
    Register,
    Immediate,
    Memory,
    Label,
    LabelAddr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
    /// `[base + offset]`; an absent base means absolute addressing.
    Mem { base: Option<Reg>, offset: i64 },
    /// Jump or call target.
    Label(String),
    /// The instruction index of a label, used as a value (`@name`).
    LabelAddr(String),
}

impl Operand {
    pub fn kind(&self) -> OperandKind {
        match self {
            Operand::Reg(_) => OperandKind::Register,
            Operand::Imm(_) => OperandKind::Immediate,
            Operand::Mem { .. } => OperandKind::Memory,
            Operand::Label(_) => OperandKind::Label,
            Operand::LabelAddr(_) => OperandKind::LabelAddr,
        }
    }

    pub fn mem(base: Reg, offset: i64) -> Operand {
        Operand::Mem { base: Some(base), offset }
    }

    pub fn abs(addr: u64) -> Operand {
        Operand::Mem { base: None, offset: addr as i64 }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => {
                if *v < 0x1_0000 {
                    write!(f, "{v}")
                } else {
                    write!(f, "{v:#x}")
                }
            }
            Operand::Mem { base: None, offset } => write!(f, "[{:#x}]", *offset as u64),
            Operand::Mem { base: Some(b), offset } => {
                if *offset < 0 {
                    write!(f, "[{b}-{}]", offset.unsigned_abs())
                } else {
                    write!(f, "[{b}+{offset}]")
                }
            }
            Operand::Label(l) => f.write_str(l),
            Operand::LabelAddr(l) => write!(f, "@{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub operands: Vec<Operand>,
}

impl Instruction {
    pub fn new(opcode: Opcode, operands: Vec<Operand>) -> Self {
        Instruction { opcode, operands }
    }

    pub fn op0(opcode: Opcode) -> Self {
        Instruction::new(opcode, Vec::new())
    }

    pub fn op1(opcode: Opcode, a: Operand) -> Self {
        Instruction::new(opcode, vec![a])
    }

    pub fn op2(opcode: Opcode, a: Operand, b: Operand) -> Self {
        Instruction::new(opcode, vec![a, b])
    }

    /// The label this instruction transfers control to, if any.
    pub fn target(&self) -> Option<&str> {
        match (self.opcode, self.operands.first()) {
            (Opcode::Jmp | Opcode::Jz | Opcode::Jnz | Opcode::Call, Some(Operand::Label(l))) => {
                Some(l)
            }
            _ => None,
        }
    }

    /// Every label mentioned, as target or as value.
    pub fn referenced_labels(&self) -> impl Iterator<Item = &str> {
        self.operands.iter().filter_map(|o| match o {
            Operand::Label(l) | Operand::LabelAddr(l) => Some(l.as_str()),
            _ => None,
        })
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.opcode.mnemonic())?;
        for (i, op) in self.operands.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

/// A labeled instruction list. Execution starts at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// At most one label per instruction index.
    pub labels: BTreeMap<usize, String>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>, labels: BTreeMap<usize, String>) -> Self {
        Program { instructions, labels }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn label_at(&self, index: usize) -> Option<&str> {
        self.labels.get(&index).map(String::as_str)
    }

    /// Label name to instruction index.
    pub fn label_index(&self) -> HashMap<&str, usize> {
        self.labels.iter().map(|(i, l)| (l.as_str(), *i)).collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_program(self)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_program(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("instruction {index}: `{opcode}` expects {expected} operand(s), got {found}")]
    Arity { index: usize, opcode: Opcode, expected: usize, found: usize },
    #[error("instruction {index}: operand {position} of `{opcode}` has kind {found:?}")]
    OperandKind { index: usize, opcode: Opcode, position: usize, found: OperandKind },
    #[error("instruction {index}: unresolved label `{label}`")]
    UnresolvedLabel { index: usize, label: String },
    #[error("duplicate label `{label}`")]
    DuplicateLabel { label: String },
    #[error("label `{label}` attached past the end of the program")]
    DanglingLabel { label: String },
    #[error("program is empty")]
    Empty,
}

pub fn validate_program(p: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.instructions.is_empty() {
        out.push(Violation::Empty);
    }
    let mut seen = HashSet::new();
    for (index, label) in &p.labels {
        if !seen.insert(label.as_str()) {
            out.push(Violation::DuplicateLabel { label: label.clone() });
        }
        if *index >= p.instructions.len() {
            out.push(Violation::DanglingLabel { label: label.clone() });
        }
    }
    for (index, ins) in p.instructions.iter().enumerate() {
        let sig = ins.opcode.signature();
        if sig.len() != ins.operands.len() {
            out.push(Violation::Arity {
                index,
                opcode: ins.opcode,
                expected: sig.len(),
                found: ins.operands.len(),
            });
            continue;
        }
        for (position, (accepted, op)) in sig.iter().zip(&ins.operands).enumerate() {
            if !accepted.contains(&op.kind()) {
                out.push(Violation::OperandKind {
                    index,
                    opcode: ins.opcode,
                    position,
                    found: op.kind(),
                });
            }
        }
        for label in ins.referenced_labels() {
            if !seen.contains(label) {
                out.push(Violation::UnresolvedLabel { index, label: label.to_string() });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown opcode `{opcode}`")]
    UnknownOpcode { line: usize, opcode: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut instructions = Vec::new();
    let mut labels: BTreeMap<usize, String> = BTreeMap::new();
    let mut label_lines: HashMap<String, usize> = HashMap::new();
    let mut source_line = Vec::new();
    let mut pending: Option<(String, usize)> = None;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let code = raw.split(';').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        let mut rest = code;
        if let Some(colon) = code.find(':') {
            let (name, tail) = code.split_at(colon);
            let name = name.trim();
            if !is_identifier(name) {
                return Err(ParseError::Syntax { line, message: format!("bad label `{name}`") });
            }
            if label_lines.contains_key(name) {
                return Err(ParseError::DuplicateLabel { line, label: name.to_string() });
            }
            if let Some((prev, prev_line)) = &pending {
                return Err(ParseError::Syntax {
                    line: *prev_line,
                    message: format!("label `{prev}` is immediately followed by another label"),
                });
            }
            label_lines.insert(name.to_string(), line);
            pending = Some((name.to_string(), line));
            rest = tail[1..].trim();
            if rest.is_empty() {
                continue;
            }
        }
        let ins = parse_instruction(rest, line)?;
        if let Some((name, _)) = pending.take() {
            labels.insert(instructions.len(), name);
        }
        instructions.push(ins);
        source_line.push(line);
    }
    if let Some((name, line)) = pending {
        return Err(ParseError::Syntax {
            line,
            message: format!("label `{name}` has no instruction"),
        });
    }

    let program = Program { instructions, labels };
    if let Some(v) = validate_program(&program).into_iter().next() {
        let at = |i: usize| source_line.get(i).copied().unwrap_or(0);
        return Err(match v {
            Violation::UnresolvedLabel { index, label } => {
                ParseError::UnresolvedLabel { line: at(index), label }
            }
            Violation::Arity { index, .. } | Violation::OperandKind { index, .. } => {
                ParseError::Invalid { line: at(index), violation: v }
            }
            Violation::Empty => ParseError::Syntax { line: 0, message: "empty program".into() },
            other => ParseError::Invalid { line: 0, violation: other },
        });
    }
    Ok(program)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_instruction(text: &str, line: usize) -> Result<Instruction, ParseError> {
    let (mnemonic, args) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    let opcode = Opcode::from_mnemonic(mnemonic)
        .ok_or_else(|| ParseError::UnknownOpcode { line, opcode: mnemonic.to_string() })?;
    let operands = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| parse_operand(a.trim(), opcode, line))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(Instruction { opcode, operands })
}

fn parse_register(s: &str) -> Option<Reg> {
    let s = s.to_ascii_lowercase();
    if s == "sp" {
        return Some(Reg::SP);
    }
    let digits = s.strip_prefix('r')?;
    let n: u8 = digits.parse().ok()?;
    ((n as usize) < GENERAL_REGS).then_some(Reg(n))
}

fn parse_immediate(s: &str) -> Option<u64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<u64>().ok()?
    };
    Some(if neg { v.wrapping_neg() } else { v })
}

fn parse_operand(s: &str, opcode: Opcode, line: usize) -> Result<Operand, ParseError> {
    let err = |m: String| ParseError::Syntax { line, message: m };
    if s.is_empty() {
        return Err(err("empty operand".into()));
    }
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| err(format!("unterminated memory operand `{s}`")))?
            .trim();
        if let Some(addr) = parse_immediate(inner) {
            return Ok(Operand::Mem { base: None, offset: addr as i64 });
        }
        let split = inner.find(['+', '-']);
        let (reg_text, offset) = match split {
            Some(i) => {
                let off_text = inner[i + 1..].trim();
                let mag = parse_immediate(off_text)
                    .ok_or_else(|| err(format!("bad memory offset `{off_text}`")))?
                    as i64;
                (inner[..i].trim(), if &inner[i..i + 1] == "-" { mag.wrapping_neg() } else { mag })
            }
            None => (inner, 0),
        };
        let base = parse_register(reg_text)
            .ok_or_else(|| err(format!("bad base register `{reg_text}`")))?;
        return Ok(Operand::Mem { base: Some(base), offset });
    }
    if let Some(name) = s.strip_prefix('@') {
        if !is_identifier(name) {
            return Err(err(format!("bad label reference `{s}`")));
        }
        return Ok(Operand::LabelAddr(name.to_string()));
    }
    if let Some(r) = parse_register(s) {
        return Ok(Operand::Reg(r));
    }
    if let Some(v) = parse_immediate(s) {
        return Ok(Operand::Imm(v));
    }
    if is_identifier(s) && opcode.signature().iter().any(|k| k.contains(&OperandKind::Label)) {
        return Ok(Operand::Label(s.to_string()));
    }
    Err(err(format!("bad operand `{s}` for `{opcode}`")))
}

pub fn serialize_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, ins) in p.instructions.iter().enumerate() {
        if let Some(l) = p.labels.get(&i) {
            out.push_str(l);
            out.push_str(":\n");
        }
        if !p.labels.is_empty() {
            out.push_str("    ");
        }
        out.push_str(&ins.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("halt").unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.labels.is_empty());
        assert_eq!(serialize_program(&p), "halt\n");
    }

    #[test]
    fn label_on_own_line() {
        let p = parse_program("loop: add r0, 1\njnz loop\nhalt").unwrap();
        let text = serialize_program(&p);
        assert!(text.lines().any(|l| l == "loop:"));
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn unresolved_label_names_it() {
        match parse_program("jmp missing") {
            Err(ParseError::UnresolvedLabel { label, line }) => {
                assert_eq!(label, "missing");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_program("frob r1"), Err(ParseError::UnknownOpcode { .. })));
        assert!(matches!(
            parse_program("a: halt\na: halt"),
            Err(ParseError::DuplicateLabel { line: 2, .. })
        ));
        assert!(matches!(parse_program("push r1, r2"), Err(ParseError::Invalid { .. })));
        assert!(matches!(parse_program("mov r9, 1"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_program("halt\nend:"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn operand_forms() {
        let p = parse_program(
            "start: load r1, [sp+8]\nstore [r2-16], 0x10\nstore [0x100], r3\nmov r4, @start\nmov r5, -1\nhalt",
        )
        .unwrap();
        assert_eq!(p.instructions[0].operands[1], Operand::mem(Reg::SP, 8));
        assert_eq!(p.instructions[1].operands[0], Operand::mem(Reg::general(2), -16));
        assert_eq!(p.instructions[1].operands[1], Operand::Imm(16));
        assert_eq!(p.instructions[2].operands[0], Operand::abs(0x100));
        assert_eq!(p.instructions[3].operands[1], Operand::LabelAddr("start".into()));
        assert_eq!(p.instructions[4].operands[1], Operand::Imm(u64::MAX));
        assert_eq!(parse_program(&serialize_program(&p)).unwrap(), p);
    }

    #[test]
    fn validation_reports_violations() {
        let push2 = Program::new(
            vec![
                Instruction::op2(Opcode::Push, Operand::Reg(Reg::general(1)), Operand::Imm(2)),
                Instruction::op0(Opcode::Halt),
            ],
            BTreeMap::new(),
        );
        assert!(matches!(push2.validate()[..], [Violation::Arity { index: 0, .. }]));

        let call = Program::new(
            vec![
                Instruction::op1(Opcode::Call, Operand::Label("nowhere".into())),
                Instruction::op0(Opcode::Halt),
            ],
            BTreeMap::new(),
        );
        assert!(matches!(&call.validate()[..], [Violation::UnresolvedLabel { label, .. }] if label == "nowhere"));

        let ok = parse_program("mov r0, 1\nout r0\nhalt").unwrap();
        assert!(ok.validate().is_empty());
    }

    #[test]
    fn signature_table_is_total() {
        for op in Opcode::ALL {
            assert!(op.signature().len() <= 2);
            assert_eq!(Opcode::from_mnemonic(op.mnemonic()), Some(op));
        }
    }
}
