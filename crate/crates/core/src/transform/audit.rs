//! Instrumented execution of P′ that checks the rewrite's run-time invariants
//! hop by hop.

use std::collections::HashMap;

use crate::cfg::BlockKind;
use crate::layout::{HOP_SLOT, MCUR_SLOT, NEXT_SLOT, PATH_SLOT, RESERVED_BASE, TRASH_END};
use crate::vm::{Code, Limits, Machine, Status, VmError};

use super::gadget::RouteWord;
use super::ObfuscatedProgram;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Audit {
    pub active_hops: usize,
    pub passive_hops: usize,
    pub swaps: usize,
    /// Target nodes of the active hops, in execution order.
    pub active_sequence: Vec<usize>,
    /// Images of the source blocks entered by P on the same inputs.
    pub expected_sequence: Vec<usize>,
    pub passivity: Vec<String>,
    pub masks: Vec<String>,
    pub onion: Vec<String>,
}

impl Audit {
    pub fn is_clean(&self) -> bool {
        self.passivity.is_empty()
            && self.masks.is_empty()
            && self.onion.is_empty()
            && self.active_sequence == self.expected_sequence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Prologue,
    Body,
    Trailer,
}

struct Hop {
    node: usize,
    phase: Phase,
    mask: u64,
    sp: u64,
    outputs: usize,
    /// HOP and PATH when the trailer started.
    hop_at_trailer: u64,
    path_at_trailer: u64,
    swapped: bool,
}

fn block_sequence(ob: &ObfuscatedProgram, inputs: &[u64], limits: Limits) -> Result<Vec<usize>, VmError> {
    let cfg = &ob.plan.cfg;
    let starts: HashMap<usize, usize> = cfg.blocks.iter().map(|b| (b.span.start, b.id)).collect();
    let code = Code::new(&ob.plan.source)?;
    let mut m = Machine::new(inputs, 0);
    let mut seq = Vec::new();
    while m.status == Status::Running {
        if m.steps >= limits.max_steps {
            return Err(VmError::StepLimit { limit: limits.max_steps });
        }
        if let Some(&b) = starts.get(&m.pc) {
            seq.push(ob.sidecar.pi[b]);
        }
        m.step(&code)?;
    }
    Ok(seq)
}

/// Run P′ once and check passivity, mask discipline and onion consistency on
/// every hop.
pub fn audit(ob: &ObfuscatedProgram, inputs: &[u64], limits: Limits) -> Result<Audit, VmError> {
    let plan = &ob.plan;
    let code = Code::new(&ob.program)?;
    let mut phase_at: HashMap<usize, (usize, Phase)> = HashMap::new();
    for s in &ob.node_map {
        phase_at.insert(s.start, (s.node, Phase::Prologue));
        phase_at.insert(s.body, (s.node, Phase::Body));
        phase_at.insert(s.trailer, (s.node, Phase::Trailer));
    }
    let returns = |v: usize| {
        plan.host[v].is_some_and(|b| plan.cfg.blocks[b].kind == BlockKind::Ret)
    };
    let mut a = Audit { expected_sequence: block_sequence(ob, inputs, limits)?, ..Audit::default() };
    let mut m = Machine::new(inputs, 0);
    let mut hop: Option<Hop> = None;
    // Last NEXT constant stored by an active body and the trailers run since.
    let mut stored = 0u64;
    let mut traversed: Vec<usize> = Vec::new();
    let mut stored_by: Option<usize> = None;
    while m.status == Status::Running {
        if m.steps >= limits.max_steps {
            return Err(VmError::StepLimit { limit: limits.max_steps });
        }
        if let Some(&(node, phase)) = phase_at.get(&m.pc) {
            match phase {
                Phase::Prologue => {
                    hop = Some(Hop {
                        node,
                        phase,
                        mask: 0,
                        sp: 0,
                        outputs: 0,
                        hop_at_trailer: 0,
                        path_at_trailer: 0,
                        swapped: false,
                    });
                }
                Phase::Body => {
                    if let Some(h) = hop.as_mut().filter(|h| h.node == node) {
                        h.phase = phase;
                        h.mask = m.peek(MCUR_SLOT);
                        h.sp = m.sp();
                        h.outputs = m.output.len();
                        match h.mask {
                            0 => {
                                a.active_hops += 1;
                                a.active_sequence.push(node);
                            }
                            u64::MAX => a.passive_hops += 1,
                            other => a.masks.push(format!("node {node}: mask {other:#x}")),
                        }
                    }
                }
                Phase::Trailer => {
                    if let Some(h) = hop.as_mut().filter(|h| h.node == node) {
                        if h.mask == u64::MAX {
                            if m.sp() != h.sp {
                                a.passivity.push(format!("node {node}: sp {:#x} -> {:#x}", h.sp, m.sp()));
                            }
                            if m.output.len() != h.outputs {
                                a.passivity.push(format!("node {node}: output grew"));
                            }
                        }
                        h.phase = phase;
                        h.hop_at_trailer = m.peek(HOP_SLOT);
                        h.path_at_trailer = m.peek(PATH_SLOT);
                        traversed.push(node);
                    }
                }
            }
        }
        let pc = m.pc;
        let ev = m.step(&code)?;
        let (Some(h), Some((addr, val))) = (hop.as_mut(), ev.write) else { continue };
        match h.phase {
            Phase::Body if h.mask == u64::MAX => {
                let visible = !(RESERVED_BASE..TRASH_END).contains(&addr);
                if visible {
                    a.passivity.push(format!("node {}: pc {pc} wrote {val:#x} to {addr:#x}", h.node));
                }
            }
            Phase::Body if addr == NEXT_SLOT => {
                stored = val;
                stored_by = Some(h.node);
                traversed.clear();
            }
            Phase::Trailer if addr == PATH_SLOT && !h.swapped => {
                h.swapped = true;
                let total = RouteWord::decode(h.path_at_trailer).total() as u64;
                if h.hop_at_trailer != total {
                    if val != h.path_at_trailer {
                        a.onion.push(format!("node {}: path rewritten mid-route", h.node));
                    }
                    continue;
                }
                if h.mask == 0 && returns(h.node) {
                    continue;
                }
                a.swaps += 1;
                let want = traversed.iter().fold(stored, |w, &v| w ^ plan.keys[v]);
                if val != want {
                    a.onion.push(format!("node {}: path {val:#x}, expected {want:#x}", h.node));
                }
                if let Some(b) = stored_by {
                    let mut expect = vec![b];
                    expect.extend(&plan.extension[b]);
                    if traversed != expect {
                        a.onion.push(format!("node {}: traversed {traversed:?}, expected {expect:?}", h.node));
                    }
                }
                let rw = RouteWord::decode(val);
                if rw.to_active == 0 || rw.total() > crate::embed::MAX_ROUTE_HOPS {
                    a.onion.push(format!("node {}: malformed route word {val:#x}", h.node));
                }
            }
            _ => {}
        }
    }
    Ok(a)
}
