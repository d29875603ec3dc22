//! Restricted control-flow graphs: basic-block extraction, rooted
//! isomorphism testing and DOT/JSON export.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Opcode, Operand, Program};

/// Upper bound on graph size accepted by [`is_isomorphic`].
pub const ISO_NODE_LIMIT: usize = 512;

/// Minimal read-only view shared by extracted CFGs and generated targets.
pub trait Digraph {
    fn node_count(&self) -> usize;
    fn successors(&self, n: usize) -> &[usize];
    fn entry(&self) -> usize;

    fn edge_count(&self) -> usize {
        (0..self.node_count()).map(|n| self.successors(n).len()).sum()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.node_count())
            .flat_map(|a| self.successors(a).iter().map(move |&b| (a, b)))
            .collect()
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.successors(a).contains(&b)
    }

    fn max_out_degree(&self) -> usize {
        (0..self.node_count()).map(|n| self.successors(n).len()).max().unwrap_or(0)
    }

    /// Nodes reachable from the entry, in BFS order.
    fn bfs_from_entry(&self) -> Vec<usize> {
        let n = self.node_count();
        if n == 0 {
            return Vec::new();
        }
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([self.entry()]);
        seen[self.entry()] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &y in self.successors(x) {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        order
    }

    fn all_reachable(&self) -> bool {
        self.bfs_from_entry().len() == self.node_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// Falls through into the next block (or off the end of the program).
    StraightLine,
    ConditionalJump,
    StaticJump,
    Call,
    Ret,
    Halt,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::StraightLine => "straight-line",
            BlockKind::ConditionalJump => "conditional-jump",
            BlockKind::StaticJump => "static-jump",
            BlockKind::Call => "call",
            BlockKind::Ret => "ret",
            BlockKind::Halt => "halt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: usize,
    pub span: Range<usize>,
    pub kind: BlockKind,
}

/// A control-flow graph with at most two ordered successors per node.
///
/// For a conditional jump the successors are `[taken, fallthrough]`.
/// Graphs built without a program (e.g. reconstructions) have no blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub succ: Vec<Vec<usize>>,
    pub entry: usize,
    pub blocks: Vec<BasicBlock>,
}

impl Digraph for Cfg {
    fn node_count(&self) -> usize {
        self.succ.len()
    }
    fn successors(&self, n: usize) -> &[usize] {
        &self.succ[n]
    }
    fn entry(&self) -> usize {
        self.entry
    }
}

impl Cfg {
    pub fn from_edges(n: usize, entry: usize, edges: &[(usize, usize)]) -> Cfg {
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            if !succ[a].contains(&b) {
                succ[a].push(b);
            }
        }
        Cfg { succ, entry, blocks: Vec::new() }
    }

    /// Block containing instruction `pc`.
    pub fn block_of(&self, pc: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.span.contains(&pc))
    }

    /// Nodes not reachable from the entry (kept as nodes, not deleted).
    pub fn unreachable_nodes(&self) -> Vec<usize> {
        let seen: HashSet<usize> = self.bfs_from_entry().into_iter().collect();
        (0..self.node_count()).filter(|n| !seen.contains(n)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        graph_json(self)
    }
}

pub fn graph_json<G: Digraph>(g: &G) -> serde_json::Value {
    serde_json::json!({
        "nodes": (0..g.node_count()).collect::<Vec<_>>(),
        "edges": g.edges().into_iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
        "entry": g.entry(),
    })
}

/// Instruction indices that start a basic block.
pub fn leaders(p: &Program) -> BTreeSet<usize> {
    let index = p.label_index();
    let mut out = BTreeSet::new();
    if !p.is_empty() {
        out.insert(0);
    }
    for (i, ins) in p.instructions.iter().enumerate() {
        for op in &ins.operands {
            if let Operand::Label(l) | Operand::LabelAddr(l) = op {
                if let Some(&t) = index.get(l.as_str()) {
                    out.insert(t);
                }
            }
        }
        if ins.opcode.ends_block() && i + 1 < p.len() {
            out.insert(i + 1);
        }
    }
    out
}

/// Split `p` into basic blocks and connect them.
///
/// Edges: the taken target and the fallthrough of a conditional jump; the
/// target of a JMP or CALL; the fallthrough of a block that ends because
/// the next instruction is a leader. RET and HALT blocks have no successors.
pub fn extract_cfg(p: &Program) -> Cfg {
    let starts: Vec<usize> = leaders(p).into_iter().collect();
    let mut blocks = Vec::with_capacity(starts.len());
    for (id, &s) in starts.iter().enumerate() {
        let end = starts.get(id + 1).copied().unwrap_or(p.len());
        let last = &p.instructions[end - 1];
        let kind = match last.opcode {
            Opcode::Jz | Opcode::Jnz => BlockKind::ConditionalJump,
            Opcode::Jmp => BlockKind::StaticJump,
            Opcode::Call => BlockKind::Call,
            Opcode::Ret => BlockKind::Ret,
            Opcode::Halt => BlockKind::Halt,
            _ => BlockKind::StraightLine,
        };
        blocks.push(BasicBlock { id, span: s..end, kind });
    }
    let block_at = |pc: usize| starts.binary_search(&pc).ok();
    let index = p.label_index();
    let target_block = |b: &BasicBlock| {
        let t = p.instructions[b.span.end - 1].target().expect("jump has a target");
        block_at(index[t]).expect("jump targets are leaders")
    };
    let mut succ = vec![Vec::new(); blocks.len()];
    for b in &blocks {
        let fall = if b.span.end < p.len() { block_at(b.span.end) } else { None };
        let mut push = |x: usize| {
            if !succ[b.id].contains(&x) {
                succ[b.id].push(x);
            }
        };
        match b.kind {
            BlockKind::ConditionalJump => {
                push(target_block(b));
                if let Some(f) = fall {
                    push(f);
                }
            }
            BlockKind::StaticJump | BlockKind::Call => push(target_block(b)),
            BlockKind::StraightLine => {
                if let Some(f) = fall {
                    push(f);
                }
            }
            BlockKind::Ret | BlockKind::Halt => {}
        }
    }
    Cfg { succ, entry: 0, blocks }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsoError {
    #[error("graph with {0} nodes exceeds the isomorphism limit of {ISO_NODE_LIMIT}")]
    TooLarge(usize),
}

struct Adjacency {
    n: usize,
    bits: Vec<bool>,
    indeg: Vec<usize>,
    outdeg: Vec<usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl Adjacency {
    fn new<G: Digraph>(g: &G) -> Self {
        let n = g.node_count();
        let mut bits = vec![false; n * n];
        let mut indeg = vec![0; n];
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (a, b) in g.edges() {
            if !bits[a * n + b] {
                bits[a * n + b] = true;
                indeg[b] += 1;
                preds[b].push(a);
                succs[a].push(b);
            }
        }
        let outdeg = succs.iter().map(Vec::len).collect();
        Adjacency { n, bits, indeg, outdeg, preds, succs }
    }

    fn edge(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.n + b]
    }

    fn degree(&self, x: usize) -> (usize, usize) {
        (self.indeg[x], self.outdeg[x])
    }
}

/// Rooted isomorphism: an edge-preserving bijection mapping entry to entry.
pub fn is_isomorphic<A: Digraph, B: Digraph>(a: &A, b: &B) -> Result<bool, IsoError> {
    for n in [a.node_count(), b.node_count()] {
        if n > ISO_NODE_LIMIT {
            return Err(IsoError::TooLarge(n));
        }
    }
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return Ok(false);
    }
    let n = a.node_count();
    if n == 0 {
        return Ok(true);
    }
    let ga = Adjacency::new(a);
    let gb = Adjacency::new(b);
    let mut da: Vec<_> = (0..n).map(|x| ga.degree(x)).collect();
    let mut db: Vec<_> = (0..n).map(|x| gb.degree(x)).collect();
    if ga.degree(a.entry()) != gb.degree(b.entry()) {
        return Ok(false);
    }
    da.sort_unstable();
    db.sort_unstable();
    if da != db {
        return Ok(false);
    }

    // Match order: connected traversal from the entry (ignoring direction),
    // then any leftover components.
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut starts = vec![a.entry()];
    starts.extend(0..n);
    for s in starts {
        if placed[s] {
            continue;
        }
        placed[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &y in ga.succs[x].iter().chain(&ga.preds[x]) {
                if !placed[y] {
                    placed[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }

    let mut fwd = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fwd[a.entry()] = b.entry();
    used[b.entry()] = true;
    if !consistent(&ga, &gb, &fwd, a.entry(), b.entry()) {
        return Ok(false);
    }
    Ok(extend(&ga, &gb, &order, 1, &mut fwd, &mut used))
}

fn consistent(ga: &Adjacency, gb: &Adjacency, fwd: &[usize], x: usize, y: usize) -> bool {
    if ga.degree(x) != gb.degree(y) || ga.edge(x, x) != gb.edge(y, y) {
        return false;
    }
    for (u, &fu) in fwd.iter().enumerate() {
        if fu == usize::MAX || u == x {
            continue;
        }
        if ga.edge(x, u) != gb.edge(y, fu) || ga.edge(u, x) != gb.edge(fu, y) {
            return false;
        }
    }
    true
}

fn extend(
    ga: &Adjacency,
    gb: &Adjacency,
    order: &[usize],
    depth: usize,
    fwd: &mut Vec<usize>,
    used: &mut Vec<bool>,
) -> bool {
    if depth == order.len() {
        return true;
    }
    let x = order[depth];
    // Candidates come from a mapped neighbor's image when one exists.
    let anchor = ga
        .preds[x]
        .iter()
        .find(|&&u| fwd[u] != usize::MAX)
        .map(|&u| (u, true))
        .or_else(|| ga.succs[x].iter().find(|&&u| fwd[u] != usize::MAX).map(|&u| (u, false)));
    let candidates: Vec<usize> = match anchor {
        Some((u, true)) => gb.succs[fwd[u]].clone(),
        Some((u, false)) => gb.preds[fwd[u]].clone(),
        None => (0..gb.n).collect(),
    };
    for y in candidates {
        if used[y] || !consistent(ga, gb, fwd, x, y) {
            continue;
        }
        fwd[x] = y;
        used[y] = true;
        if extend(ga, gb, order, depth + 1, fwd, used) {
            return true;
        }
        fwd[x] = usize::MAX;
        used[y] = false;
    }
    false
}

/// DOT rendering; the entry node is drawn as a double octagon.
pub fn to_dot<G: Digraph>(g: &G, blocks: &[BasicBlock]) -> String {
    let mut s = String::from("digraph cfg {\n    node [shape=box];\n");
    for n in 0..g.node_count() {
        let label = match blocks.get(n) {
            Some(b) => format!("n{n} {} [{}..{})", b.kind.name(), b.span.start, b.span.end),
            None => format!("n{n}"),
        };
        let shape = if n == g.entry() { ", shape=doubleoctagon" } else { "" };
        let _ = writeln!(s, "    n{n} [label=\"{label}\"{shape}];");
    }
    for (a, b) in g.edges() {
        let _ = writeln!(s, "    n{a} -> n{b};");
    }
    s.push_str("}\n");
    s
}

impl Cfg {
    pub fn to_dot(&self) -> String {
        to_dot(self, &self.blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    const DIAMOND: &str = "cmp r0, 0\njz else\nmov r1, 1\njmp join\nelse: mov r1, 2\njoin: out r1\nhalt";

    #[test]
    fn straight_line_single_node() {
        let g = extract_cfg(&parse_program("mov r0, 1\nout r0\nhalt").unwrap());
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.blocks[0].kind, BlockKind::Halt);
    }

    #[test]
    fn diamond_shape() {
        let p = parse_program(DIAMOND).unwrap();
        // Brute-force leaders: entry, targets `else`/`join`, after jz/jmp.
        let mut brute = BTreeSet::new();
        brute.insert(0);
        for (i, ins) in p.instructions.iter().enumerate() {
            if let Some(t) = ins.target() {
                brute.insert(p.label_index()[t]);
            }
            if ins.opcode.ends_block() && i + 1 < p.len() {
                brute.insert(i + 1);
            }
        }
        assert_eq!(leaders(&p), brute);
        let g = extract_cfg(&p);
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.succ[0], vec![2, 1]);
        assert_eq!(g.to_dot().matches("->").count(), 4);
    }

    #[test]
    fn call_edge_without_return_edge() {
        let p = parse_program("call f\nout r0\nhalt\nf: mov r0, 1\nret").unwrap();
        let g = extract_cfg(&p);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.succ[0], vec![2]);
        assert!(g.succ[2].is_empty());
        assert_eq!(g.unreachable_nodes(), vec![1]);
    }

    #[test]
    fn partition_property() {
        let p = parse_program(DIAMOND).unwrap();
        let g = extract_cfg(&p);
        let mut covered = vec![0; p.len()];
        for b in &g.blocks {
            assert!(!b.span.is_empty());
            for i in b.span.clone() {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn isomorphism_basics() {
        let diamond = extract_cfg(&parse_program(DIAMOND).unwrap());
        assert!(is_isomorphic(&diamond, &diamond).unwrap());
        let path = Cfg::from_edges(2, 0, &[(0, 1)]);
        let cycle = Cfg::from_edges(2, 0, &[(0, 1), (1, 0)]);
        assert!(!is_isomorphic(&path, &cycle).unwrap());
        // Relabeled diamond.
        let relabeled = Cfg::from_edges(4, 3, &[(3, 0), (3, 2), (2, 1), (0, 1)]);
        assert!(is_isomorphic(&diamond, &relabeled).unwrap());
        assert!(is_isomorphic(&relabeled, &diamond).unwrap());
        // Same shape, different entry.
        let moved = Cfg::from_edges(4, 1, &[(3, 0), (3, 2), (2, 1), (0, 1)]);
        assert!(!is_isomorphic(&diamond, &moved).unwrap());
    }

    #[test]
    fn size_limit() {
        let big = Cfg::from_edges(ISO_NODE_LIMIT + 1, 0, &[]);
        assert_eq!(is_isomorphic(&big, &big), Err(IsoError::TooLarge(ISO_NODE_LIMIT + 1)));
    }

    #[test]
    fn dot_format() {
        let one = extract_cfg(&parse_program("halt").unwrap());
        let dot = one.to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("[label=").count(), 1);
        assert!(dot.contains("doubleoctagon"));
        assert!(dot.contains("halt [0..1)"));
    }

    #[test]
    fn json_dump() {
        let g = extract_cfg(&parse_program(DIAMOND).unwrap());
        let j = g.to_json();
        assert_eq!(j["entry"], 0);
        assert_eq!(j["edges"].as_array().unwrap().len(), 4);
    }
}
