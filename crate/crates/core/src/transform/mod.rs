//! Rewriting a program into its morphed form.
//!
//! Every target node is emitted with the same prologue/body/trailer shape.
//! At run time a mask word decides whether the body's effects are real
//! (active) or absorbed by the trash region (passive); its value comes from
//! the route words threaded through the trailers.

pub mod audit;
pub mod emit;
pub mod gadget;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cfg::{extract_cfg, BlockKind, Cfg, Digraph};
use crate::embed::{
    find_morphism, find_path, route_edges, EmbedError, Morphism, DEFAULT_SEARCH_BUDGET,
    MAX_ROUTE_HOPS,
};
use crate::graphgen::{generate_target_with, linearize, GenError, TargetGraph};
use crate::isa::{Instruction, Opcode, Operand, Program, Violation};
use crate::layout::TRASH_ADDR;

pub use emit::{halt_label, node_label, NodeContext, Tail};
use gadget::{gadget_constant, RouteWord, MAX_EXTRA_HOPS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("invalid program: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("unsupported construct at instruction {pc}: {reason}")]
    Unsupported { pc: usize, reason: String },
    #[error("conditional jump at instruction {pc} has no comparison in its block")]
    CondWithoutCmp { pc: usize },
    #[error("target node {0} has no successors and hosts no halt or return")]
    NoSuccessors(usize),
    #[error("no morphism found after {0} target graph restarts")]
    RestartsExhausted(usize),
    #[error("extra hops {0} exceed the maximum of {MAX_EXTRA_HOPS}")]
    ExtraHops(usize),
    #[error("route of {0} hops exceeds the route word budget")]
    Budget(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObfuscateParams {
    pub target_factor: f64,
    pub extra_hops: usize,
    pub edge_budget: f64,
    pub max_restarts: usize,
    pub search_budget: u64,
}

impl Default for ObfuscateParams {
    fn default() -> Self {
        ObfuscateParams {
            target_factor: 4.0,
            extra_hops: 2,
            edge_budget: 1.5,
            max_restarts: 16,
            search_budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Active/passive schedule of one source edge traversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSchedule {
    pub edge: (usize, usize),
    pub nodes: Vec<usize>,
    pub active: Vec<bool>,
}

pub fn assign_roles(m: &Morphism) -> Vec<RoleSchedule> {
    m.edge_paths
        .keys()
        .map(|&(a, b)| {
            let nodes = m.walk(a, b).expect("edge has a path");
            let n = nodes.len();
            let active = (0..n).map(|i| i == 0 || i == n - 1).collect();
            RoleSchedule { edge: (a, b), nodes, active }
        })
        .collect()
}

/// Walk encoded by one route word: `nodes[0]` is where consumption starts,
/// `nodes[to_active]` is the next active node, the rest are extension hops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<usize>,
    pub to_active: usize,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn extra(&self) -> usize {
        self.hops() - self.to_active
    }
}

/// Everything needed to emit P′.
#[derive(Debug, Clone)]
pub struct Plan {
    pub source: Program,
    pub cfg: Cfg,
    pub target: TargetGraph,
    pub morphism: Morphism,
    pub roles: Vec<RoleSchedule>,
    /// Source block hosted by each target node, if it is an image.
    pub host: Vec<Option<usize>>,
    /// Source block whose body a node carries (its own block for images).
    pub body_of: Vec<usize>,
    /// Return landings and address-taken blocks: always polarity 0, no extension.
    pub landing: Vec<bool>,
    pub keys: Vec<u64>,
    pub flips: Vec<bool>,
    pub gadget: Vec<u64>,
    pub polarity: Vec<bool>,
    /// Extension walk past each node when it is active.
    pub extension: Vec<Vec<usize>>,
    pub routes: BTreeMap<(usize, usize), Route>,
    pub init_route: Route,
}

impl Plan {
    pub fn new(
        source: Program,
        cfg: Cfg,
        target: TargetGraph,
        morphism: Morphism,
        seed: u64,
    ) -> Plan {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 1));
        let nt = target.node_count();
        let mut host = vec![None; nt];
        for (s, &t) in morphism.pi.iter().enumerate() {
            host[t] = Some(s);
        }
        let ns = cfg.node_count();
        let body_of = (0..nt).map(|t| host[t].unwrap_or_else(|| rng.gen_range(0..ns))).collect();
        let mut landing = vec![false; nt];
        for b in landing_blocks(&source, &cfg) {
            landing[morphism.pi[b]] = true;
        }
        let keys = (0..nt).map(|_| rng.gen_range(1..=u64::MAX)).collect();
        let routes = morphism
            .edge_paths
            .keys()
            .map(|&(a, b)| {
                let nodes = morphism.walk(a, b).expect("edge has a path");
                let to_active = nodes.len() - 1;
                ((a, b), Route { nodes, to_active })
            })
            .collect();
        let roles = assign_roles(&morphism);
        let entry = target.entry;
        Plan {
            source,
            cfg,
            roles,
            host,
            body_of,
            landing,
            keys,
            flips: vec![false; nt],
            gadget: vec![0; nt],
            polarity: vec![false; nt],
            extension: vec![Vec::new(); nt],
            routes,
            init_route: Route { nodes: vec![entry], to_active: 0 },
            target,
            morphism,
        }
    }

    /// XOR of the keys applied to NEXT between leaving active node `v` and
    /// the swap that installs it.
    pub fn key_mask(&self, v: usize) -> u64 {
        self.extension[v].iter().fold(self.keys[v], |acc, &x| acc ^ self.keys[x])
    }

    /// Stored route word: direction pre-images under the flips along the walk.
    pub fn route_word<R: Rng>(&self, route: &Route, rng: &mut R) -> RouteWord {
        let bits = route
            .nodes
            .windows(2)
            .map(|w| {
                let succ = &self.target.succ[w[0]];
                let desired = if succ.len() == 2 { succ[0] == w[1] } else { rng.gen() };
                desired ^ self.flips[w[0]]
            })
            .collect();
        RouteWord { to_active: route.to_active, extra: route.extra(), bits }
    }
}

/// Blocks reached other than by a routed edge: call continuations and
/// address-taken labels.
pub fn landing_blocks(p: &Program, cfg: &Cfg) -> Vec<usize> {
    let index = p.label_index();
    let mut out = Vec::new();
    for b in &cfg.blocks {
        if b.kind == BlockKind::Call {
            if let Some(k) = cfg.block_of(b.span.end) {
                out.push(k);
            }
        }
    }
    for ins in &p.instructions {
        for op in &ins.operands {
            if let Operand::LabelAddr(l) = op {
                if let Some(k) = index.get(l.as_str()).and_then(|&i| cfg.block_of(i)) {
                    out.push(k);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random identity-or-negation per node, realized by the gadget constant.
pub fn permute_routing_bits(mut plan: Plan, seed: u64) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 2));
    for v in 0..plan.flips.len() {
        plan.flips[v] = rng.gen();
        plan.gadget[v] = gadget_constant(plan.flips[v], &mut rng);
    }
    plan
}

/// Random polarity per node: the stored mask is `m` or `¬m`.
pub fn hide_node_bits(mut plan: Plan, seed: u64) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 3));
    for v in 0..plan.polarity.len() {
        let p: bool = rng.gen();
        plan.polarity[v] = p && !plan.landing[v];
    }
    plan
}

/// Extend every route past its active node by up to `extra_hops` passive
/// hops, and re-route outgoing edges from the end of the extension.
pub fn hide_routes(mut plan: Plan, extra_hops: usize, seed: u64) -> Result<Plan, TransformError> {
    if extra_hops > MAX_EXTRA_HOPS {
        return Err(TransformError::ExtraHops(extra_hops));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 4));
    let reach_limit = MAX_ROUTE_HOPS - MAX_EXTRA_HOPS;
    let pi = plan.morphism.pi.clone();
    let images: HashSet<usize> = pi.iter().copied().collect();
    let none = HashSet::new();
    for b in 0..plan.cfg.node_count() {
        let v = pi[b];
        let kind = plan.cfg.blocks[b].kind;
        if extra_hops == 0
            || plan.landing[v]
            || matches!(kind, BlockKind::Ret | BlockKind::Halt)
            || plan.target.succ[v].is_empty()
        {
            continue;
        }
        'len: for len in (1..=extra_hops).rev() {
            for _ in 0..16 {
                let mut walk = Vec::with_capacity(len);
                let mut x = v;
                for _ in 0..len {
                    match plan.target.succ[x].choose(&mut rng) {
                        Some(&y) => x = y,
                        None => break,
                    }
                    walk.push(x);
                }
                if walk.len() < len {
                    continue;
                }
                let ok = plan.cfg.succ[b].iter().all(|&c| {
                    find_path(&plan.target, x, pi[c], &none, &mut rng)
                        .is_some_and(|p| p.len() < reach_limit)
                });
                if ok {
                    plan.extension[v] = walk;
                    break 'len;
                }
            }
        }
    }
    plan.init_route = {
        let e = plan.target.entry;
        let mut nodes = vec![e];
        nodes.extend_from_slice(&plan.extension[e]);
        Route { nodes, to_active: 0 }
    };
    let edges: Vec<(usize, usize)> = plan.routes.keys().copied().collect();
    for (a, b) in edges {
        let (va, vb) = (pi[a], pi[b]);
        let start = plan.extension[va].last().copied().unwrap_or(va);
        let mut nodes = vec![start];
        if plan.extension[va].is_empty() {
            nodes = plan.morphism.walk(a, b).expect("edge has a path");
        } else {
            let avoid: HashSet<usize> =
                images.iter().copied().filter(|&x| x != va && x != vb).collect();
            let mids = find_path(&plan.target, start, vb, &avoid, &mut rng)
                .or_else(|| find_path(&plan.target, start, vb, &none, &mut rng))
                .ok_or(EmbedError::Unroutable(a, b))?;
            nodes.extend(mids);
            nodes.push(vb);
        }
        let to_active = nodes.len() - 1;
        nodes.extend_from_slice(&plan.extension[vb]);
        if nodes.len() - 1 > MAX_ROUTE_HOPS {
            return Err(TransformError::Budget(nodes.len() - 1));
        }
        plan.routes.insert((a, b), Route { nodes, to_active });
    }
    Ok(plan)
}

/// Instruction span of one emitted node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpan {
    pub node: usize,
    pub start: usize,
    pub body: usize,
    pub trailer: usize,
    pub end: usize,
}

/// Test-only description of the rewrite; P′ never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub pi: Vec<usize>,
    pub paths: BTreeMap<String, Vec<usize>>,
    pub roles: Vec<RoleSchedule>,
    pub node_spans: Vec<NodeSpan>,
    #[serde(rename = "keys-hash")]
    pub keys_hash: String,
    pub source_entry: usize,
    pub source_edges: Vec<(usize, usize)>,
    pub source_nodes: usize,
    pub target_nodes: usize,
    pub extra_hops: usize,
    pub seed: u64,
}

impl Sidecar {
    pub fn source_cfg(&self) -> Cfg {
        Cfg::from_edges(self.source_nodes, self.source_entry, &self.source_edges)
    }

    /// Target node → source node hosted there.
    pub fn host_of(&self) -> BTreeMap<usize, usize> {
        self.pi.iter().enumerate().map(|(s, &t)| (t, s)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ObfuscatedProgram {
    pub program: Program,
    pub node_map: Vec<NodeSpan>,
    pub target: TargetGraph,
    pub plan: Plan,
    pub sidecar: Sidecar,
}

impl ObfuscatedProgram {
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&self.sidecar).expect("sidecar serializes")
    }
}

fn keys_hash(keys: &[u64]) -> String {
    let mut h = Sha256::new();
    for k in keys {
        h.update(k.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Rewrite label references of `p` so address-taken labels name the node
/// that hosts their block.
fn relabel(p: &Program, cfg: &Cfg, pi: &[usize]) -> Program {
    let index = p.label_index();
    let map = |l: &str| {
        let b = cfg.block_of(index[l]).expect("label inside program");
        node_label(pi[b])
    };
    let instructions = p
        .instructions
        .iter()
        .map(|ins| Instruction {
            opcode: ins.opcode,
            operands: ins
                .operands
                .iter()
                .map(|o| match o {
                    Operand::LabelAddr(l) => Operand::LabelAddr(map(l)),
                    other => other.clone(),
                })
                .collect(),
        })
        .collect();
    Program::new(instructions, BTreeMap::new())
}

fn context(plan: &Plan, v: usize, rng: &mut ChaCha8Rng) -> NodeContext {
    let succ = plan.target.succ[v].clone();
    let pol = |x: usize| if plan.polarity[x] { u64::MAX } else { 0 };
    let mask = plan.key_mask(v);
    let mut word = |a: usize, b: usize| {
        let route = &plan.routes[&(a, b)];
        plan.route_word(route, rng).encode(rng) ^ mask
    };
    let (left, right) = match plan.host[v] {
        Some(b) => {
            let s = &plan.cfg.succ[b];
            match s.len() {
                0 => (rng.gen(), rng.gen()),
                1 => {
                    let w = word(b, s[0]);
                    (w, w)
                }
                _ => (word(b, s[0]), word(b, s[1])),
            }
        }
        None => (rng.gen(), rng.gen()),
    };
    NodeContext {
        node: v,
        node_key: plan.keys[v],
        polarity: pol(v),
        gadget: plan.gadget[v],
        succ_polarity: succ.iter().map(|&x| pol(x)).collect(),
        succ,
        route_to_left: left,
        route_to_right: right,
        trash_address: TRASH_ADDR,
    }
}

fn node_body(
    plan: &Plan,
    code: &Program,
    v: usize,
    ctx: &NodeContext,
) -> Result<(Vec<Instruction>, Tail), TransformError> {
    let b = plan.body_of[v];
    let active_host = plan.host[v].is_some();
    let block = &plan.cfg.blocks[b];
    let span = block.span.clone();
    let last_pc = span.end - 1;
    let all = &code.instructions[span.clone()];
    let (body, term) = match block.kind {
        BlockKind::StraightLine => (all, None),
        _ => (&all[..all.len() - 1], Some(&all[all.len() - 1])),
    };
    let missing_succ = |what: &str| TransformError::Unsupported {
        pc: last_pc,
        reason: format!("{what} falls off the end of the program"),
    };
    let capture = if block.kind == BlockKind::ConditionalJump {
        let c = body.iter().rposition(|i| i.opcode == Opcode::Cmp);
        if c.is_none() {
            return Err(TransformError::CondWithoutCmp { pc: last_pc });
        }
        c
    } else {
        None
    };
    let mut out = emit::passivate_block(body, span.start, capture, ctx)?;
    let mut tail = Tail::Dispatch;
    match block.kind {
        BlockKind::StraightLine => {
            if active_host && plan.cfg.succ[b].is_empty() {
                return Err(missing_succ("block"));
            }
            out.extend(emit::store_route(ctx.route_to_left, ctx));
        }
        BlockKind::StaticJump => out.extend(emit::store_route(ctx.route_to_left, ctx)),
        BlockKind::ConditionalJump => {
            if span.end >= code.len() {
                return Err(missing_succ("conditional jump"));
            }
            out.extend(emit::lower_jump(term.expect("terminator").opcode, ctx));
        }
        BlockKind::Call => {
            let k = plan.cfg.block_of(span.end).ok_or_else(|| missing_succ("call"))?;
            let landing = node_label(plan.morphism.pi[k]);
            out.extend(emit::lower_call(&landing, ctx, last_pc)?);
        }
        BlockKind::Ret if active_host => tail = Tail::Ret,
        BlockKind::Halt if active_host => tail = Tail::Halt,
        BlockKind::Ret | BlockKind::Halt => {}
    }
    out.extend(emit::epilogue(ctx));
    Ok((out, tail))
}

/// Emit P′ from a finished plan.
pub fn emit_program(plan: &Plan, seed: u64) -> Result<(Program, Vec<NodeSpan>), TransformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 5));
    let code = relabel(&plan.source, &plan.cfg, &plan.morphism.pi);
    let entry = plan.target.entry;
    let init_word = plan.route_word(&plan.init_route, &mut rng).encode(&mut rng);
    let entry_mask = if plan.polarity[entry] { u64::MAX } else { 0 };
    let mut ins = emit::init_code(entry_mask, init_word);
    let mut labels = BTreeMap::new();
    let mut spans = Vec::with_capacity(plan.target.node_count());
    let mut halts = Vec::new();
    let layout = &plan.target.layout;
    for (i, &v) in layout.iter().enumerate() {
        let ctx = context(plan, v, &mut rng);
        let start = ins.len();
        labels.insert(start, node_label(v));
        ins.extend(emit::prologue(&ctx));
        let body = ins.len();
        let (b, tail) = node_body(plan, &code, v, &ctx)?;
        ins.extend(b);
        let trailer = ins.len();
        if tail == Tail::Halt {
            halts.push(v);
        }
        ins.extend(emit::emit_dispatch(&ctx, tail, layout.get(i + 1).copied())?);
        spans.push(NodeSpan { node: v, start, body, trailer, end: ins.len() });
    }
    for v in halts {
        labels.insert(ins.len(), halt_label(v));
        ins.push(Instruction::op0(Opcode::Halt));
    }
    Ok((Program::new(ins, labels), spans))
}

fn target_size(n: usize, factor: f64) -> usize {
    ((factor * n as f64).ceil() as usize).max(n).max(2)
}

/// Full pipeline: embed, plan, hide, emit.
pub fn obfuscate(
    p: &Program,
    params: &ObfuscateParams,
    seed: u64,
) -> Result<ObfuscatedProgram, TransformError> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(TransformError::Invalid(violations));
    }
    let cfg = extract_cfg(p);
    let nt = target_size(cfg.node_count(), params.target_factor);
    let mut found = None;
    for attempt in 0..params.max_restarts.max(1) {
        let gseed = derive(seed, 100 + attempt as u64);
        let target = linearize(&generate_target_with(nt, gseed, params.edge_budget)?, gseed);
        let Ok(m) = find_morphism(&cfg, &target, gseed, params.search_budget) else {
            continue;
        };
        if let Ok(m) = route_edges(&cfg, &target, &m.pi, gseed) {
            found = Some((target, m));
            break;
        }
    }
    let (target, morphism) =
        found.ok_or(TransformError::RestartsExhausted(params.max_restarts.max(1)))?;
    let plan = Plan::new(p.clone(), cfg, target, morphism, seed);
    let plan = permute_routing_bits(plan, seed);
    let plan = hide_node_bits(plan, seed);
    let plan = hide_routes(plan, params.extra_hops, seed)?;
    let (program, node_map) = emit_program(&plan, seed)?;
    let sidecar = Sidecar {
        pi: plan.morphism.pi.clone(),
        paths: plan
            .morphism
            .edge_paths
            .iter()
            .map(|((a, b), p)| (format!("{a}→{b}"), p.clone()))
            .collect(),
        roles: plan.roles.clone(),
        node_spans: node_map.clone(),
        keys_hash: keys_hash(&plan.keys),
        source_entry: plan.cfg.entry,
        source_edges: plan.cfg.edges(),
        source_nodes: plan.cfg.node_count(),
        target_nodes: plan.target.node_count(),
        extra_hops: params.extra_hops,
        seed,
    };
    Ok(ObfuscatedProgram { program, node_map, target: plan.target.clone(), plan, sidecar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;
    use crate::vm::{run_output, Limits};

    fn check(src: &str, inputs: &[&[u64]], params: ObfuscateParams, seeds: std::ops::Range<u64>) {
        let p = parse_program(src).unwrap();
        for seed in seeds {
            let ob = obfuscate(&p, &params, seed).unwrap();
            assert!(ob.program.validate().is_empty());
            for inp in inputs {
                let want = run_output(&p, inp, Limits::default()).unwrap().0;
                let got = run_output(&ob.program, inp, Limits::default())
                    .unwrap_or_else(|e| panic!("seed {seed}: {e}"))
                    .0;
                assert_eq!(got, want, "seed {seed} inputs {inp:?}");
            }
        }
    }

    #[test]
    fn direct_edge_roles() {
        let m = Morphism { pi: vec![0, 1], edge_paths: BTreeMap::from([((0, 1), vec![])]) };
        assert_eq!(assign_roles(&m)[0].active, vec![true, true]);
        let m = Morphism { pi: vec![0, 3], edge_paths: BTreeMap::from([((0, 1), vec![1, 2])]) };
        assert_eq!(assign_roles(&m)[0].active, vec![true, false, false, true]);
    }

    #[test]
    fn halt_only() {
        check("halt\n", &[&[]], ObfuscateParams::default(), 0..5);
    }

    #[test]
    fn straight_line_output() {
        check("mov r1, 5\nadd r1, r0\nout r1\nhalt\n", &[&[1], &[9]], ObfuscateParams::default(), 0..5);
    }

    #[test]
    fn branch_and_loop() {
        let src = "\
    mov r1, 0
loop:
    cmp r0, 0
    jz done
    add r1, r0
    sub r0, 1
    out r1
    jmp loop
done:
    out r1
    halt
";
        for extra in [0, 1, 2, 4] {
            let params = ObfuscateParams { extra_hops: extra, ..Default::default() };
            check(src, &[&[0], &[1], &[5]], params, 0..6);
        }
    }

    #[test]
    fn calls_and_memory() {
        let src = "\
    mov r2, 3
again:
    call f
    store [r1+0x100], r0
    push r0
    sub r2, 1
    cmp r2, 0
    jnz again
    pop r3
    load r4, [0x100]
    out r3
    out r4
    halt
f:
    add r0, 2
    mov r1, 8
    ret
";
        check(src, &[&[0], &[7]], ObfuscateParams::default(), 0..6);
    }

    #[test]
    fn cond_without_cmp_is_rejected() {
        let p = parse_program("l:\n    jz l\n    halt\n").unwrap();
        assert!(matches!(
            obfuscate(&p, &ObfuscateParams::default(), 0),
            Err(TransformError::CondWithoutCmp { .. })
        ));
    }

    #[test]
    fn too_many_extra_hops() {
        let p = parse_program("halt\n").unwrap();
        let params = ObfuscateParams { extra_hops: 8, ..Default::default() };
        assert_eq!(obfuscate(&p, &params, 0).unwrap_err(), TransformError::ExtraHops(8));
    }

    #[test]
    fn starved_search_exhausts_restarts() {
        let p = crate::corpus::NESTED_LOOP.program();
        let params = ObfuscateParams { search_budget: 0, max_restarts: 3, ..Default::default() };
        assert_eq!(obfuscate(&p, &params, 0).unwrap_err(), TransformError::RestartsExhausted(3));
    }
}
