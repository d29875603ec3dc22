//! Random target graphs with out-degree at most two, and their linear layout.
//!
//! Generation starts from a random functional graph (every node gets one
//! successor), repairs reachability from the entry by adding one edge into
//! each unreachable source component of the condensation, Eswaran–Tarjan
//! style, and then adds random edges until the edge budget is met.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cfg::Digraph;

pub const DEFAULT_EDGE_BUDGET: f64 = 1.5;
pub const MAX_OUT_DEGREE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetGraph {
    pub succ: Vec<Vec<usize>>,
    pub entry: usize,
    /// Emission order; empty until [`linearize`] runs.
    pub layout: Vec<usize>,
}

impl Digraph for TargetGraph {
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

impl TargetGraph {
    pub fn from_edges(n: usize, entry: usize, edges: &[(usize, usize)]) -> TargetGraph {
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            succ[a].push(b);
        }
        TargetGraph { succ, entry, layout: Vec::new() }
    }

    /// Layout position of every node.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.succ.len()];
        for (i, &n) in self.layout.iter().enumerate() {
            pos[n] = i;
        }
        pos
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("target graph needs at least 2 nodes, got {0}")]
    TooSmall(usize),
}

pub fn generate_target(n_nodes: usize, seed: u64) -> Result<TargetGraph, GenError> {
    generate_target_with(n_nodes, seed, DEFAULT_EDGE_BUDGET)
}

/// `edge_budget` is the desired edge count as a multiple of `n_nodes`; it is
/// capped by the degree bound and the absence of self-loops.
pub fn generate_target_with(
    n_nodes: usize,
    seed: u64,
    edge_budget: f64,
) -> Result<TargetGraph, GenError> {
    if n_nodes < 2 {
        return Err(GenError::TooSmall(n_nodes));
    }
    let n = n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut succ: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            let mut u = rng.gen_range(0..n - 1);
            if u >= v {
                u += 1;
            }
            vec![u]
        })
        .collect();
    let entry = 0;

    augment_reachability(&mut succ, entry, &mut rng);

    let cap = (MAX_OUT_DEGREE * n).min(n * (n - 1));
    let target = ((edge_budget * n as f64).round() as usize).min(cap);
    let mut edges: usize = succ.iter().map(Vec::len).sum();
    let mut open: Vec<usize> = (0..n).filter(|&v| succ[v].len() < MAX_OUT_DEGREE).collect();
    while edges < target && !open.is_empty() {
        let i = rng.gen_range(0..open.len());
        let v = open[i];
        let choices: Vec<usize> = (0..n).filter(|&u| u != v && !succ[v].contains(&u)).collect();
        match choices.choose(&mut rng) {
            Some(&u) => {
                succ[v].push(u);
                edges += 1;
                if succ[v].len() >= MAX_OUT_DEGREE {
                    open.swap_remove(i);
                }
            }
            None => {
                open.swap_remove(i);
            }
        }
    }
    for s in &mut succ {
        s.shuffle(&mut rng);
    }
    Ok(TargetGraph { succ, entry, layout: Vec::new() })
}

fn reachable(succ: &[Vec<usize>], entry: usize) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    let mut stack = vec![entry];
    seen[entry] = true;
    while let Some(x) = stack.pop() {
        for &y in &succ[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Strongly connected component id of every node (Tarjan, iterative).
pub fn scc_ids(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = work.last_mut() {
            let v = top.0;
            if let Some(&w) = succ[v].get(top.1) {
                top.1 += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("scc stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Add one edge into every unreachable source component until all nodes
/// are reachable; edges leave reachable nodes that still have a free slot.
fn augment_reachability(succ: &mut [Vec<usize>], entry: usize, rng: &mut ChaCha8Rng) {
    loop {
        let seen = reachable(succ, entry);
        if seen.iter().all(|&s| s) {
            return;
        }
        let comp = scc_ids(succ);
        let ncomp = comp.iter().max().map_or(0, |m| m + 1);
        let mut has_in = vec![false; ncomp];
        for (v, s) in succ.iter().enumerate() {
            for &w in s {
                if comp[v] != comp[w] {
                    has_in[comp[w]] = true;
                }
            }
        }
        let mut sources: Vec<usize> = (0..succ.len())
            .filter(|&v| !seen[v] && !has_in[comp[v]])
            .collect();
        // One representative per source component, picked at random.
        sources.shuffle(rng);
        let mut done = vec![false; ncomp];
        sources.retain(|&v| !std::mem::replace(&mut done[comp[v]], true));
        let free: Vec<usize> = (0..succ.len())
            .filter(|&v| seen[v] && succ[v].len() < MAX_OUT_DEGREE)
            .collect();
        let u = sources[0];
        let x = *free.choose(rng).expect("reachable nodes always keep a free slot");
        succ[x].push(u);
    }
}

/// Trace-picking layout: follow unplaced successors from the entry, and
/// restart from an unplaced successor of an already placed node.
pub fn linearize(g: &TargetGraph, seed: u64) -> TargetGraph {
    let n = g.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_796f_7574);
    let mut placed = vec![false; n];
    let mut layout = Vec::with_capacity(n);
    let mut cur = Some(g.entry);
    while let Some(c) = cur {
        placed[c] = true;
        layout.push(c);
        let fresh: Vec<usize> = g.succ[c].iter().copied().filter(|&y| !placed[y]).collect();
        cur = fresh.choose(&mut rng).copied().or_else(|| {
            let frontier: Vec<usize> = layout
                .iter()
                .flat_map(|&x| g.succ[x].iter().copied())
                .filter(|&y| !placed[y])
                .collect();
            frontier.choose(&mut rng).copied()
        });
    }
    // Nodes unreachable from the entry (only possible for hand-built graphs).
    layout.extend((0..n).filter(|&x| !placed[x]));
    TargetGraph { layout, ..g.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs_all_reachable(g: &TargetGraph) -> bool {
        let mut seen = vec![false; g.succ.len()];
        let mut q = VecDeque::from([g.entry]);
        seen[g.entry] = true;
        while let Some(x) = q.pop_front() {
            for &y in &g.succ[x] {
                if !seen[y] {
                    seen[y] = true;
                    q.push_back(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[test]
    fn two_nodes() {
        let g = generate_target(2, 5).unwrap();
        assert_eq!(g.succ[0], vec![1]);
        assert_eq!(g.succ[1], vec![0]);
    }

    #[test]
    fn too_small() {
        assert_eq!(generate_target(1, 0), Err(GenError::TooSmall(1)));
    }

    #[test]
    fn deterministic() {
        let a = linearize(&generate_target(10, 1).unwrap(), 1);
        let b = linearize(&generate_target(10, 1).unwrap(), 1);
        assert_eq!(a, b);
        assert_ne!(generate_target(10, 1).unwrap(), generate_target(10, 2).unwrap());
    }

    #[test]
    fn degree_cap_reachability_and_no_self_loops() {
        for seed in 0..300 {
            let g = generate_target(32, seed).unwrap();
            assert!(bfs_all_reachable(&g), "seed {seed}");
            for (v, s) in g.succ.iter().enumerate() {
                assert!(!s.is_empty() && s.len() <= 2);
                assert!(!s.contains(&v));
                assert!(s.len() < 2 || s[0] != s[1]);
            }
            assert!(g.edge_count() >= 48);
        }
    }

    #[test]
    fn chain_layout() {
        let g = TargetGraph::from_edges(3, 0, &[(0, 1), (1, 2)]);
        assert_eq!(linearize(&g, 9).layout, vec![0, 1, 2]);
    }

    #[test]
    fn diamond_layout_is_permutation() {
        let g = TargetGraph::from_edges(4, 0, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        for seed in 0..10 {
            let l = linearize(&g, seed).layout;
            assert_eq!(l[0], 0);
            let mut s = l.clone();
            s.sort();
            assert_eq!(s, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn scc_partition() {
        let succ = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let c = scc_ids(&succ);
        assert_eq!(c[0], c[1]);
        assert_eq!(c[2], c[3]);
        assert_ne!(c[0], c[2]);
    }
}
