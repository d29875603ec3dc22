//! Embedding a source CFG into a target graph: the injective node map and
//! the realization of every source edge as a path of target nodes.
//!
//! The search does not insist on edge preservation. A candidate image is
//! admissible when every source edge to an already-mapped neighbor can be
//! realized as a target path of at least one hop; candidates that realize
//! edges directly are tried first.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{Cfg, Digraph};
use crate::graphgen::TargetGraph;

pub const DEFAULT_SEARCH_BUDGET: u64 = 1_000_000;
/// Hops a single route word can describe.
pub const MAX_ROUTE_HOPS: usize = 55;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Morphism {
    /// Source node to target node.
    pub pi: Vec<usize>,
    /// Intermediate target nodes realizing each source edge.
    pub edge_paths: BTreeMap<(usize, usize), Vec<usize>>,
}

impl Morphism {
    /// Full hop sequence `π(a), s1, .., sn, π(b)` of a source edge.
    pub fn walk(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let mid = self.edge_paths.get(&(a, b))?;
        let mut w = Vec::with_capacity(mid.len() + 2);
        w.push(self.pi[a]);
        w.extend_from_slice(mid);
        w.push(self.pi[b]);
        Some(w)
    }

    pub fn is_injective(&self) -> bool {
        let set: HashSet<_> = self.pi.iter().collect();
        set.len() == self.pi.len()
    }

    /// `{pi: {src: tgt}, paths: {"a→b": [s1, ...]}}`
    pub fn to_json(&self) -> serde_json::Value {
        let pi: serde_json::Map<String, serde_json::Value> =
            self.pi.iter().enumerate().map(|(s, t)| (s.to_string(), (*t).into())).collect();
        let paths: serde_json::Map<String, serde_json::Value> = self
            .edge_paths
            .iter()
            .map(|((a, b), p)| (format!("{a}→{b}"), serde_json::json!(p)))
            .collect();
        serde_json::json!({ "pi": pi, "paths": paths })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("target has {target} nodes, fewer than the {source_nodes} source nodes")]
    TargetTooSmall { source_nodes: usize, target: usize },
    #[error("no morphism found within {0} search steps")]
    Exhausted(u64),
    #[error("no target path realizes source edge {0}→{1}")]
    Unroutable(usize, usize),
    #[error("path for source edge {0}→{1} needs {2} hops, more than a route word holds")]
    PathTooLong(usize, usize, usize),
}

/// `reach[x][y]`: y is reachable from x by a walk of at least one hop.
pub fn reach_one_or_more(g: &TargetGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    (0..n)
        .map(|x| {
            let mut seen = vec![false; n];
            let mut queue: VecDeque<usize> = g.succ[x].iter().copied().collect();
            for &y in &g.succ[x] {
                seen[y] = true;
            }
            while let Some(y) = queue.pop_front() {
                for &z in &g.succ[y] {
                    if !seen[z] {
                        seen[z] = true;
                        queue.push_back(z);
                    }
                }
            }
            seen
        })
        .collect()
}

/// Source nodes in DFS preorder from the entry; unreachable nodes follow.
fn dfs_order(src: &Cfg) -> Vec<usize> {
    let n = src.node_count();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![src.entry];
    while let Some(x) = stack.pop() {
        if seen[x] {
            continue;
        }
        seen[x] = true;
        order.push(x);
        for &y in src.succ[x].iter().rev() {
            if !seen[y] {
                stack.push(y);
            }
        }
    }
    order.extend((0..n).filter(|&x| !seen[x]));
    order
}

/// Randomized backtracking search for π with the entry pinned to the
/// target entry. Returns the node map; paths are filled by [`route_edges`].
pub fn find_morphism(
    src: &Cfg,
    tgt: &TargetGraph,
    seed: u64,
    budget: u64,
) -> Result<Morphism, EmbedError> {
    let (ns, nt) = (src.node_count(), tgt.node_count());
    if nt < ns {
        return Err(EmbedError::TargetTooSmall { source_nodes: ns, target: nt });
    }
    let reach = reach_one_or_more(tgt);
    let order = dfs_order(src);
    let mut preds = vec![Vec::new(); ns];
    for (a, b) in src.edges() {
        preds[b].push(a);
    }
    let mut search = Search {
        src,
        tgt,
        reach: &reach,
        preds: &preds,
        order: &order,
        pi: vec![usize::MAX; ns],
        used: vec![false; nt],
        steps: 0,
        budget,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    if search.place(0) {
        Ok(Morphism { pi: search.pi, edge_paths: BTreeMap::new() })
    } else {
        Err(EmbedError::Exhausted(budget))
    }
}

struct Search<'a> {
    src: &'a Cfg,
    tgt: &'a TargetGraph,
    reach: &'a [Vec<bool>],
    preds: &'a [Vec<usize>],
    order: &'a [usize],
    pi: Vec<usize>,
    used: Vec<bool>,
    steps: u64,
    budget: u64,
    rng: ChaCha8Rng,
}

impl Search<'_> {
    fn admissible(&self, x: usize, t: usize) -> bool {
        let ok_out = self.src.succ[x].iter().all(|&y| {
            let img = if y == x { t } else { self.pi[y] };
            img == usize::MAX || self.reach[t][img]
        });
        let ok_in = self.preds[x].iter().all(|&u| {
            let img = self.pi[u];
            u == x || img == usize::MAX || self.reach[img][t]
        });
        ok_out && ok_in
    }

    fn direct_score(&self, x: usize, t: usize) -> usize {
        let out = self.src.succ[x]
            .iter()
            .filter(|&&y| self.pi[y] != usize::MAX && self.tgt.has_edge(t, self.pi[y]))
            .count();
        let inc = self.preds[x]
            .iter()
            .filter(|&&u| self.pi[u] != usize::MAX && self.tgt.has_edge(self.pi[u], t))
            .count();
        out + inc
    }

    fn place(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let x = self.order[depth];
        let mut candidates: Vec<usize> = if x == self.src.entry {
            vec![self.tgt.entry]
        } else {
            (0..self.tgt.node_count()).filter(|&t| !self.used[t]).collect()
        };
        candidates.shuffle(&mut self.rng);
        let mut scored: Vec<(usize, usize)> =
            candidates.into_iter().map(|t| (self.direct_score(x, t), t)).collect();
        scored.sort_by_key(|s| std::cmp::Reverse(s.0));
        for (_, t) in scored {
            self.steps += 1;
            if self.steps > self.budget {
                return false;
            }
            if self.used[t] || !self.admissible(x, t) {
                continue;
            }
            self.pi[x] = t;
            self.used[t] = true;
            if self.place(depth + 1) {
                return true;
            }
            self.pi[x] = usize::MAX;
            self.used[t] = false;
            if self.steps > self.budget {
                return false;
            }
        }
        false
    }
}

/// Uniformly random shortest walk of at least one hop from `from` to `to`
/// whose intermediate nodes avoid `avoid`. Returns the intermediates.
pub fn find_path<R: Rng>(
    tgt: &TargetGraph,
    from: usize,
    to: usize,
    avoid: &HashSet<usize>,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let n = tgt.node_count();
    let mut dist = vec![usize::MAX; n];
    let mut count = vec![0f64; n];
    let mut queue = VecDeque::new();
    for &s in &tgt.succ[from] {
        if dist[s] == usize::MAX {
            dist[s] = 1;
            queue.push_back(s);
        }
        count[s] += 1.0;
    }
    while let Some(x) = queue.pop_front() {
        if x == to {
            continue;
        }
        if avoid.contains(&x) {
            continue;
        }
        for &y in &tgt.succ[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
            if dist[y] == dist[x] + 1 {
                count[y] += count[x];
            }
        }
    }
    if dist[to] == usize::MAX {
        return None;
    }
    // Sample predecessors backwards, weighted by shortest-walk counts.
    let mut rev = vec![Vec::new(); n];
    for x in 0..n {
        for &y in &tgt.succ[x] {
            rev[y].push(x);
        }
    }
    let mut mids = Vec::new();
    let mut cur = to;
    while dist[cur] > 1 {
        let d = dist[cur];
        let preds: Vec<usize> = rev[cur]
            .iter()
            .copied()
            .filter(|&p| dist[p] == d - 1 && p != to && !avoid.contains(&p))
            .collect();
        let total: f64 = preds.iter().map(|&p| count[p]).sum();
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = preds[preds.len() - 1];
        for &p in &preds {
            if pick < count[p] {
                chosen = p;
                break;
            }
            pick -= count[p];
        }
        mids.push(chosen);
        cur = chosen;
    }
    mids.reverse();
    Some(mids)
}

/// Route every source edge through the target, preferring paths that do
/// not cross images of other source nodes.
pub fn route_edges(
    src: &Cfg,
    tgt: &TargetGraph,
    pi: &[usize],
    seed: u64,
) -> Result<Morphism, EmbedError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x726f_7574_6573);
    let mut edge_paths = BTreeMap::new();
    let empty = HashSet::new();
    for (a, b) in src.edges() {
        let avoid: HashSet<usize> = pi
            .iter()
            .enumerate()
            .filter(|&(x, _)| x != a && x != b)
            .map(|(_, &t)| t)
            .collect();
        let path = find_path(tgt, pi[a], pi[b], &avoid, &mut rng)
            .or_else(|| find_path(tgt, pi[a], pi[b], &empty, &mut rng))
            .ok_or(EmbedError::Unroutable(a, b))?;
        if path.len() + 1 > MAX_ROUTE_HOPS {
            return Err(EmbedError::PathTooLong(a, b, path.len() + 1));
        }
        edge_paths.insert((a, b), path);
    }
    Ok(Morphism { pi: pi.to_vec(), edge_paths })
}

/// Check the three edge-membership conditions of every stored path.
pub fn paths_valid(src: &Cfg, tgt: &TargetGraph, m: &Morphism) -> bool {
    src.edges().into_iter().all(|(a, b)| match m.walk(a, b) {
        Some(w) => w.windows(2).all(|e| tgt.succ[e[0]].contains(&e[1])),
        None => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::generate_target;

    #[test]
    fn single_node_maps_entry() {
        let src = Cfg::from_edges(1, 0, &[]);
        let tgt = generate_target(6, 3).unwrap();
        let m = find_morphism(&src, &tgt, 1, DEFAULT_SEARCH_BUDGET).unwrap();
        assert_eq!(m.pi, vec![tgt.entry]);
    }

    #[test]
    fn chain_into_chain_is_forced() {
        let src = Cfg::from_edges(2, 0, &[(0, 1)]);
        let tgt = TargetGraph::from_edges(2, 0, &[(0, 1)]);
        let m = find_morphism(&src, &tgt, 4, DEFAULT_SEARCH_BUDGET).unwrap();
        assert_eq!(m.pi, vec![0, 1]);
        let r = route_edges(&src, &tgt, &m.pi, 0).unwrap();
        assert_eq!(r.edge_paths[&(0, 1)], Vec::<usize>::new());
    }

    #[test]
    fn distance_three_has_two_intermediates() {
        let tgt = TargetGraph::from_edges(5, 0, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let src = Cfg::from_edges(2, 0, &[(0, 1)]);
        let r = route_edges(&src, &tgt, &[0, 3], 7).unwrap();
        assert_eq!(r.edge_paths[&(0, 1)], vec![1, 2]);
        assert!(paths_valid(&src, &tgt, &r));
    }

    #[test]
    fn unreachable_endpoint_fails() {
        let tgt = TargetGraph::from_edges(3, 0, &[(0, 1), (0, 2)]);
        let src = Cfg::from_edges(2, 0, &[(0, 1)]);
        assert_eq!(route_edges(&src, &tgt, &[1, 2], 0), Err(EmbedError::Unroutable(0, 1)));
        assert!(find_morphism(&Cfg::from_edges(3, 0, &[(1, 2)]), &tgt, 0, 1000).is_err());
    }

    #[test]
    fn self_loop_routes_through_cycle() {
        let tgt = TargetGraph::from_edges(3, 0, &[(0, 1), (1, 2), (2, 0)]);
        let src = Cfg::from_edges(1, 0, &[(0, 0)]);
        let r = route_edges(&src, &tgt, &[0], 0).unwrap();
        assert_eq!(r.walk(0, 0).unwrap(), vec![0, 1, 2, 0]);
    }

    #[test]
    fn shortest_walk_choice_is_spread() {
        // Two disjoint 2-hop routes from 0 to 3.
        let tgt = TargetGraph::from_edges(4, 0, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut via_one = 0;
        for _ in 0..2000 {
            if find_path(&tgt, 0, 3, &HashSet::new(), &mut rng).unwrap() == vec![1] {
                via_one += 1;
            }
        }
        assert!((900..1100).contains(&via_one), "{via_one}");
    }

    #[test]
    fn morphism_json_keys() {
        let src = Cfg::from_edges(2, 0, &[(0, 1)]);
        let tgt = TargetGraph::from_edges(3, 0, &[(0, 2), (2, 1), (1, 0)]);
        let r = route_edges(&src, &tgt, &[0, 1], 0).unwrap();
        let j = r.to_json();
        assert_eq!(j["pi"]["1"], 1);
        assert_eq!(j["paths"]["0→1"], serde_json::json!([2]));
    }
}
