//! Security games and the dynamic active-node recovery attack.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{Cfg, Digraph};
use crate::isa::{Opcode, Program};
use crate::layout::{reg_slot, HOP_SLOT, MCUR_SLOT, PATH_SLOT, RESERVED_BASE, WORD};
use crate::transform::{NodeSpan, Sidecar};
use crate::vm::{Code, Limits, Machine, Status, VmError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("subset size {n} exceeds universe size {v}")]
    SubsetTooLarge { v: u64, n: u64 },
    #[error("empty universe")]
    EmptyUniverse,
    #[error("obfuscated program failed on the baseline run: {0}")]
    Baseline(VmError),
    #[error("inconsistent recovery: {0}")]
    Inconsistent(String),
}

fn binomial(v: u64, n: u64) -> BigUint {
    let k = n.min(v - n);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(v - i) / BigUint::from(i + 1);
    }
    acc
}

/// `1 / C(v, n)`: a uniformly random n-subset is exactly the active set.
pub fn full_recovery_prob(v: u64, n: u64) -> Result<BigRational, AnalysisError> {
    if n > v {
        return Err(AnalysisError::SubsetTooLarge { v, n });
    }
    Ok(BigRational::new(BigUint::one().into(), binomial(v, n).into()))
}

/// `n / v`: a uniformly random node is active.
pub fn one_recovery_prob(v: u64, n: u64) -> Result<BigRational, AnalysisError> {
    if v == 0 {
        return Err(AnalysisError::EmptyUniverse);
    }
    if n > v {
        return Err(AnalysisError::SubsetTooLarge { v, n });
    }
    Ok(BigRational::new(BigUint::from(n).into(), BigUint::from(v).into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub game: String,
    pub v_size: u64,
    pub n_size: u64,
    /// Exact value as `num/den`.
    pub closed_form: String,
    pub closed_form_f64: f64,
    /// `None` when no trials were run.
    pub empirical: Option<f64>,
    pub successes: u64,
    pub trials: u64,
}

fn ratio_f64(r: &BigRational) -> f64 {
    let (n, d) = (r.numer(), r.denom());
    match (n.to_f64(), d.to_f64()) {
        (Some(a), Some(b)) if b.is_finite() => a / b,
        _ => {
            // Scale down huge denominators by their bit length.
            let shift = d.bits().saturating_sub(1000);
            let d = (d >> shift).to_f64().unwrap_or(f64::INFINITY);
            n.to_f64().unwrap_or(0.0) / d / 2f64.powi(shift as i32)
        }
    }
}

/// Random-guess adversaries against a known active set inside `0..v`.
pub fn simulate_games_on(
    v: usize,
    active: &BTreeSet<usize>,
    trials: u64,
    seed: u64,
) -> Result<(GameReport, GameReport), AnalysisError> {
    let n = active.len();
    let full = full_recovery_prob(v as u64, n as u64)?;
    let one = one_recovery_prob(v as u64, n as u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut full_hits, mut one_hits) = (0u64, 0u64);
    for _ in 0..trials {
        let guess = sample(&mut rng, v, n);
        if guess.iter().all(|x| active.contains(&x)) {
            full_hits += 1;
        }
        if active.contains(&rng.gen_range(0..v)) {
            one_hits += 1;
        }
    }
    let report = |game: &str, cf: &BigRational, hits: u64| GameReport {
        game: game.to_string(),
        v_size: v as u64,
        n_size: n as u64,
        closed_form: cf.to_string(),
        closed_form_f64: ratio_f64(cf),
        empirical: (trials > 0).then(|| hits as f64 / trials as f64),
        successes: hits,
        trials,
    };
    Ok((report("full-recovery", &full, full_hits), report("one-recovery", &one, one_hits)))
}

/// Games on an obfuscated program: V is the target node set, N the images.
pub fn simulate_games(
    sidecar: &Sidecar,
    trials: u64,
    seed: u64,
) -> Result<(GameReport, GameReport), AnalysisError> {
    let active: BTreeSet<usize> = sidecar.pi.iter().copied().collect();
    simulate_games_on(sidecar.target_nodes, &active, trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveVisit {
    pub visit: usize,
    pub node: usize,
    /// Entered through a return popped from the program stack.
    pub via_return: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub recovered_active: BTreeSet<usize>,
    /// Recovered active visits, one sequence per input vector.
    pub sequences: Vec<Vec<ActiveVisit>>,
    pub vm_steps_total: u64,
    pub mutations_tested: u64,
    /// Segments where no mutation changed the state.
    pub fallbacks: u64,
    pub correct: bool,
}

#[derive(Debug, Clone)]
struct Visit {
    node: usize,
    path: u64,
    /// The route word changed or the hop counter was reset during the visit.
    updated: bool,
    via_return: bool,
    /// Unfolded mask observed at body entry; ground truth only.
    mask: u64,
}

struct Baseline {
    visits: Vec<Visit>,
    /// Fingerprint at the entry of visit `i` (index `visits.len()` = final state).
    fingerprints: BTreeMap<usize, u64>,
    steps: u64,
}

fn fingerprint(m: &Machine) -> u64 {
    let mut h = DefaultHasher::new();
    m.mem[..(RESERVED_BASE / WORD) as usize].hash(&mut h);
    for i in 0..9 {
        m.peek(reg_slot(i)).hash(&mut h);
    }
    m.output.hash(&mut h);
    m.peek(PATH_SLOT).hash(&mut h);
    h.finish()
}

struct Runner<'a> {
    code: Code,
    starts: HashMap<usize, usize>,
    spans: BTreeMap<usize, &'a NodeSpan>,
    limits: Limits,
}

impl<'a> Runner<'a> {
    fn new(p: &Program, spans: &'a [NodeSpan], limits: Limits) -> Result<Self, VmError> {
        Ok(Runner {
            code: Code::new(p)?,
            starts: spans.iter().map(|s| (s.start, s.node)).collect(),
            spans: spans.iter().map(|s| (s.node, s)).collect(),
            limits,
        })
    }

    fn baseline(&self, inputs: &[u64], boundaries: Option<&BTreeSet<usize>>) -> Result<Baseline, VmError> {
        let mut m = Machine::new(inputs, 0);
        let mut visits: Vec<Visit> = Vec::new();
        let mut fingerprints = BTreeMap::new();
        let mut last_ret_sp: Option<u64> = None;
        while m.status == Status::Running {
            if m.steps >= self.limits.max_steps {
                return Err(VmError::StepLimit { limit: self.limits.max_steps });
            }
            if let Some(&node) = self.starts.get(&m.pc) {
                let idx = visits.len();
                if boundaries.is_none_or(|b| b.contains(&idx)) {
                    fingerprints.insert(idx, fingerprint(&m));
                }
                let via_return = last_ret_sp.is_some_and(|sp| sp < RESERVED_BASE);
                visits.push(Visit {
                    node,
                    path: m.peek(PATH_SLOT),
                    updated: false,
                    via_return,
                    mask: u64::MAX,
                });
            }
            if let Some(v) = visits.last_mut() {
                if self.spans[&v.node].body == m.pc {
                    v.mask = m.peek(MCUR_SLOT);
                }
            }
            last_ret_sp = (self.code.opcode(m.pc) == Some(Opcode::Ret)).then(|| m.sp());
            let hop = m.peek(HOP_SLOT);
            m.step(&self.code)?;
            if let Some(v) = visits.last_mut() {
                v.updated |= m.peek(PATH_SLOT) != v.path || m.peek(HOP_SLOT) < hop;
            }
        }
        fingerprints.insert(visits.len(), fingerprint(&m));
        Ok(Baseline { visits, fingerprints, steps: m.steps })
    }

    /// Re-run from the start with the body of visit `target` neutralized;
    /// return the fingerprint at the entry of visit `stop` (or at the end).
    fn mutated(&self, inputs: &[u64], target: usize, node: usize, stop: usize, budget: u64) -> (Option<u64>, u64) {
        let span = self.spans[&node];
        let mut neutral = self.code.clone();
        for pc in span.body..span.trailer {
            neutral.neutralize(pc);
        }
        let mut m = Machine::new(inputs, 0);
        let mut visit: Option<usize> = None;
        loop {
            if m.status == Status::Halted {
                let fp = (visit.map_or(0, |v| v + 1) == stop).then(|| fingerprint(&m));
                return (fp, m.steps);
            }
            if m.steps >= budget {
                return (None, m.steps);
            }
            if self.starts.contains_key(&m.pc) {
                let next = visit.map_or(0, |v| v + 1);
                if next == stop {
                    return (Some(fingerprint(&m)), m.steps);
                }
                visit = Some(next);
            }
            let code = if visit == Some(target) { &neutral } else { &self.code };
            if m.step(code).is_err() {
                return (None, m.steps);
            }
        }
    }
}

/// Mutation attack: find the active node of every route segment by
/// neutralizing candidate bodies and watching the state at the segment end.
pub fn dynamic_attack(
    program: &Program,
    sidecar: &Sidecar,
    inputs: &[Vec<u64>],
    limits: Limits,
) -> Result<AttackReport, AnalysisError> {
    let runner = Runner::new(program, &sidecar.node_spans, limits).map_err(AnalysisError::Baseline)?;
    let mut report = AttackReport {
        recovered_active: BTreeSet::new(),
        sequences: Vec::new(),
        vm_steps_total: 0,
        mutations_tested: 0,
        fallbacks: 0,
        correct: true,
    };
    for inp in inputs {
        let base = runner.baseline(inp, None).map_err(AnalysisError::Baseline)?;
        report.vm_steps_total += base.steps;
        let n = base.visits.len();
        // Segment ends: visits after which the consumed route word changes.
        let mut ends: Vec<usize> =
            (0..n.saturating_sub(1)).filter(|&j| base.visits[j].updated).collect();
        if n > 0 {
            ends.push(n - 1);
        }
        let mut seq = Vec::new();
        let mut first = 0;
        for &end in &ends {
            let stop = end + 1;
            let want = base.fingerprints[&stop];
            let mut found = Vec::new();
            for c in first..=end {
                let (fp, steps) = runner.mutated(inp, c, base.visits[c].node, stop, base.steps * 2 + 1000);
                report.vm_steps_total += steps;
                report.mutations_tested += 1;
                if fp != Some(want) {
                    found.push(c);
                }
            }
            let chosen = match found.as_slice() {
                [] => {
                    report.fallbacks += 1;
                    end
                }
                [c, ..] => *c,
            };
            let v = &base.visits[chosen];
            seq.push(ActiveVisit { visit: chosen, node: v.node, via_return: v.via_return });
            report.recovered_active.insert(v.node);
            first = end + 1;
        }
        let truth: Vec<usize> =
            base.visits.iter().enumerate().filter(|(_, v)| v.mask == 0).map(|(i, _)| i).collect();
        let got: Vec<usize> = seq.iter().map(|a| a.visit).collect();
        let images: BTreeSet<usize> = sidecar.pi.iter().copied().collect();
        report.correct &= truth == got && seq.iter().all(|a| images.contains(&a.node));
        report.sequences.push(seq);
    }
    Ok(report)
}

/// Ground-truth active visits per input, read from the mask slot.
pub fn oracle_active(
    program: &Program,
    sidecar: &Sidecar,
    inputs: &[u64],
    limits: Limits,
) -> Result<Vec<usize>, VmError> {
    let runner = Runner::new(program, &sidecar.node_spans, limits)?;
    let base = runner.baseline(inputs, Some(&BTreeSet::new()))?;
    Ok(base.visits.iter().filter(|v| v.mask == 0).map(|v| v.node).collect())
}

/// Contract passive chains: consecutive active visits become edges, except
/// transitions made by a genuine return.
pub fn reconstruct_cfg(report: &AttackReport) -> Result<Cfg, AnalysisError> {
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for seq in &report.sequences {
        seen.extend(seq.iter().map(|a| a.node));
    }
    if seen != report.recovered_active {
        return Err(AnalysisError::Inconsistent(
            "recovered set and active sequences disagree".to_string(),
        ));
    }
    let entry_node = report
        .sequences
        .iter()
        .find_map(|s| s.first())
        .map(|a| a.node)
        .ok_or_else(|| AnalysisError::Inconsistent("no active visits".to_string()))?;
    if report.sequences.iter().any(|s| s.first().map(|a| a.node) != Some(entry_node)) {
        return Err(AnalysisError::Inconsistent("runs start at different nodes".to_string()));
    }
    let index: BTreeMap<usize, usize> = seen.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut edges = BTreeSet::new();
    for seq in &report.sequences {
        for w in seq.windows(2) {
            if !w[1].via_return {
                edges.insert((index[&w[0].node], index[&w[1].node]));
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let g = Cfg::from_edges(seen.len(), index[&entry_node], &edges);
    if g.max_out_degree() > 2 {
        return Err(AnalysisError::Inconsistent("out-degree above two".to_string()));
    }
    Ok(g)
}

/// Least-squares fit of `y = c·x^k` in log-log space; returns `(k, c)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let k = sxy / sxx;
    (k, (my - k * mx).exp())
}

pub fn steps_csv(points: &[(usize, u64)]) -> String {
    let mut s = String::from("v_prime,vm_steps_total\n");
    for (v, steps) in points {
        s.push_str(&format!("{v},{steps}\n"));
    }
    s
}

impl GameReport {
    pub fn is_no_data(&self) -> bool {
        self.empirical.is_none()
    }
}

/// `true` when `successes` lies within `sigmas` standard deviations of the
/// binomial mean.
pub fn within_sigma(successes: u64, trials: u64, p: f64, sigmas: f64) -> bool {
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    if sd.is_zero() {
        return successes as f64 == mean;
    }
    (successes as f64 - mean).abs() <= sigmas * sd
}
