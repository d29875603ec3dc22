//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.

use std::collections::{BTreeSet, VecDeque};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfgmorph::analysis::{
    dynamic_attack, fit_power_law, full_recovery_prob, one_recovery_prob, reconstruct_cfg,
    simulate_games, within_sigma,
};
use cfgmorph::cfg::{extract_cfg, is_isomorphic};
use cfgmorph::corpus;
use cfgmorph::graphgen::generate_target;
use cfgmorph::transform::audit::audit;
use cfgmorph::transform::gadget::{flip_gadget, flip_gadget_rational};
use cfgmorph::transform::{obfuscate, ObfuscateParams};
use cfgmorph::vm::{run_output, Limits};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EQUIVALENCE_INPUTS: usize = 100;
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(60);
const ISOMORPHISM_SEEDS: u64 = 100;
const ISOMORPHISM_MIN_FRACTION: f64 = 0.99;
const ISOMORPHISM_BUDGET: Duration = Duration::from_secs(30);
const PASSIVITY_RANDOM_INPUTS: usize = 5;
const BRUTE_FORCE_MAX_V: u64 = 12;
const GAME_TRIALS: u64 = 100_000;
const GAME_SIGMAS: f64 = 3.0;
const NEGLIGIBLE_V: u64 = 84;
const NEGLIGIBLE_N: u64 = 42;
const NEGLIGIBLE_LOG2: usize = 80;
const ATTACK_MAX_TARGET: usize = 64;
const ATTACK_SEED: u64 = 3;
const FIT_CHAIN_SIZES: [usize; 3] = [4, 8, 16];
const FIT_SEEDS: u64 = 4;
const FIT_EXPONENT: (f64, f64) = (2.0, 3.3);
const ATTACK_BUDGET: Duration = Duration::from_secs(600);
const GRAPH_SAMPLES: u64 = 1000;
const GRAPH_BUDGET: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(budget: Duration, start: Instant, detail: String) -> Outcome {
    let t = start.elapsed();
    if t <= budget {
        Ok(format!("{detail}, {:.1}s", t.as_secs_f64()))
    } else {
        Err(format!("{detail}, {:.1}s over the {}s budget", t.as_secs_f64(), budget.as_secs()))
    }
}

fn equivalence() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for (i, s) in corpus::ALL.iter().enumerate() {
        let p = s.program();
        let ob = obfuscate(&p, &ObfuscateParams::default(), i as u64).map_err(|e| format!("{}: {e}", s.name))?;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for _ in 0..EQUIVALENCE_INPUTS {
            let inputs = s.random_inputs(&mut rng);
            let want = run_output(&p, &inputs, Limits::default()).map_err(|e| e.to_string())?.0;
            let got = run_output(&ob.program, &inputs, Limits::default()).map_err(|e| e.to_string())?.0;
            if got != want {
                return Err(format!("{} on {inputs:?}: {got:?} != {want:?}", s.name));
            }
            runs += 1;
        }
    }
    within(EQUIVALENCE_BUDGET, start, format!("{} programs, {runs} inputs", corpus::ALL.len()))
}

fn non_isomorphism() -> Outcome {
    let start = Instant::now();
    let mut worst = 1.0f64;
    for s in corpus::ALL {
        let p = s.program();
        let g = extract_cfg(&p);
        let mut distinct = 0;
        for seed in 0..ISOMORPHISM_SEEDS {
            let ob = obfuscate(&p, &ObfuscateParams::default(), seed).map_err(|e| e.to_string())?;
            if !is_isomorphic(&g, &extract_cfg(&ob.program)).map_err(|e| e.to_string())? {
                distinct += 1;
            }
        }
        let frac = distinct as f64 / ISOMORPHISM_SEEDS as f64;
        worst = worst.min(frac);
        if frac < ISOMORPHISM_MIN_FRACTION {
            return Err(format!("{}: {distinct}/{ISOMORPHISM_SEEDS} seeds non-isomorphic", s.name));
        }
    }
    within(ISOMORPHISM_BUDGET, start, format!("worst program {:.0}% of seeds non-isomorphic", worst * 100.0))
}

fn passivity() -> Outcome {
    let (mut passive, mut active) = (0, 0);
    for (i, s) in corpus::ALL.iter().enumerate() {
        let ob = obfuscate(&s.program(), &ObfuscateParams::default(), 50 + i as u64).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut inputs: Vec<Vec<u64>> = s.coverage.iter().map(|c| c.to_vec()).collect();
        inputs.extend((0..PASSIVITY_RANDOM_INPUTS).map(|_| s.random_inputs(&mut rng)));
        for inp in &inputs {
            let a = audit(&ob, inp, Limits::default()).map_err(|e| e.to_string())?;
            if let Some(v) = a.passivity.first() {
                return Err(format!("{}: {v}", s.name));
            }
            if !a.is_clean() {
                return Err(format!("{}: mask or route violation {:?} {:?}", s.name, a.masks, a.onion));
            }
            passive += a.passive_hops;
            active += a.active_hops;
        }
    }
    Ok(format!("{passive} passive and {active} active hops traced, no visible effect"))
}

fn gadget() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a_values: Vec<u64> = (0..1 << 16).collect();
    a_values.extend([u64::MAX, u64::MAX - 1, 1 << 63]);
    a_values.extend((0..1 << 16).map(|_| rng.gen::<u64>()));
    for &a in &a_values {
        for r in 0..2u64 {
            if flip_gadget(5, r, a) != 1 - r {
                return Err(format!("wrapping gadget: a={a:#x}, r={r}"));
            }
        }
    }
    for a in 1..1u64 << 16 {
        for r in 0..2u64 {
            if flip_gadget_rational(5, r, a) != 1 - r {
                return Err(format!("rational gadget: a={a}, r={r}"));
            }
        }
    }
    Ok(format!("r' = 1 - r for r in {{0,1}} over {} values of a", a_values.len()))
}

fn brute_force_full(v: u64, n: u64) -> BigRational {
    let count = (0u32..1 << v).filter(|m| u64::from(m.count_ones()) == n).count();
    BigRational::new(BigInt::one(), BigInt::from(count))
}

fn probabilities() -> Outcome {
    for v in 0..=BRUTE_FORCE_MAX_V {
        for n in 0..=v {
            let got = full_recovery_prob(v, n).map_err(|e| e.to_string())?;
            if got != brute_force_full(v, n) {
                return Err(format!("full_recovery_prob({v},{n}) = {got}"));
            }
        }
    }
    for n in 1..=50u64 {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        if one_recovery_prob(2 * n, n).map_err(|e| e.to_string())? != half {
            return Err(format!("one_recovery_prob({}, {n}) != 1/2", 2 * n));
        }
    }
    let ob = obfuscate(&corpus::chain(10), &ObfuscateParams { target_factor: 2.0, ..ObfuscateParams::default() }, 0)
        .map_err(|e| e.to_string())?;
    let (full, one) = simulate_games(&ob.sidecar, GAME_TRIALS, 11).map_err(|e| e.to_string())?;
    if (full.v_size, full.n_size) != (20, 10) {
        return Err(format!("game instance has |V|={} |N|={}", full.v_size, full.n_size));
    }
    for g in [&full, &one] {
        if !within_sigma(g.successes, g.trials, g.closed_form_f64, GAME_SIGMAS) {
            return Err(format!("{}: {}/{} vs {}", g.game, g.successes, g.trials, g.closed_form));
        }
    }
    Ok(format!(
        "exact for v <= {BRUTE_FORCE_MAX_V}; full {}/{} vs {}, one {}/{} vs {}",
        full.successes, full.trials, full.closed_form, one.successes, one.trials, one.closed_form
    ))
}

fn negligibility() -> Outcome {
    let p = full_recovery_prob(NEGLIGIBLE_V, NEGLIGIBLE_N).map_err(|e| e.to_string())?;
    let bound = BigRational::new(BigInt::one(), BigInt::one() << NEGLIGIBLE_LOG2);
    if p < bound {
        Ok(format!("1/C({NEGLIGIBLE_V},{NEGLIGIBLE_N}) = {p} < 2^-{NEGLIGIBLE_LOG2}"))
    } else {
        Err(format!("{p} is not below 2^-{NEGLIGIBLE_LOG2}"))
    }
}

fn attack() -> Outcome {
    let start = Instant::now();
    let mut instances = 0;
    for s in corpus::ALL {
        let p = s.program();
        let ob = obfuscate(&p, &ObfuscateParams::default(), ATTACK_SEED).map_err(|e| e.to_string())?;
        if ob.sidecar.target_nodes > ATTACK_MAX_TARGET {
            continue;
        }
        let inputs: Vec<Vec<u64>> = s.coverage.iter().map(|c| c.to_vec()).collect();
        let rep = dynamic_attack(&ob.program, &ob.sidecar, &inputs, Limits::default())
            .map_err(|e| format!("{}: {e}", s.name))?;
        if !rep.correct {
            return Err(format!("{}: active set not recovered", s.name));
        }
        let g = reconstruct_cfg(&rep).map_err(|e| format!("{}: {e}", s.name))?;
        if !is_isomorphic(&g, &extract_cfg(&p)).map_err(|e| e.to_string())? {
            return Err(format!("{}: reconstruction is not isomorphic to the source CFG", s.name));
        }
        instances += 1;
    }
    let mut points = Vec::new();
    for k in FIT_CHAIN_SIZES {
        let p = corpus::chain(k);
        for seed in 0..FIT_SEEDS {
            let ob = obfuscate(&p, &ObfuscateParams::default(), seed).map_err(|e| e.to_string())?;
            let rep = dynamic_attack(&ob.program, &ob.sidecar, &[vec![0]], Limits::default())
                .map_err(|e| e.to_string())?;
            if !rep.correct {
                return Err(format!("chain({k}) seed {seed}: active set not recovered"));
            }
            points.push((ob.sidecar.target_nodes as f64, rep.vm_steps_total as f64));
        }
    }
    let (k, _) = fit_power_law(&points);
    if !(FIT_EXPONENT.0..=FIT_EXPONENT.1).contains(&k) {
        return Err(format!("step-count exponent {k:.3} outside [{}, {}]", FIT_EXPONENT.0, FIT_EXPONENT.1));
    }
    within(ATTACK_BUDGET, start, format!("{instances} instances recovered exactly, exponent {k:.3}"))
}

fn reachable_from_entry(succ: &[Vec<usize>], entry: usize) -> bool {
    let mut seen = vec![false; succ.len()];
    let mut queue = VecDeque::from([entry]);
    seen[entry] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &succ[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn graph_generation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sizes = BTreeSet::new();
    for seed in 0..GRAPH_SAMPLES {
        let n = rng.gen_range(2..=128);
        sizes.insert(n);
        let t = generate_target(n, seed).map_err(|e| e.to_string())?;
        if t.succ.len() != n || t.succ.iter().any(|s| s.len() > 2) {
            return Err(format!("seed {seed}, n {n}: degree bound violated"));
        }
        if !reachable_from_entry(&t.succ, t.entry) {
            return Err(format!("seed {seed}, n {n}: unreachable node"));
        }
    }
    within(GRAPH_BUDGET, start, format!("{GRAPH_SAMPLES} targets over {} sizes", sizes.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("functional equivalence", equivalence),
        ("non-isomorphism", non_isomorphism),
        ("passivity soundness", passivity),
        ("flip gadget", gadget),
        ("recovery probabilities", probabilities),
        ("negligibility", negligibility),
        ("dynamic attack", attack),
        ("graph generation", graph_generation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("[{}] {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[{}] {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
