use cfgmorph::corpus;
use cfgmorph::transform::{obfuscate, ObfuscateParams};
use cfgmorph::vm::{run_output, Limits};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_sample(s: &corpus::Sample, params: &ObfuscateParams, seeds: std::ops::Range<u64>, runs: usize) {
    let p = s.program();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in seeds {
        let ob = obfuscate(&p, params, seed).unwrap_or_else(|e| panic!("{} seed {seed}: {e}", s.name));
        for _ in 0..runs {
            let inputs = s.random_inputs(&mut rng);
            let want = run_output(&p, &inputs, Limits::default()).unwrap().0;
            let got = run_output(&ob.program, &inputs, Limits::default())
                .unwrap_or_else(|e| panic!("{} seed {seed} {inputs:?}: {e}", s.name))
                .0;
            assert_eq!(got, want, "{} seed {seed} inputs {inputs:?}", s.name);
        }
    }
}

#[test]
fn corpus_outputs_match() {
    for s in corpus::ALL {
        check_sample(s, &ObfuscateParams::default(), 0..4, 8);
    }
}

#[test]
fn extra_hops_preserve_outputs() {
    for extra in [0, 1, 2, 4] {
        let params = ObfuscateParams { extra_hops: extra, ..Default::default() };
        for s in corpus::ALL {
            check_sample(s, &params, 10..12, 4);
        }
    }
}
