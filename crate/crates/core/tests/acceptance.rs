//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line each; exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nkbench::evolution::{
    bit_flip_mutation, rtr_replace, run_evolution, tournament_indices, uniform_crossover, Algorithm, EvoConfig,
    Population,
};
use nkbench::exact::{solve, SolveConfig};
use nkbench::harness::{
    aggregate, bisect_population_size, bisection_base_seed, compare, instance_seed, read_csv, run_sweep,
    BisectionConfig, RunStats, SweepConfig, SweepOptions, RESULTS_FILE,
};
use nkbench::hboa::{learn_model, split_gain, HboaConfig};
use nkbench::rng::rng_from_seed;
use nkbench::{Genome, NkInstance};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Fitness computed straight from the published tables: each subfunction
/// index reads the bit itself as the most significant bit, then its
/// neighbors in stored order.
fn oracle_fitness(inst: &NkInstance, bits: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..inst.n() {
        let mut idx = bits[i] as usize;
        for &p in inst.neighbors(i) {
            idx = (idx << 1) | bits[p] as usize;
        }
        total += inst.table(i)[idx];
    }
    total
}

fn enumerate_max(inst: &NkInstance) -> f64 {
    let n = inst.n();
    let mut best = f64::NEG_INFINITY;
    let mut bits = vec![false; n];
    for x in 0u64..1 << n {
        for (p, b) in bits.iter_mut().enumerate() {
            *b = (x >> (n - 1 - p)) & 1 == 1;
        }
        best = best.max(oracle_fitness(inst, &bits));
    }
    best
}

fn within(elapsed: Duration, budget_secs: u64) -> Outcome {
    if elapsed > Duration::from_secs(budget_secs) {
        Err(format!("took {elapsed:.1?}, budget {budget_secs}s"))
    } else {
        Ok(String::new())
    }
}

fn exactness_oracle() -> Outcome {
    let start = Instant::now();
    let combos: Vec<(usize, usize)> = [12, 16, 20]
        .into_iter()
        .flat_map(|n| (2..=6).map(move |k| (n, k)))
        .collect();
    let mut worst_nodes = 0;
    for t in 0..200 {
        let (n, k) = combos[t % combos.len()];
        let inst = NkInstance::generate(n, k, instance_seed(0xE1, n, k, t)).unwrap();
        let res = solve(&inst, &SolveConfig::default()).map_err(|e| e.to_string())?;
        let oracle = enumerate_max(&inst);
        ensure!(
            res.optimum_value == oracle,
            "n={n} k={k} trial {t}: branch and bound {} vs enumeration {oracle}",
            res.optimum_value
        );
        ensure!(
            oracle_fitness(&inst, &res.optimum_bits) == oracle,
            "n={n} k={k} trial {t}: returned string does not attain the optimum"
        );
        worst_nodes = worst_nodes.max(res.nodes_expanded);
    }
    within(start.elapsed(), 300)?;
    Ok(format!("200 instances, max {worst_nodes} nodes, {:.1?}", start.elapsed()))
}

fn delta_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(0xD2);
    let mut worst = 0f64;
    let mut cache: BTreeMap<(usize, usize, u64), NkInstance> = BTreeMap::new();
    for t in 0..10_000u64 {
        let k = rng.gen_range(0..=6);
        let n = rng.gen_range(k + 1..=50);
        let seed = t % 200;
        let inst = cache
            .entry((n, k, seed))
            .or_insert_with(|| NkInstance::generate(n, k, seed).unwrap());
        let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let pos = rng.gen_range(0..n);
        let f = inst.evaluate(&bits).unwrap();
        let delta = inst.delta_evaluate(&bits, f, pos).unwrap();
        let mut flipped = bits.clone();
        flipped[pos] = !flipped[pos];
        let full = oracle_fitness(inst, &flipped);
        worst = worst.max((delta - full).abs());
        ensure!((delta - full).abs() <= 1e-9, "n={n} k={k} pos={pos}: {delta} vs {full}");
    }
    within(start.elapsed(), 60)?;
    Ok(format!("10000 triples, max error {worst:.2e}, {:.1?}", start.elapsed()))
}

fn solve_audit() -> Outcome {
    let start = Instant::now();
    let (n, k) = (24, 3);
    let instances: Vec<(NkInstance, f64)> = (0..50)
        .map(|i| {
            let inst = NkInstance::generate(n, k, instance_seed(0xA3, n, k, i)).unwrap();
            let opt = solve(&inst, &SolveConfig::default()).unwrap().optimum_value;
            (inst, opt)
        })
        .collect();
    let mut sizes = Vec::new();
    for alg in Algorithm::ALL {
        let mut total = 0;
        for (inst, opt) in &instances {
            let bis = BisectionConfig::default();
            let res = bisect_population_size(inst, alg, *opt, &bis, bisection_base_seed(inst.seed(), alg))
                .map_err(|e| format!("{alg}: {e}"))?;
            ensure!(res.runs.len() == 10, "{alg}: {} runs at the returned size", res.runs.len());
            for stats in &res.runs {
                ensure!(stats.success, "{alg}: run {} not marked successful", stats.run_index);
                // Replay the run and audit the genome it reached.
                let cfg = EvoConfig::standard(alg, n, stats.population_size).with_target(*opt);
                let out = run_evolution(inst, &cfg, &mut rng_from_seed(stats.run_seed())).unwrap();
                let reached = oracle_fitness(inst, &out.best.bits);
                ensure!(
                    (reached - opt).abs() <= 1e-9,
                    "{alg} instance {:x} run {}: reached {reached}, optimum {opt}",
                    inst.seed(),
                    stats.run_index
                );
                ensure!(out.counters.generations == stats.generations, "{alg}: replay diverged");
                ensure!(
                    stats.evaluations == (stats.population_size * (stats.generations + 1)) as u64,
                    "{alg}: evaluation accounting broken"
                );
            }
            total += res.population_size;
        }
        sizes.push(format!("{alg} mean N {:.1}", total as f64 / 50.0));
    }
    within(start.elapsed(), 1800)?;
    Ok(format!("{}; {:.1?}", sizes.join(", "), start.elapsed()))
}

fn sweep(grid: BTreeMap<usize, Vec<usize>>, instances: usize, algs: &[Algorithm], seed: u64, dir: &Path) -> Vec<RunStats> {
    let cfg = SweepConfig::new(grid, instances, algs, seed);
    let out = run_sweep(&cfg, dir, &SweepOptions::default()).unwrap();
    assert!(out.complete && out.manifest.uncertified.is_empty());
    read_csv(&dir.join(RESULTS_FILE)).unwrap()
}

fn k_hardness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grid = (2..=5).map(|k| (k, vec![30])).collect();
    let results = sweep(grid, 100, &[Algorithm::GaUniform], 0xB4, dir.path());
    let agg = aggregate(&results);
    ensure!(agg.len() == 4, "expected 4 cells, got {}", agg.len());
    let means: Vec<f64> = agg.iter().map(|a| a.evaluations_mean).collect();
    ensure!(agg.iter().all(|a| a.instances == 100 && a.runs == 1000), "cells do not cover 100 instances x 10 runs");
    ensure!(means.windows(2).all(|w| w[1] > w[0]), "evaluations not increasing in k: {means:?}");
    Ok(format!("mean evaluations k=2..5: {}", fmt_list(&means)))
}

fn by_algorithm(results: &[RunStats], alg: Algorithm) -> Vec<RunStats> {
    results.iter().filter(|r| r.algorithm == alg).cloned().collect()
}

fn crossover_direction(dir: &Path) -> Outcome {
    let results = sweep(
        BTreeMap::from([(4, vec![30])]),
        100,
        &[Algorithm::GaNocrossover, Algorithm::GaUniform],
        0xC5,
        dir,
    );
    let curve = compare(
        &by_algorithm(&results, Algorithm::GaNocrossover),
        &by_algorithm(&results, Algorithm::GaUniform),
    )
    .map_err(|e| e.to_string())?;
    ensure!(curve.len() == 1 && curve[0].instances == 100, "unexpected ratio curve {curve:?}");
    let p = &curve[0];
    ensure!(p.flips_ratio > 1.0, "flips ratio {}", p.flips_ratio);
    ensure!(p.evaluations_ratio > 1.0, "evaluations ratio {}", p.evaluations_ratio);
    Ok(format!("flips ratio {:.3}, evaluations ratio {:.3}", p.flips_ratio, p.evaluations_ratio))
}

fn self_comparison(dir: &Path) -> Outcome {
    let path = dir.join(RESULTS_FILE);
    let mut cells = 0;
    for alg in [Algorithm::GaNocrossover, Algorithm::GaUniform] {
        let a = by_algorithm(&read_csv(&path).map_err(|e| e.to_string())?, alg);
        let b = by_algorithm(&read_csv(&path).map_err(|e| e.to_string())?, alg);
        for p in compare(&a, &b).map_err(|e| e.to_string())? {
            ensure!(p.evaluations_ratio == 1.0 && p.flips_ratio == 1.0, "{alg}: {p:?}");
            cells += 1;
        }
    }
    Ok(format!("{cells} cells, all ratios exactly 1"))
}

fn determinism() -> Outcome {
    let grid = BTreeMap::from([(2, vec![20, 22]), (3, vec![20])]);
    let cfg = SweepConfig::new(grid, 3, &Algorithm::ALL, 0xD7);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_sweep(&cfg, d.path(), &SweepOptions::default()).map_err(|e| e.to_string())?;
    }
    let mut sizes = Vec::new();
    for file in [RESULTS_FILE, "manifest.json", "bisection.csv", "aggregates.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        ensure!(a == b, "{file} differs between runs");
        sizes.push(format!("{file} {}B", a.len()));
    }
    Ok(format!("identical: {}", sizes.join(", ")))
}

fn operator_statistics() -> Outcome {
    let trials = 100_000;
    let mut rng = rng_from_seed(0x58);
    let picks = tournament_indices(&[1.0, 0.0], trials, &mut rng);
    let best_rate = picks.iter().filter(|&&i| i == 0).count() as f64 / trials as f64;
    ensure!((best_rate - 0.75).abs() <= 0.02, "tournament best-pick rate {best_rate}");

    let n = 40;
    let zeros = Genome::new(vec![false; n]);
    let ones = Genome::new(vec![true; n]);
    let mut swapped = 0usize;
    for _ in 0..trials {
        let (a, _) = uniform_crossover(&zeros, &ones, &mut rng);
        swapped += a.bits.iter().filter(|&&b| b).count();
    }
    let swap_rate = swapped as f64 / (trials * n) as f64;
    ensure!((swap_rate - 0.5).abs() <= 0.01, "uniform crossover swap rate {swap_rate}");

    let mut flips = 0usize;
    for _ in 0..trials {
        flips += bit_flip_mutation(&zeros, 1.0 / n as f64, &mut rng).bits.iter().filter(|&&b| b).count();
    }
    let mean_flips = flips as f64 / trials as f64;
    ensure!((mean_flips - 1.0).abs() <= 0.02, "mutation mean flips {mean_flips}");
    Ok(format!("best-pick {best_rate:.4}, swap {swap_rate:.4}, flips {mean_flips:.4}"))
}

fn hboa_sanity() -> Outcome {
    let cfg = HboaConfig::default();
    let n = 10;
    let mut exact_edge = 0;
    for seed in 0..50 {
        let mut rng = rng_from_seed(0x900 + seed);
        let pop: Vec<Genome> = (0..256)
            .map(|_| {
                let mut bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                bits[1] = bits[0];
                Genome::new(bits)
            })
            .collect();
        let model = learn_model(&pop, &cfg).map_err(|e| e.to_string())?;
        let edges: Vec<(usize, usize)> = model.edges().into_iter().collect();
        if edges == [(0, 1)] || edges == [(1, 0)] {
            exact_edge += 1;
        }
    }
    ensure!(exact_edge >= 45, "single 0-1 edge in only {exact_edge}/50 trials");

    let mut rng = rng_from_seed(0x9A);
    let n = 20;
    let pop: Vec<Genome> = (0..1000).map(|_| Genome::random(n, &mut rng)).collect();
    let rows: Vec<u32> = (0..1000).collect();
    let (mut negative, mut total) = (0, 0);
    for target in 0..n {
        for cand in (0..n).filter(|&c| c != target) {
            total += 1;
            if split_gain(&pop, &rows, target, cand, &cfg) < 0.0 {
                negative += 1;
            }
        }
    }
    let share = negative as f64 / total as f64;
    ensure!(share >= 0.95, "only {share} of splits negative on uniform data");
    Ok(format!("single edge {exact_edge}/50, negative splits {negative}/{total}"))
}

fn rtr_invariants() -> Outcome {
    let mut rng = rng_from_seed(0x10);
    for call in 0..10_000 {
        let size = rng.gen_range(1..=30);
        let n = rng.gen_range(1..=16);
        let random_member = |rng: &mut nkbench::rng::Rng| Genome {
            bits: (0..n).map(|_| rng.gen()).collect(),
            fitness: Some(rng.gen_range(0..8) as f64 / 8.0),
        };
        let mut pop = Population {
            members: (0..size).map(|_| random_member(&mut rng)).collect(),
            generation: 0,
        };
        let offspring: Vec<Genome> = (0..rng.gen_range(0..=size)).map(|_| random_member(&mut rng)).collect();
        let window = rng.gen_range(1..=size);
        let before = pop.max_fitness();
        rtr_replace(&mut pop, offspring, window, &mut rng);
        ensure!(pop.len() == size, "call {call}: size {size} became {}", pop.len());
        ensure!(pop.max_fitness() >= before, "call {call}: max fitness dropped");
    }
    Ok("10000 calls".into())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" < ")
}

fn main() {
    let shared = tempfile::tempdir().unwrap();
    let shared_dir = shared.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("exact solver matches enumeration", Box::new(exactness_oracle)),
        ("delta evaluation matches full evaluation", Box::new(delta_equivalence)),
        ("bisection runs reach the certified optimum", Box::new(solve_audit)),
        ("evaluations grow with k", Box::new(k_hardness)),
        ("crossover beats mutation", Box::new({
            let d = shared_dir.clone();
            move || crossover_direction(&d)
        })),
        ("self comparison is identity", Box::new({
            let d = shared_dir.clone();
            move || self_comparison(&d)
        })),
        ("sweeps are deterministic", Box::new(determinism)),
        ("operator statistics", Box::new(operator_statistics)),
        ("hboa model sanity", Box::new(hboa_sanity)),
        ("rtr invariants", Box::new(rtr_invariants)),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{:.1?}]", i + 1, start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why} [{:.1?}]", i + 1, start.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
