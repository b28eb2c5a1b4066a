use std::collections::BTreeMap;
use std::fs;

use nkbench::evolution::Algorithm;
use nkbench::exact::{solve, SolveConfig};
use nkbench::harness::{
    aggregate, bisect_population_size, bisection_base_seed, instance_seed, run_sweep, try_population_size,
    BisectionConfig, SweepConfig, SweepOptions, UnitStatus,
};
use nkbench::rng::{derive_seed, stream};
use nkbench::NkInstance;

fn certified(n: usize, k: usize, count: usize, master: u64) -> Vec<(NkInstance, f64)> {
    (0..count)
        .map(|i| {
            let inst = NkInstance::generate(n, k, instance_seed(master, n, k, i)).unwrap();
            let opt = solve(&inst, &SolveConfig::default()).unwrap().optimum_value;
            (inst, opt)
        })
        .collect()
}

#[test]
fn sweep_accounting_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::new(BTreeMap::from([(2, vec![20])]), 5, &[Algorithm::GaUniform], 3);
    let out = run_sweep(&cfg, dir.path(), &SweepOptions::default()).unwrap();
    assert!(out.complete);
    assert_eq!(out.bisections.len(), 5);
    assert!(out.bisections.iter().all(|b| b.status == UnitStatus::Solved));
    assert_eq!(out.results.len(), 50);
    assert!(out.results.iter().all(|r| r.success));
    for r in &out.results {
        assert_eq!(r.evaluations, (r.population_size * (r.generations + 1)) as u64);
    }
    assert_eq!(out.aggregates.len(), 1);
    assert_eq!((out.aggregates[0].instances, out.aggregates[0].runs), (5, 50));
}

#[test]
fn resumed_sweep_matches_uninterrupted_run() {
    let cfg = SweepConfig::new(
        BTreeMap::from([(2, vec![16, 18]), (3, vec![16])]),
        2,
        &[Algorithm::Umda, Algorithm::GaTwopoint],
        9,
    );
    let full = tempfile::tempdir().unwrap();
    run_sweep(&cfg, full.path(), &SweepOptions::default()).unwrap();

    let part = tempfile::tempdir().unwrap();
    let first = run_sweep(
        &cfg,
        part.path(),
        &SweepOptions {
            max_new_units: Some(5),
            ..SweepOptions::default()
        },
    )
    .unwrap();
    assert!(!first.complete);
    assert_eq!(first.manifest.completed.len(), 5);
    let resumed = run_sweep(
        &cfg,
        part.path(),
        &SweepOptions {
            resume: true,
            ..SweepOptions::default()
        },
    )
    .unwrap();
    assert!(resumed.complete);
    for file in ["results.csv", "bisection.csv", "aggregates.csv", "manifest.json"] {
        assert_eq!(
            fs::read(full.path().join(file)).unwrap(),
            fs::read(part.path().join(file)).unwrap(),
            "{file}"
        );
    }

    let mut other = cfg.clone();
    other.master_seed += 1;
    let err = run_sweep(
        &other,
        part.path(),
        &SweepOptions {
            resume: true,
            ..SweepOptions::default()
        },
    );
    assert!(err.is_err());
}

#[test]
fn uncertified_instances_are_skipped_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SweepConfig::new(BTreeMap::from([(4, vec![20])]), 2, &[Algorithm::GaUniform], 5);
    cfg.node_limit = Some(1);
    let out = run_sweep(&cfg, dir.path(), &SweepOptions::default()).unwrap();
    assert_eq!(out.manifest.uncertified.len(), 2);
    assert!(out.results.is_empty() && out.aggregates.is_empty());
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn aggregate_means_match_streaming_recount() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::new(BTreeMap::from([(2, vec![18]), (3, vec![18])]), 3, &[Algorithm::Hboa, Algorithm::Umda], 21);
    let out = run_sweep(&cfg, dir.path(), &SweepOptions::default()).unwrap();
    for cell in &out.aggregates {
        let (mut count, mut mean) = (0f64, 0f64);
        for r in out.results.iter().filter(|r| (r.n, r.k, r.algorithm) == (cell.n, cell.k, cell.algorithm)) {
            count += 1.0;
            mean += (r.evaluations as f64 - mean) / count;
        }
        assert!((mean - cell.evaluations_mean).abs() <= 1e-9 * mean.abs().max(1.0));
    }
    assert_eq!(aggregate(&out.results), out.aggregates);
}

#[test]
fn bisected_sizes_revalidate_and_double_safely() {
    let alg = Algorithm::GaUniform;
    let cfg = BisectionConfig::default();
    let instances = certified(24, 4, 10, 77);
    let mut revalidated = 0;
    let mut doubled = 0;
    for (inst, opt) in &instances {
        let res = bisect_population_size(inst, alg, *opt, &cfg, bisection_base_seed(inst.seed(), alg)).unwrap();
        let fresh = derive_seed(inst.seed(), stream::VALIDATION, alg.ordinal());
        if try_population_size(inst, alg, *opt, res.population_size, &cfg, fresh).unwrap().is_some() {
            revalidated += 1;
        }
        if try_population_size(inst, alg, *opt, 2 * res.population_size, &cfg, fresh).unwrap().is_some() {
            doubled += 1;
        }
    }
    println!("re-validated {revalidated}/10, doubled {doubled}/10");
    assert!(revalidated >= 8, "{revalidated}/10 re-validated");
    assert!(doubled >= 9, "{doubled}/10 passed at twice the size");
}
