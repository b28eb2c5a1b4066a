//! Selection, variation and replacement operators, and the generation loop
//! shared by every algorithm.
//!
//! Each generation selects `N` parents by binary tournament, produces `N`
//! offspring with the algorithm's variation operator, polishes every
//! offspring with [`dhc`], and merges them into the population with
//! restricted tournament replacement.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hboa::{self, HboaConfig};
use crate::instance::{Genome, NkInstance};
use crate::local_search::dhc;
use crate::rng::Rng;
use crate::FITNESS_TOL;

pub const DEFAULT_CROSSOVER_PROB: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Hboa,
    Umda,
    GaUniform,
    GaTwopoint,
    GaNocrossover,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Hboa,
        Algorithm::Umda,
        Algorithm::GaUniform,
        Algorithm::GaTwopoint,
        Algorithm::GaNocrossover,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Hboa => "hboa",
            Algorithm::Umda => "umda",
            Algorithm::GaUniform => "ga-uniform",
            Algorithm::GaTwopoint => "ga-twopoint",
            Algorithm::GaNocrossover => "ga-nocrossover",
        }
    }

    /// Stable index used when deriving per-algorithm seeds.
    pub fn ordinal(self) -> u64 {
        Self::ALL.iter().position(|&a| a == self).unwrap() as u64
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvoConfig {
    pub algorithm: Algorithm,
    pub population_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub rtr_window: usize,
    pub max_generations: usize,
    pub target_value: Option<f64>,
    pub hboa: HboaConfig,
}

impl EvoConfig {
    /// Standard settings for an `n`-bit problem: `p_c = 0.6`, `p_m = 1/n`,
    /// RTR window `min(n, N/5)` (at least 1), and at most `10·n` generations.
    pub fn standard(algorithm: Algorithm, n: usize, population_size: usize) -> Self {
        Self {
            algorithm,
            population_size,
            crossover_prob: DEFAULT_CROSSOVER_PROB,
            mutation_prob: 1.0 / n as f64,
            rtr_window: rtr_window(n, population_size),
            max_generations: 10 * n,
            target_value: None,
            hboa: HboaConfig::default(),
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_value = Some(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.population_size;
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!("population size {n} must be even and at least 2")));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.rtr_window < 1 || self.rtr_window > n {
            return Err(Error::Config(format!("RTR window {} outside 1..={n}", self.rtr_window)));
        }
        if self.target_value.is_none() {
            return Err(Error::Config("a target value is required to detect success".into()));
        }
        Ok(())
    }
}

pub fn rtr_window(n: usize, population_size: usize) -> usize {
    n.min(population_size / 5).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Genome>,
    pub generation: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> &Genome {
        self.members
            .iter()
            .reduce(|a, b| if b.value() > a.value() { b } else { a })
            .expect("population is not empty")
    }

    pub fn max_fitness(&self) -> f64 {
        self.best().value()
    }
}

/// Binary tournament over fitness values: each winner is the fitter of two
/// indices drawn uniformly with replacement, the first drawn on ties.
pub fn tournament_indices(fitness: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let n = fitness.len();
    (0..count)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if fitness[b] > fitness[a] {
                b
            } else {
                a
            }
        })
        .collect()
}

pub fn tournament_select(pop: &[Genome], count: usize, rng: &mut Rng) -> Vec<Genome> {
    if count == 0 {
        return Vec::new();
    }
    let fitness: Vec<f64> = pop.iter().map(Genome::value).collect();
    tournament_indices(&fitness, count, rng)
        .into_iter()
        .map(|i| pop[i].clone())
        .collect()
}

pub fn uniform_crossover(a: &Genome, b: &Genome, rng: &mut Rng) -> (Genome, Genome) {
    assert_eq!(a.len(), b.len());
    let mut c1 = a.bits.clone();
    let mut c2 = b.bits.clone();
    for i in 0..c1.len() {
        if rng.gen::<bool>() {
            std::mem::swap(&mut c1[i], &mut c2[i]);
        }
    }
    (Genome::new(c1), Genome::new(c2))
}

/// Exchanges the segment `[c1, c2)` where the cut points are two uniform
/// draws from `0..=n`, sorted.
pub fn two_point_crossover(a: &Genome, b: &Genome, rng: &mut Rng) -> (Genome, Genome) {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let x = rng.gen_range(0..=n);
    let y = rng.gen_range(0..=n);
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    two_point_crossover_at(a, b, lo, hi)
}

pub fn two_point_crossover_at(a: &Genome, b: &Genome, lo: usize, hi: usize) -> (Genome, Genome) {
    let mut c1 = a.bits.clone();
    let mut c2 = b.bits.clone();
    c1[lo..hi].swap_with_slice(&mut c2[lo..hi]);
    (Genome::new(c1), Genome::new(c2))
}

pub fn bit_flip_mutation(g: &Genome, p_m: f64, rng: &mut Rng) -> Genome {
    let mut bits = g.bits.clone();
    let mut changed = false;
    for b in bits.iter_mut() {
        if rng.gen_bool(p_m) {
            *b = !*b;
            changed = true;
        }
    }
    Genome {
        bits,
        fitness: if changed { None } else { g.fitness },
    }
}

/// Restricted tournament replacement. Each offspring is compared with the
/// closest (Hamming) of `window` distinct random members, the lowest
/// population index winning distance ties, and replaces it only if strictly
/// fitter. Offspring must be evaluated.
pub fn rtr_replace(pop: &mut Population, offspring: Vec<Genome>, window: usize, rng: &mut Rng) {
    let size = pop.members.len();
    assert!((1..=size).contains(&window), "window {window} outside 1..={size}");
    for child in offspring {
        let mut closest = (usize::MAX, usize::MAX);
        for idx in index::sample(rng, size, window) {
            let d = child.hamming(&pop.members[idx]);
            if (d, idx) < closest {
                closest = (d, idx);
            }
        }
        let target = closest.1;
        if child.value() > pop.members[target].value() {
            pop.members[target] = child;
        }
    }
}

/// Per-position frequency of ones in a selected population.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    pub p: Vec<f64>,
}

pub fn umda_learn(selected: &[Genome]) -> Result<ProbVector> {
    let first = selected.first().ok_or_else(|| invalid("cannot learn from an empty selection"))?;
    let mut ones = vec![0usize; first.len()];
    for g in selected {
        for (c, &b) in ones.iter_mut().zip(&g.bits) {
            *c += b as usize;
        }
    }
    let m = selected.len() as f64;
    Ok(ProbVector {
        p: ones.into_iter().map(|c| c as f64 / m).collect(),
    })
}

pub fn umda_sample(pv: &ProbVector, count: usize, rng: &mut Rng) -> Vec<Genome> {
    (0..count)
        .map(|_| Genome::new(pv.p.iter().map(|&p| rng.gen::<f64>() < p).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub population_size: usize,
    pub generations: usize,
    pub evaluations: u64,
    /// Accepted DHC flips over the whole run.
    pub dhc_flips: u64,
    /// Candidate flips scored by DHC, accepted or not.
    pub dhc_moves_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub success: bool,
    pub counters: RunCounters,
    pub best: Genome,
}

fn polish(inst: &NkInstance, candidates: Vec<Genome>, counters: &mut RunCounters) -> Vec<Genome> {
    candidates
        .into_iter()
        .map(|g| {
            let r = dhc(inst, &g);
            counters.dhc_flips += r.flips;
            counters.dhc_moves_evaluated += r.evaluated_moves;
            counters.evaluations += 1;
            r.genome
        })
        .collect()
}

type Crossover = fn(&Genome, &Genome, &mut Rng) -> (Genome, Genome);

fn make_offspring(inst: &NkInstance, cfg: &EvoConfig, parents: &[Genome], rng: &mut Rng) -> Vec<Genome> {
    let crossover: Option<Crossover> = match cfg.algorithm {
        Algorithm::GaUniform => Some(uniform_crossover),
        Algorithm::GaTwopoint => Some(two_point_crossover),
        Algorithm::GaNocrossover => None,
        Algorithm::Umda => {
            let pv = umda_learn(parents).expect("parents are not empty");
            return umda_sample(&pv, parents.len(), rng);
        }
        Algorithm::Hboa => {
            let model = hboa::learn_model(parents, &cfg.hboa).expect("parents are not empty");
            return hboa::sample_model(&model, parents.len(), rng);
        }
    };
    let mut out = Vec::with_capacity(parents.len());
    for pair in parents.chunks(2) {
        let (a, b) = match (crossover, pair) {
            (Some(cross), [a, b]) if rng.gen_bool(cfg.crossover_prob) => cross(a, b, rng),
            (_, [a, b]) => (a.clone(), b.clone()),
            (_, [a]) => {
                out.push(bit_flip_mutation(a, cfg.mutation_prob, rng));
                continue;
            }
            _ => unreachable!(),
        };
        out.push(bit_flip_mutation(&a, cfg.mutation_prob, rng));
        out.push(bit_flip_mutation(&b, cfg.mutation_prob, rng));
    }
    debug_assert!(out.iter().all(|g| g.len() == inst.n()));
    out
}

/// Runs one algorithm until a member reaches the target value (within
/// [`FITNESS_TOL`]) or `max_generations` generations have elapsed.
pub fn run_evolution(inst: &NkInstance, cfg: &EvoConfig, rng: &mut Rng) -> Result<RunOutcome> {
    cfg.validate()?;
    let target = cfg.target_value.expect("validated") - FITNESS_TOL;
    let n = inst.n();
    let size = cfg.population_size;
    let mut counters = RunCounters {
        population_size: size,
        ..RunCounters::default()
    };

    let initial = (0..size).map(|_| Genome::random(n, rng)).collect();
    let mut pop = Population {
        members: polish(inst, initial, &mut counters),
        generation: 0,
    };

    let mut success = pop.max_fitness() >= target;
    while !success && pop.generation < cfg.max_generations {
        let parents = tournament_select(&pop.members, size, rng);
        let offspring = make_offspring(inst, cfg, &parents, rng);
        let offspring = polish(inst, offspring, &mut counters);
        debug_assert!(crate::local_search::is_local_optimum(inst, &offspring[0].bits));
        let before = pop.max_fitness();
        rtr_replace(&mut pop, offspring, cfg.rtr_window, rng);
        debug_assert!(pop.max_fitness() >= before);
        pop.generation += 1;
        success = pop.max_fitness() >= target;
    }
    counters.generations = pop.generation;
    debug_assert_eq!(counters.evaluations, (size * (pop.generation + 1)) as u64);

    Ok(RunOutcome {
        success,
        counters,
        best: pop.best().clone(),
    })
}
