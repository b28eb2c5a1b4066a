//! Branch-and-bound certification of NK optima.
//!
//! Bits are fixed in order `X_0, X_1, …`. The bound on a partial assignment
//! treats every subfunction independently: a subfunction whose variables are
//! all fixed contributes its table value, any other contributes the maximum
//! of its table over the settings of its free variables. This relaxation is
//! admissible and only tightens as more bits are fixed.
//!
//! Because the variable order is fixed, the variables of subfunction `i`
//! that are fixed at depth `d` always form a prefix of its variables sorted
//! by position. The solver precomputes, for each prefix length, the maximum
//! over the remaining variables, so fixing a bit updates the running bound
//! with one lookup per dependent subfunction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Genome, NkInstance};
use crate::local_search::stochastic_hill_climb;
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};

/// Pruning slack: a subtree is cut when its bound does not beat the
/// incumbent by more than this.
pub const PRUNE_EPS: f64 = 1e-12;

/// Upper limit on the default number of seeding restarts.
pub const MAX_DEFAULT_RESTARTS: usize = 1000;

/// A node of the search tree: bits `0..depth` fixed to `prefix`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub depth: usize,
    pub prefix: Vec<bool>,
    pub bound: f64,
}

impl SearchNode {
    pub fn new(inst: &NkInstance, prefix: Vec<bool>) -> Result<Self> {
        let bound = upper_bound(inst, &prefix)?;
        Ok(Self {
            depth: prefix.len(),
            prefix,
            bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub optimum_bits: Vec<bool>,
    pub optimum_value: f64,
    pub nodes_expanded: u64,
    pub seed_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Hill-climber restarts used to seed the incumbent; `None` means
    /// `min(10·n, MAX_DEFAULT_RESTARTS)`.
    pub restarts: Option<usize>,
    pub node_limit: Option<u64>,
    /// Seed of the seeding climber; `None` derives it from the instance seed.
    pub seeding_seed: Option<u64>,
}

pub fn default_restarts(n: usize) -> usize {
    (10 * n).clamp(1, MAX_DEFAULT_RESTARTS)
}

/// Direct (non-incremental) bound for a prefix of fixed bits.
pub fn upper_bound(inst: &NkInstance, prefix: &[bool]) -> Result<f64> {
    let d = prefix.len();
    if d > inst.n() {
        return Err(crate::error::invalid(format!("prefix of length {d} exceeds n = {}", inst.n())));
    }
    let k = inst.k();
    let mut total = 0.0;
    for i in 0..inst.n() {
        let vars: Vec<usize> = inst.variables(i).collect();
        let free: Vec<usize> = (0..=k).filter(|&j| vars[j] >= d).collect();
        let mut base = 0usize;
        for (j, &p) in vars.iter().enumerate() {
            if p < d && prefix[p] {
                base |= 1 << (k - j);
            }
        }
        let table = inst.table(i);
        let best = (0..1usize << free.len())
            .map(|a| {
                let idx = free
                    .iter()
                    .enumerate()
                    .fold(base, |acc, (b, &j)| if (a >> b) & 1 == 1 { acc | 1 << (k - j) } else { acc });
                table[idx]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    Ok(total)
}

/// Best local optimum over `restarts` stochastic hill climbs from uniform
/// random starts. Restarts draw from `rng` sequentially, so a run with more
/// restarts extends the one with fewer.
pub fn seed_incumbent(inst: &NkInstance, restarts: usize, rng: &mut Rng) -> Genome {
    let mut best: Option<Genome> = None;
    for _ in 0..restarts.max(1) {
        let start = Genome::random(inst.n(), rng);
        let res = stochastic_hill_climb(inst, &start, rng);
        if best.as_ref().is_none_or(|b| res.genome.value() > b.value()) {
            best = Some(res.genome);
        }
    }
    best.expect("at least one restart")
}

/// Per-subfunction maxima over free variables, indexed by prefix length.
struct PartialMaxima {
    /// `levels[i][c]` holds `2^c` entries: the best value of subfunction `i`
    /// given its first `c` variables (sorted by position) fixed to the
    /// packed key.
    levels: Vec<Vec<Vec<f64>>>,
}

impl PartialMaxima {
    fn new(inst: &NkInstance) -> Self {
        let k = inst.k();
        let levels = (0..inst.n())
            .map(|i| {
                let vars: Vec<usize> = inst.variables(i).collect();
                let mut order: Vec<usize> = (0..=k).collect();
                order.sort_by_key(|&j| vars[j]);
                let table = inst.table(i);
                let full: Vec<f64> = (0..1usize << (k + 1))
                    .map(|key| {
                        let idx = order.iter().enumerate().fold(0usize, |acc, (pos, &j)| {
                            if (key >> (k - pos)) & 1 == 1 {
                                acc | 1 << (k - j)
                            } else {
                                acc
                            }
                        });
                        table[idx]
                    })
                    .collect();
                let mut levels = vec![full];
                while levels.last().unwrap().len() > 1 {
                    let prev = levels.last().unwrap();
                    let next = prev.chunks(2).map(|c| c[0].max(c[1])).collect();
                    levels.push(next);
                }
                levels.reverse();
                levels
            })
            .collect();
        Self { levels }
    }
}

struct Search<'a> {
    inst: &'a NkInstance,
    maxima: PartialMaxima,
    keys: Vec<usize>,
    fixed: Vec<usize>,
    bits: Vec<bool>,
    incumbent: Option<(Vec<bool>, f64)>,
    nodes: u64,
    node_limit: u64,
}

impl Search<'_> {
    fn threshold(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| v + PRUNE_EPS)
    }

    fn child_delta(&self, depth: usize, value: bool) -> f64 {
        self.inst
            .dependents(depth)
            .iter()
            .map(|&(i, _)| {
                let lv = &self.maxima.levels[i];
                let c = self.fixed[i];
                let key = self.keys[i];
                lv[c + 1][key * 2 + value as usize] - lv[c][key]
            })
            .sum()
    }

    fn set(&mut self, depth: usize, value: bool) {
        self.bits[depth] = value;
        for &(i, _) in self.inst.dependents(depth) {
            self.keys[i] = self.keys[i] * 2 + value as usize;
            self.fixed[i] += 1;
        }
    }

    fn unset(&mut self, depth: usize) {
        for &(i, _) in self.inst.dependents(depth) {
            self.keys[i] /= 2;
            self.fixed[i] -= 1;
        }
    }

    fn visit(&mut self, depth: usize, bound: f64) -> std::result::Result<(), ()> {
        if bound <= self.threshold() {
            return Ok(());
        }
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(());
        }
        if depth == self.inst.n() {
            let value = self.inst.fitness(&self.bits);
            if self.incumbent.as_ref().is_none_or(|(_, v)| value > *v) {
                self.incumbent = Some((self.bits.clone(), value));
            }
            return Ok(());
        }
        let b0 = bound + self.child_delta(depth, false);
        let b1 = bound + self.child_delta(depth, true);
        let order = if b1 > b0 { [(true, b1), (false, b0)] } else { [(false, b0), (true, b1)] };
        for (value, b) in order {
            self.set(depth, value);
            let r = self.visit(depth + 1, b);
            self.unset(depth);
            r?;
        }
        Ok(())
    }
}

fn run_search(inst: &NkInstance, incumbent: Option<&Genome>, node_limit: u64) -> (Option<(Vec<bool>, f64)>, u64, bool) {
    let maxima = PartialMaxima::new(inst);
    let root: f64 = maxima.levels.iter().map(|lv| lv[0][0]).sum();
    let mut search = Search {
        inst,
        maxima,
        keys: vec![0; inst.n()],
        fixed: vec![0; inst.n()],
        bits: vec![false; inst.n()],
        incumbent: incumbent.map(|g| (g.bits.clone(), g.value())),
        nodes: 0,
        node_limit,
    };
    let complete = search.visit(0, root).is_ok();
    (search.incumbent, search.nodes.min(node_limit), complete)
}

/// Certifies the global optimum of `inst`.
///
/// Returns [`Error::NodeLimit`] with the best string found if the search
/// needs more than `node_limit` nodes.
pub fn solve(inst: &NkInstance, config: &SolveConfig) -> Result<ExactResult> {
    let restarts = config.restarts.unwrap_or_else(|| default_restarts(inst.n()));
    let seed = config
        .seeding_seed
        .unwrap_or_else(|| derive_seed(inst.seed(), stream::SEEDING, 0));
    let seed_genome = seed_incumbent(inst, restarts, &mut rng_from_seed(seed));
    let seed_value = seed_genome.value();
    let limit = config.node_limit.unwrap_or(u64::MAX);

    let (best, nodes, complete) = run_search(inst, Some(&seed_genome), limit);
    let (bits, value) = best.expect("seeded search always has an incumbent");
    if !complete {
        return Err(Error::NodeLimit {
            limit,
            nodes_expanded: nodes,
            incumbent: Genome {
                bits,
                fitness: Some(value),
            },
        });
    }
    Ok(ExactResult {
        optimum_value: inst.fitness(&bits),
        optimum_bits: bits,
        nodes_expanded: nodes,
        seed_value,
    })
}

/// Branch and bound without a seeded incumbent. Returns the optimum and the
/// number of nodes expanded.
pub fn solve_unseeded(inst: &NkInstance) -> (Vec<bool>, f64, u64) {
    let (best, nodes, _) = run_search(inst, None, u64::MAX);
    let (bits, value) = best.expect("unbounded search reaches a leaf");
    (bits, value, nodes)
}
