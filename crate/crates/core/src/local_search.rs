//! Single-bit-flip hill climbers.
//!
//! [`dhc`] is the steepest-ascent climber applied to every candidate in the
//! evolutionary algorithms. [`stochastic_hill_climb`] is the first-improvement
//! climber used to seed branch and bound.
//!
//! Flip accounting: `flips` counts accepted moves only. Candidate moves that
//! were scored but not applied are reported in `evaluated_moves`.

use rand::Rng as _;

use crate::instance::{Genome, NkInstance};
use crate::rng::Rng;
use crate::IMPROVEMENT_EPS;

/// Consecutive rejections, per bit, after which the stochastic climber stops.
pub const SHC_PATIENCE_PER_BIT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchResult {
    pub genome: Genome,
    pub flips: u64,
    pub evaluated_moves: u64,
}

/// Bit string plus the current table index of every subfunction, so the
/// gain of a flip costs one table lookup per dependent subfunction.
struct FlipState<'a> {
    inst: &'a NkInstance,
    bits: Vec<bool>,
    idx: Vec<usize>,
}

impl<'a> FlipState<'a> {
    fn new(inst: &'a NkInstance, bits: Vec<bool>) -> Self {
        let idx = (0..inst.n()).map(|i| inst.subfunction_index(i, &bits)).collect();
        Self { inst, bits, idx }
    }

    fn gain(&self, p: usize) -> f64 {
        self.inst
            .dependents(p)
            .iter()
            .map(|&(i, mask)| {
                let t = self.inst.table(i);
                t[self.idx[i] ^ mask] - t[self.idx[i]]
            })
            .sum()
    }

    fn flip(&mut self, p: usize) {
        self.bits[p] = !self.bits[p];
        for &(i, mask) in self.inst.dependents(p) {
            self.idx[i] ^= mask;
        }
    }

    fn into_genome(self) -> Genome {
        Genome::evaluated(self.inst, self.bits)
    }
}

/// Steepest ascent: apply the single flip with the largest gain until no
/// flip gains more than [`IMPROVEMENT_EPS`]. Ties go to the lowest index.
pub fn dhc(inst: &NkInstance, start: &Genome) -> LocalSearchResult {
    assert_eq!(start.len(), inst.n(), "genome length does not match instance");
    let mut state = FlipState::new(inst, start.bits.clone());
    let mut flips = 0u64;
    let mut evaluated = 0u64;
    loop {
        let mut best = (usize::MAX, IMPROVEMENT_EPS);
        for p in 0..inst.n() {
            let g = state.gain(p);
            if g > best.1 {
                best = (p, g);
            }
        }
        evaluated += inst.n() as u64;
        if best.0 == usize::MAX {
            break;
        }
        state.flip(best.0);
        flips += 1;
    }
    let genome = if flips == 0 {
        let mut g = start.clone();
        g.ensure_evaluated(inst);
        g
    } else {
        state.into_genome()
    };
    LocalSearchResult {
        genome,
        flips,
        evaluated_moves: evaluated,
    }
}

/// First-improvement climber: propose uniformly random flips, accept strict
/// improvements, stop after `32·n` consecutive rejections.
pub fn stochastic_hill_climb(inst: &NkInstance, start: &Genome, rng: &mut Rng) -> LocalSearchResult {
    assert_eq!(start.len(), inst.n(), "genome length does not match instance");
    let n = inst.n();
    let patience = SHC_PATIENCE_PER_BIT * n;
    let mut state = FlipState::new(inst, start.bits.clone());
    let mut flips = 0u64;
    let mut evaluated = 0u64;
    let mut rejections = 0usize;
    while rejections < patience {
        let p = rng.gen_range(0..n);
        evaluated += 1;
        if state.gain(p) > IMPROVEMENT_EPS {
            state.flip(p);
            flips += 1;
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    LocalSearchResult {
        genome: state.into_genome(),
        flips,
        evaluated_moves: evaluated,
    }
}

/// True when no single flip improves `bits` by more than [`IMPROVEMENT_EPS`],
/// checked with full evaluations.
pub fn is_local_optimum(inst: &NkInstance, bits: &[bool]) -> bool {
    let base = inst.fitness(bits);
    let mut probe = bits.to_vec();
    (0..inst.n()).all(|p| {
        probe[p] = !probe[p];
        let v = inst.fitness(&probe);
        probe[p] = !probe[p];
        v <= base + IMPROVEMENT_EPS
    })
}
