//! NK instances and their evaluation.
//!
//! Subfunction `i` reads bit `i` and its `k` neighbors. Its table index packs
//! `bits[i]` as the most significant bit, followed by the neighbors in the
//! order they were drawn:
//!
//! ```text
//! index = bits[i]·2^k + bits[nb[0]]·2^(k-1) + … + bits[nb[k-1]]·2^0
//! ```
//!
//! Instance files depend on this convention; changing it changes every
//! stored instance's fitness function.

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct NkInstance {
    n: usize,
    k: usize,
    seed: u64,
    neighbors: Vec<Vec<usize>>,
    tables: Vec<Vec<f64>>,
    /// For each position `p`: every `(subfunction, index mask)` pair whose
    /// table index changes when `p` flips.
    dependents: Vec<Vec<(usize, usize)>>,
}

impl NkInstance {
    /// Draws a random instance. Position by position, the generator first
    /// samples `k` distinct neighbors uniformly from the other `n - 1`
    /// positions (Floyd's algorithm, kept in draw order), then fills the
    /// `2^(k+1)` table entries i.i.d. uniform on `[0, 1)`.
    pub fn generate(n: usize, k: usize, seed: u64) -> Result<Self> {
        check_shape(n, k)?;
        let mut rng = rng_from_seed(seed);
        let mut neighbors = Vec::with_capacity(n);
        let mut tables = Vec::with_capacity(n);
        for i in 0..n {
            neighbors.push(sample_neighbors(&mut rng, n, k, i));
            tables.push((0..1usize << (k + 1)).map(|_| rng.gen::<f64>()).collect());
        }
        Self::from_parts(n, k, seed, neighbors, tables)
    }

    /// Builds an instance from explicit neighbor lists and tables, checking
    /// every structural invariant.
    pub fn from_parts(
        n: usize,
        k: usize,
        seed: u64,
        neighbors: Vec<Vec<usize>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_shape(n, k)?;
        if neighbors.len() != n || tables.len() != n {
            return Err(invalid(format!(
                "expected {n} neighbor lists and tables, got {} and {}",
                neighbors.len(),
                tables.len()
            )));
        }
        for (i, nb) in neighbors.iter().enumerate() {
            if nb.len() != k {
                return Err(invalid(format!("neighbor list {i} has {} entries, expected {k}", nb.len())));
            }
            for (a, &p) in nb.iter().enumerate() {
                if p >= n || p == i || nb[..a].contains(&p) {
                    return Err(invalid(format!("neighbor list {i} is malformed: {nb:?}")));
                }
            }
        }
        for (i, t) in tables.iter().enumerate() {
            if t.len() != 1 << (k + 1) {
                return Err(invalid(format!("table {i} has {} entries, expected {}", t.len(), 1 << (k + 1))));
            }
            if let Some(v) = t.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(invalid(format!("table {i} has entry {v} outside [0, 1)")));
            }
        }

        let mut dependents = vec![Vec::new(); n];
        for (i, nb) in neighbors.iter().enumerate() {
            dependents[i].push((i, 1usize << k));
            for (j, &p) in nb.iter().enumerate() {
                dependents[p].push((i, 1usize << (k - 1 - j)));
            }
        }

        Ok(Self {
            n,
            k,
            seed,
            neighbors,
            tables,
            dependents,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The seed that generated this instance; its identifier in result files.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn table(&self, i: usize) -> &[f64] {
        &self.tables[i]
    }

    pub(crate) fn all_neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub(crate) fn all_tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    /// Positions read by subfunction `i`, in index order (MSB first).
    pub fn variables(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(i).chain(self.neighbors[i].iter().copied())
    }

    /// Subfunctions whose value depends on position `p`, with the index bit
    /// `p` occupies in each.
    pub fn dependents(&self, p: usize) -> &[(usize, usize)] {
        &self.dependents[p]
    }

    pub fn subfunction_index(&self, i: usize, bits: &[bool]) -> usize {
        self.variables(i).fold(0, |acc, p| (acc << 1) | bits[p] as usize)
    }

    pub fn evaluate(&self, bits: &[bool]) -> Result<f64> {
        self.check_len(bits)?;
        Ok(self.fitness(bits))
    }

    /// Unchecked evaluation for hot loops; `bits.len()` must equal `n`.
    pub(crate) fn fitness(&self, bits: &[bool]) -> f64 {
        debug_assert_eq!(bits.len(), self.n);
        (0..self.n).map(|i| self.tables[i][self.subfunction_index(i, bits)]).sum()
    }

    /// Fitness after flipping `pos`, given the current `fitness`. Only the
    /// subfunctions that read `pos` are re-evaluated.
    pub fn delta_evaluate(&self, bits: &[bool], fitness: f64, pos: usize) -> Result<f64> {
        self.check_len(bits)?;
        if pos >= self.n {
            return Err(invalid(format!("flip position {pos} out of range for n = {}", self.n)));
        }
        Ok(fitness + self.flip_gain(bits, pos))
    }

    pub(crate) fn flip_gain(&self, bits: &[bool], pos: usize) -> f64 {
        self.dependents[pos]
            .iter()
            .map(|&(i, mask)| {
                let idx = self.subfunction_index(i, bits);
                let t = &self.tables[i];
                t[idx ^ mask] - t[idx]
            })
            .sum()
    }

    fn check_len(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.n {
            return Err(invalid(format!("bit string has length {}, instance has n = {}", bits.len(), self.n)));
        }
        Ok(())
    }
}

fn check_shape(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if k >= n {
        return Err(invalid(format!("k = {k} must be smaller than n = {n}")));
    }
    // Tables are indexed with usize and allocated eagerly.
    if k + 1 >= usize::BITS as usize - 2 {
        return Err(invalid(format!("k = {k} is too large")));
    }
    Ok(())
}

/// Floyd's sampling of `k` distinct positions from `{0..n-1} \ {exclude}`.
fn sample_neighbors(rng: &mut Rng, n: usize, k: usize, exclude: usize) -> Vec<usize> {
    let pool = n - 1;
    let mut drawn: Vec<usize> = Vec::with_capacity(k);
    for j in pool - k..pool {
        let t = rng.gen_range(0..=j);
        drawn.push(if drawn.contains(&t) { j } else { t });
    }
    drawn
        .into_iter()
        .map(|m| if m < exclude { m } else { m + 1 })
        .collect()
}

/// A bit string with an optionally cached fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub bits: Vec<bool>,
    pub fitness: Option<f64>,
}

impl Genome {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits, fitness: None }
    }

    pub fn evaluated(inst: &NkInstance, bits: Vec<bool>) -> Self {
        let fitness = inst.fitness(&bits);
        Self {
            bits,
            fitness: Some(fitness),
        }
    }

    pub fn random(n: usize, rng: &mut Rng) -> Self {
        Self::new((0..n).map(|_| rng.gen::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Cached fitness. Panics if the genome was never evaluated.
    pub fn value(&self) -> f64 {
        self.fitness.expect("genome has not been evaluated")
    }

    pub fn fitness_or_nan(&self) -> f64 {
        self.fitness.unwrap_or(f64::NAN)
    }

    pub fn ensure_evaluated(&mut self, inst: &NkInstance) -> f64 {
        *self.fitness.get_or_insert_with(|| inst.fitness(&self.bits))
    }

    pub fn hamming(&self, other: &Genome) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    /// Renders bits as a `0`/`1` string, position 0 first.
    pub fn to_bitstring(&self) -> String {
        bits_to_string(&self.bits)
    }
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn bits_from_str(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(invalid(format!("unexpected character {other:?} in bit string"))),
        })
        .collect()
}

/// Bit vector for the integer `x`, position 0 holding the most significant
/// of the `n` bits.
pub fn bits_of(x: u64, n: usize) -> Vec<bool> {
    (0..n).map(|p| (x >> (n - 1 - p)) & 1 == 1).collect()
}
