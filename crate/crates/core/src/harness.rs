//! Experiment pipeline: bisection population sizing, (n, k) sweeps,
//! aggregation and pairwise ratio comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::evolution::{run_evolution, Algorithm, EvoConfig, RunCounters};
use crate::exact::{solve, SolveConfig};
use crate::hboa::HboaConfig;
use crate::instance::NkInstance;
use crate::io::write_atomic;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::FITNESS_TOL;

pub const SWEEP_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Independent runs that must all succeed for a population size to pass.
pub const RUNS_PER_SIZE: usize = 10;

/// One successful (or failed) run, as stored in results files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub instance_seed: u64,
    pub run_index: usize,
    pub population_size: usize,
    pub generations: usize,
    pub evaluations: u64,
    pub dhc_flips: u64,
    pub success: bool,
}

impl RunStats {
    fn from_run(inst: &NkInstance, algorithm: Algorithm, run_index: usize, counters: RunCounters, success: bool) -> Self {
        Self {
            n: inst.n(),
            k: inst.k(),
            algorithm,
            instance_seed: inst.seed(),
            run_index,
            population_size: counters.population_size,
            generations: counters.generations,
            evaluations: counters.evaluations,
            dhc_flips: counters.dhc_flips,
            success,
        }
    }

    /// Seed of this run under the bisection seeding scheme.
    pub fn run_seed(&self) -> u64 {
        run_seed(bisection_base_seed(self.instance_seed, self.algorithm), self.population_size, self.run_index)
    }
}

/// Knobs of the bisection search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub initial_size: usize,
    pub size_cap: usize,
    /// The search stops once `upper / lower` is at most this.
    pub precision: f64,
    /// `None` uses `10·n`.
    pub max_generations: Option<usize>,
    pub crossover_prob: Option<f64>,
    pub mutation_prob: Option<f64>,
    pub hboa: HboaConfig,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            initial_size: 16,
            size_cap: 1 << 20,
            precision: 1.1,
            max_generations: None,
            crossover_prob: None,
            mutation_prob: None,
            hboa: HboaConfig::default(),
        }
    }
}

impl BisectionConfig {
    fn evo_config(&self, algorithm: Algorithm, n: usize, size: usize, target: f64) -> EvoConfig {
        let mut cfg = EvoConfig::standard(algorithm, n, size).with_target(target);
        if let Some(g) = self.max_generations {
            cfg.max_generations = g;
        }
        if let Some(p) = self.crossover_prob {
            cfg.crossover_prob = p;
        }
        if let Some(p) = self.mutation_prob {
            cfg.mutation_prob = p;
        }
        cfg.hboa = self.hboa.clone();
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult {
    pub population_size: usize,
    /// The passing runs at `population_size`.
    pub runs: Vec<RunStats>,
    /// Every size tried, in order, with its verdict.
    pub trials: Vec<(usize, bool)>,
}

pub fn bisection_base_seed(instance_seed: u64, algorithm: Algorithm) -> u64 {
    derive_seed(instance_seed, stream::RUN, algorithm.ordinal())
}

pub fn run_seed(base: u64, population_size: usize, run_index: usize) -> u64 {
    derive_seed(base, population_size as u64, run_index as u64)
}

/// Runs up to [`RUNS_PER_SIZE`] independent runs at `size`, stopping at the
/// first failure. Returns the runs when all succeed.
pub fn try_population_size(
    inst: &NkInstance,
    algorithm: Algorithm,
    target: f64,
    size: usize,
    cfg: &BisectionConfig,
    base_seed: u64,
) -> Result<Option<Vec<RunStats>>> {
    let evo = cfg.evo_config(algorithm, inst.n(), size, target);
    let mut runs = Vec::with_capacity(RUNS_PER_SIZE);
    for r in 0..RUNS_PER_SIZE {
        let mut rng = rng_from_seed(run_seed(base_seed, size, r));
        let out = run_evolution(inst, &evo, &mut rng)?;
        if !out.success {
            return Ok(None);
        }
        let best = out.best.value();
        if best > target + FITNESS_TOL {
            return Err(Error::Invariant(format!(
                "{algorithm} found {best:.12} on instance {}, above the certified optimum {target:.12}",
                inst.seed()
            )));
        }
        runs.push(RunStats::from_run(inst, algorithm, r, out.counters, true));
    }
    Ok(Some(runs))
}

fn even(x: usize) -> usize {
    (x / 2 * 2).max(2)
}

/// Smallest population size (to within `precision`) for which 10 of 10
/// runs reach `target`: double from `initial_size` until a size passes,
/// then bisect between the last failing and first passing sizes.
pub fn bisect_population_size(
    inst: &NkInstance,
    algorithm: Algorithm,
    target: f64,
    cfg: &BisectionConfig,
    base_seed: u64,
) -> Result<BisectionResult> {
    let mut trials = Vec::new();
    let mut size = even(cfg.initial_size);
    let mut failing: Option<usize> = None;
    let mut passing = loop {
        if size > cfg.size_cap {
            return Err(Error::PopulationCap { cap: cfg.size_cap });
        }
        match try_population_size(inst, algorithm, target, size, cfg, base_seed)? {
            Some(runs) => {
                trials.push((size, true));
                break (size, runs);
            }
            None => {
                trials.push((size, false));
                failing = Some(size);
                size *= 2;
            }
        }
    };

    if let Some(mut lo) = failing {
        while passing.0 as f64 / lo as f64 > cfg.precision {
            let mid = even((lo + passing.0) / 2);
            if mid <= lo || mid >= passing.0 {
                break;
            }
            match try_population_size(inst, algorithm, target, mid, cfg, base_seed)? {
                Some(runs) => {
                    trials.push((mid, true));
                    passing = (mid, runs);
                }
                None => {
                    trials.push((mid, false));
                    lo = mid;
                }
            }
        }
    }

    Ok(BisectionResult {
        population_size: passing.0,
        runs: passing.1,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hboa: Option<HboaConfig>,
}

impl From<Algorithm> for AlgorithmSpec {
    fn from(name: Algorithm) -> Self {
        Self {
            name,
            crossover_prob: None,
            mutation_prob: None,
            hboa: None,
        }
    }
}

/// Everything a sweep needs; parsed from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub format_version: u32,
    /// `k -> list of n`.
    pub grid: BTreeMap<usize, Vec<usize>>,
    pub instances_per_cell: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<u64>,
    #[serde(default = "default_size_cap")]
    pub population_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
}

fn default_size_cap() -> usize {
    1 << 20
}

impl SweepConfig {
    pub fn new(grid: BTreeMap<usize, Vec<usize>>, instances_per_cell: usize, algorithms: &[Algorithm], master_seed: u64) -> Self {
        Self {
            format_version: SWEEP_FORMAT_VERSION,
            grid,
            instances_per_cell,
            algorithms: algorithms.iter().map(|&a| a.into()).collect(),
            master_seed,
            output_dir: None,
            node_limit: None,
            population_cap: default_size_cap(),
            max_generations: None,
        }
    }

    /// The full grid: k = 2..6 with n from 20 in steps of 2 up to
    /// 52, 48, 40, 38 and 32 respectively.
    pub fn full_grid() -> BTreeMap<usize, Vec<usize>> {
        [(2, 52), (3, 48), (4, 40), (5, 38), (6, 32)]
            .into_iter()
            .map(|(k, max_n)| (k, (20..=max_n).step_by(2).collect()))
            .collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SWEEP_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: SWEEP_FORMAT_VERSION,
            });
        }
        if self.instances_per_cell == 0 || self.instances_per_cell > u32::MAX as usize {
            return Err(Error::Config("instances_per_cell must be in 1..2^32".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        let names: BTreeSet<Algorithm> = self.algorithms.iter().map(|a| a.name).collect();
        if names.len() != self.algorithms.len() {
            return Err(Error::Config("an algorithm is listed twice".into()));
        }
        for (&k, ns) in &self.grid {
            if ns.is_empty() {
                return Err(Error::Config(format!("k = {k} has no values of n")));
            }
            let min_n = *ns.iter().min().unwrap();
            if k >= min_n {
                return Err(Error::Config(format!("k = {k} must be smaller than every n (min n = {min_n})")));
            }
            if ns.iter().any(|&n| n >= 1 << 16) || k >= 1 << 16 {
                return Err(Error::Config("grid values must be below 65536".into()));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn bisection_config(&self, spec: &AlgorithmSpec) -> BisectionConfig {
        BisectionConfig {
            size_cap: self.population_cap,
            max_generations: self.max_generations,
            crossover_prob: spec.crossover_prob,
            mutation_prob: spec.mutation_prob,
            hboa: spec.hboa.clone().unwrap_or_default(),
            ..BisectionConfig::default()
        }
    }

    /// Cells in `(k, n)` order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells: Vec<(usize, usize)> = self
            .grid
            .iter()
            .flat_map(|(&k, ns)| ns.iter().map(move |&n| (k, n)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

pub fn instance_seed(master_seed: u64, n: usize, k: usize, index: usize) -> u64 {
    derive_seed(master_seed, stream::INSTANCE, ((k as u64) << 48) | ((n as u64) << 32) | index as u64)
}

/// Outcome of sizing one algorithm on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionRecord {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub instance_seed: u64,
    pub optimum_value: f64,
    /// 0 when the population cap was reached.
    pub population_size: usize,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitStatus {
    Solved,
    PopulationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct UnitFile {
    record: BisectionRecord,
    runs: Vec<RunStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitId {
    pub k: usize,
    pub n: usize,
    pub instance_seed: u64,
    pub algorithm: Algorithm,
}

impl UnitId {
    fn file_name(&self) -> String {
        format!("k{}_n{}_{:016x}_{}.json", self.k, self.n, self.instance_seed, self.algorithm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkippedInstance {
    pub k: usize,
    pub n: usize,
    pub instance_seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub completed: BTreeSet<UnitId>,
    pub uncertified: BTreeSet<SkippedInstance>,
    /// Certified optima, keyed by instance seed (hex).
    pub optima: BTreeMap<String, f64>,
}

impl Manifest {
    fn new(config_hash: String) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            config_hash,
            completed: BTreeSet::new(),
            uncertified: BTreeSet::new(),
            optima: BTreeMap::new(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: Option<usize>,
    pub resume: bool,
    /// Stop after this many newly completed units (used to simulate
    /// interruptions).
    pub max_new_units: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub results: Vec<RunStats>,
    pub bisections: Vec<BisectionRecord>,
    pub aggregates: Vec<CellAggregate>,
    pub manifest: Manifest,
    /// False when `max_new_units` stopped the sweep early.
    pub complete: bool,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const BISECTION_FILE: &str = "bisection.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const UNITS_DIR: &str = "units";

/// Generates and certifies every instance of the grid, sizes every
/// configured algorithm on every certified instance, and writes
/// `results.csv`, `bisection.csv`, `aggregates.csv` and `manifest.json`
/// into `out_dir`. Output is a pure function of the config.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path, opts: &SweepOptions) -> Result<SweepOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| sweep_inner(cfg, out_dir, opts))
}

fn sweep_inner(cfg: &SweepConfig, out_dir: &Path, opts: &SweepOptions) -> Result<SweepOutput> {
    let units_dir = out_dir.join(UNITS_DIR);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let hash = cfg.hash();

    let mut manifest = Manifest::new(hash.clone());
    if opts.resume && manifest_path.exists() {
        let prev: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if prev.config_hash != hash {
            return Err(Error::Config("manifest belongs to a different config; refusing to resume".into()));
        }
        manifest.completed = prev
            .completed
            .into_iter()
            .filter(|u| units_dir.join(u.file_name()).exists())
            .collect();
    } else if units_dir.exists() {
        fs::remove_dir_all(&units_dir)?;
    }
    fs::create_dir_all(&units_dir)?;

    // Certification.
    let specs: Vec<(usize, usize, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|(k, n)| (0..cfg.instances_per_cell).map(move |i| (k, n, i)))
        .collect();
    let certified: Vec<std::result::Result<(NkInstance, f64), SkippedInstance>> = specs
        .par_iter()
        .map(|&(k, n, i)| {
            let seed = instance_seed(cfg.master_seed, n, k, i);
            let inst = NkInstance::generate(n, k, seed).expect("grid validated");
            let solve_cfg = SolveConfig {
                node_limit: cfg.node_limit,
                ..SolveConfig::default()
            };
            match solve(&inst, &solve_cfg) {
                Ok(res) => Ok((inst, res.optimum_value)),
                Err(e) => {
                    warn!("instance {seed:016x} (n={n}, k={k}) not certified: {e}");
                    Err(SkippedInstance {
                        k,
                        n,
                        instance_seed: seed,
                        reason: e.to_string(),
                    })
                }
            }
        })
        .collect();

    let mut instances = Vec::new();
    for c in certified {
        match c {
            Ok((inst, opt)) => {
                manifest.optima.insert(format!("{:016x}", inst.seed()), opt);
                instances.push((inst, opt));
            }
            Err(skip) => {
                manifest.uncertified.insert(skip);
            }
        }
    }
    info!("certified {} of {} instances", instances.len(), specs.len());
    manifest.write(&manifest_path)?;

    // Work units.
    let units: Vec<(UnitId, &NkInstance, f64, &AlgorithmSpec)> = instances
        .iter()
        .flat_map(|(inst, opt)| {
            cfg.algorithms.iter().map(move |spec| {
                let id = UnitId {
                    k: inst.k(),
                    n: inst.n(),
                    instance_seed: inst.seed(),
                    algorithm: spec.name,
                };
                (id, inst, *opt, spec)
            })
        })
        .filter(|(id, ..)| !manifest.completed.contains(id))
        .collect();

    let shared = Mutex::new((manifest, 0usize));
    let budget = opts.max_new_units.unwrap_or(usize::MAX);
    units.par_iter().try_for_each(|(id, inst, opt, spec)| -> Result<()> {
        {
            let guard = shared.lock().unwrap();
            if guard.1 >= budget {
                return Ok(());
            }
        }
        let unit = run_unit(cfg, inst, *opt, spec)?;
        let mut s = serde_json::to_string(&unit)?;
        s.push('\n');
        write_atomic(&units_dir.join(id.file_name()), s.as_bytes())?;
        let mut guard = shared.lock().unwrap();
        if guard.1 < budget {
            guard.0.completed.insert(id.clone());
            guard.1 += 1;
            guard.0.write(&manifest_path)?;
        }
        Ok(())
    })?;
    let (manifest, _) = shared.into_inner().unwrap();

    let expected: BTreeSet<UnitId> = instances
        .iter()
        .flat_map(|(inst, _)| {
            cfg.algorithms.iter().map(|spec| UnitId {
                k: inst.k(),
                n: inst.n(),
                instance_seed: inst.seed(),
                algorithm: spec.name,
            })
        })
        .collect();
    let complete = expected.is_subset(&manifest.completed);

    // Assemble outputs in unit order.
    let mut results = Vec::new();
    let mut bisections = Vec::new();
    for id in &manifest.completed {
        let unit: UnitFile = serde_json::from_str(&fs::read_to_string(units_dir.join(id.file_name()))?)?;
        bisections.push(unit.record);
        results.extend(unit.runs);
    }
    let aggregates = aggregate(&results);

    write_csv(&out_dir.join(RESULTS_FILE), &results)?;
    write_csv(&out_dir.join(BISECTION_FILE), &bisections)?;
    write_csv(&out_dir.join(AGGREGATES_FILE), &aggregates)?;
    manifest.write(&manifest_path)?;

    Ok(SweepOutput {
        results,
        bisections,
        aggregates,
        manifest,
        complete,
    })
}

fn run_unit(cfg: &SweepConfig, inst: &NkInstance, optimum: f64, spec: &AlgorithmSpec) -> Result<UnitFile> {
    let bis_cfg = cfg.bisection_config(spec);
    let base = bisection_base_seed(inst.seed(), spec.name);
    let mut record = BisectionRecord {
        n: inst.n(),
        k: inst.k(),
        algorithm: spec.name,
        instance_seed: inst.seed(),
        optimum_value: optimum,
        population_size: 0,
        status: UnitStatus::Solved,
    };
    match bisect_population_size(inst, spec.name, optimum, &bis_cfg, base) {
        Ok(res) => {
            record.population_size = res.population_size;
            Ok(UnitFile { record, runs: res.runs })
        }
        Err(Error::PopulationCap { cap }) => {
            warn!("{} on instance {:016x}: no 10/10 size up to {cap}", spec.name, inst.seed());
            record.status = UnitStatus::PopulationCap;
            Ok(UnitFile { record, runs: Vec::new() })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        Self { mean, std: var.sqrt() }
    }
}

/// Statistics of one `(n, k, algorithm)` cell over its successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub instances: usize,
    pub runs: usize,
    pub population_size_mean: f64,
    pub population_size_std: f64,
    pub generations_mean: f64,
    pub generations_std: f64,
    pub evaluations_mean: f64,
    pub evaluations_std: f64,
    pub dhc_flips_mean: f64,
    pub dhc_flips_std: f64,
}

impl CellAggregate {
    pub fn statistic(&self, stat: Statistic) -> MeanStd {
        let (mean, std) = match stat {
            Statistic::PopulationSize => (self.population_size_mean, self.population_size_std),
            Statistic::Generations => (self.generations_mean, self.generations_std),
            Statistic::Evaluations => (self.evaluations_mean, self.evaluations_std),
            Statistic::DhcFlips => (self.dhc_flips_mean, self.dhc_flips_std),
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    PopulationSize,
    Generations,
    Evaluations,
    DhcFlips,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::PopulationSize,
        Statistic::Generations,
        Statistic::Evaluations,
        Statistic::DhcFlips,
    ];

    fn of(self, r: &RunStats) -> f64 {
        match self {
            Statistic::PopulationSize => r.population_size as f64,
            Statistic::Generations => r.generations as f64,
            Statistic::Evaluations => r.evaluations as f64,
            Statistic::DhcFlips => r.dhc_flips as f64,
        }
    }
}

/// Per-cell means and standard deviations over successful runs, ordered by
/// `(k, n, algorithm)`.
pub fn aggregate(stats: &[RunStats]) -> Vec<CellAggregate> {
    let mut cells: BTreeMap<(usize, usize, Algorithm), Vec<&RunStats>> = BTreeMap::new();
    for r in stats {
        cells.entry((r.k, r.n, r.algorithm)).or_default().push(r);
    }
    cells
        .into_iter()
        .filter_map(|((k, n, algorithm), runs)| {
            let ok: Vec<&RunStats> = runs.into_iter().filter(|r| r.success).collect();
            if ok.is_empty() {
                warn!("cell n={n} k={k} {algorithm} has no successful runs; omitted");
                return None;
            }
            let stat = |s: Statistic| MeanStd::of(&ok.iter().map(|r| s.of(r)).collect::<Vec<_>>());
            let [p, g, e, f] = Statistic::ALL.map(stat);
            let instances = ok.iter().map(|r| r.instance_seed).collect::<BTreeSet<_>>().len();
            Some(CellAggregate {
                n,
                k,
                algorithm,
                instances,
                runs: ok.len(),
                population_size_mean: p.mean,
                population_size_std: p.std,
                generations_mean: g.mean,
                generations_std: g.std,
                evaluations_mean: e.mean,
                evaluations_std: e.std,
                dhc_flips_mean: f.mean,
                dhc_flips_std: f.std,
            })
        })
        .collect()
}

/// Mean over instances of the per-instance ratio `A / B` in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub n: usize,
    pub k: usize,
    pub algorithm_a: Algorithm,
    pub algorithm_b: Algorithm,
    pub instances: usize,
    pub evaluations_ratio: f64,
    pub flips_ratio: f64,
}

pub type RatioCurve = Vec<RatioPoint>;

fn single_algorithm(stats: &[RunStats], side: &str) -> Result<Algorithm> {
    let algs: BTreeSet<Algorithm> = stats.iter().map(|r| r.algorithm).collect();
    match algs.len() {
        1 => Ok(*algs.iter().next().unwrap()),
        0 => Err(invalid(format!("side {side} has no runs"))),
        _ => Err(invalid(format!("side {side} mixes algorithms {algs:?}"))),
    }
}

type ByCell<T> = BTreeMap<(usize, usize), BTreeMap<u64, T>>;

/// Per-instance means of (evaluations, flips) over successful runs, by cell.
fn instance_means(stats: &[RunStats]) -> ByCell<(f64, f64)> {
    let mut sums: ByCell<(f64, f64, usize)> = BTreeMap::new();
    for r in stats.iter().filter(|r| r.success) {
        let e = sums.entry((r.k, r.n)).or_default().entry(r.instance_seed).or_default();
        e.0 += r.evaluations as f64;
        e.1 += r.dhc_flips as f64;
        e.2 += 1;
    }
    sums.into_iter()
        .map(|(cell, m)| {
            let means = m.into_iter().map(|(s, (e, f, c))| (s, (e / c as f64, f / c as f64))).collect();
            (cell, means)
        })
        .collect()
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Pairwise comparison. Both sides must cover exactly the same instances in
/// every cell; ratios above 1 mean `A` needed more work than `B`.
pub fn compare(stats_a: &[RunStats], stats_b: &[RunStats]) -> Result<RatioCurve> {
    let alg_a = single_algorithm(stats_a, "A")?;
    let alg_b = single_algorithm(stats_b, "B")?;
    let a = instance_means(stats_a);
    let b = instance_means(stats_b);
    let cells_a: Vec<_> = a.keys().collect();
    let cells_b: Vec<_> = b.keys().collect();
    if cells_a != cells_b {
        return Err(Error::InstanceMismatch(format!("cells differ: {cells_a:?} vs {cells_b:?}")));
    }
    let mut curve = Vec::new();
    for ((k, n), inst_a) in &a {
        let inst_b = &b[&(*k, *n)];
        if inst_a.keys().ne(inst_b.keys()) {
            return Err(Error::InstanceMismatch(format!(
                "cell n={n} k={k}: {} instances in A, {} in B, or different seeds",
                inst_a.len(),
                inst_b.len()
            )));
        }
        let m = inst_a.len() as f64;
        let (mut er, mut fr) = (0.0, 0.0);
        for (seed, (ea, fa)) in inst_a {
            let (eb, fb) = inst_b[seed];
            er += ratio(*ea, eb);
            fr += ratio(*fa, fb);
        }
        curve.push(RatioPoint {
            n: *n,
            k: *k,
            algorithm_a: alg_a,
            algorithm_b: alg_b,
            instances: inst_a.len(),
            evaluations_ratio: er / m,
            flips_ratio: fr / m,
        });
    }
    Ok(curve)
}

/// One plotted point: statistic vs `n`, one series per `(algorithm, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub algorithm: Algorithm,
    pub statistic: Statistic,
    pub k: usize,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn plot_series(aggregates: &[CellAggregate]) -> Vec<PlotPoint> {
    let mut points: Vec<PlotPoint> = aggregates
        .iter()
        .flat_map(|a| {
            Statistic::ALL.into_iter().map(move |s| {
                let v = a.statistic(s);
                PlotPoint {
                    algorithm: a.algorithm,
                    statistic: s,
                    k: a.k,
                    n: a.n,
                    mean: v.mean,
                    std: v.std,
                }
            })
        })
        .collect();
    points.sort_by_key(|p| (p.algorithm, p.statistic, p.k, p.n));
    points
}

/// Writes rows with a header line; an empty slice still yields the header.
pub fn write_csv<T: Serialize + HeaderRow>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Column names of a CSV row type.
pub trait HeaderRow {
    const HEADER: &'static [&'static str];
}

impl HeaderRow for RunStats {
    const HEADER: &'static [&'static str] = &[
        "n",
        "k",
        "algorithm",
        "instance_seed",
        "run_index",
        "population_size",
        "generations",
        "evaluations",
        "dhc_flips",
        "success",
    ];
}

impl HeaderRow for BisectionRecord {
    const HEADER: &'static [&'static str] =
        &["n", "k", "algorithm", "instance_seed", "optimum_value", "population_size", "status"];
}

impl HeaderRow for CellAggregate {
    const HEADER: &'static [&'static str] = &[
        "n",
        "k",
        "algorithm",
        "instances",
        "runs",
        "population_size_mean",
        "population_size_std",
        "generations_mean",
        "generations_std",
        "evaluations_mean",
        "evaluations_std",
        "dhc_flips_mean",
        "dhc_flips_std",
    ];
}

impl HeaderRow for RatioPoint {
    const HEADER: &'static [&'static str] =
        &["n", "k", "algorithm_a", "algorithm_b", "instances", "evaluations_ratio", "flips_ratio"];
}

impl HeaderRow for PlotPoint {
    const HEADER: &'static [&'static str] = &["algorithm", "statistic", "k", "n", "mean", "std"];
}
