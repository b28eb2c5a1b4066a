//! Bayesian networks with decision-tree local structures.
//!
//! Every variable owns a decision tree predicting it from other variables.
//! Leaves hold the counts `(m0, m1)` of the variable's values among the
//! selected rows that reach them. Structures are scored with the
//! Bayesian-Dirichlet metric (likelihood equivalence, one prior sample per
//! leaf split evenly over the two values) minus `penalty_factor·log2(N)`
//! for each leaf added by a split.
//!
//! Learning is greedy: starting from single-leaf trees, apply the best
//! positive-gain split over all trees, leaves and candidate variables that
//! keeps the dependency graph acyclic, until none is left.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::instance::Genome;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HboaConfig {
    /// Multiplier of `log2(N)` charged per added leaf.
    pub penalty_factor: f64,
    /// Maximum number of distinct variables tested in one tree.
    pub max_tree_vars: Option<usize>,
}

impl Default for HboaConfig {
    fn default() -> Self {
        Self {
            penalty_factor: 0.5,
            max_tree_vars: None,
        }
    }
}

impl HboaConfig {
    pub fn split_penalty(&self, rows: usize) -> f64 {
        self.penalty_factor * (rows.max(1) as f64).log2()
    }
}

/// Log marginal likelihood of one leaf.
pub fn leaf_score(m0: usize, m1: usize) -> f64 {
    let (m0, m1) = (m0 as f64, m1 as f64);
    ln_gamma(1.0) - ln_gamma(1.0 + m0 + m1) + ln_gamma(0.5 + m0) - ln_gamma(0.5) + ln_gamma(0.5 + m1)
        - ln_gamma(0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        test_var: usize,
        low: Box<TreeNode>,
        high: Box<TreeNode>,
    },
    Leaf {
        m0: usize,
        m1: usize,
    },
}

impl TreeNode {
    fn leaves(&self) -> Vec<(usize, usize)> {
        match self {
            TreeNode::Leaf { m0, m1 } => vec![(*m0, *m1)],
            TreeNode::Split { low, high, .. } => {
                let mut v = low.leaves();
                v.extend(high.leaves());
                v
            }
        }
    }

    fn tested_vars(&self, out: &mut BTreeSet<usize>) {
        if let TreeNode::Split { test_var, low, high } = self {
            out.insert(*test_var);
            low.tested_vars(out);
            high.tested_vars(out);
        }
    }

    fn paths_are_simple(&self, path: &mut Vec<usize>) -> bool {
        match self {
            TreeNode::Leaf { .. } => true,
            TreeNode::Split { test_var, low, high } => {
                if path.contains(test_var) {
                    return false;
                }
                path.push(*test_var);
                let ok = low.paths_are_simple(path) && high.paths_are_simple(path);
                path.pop();
                ok
            }
        }
    }

    /// Probability that the target is 1 at the leaf reached by `bits`.
    fn prob_one(&self, bits: &[bool]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { m0, m1 } => return (*m1 as f64 + 0.5) / ((m0 + m1) as f64 + 1.0),
                TreeNode::Split { test_var, low, high } => {
                    node = if bits[*test_var] { high } else { low };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub target: usize,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        self.root.leaves()
    }

    pub fn tested_vars(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        self.root.tested_vars(&mut s);
        s
    }

    pub fn paths_are_simple(&self) -> bool {
        self.root.paths_are_simple(&mut Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNetModel {
    pub trees: Vec<DecisionTree>,
    pub order: Vec<usize>,
    /// Score tracked incrementally while learning.
    pub score: f64,
}

impl BayesNetModel {
    /// Dependency edges `(parent, child)`: `child`'s tree tests `parent`.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        self.trees
            .iter()
            .flat_map(|t| t.tested_vars().into_iter().map(move |p| (p, t.target)))
            .collect()
    }

    /// Score recomputed from the leaves.
    pub fn rescore(&self, rows: usize, cfg: &HboaConfig) -> f64 {
        let mut total = 0.0;
        let mut extra_leaves = 0usize;
        for t in &self.trees {
            let leaves = t.leaves();
            extra_leaves += leaves.len() - 1;
            total += leaves.iter().map(|&(a, b)| leaf_score(a, b)).sum::<f64>();
        }
        total - extra_leaves as f64 * cfg.split_penalty(rows)
    }

    pub fn order_is_topological(&self) -> bool {
        let mut pos = vec![usize::MAX; self.trees.len()];
        for (i, &v) in self.order.iter().enumerate() {
            pos[v] = i;
        }
        pos.iter().all(|&p| p != usize::MAX) && self.edges().iter().all(|&(p, c)| pos[p] < pos[c])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trees)?)
    }
}

fn counts(selected: &[Genome], rows: &[u32], target: usize) -> (usize, usize) {
    let ones = rows.iter().filter(|&&r| selected[r as usize].bits[target]).count();
    (rows.len() - ones, ones)
}

/// Counts of the target within the two children of a split on `candidate`:
/// `[low.m0, low.m1, high.m0, high.m1]`.
fn split_counts(selected: &[Genome], rows: &[u32], target: usize, candidate: usize) -> [usize; 4] {
    let mut c = [0usize; 4];
    for &r in rows {
        let bits = &selected[r as usize].bits;
        c[(bits[candidate] as usize) * 2 + bits[target] as usize] += 1;
    }
    c
}

/// Net score change from replacing a leaf holding `leaf_rows` of `selected`
/// with a test on `candidate`.
pub fn split_gain(selected: &[Genome], leaf_rows: &[u32], target: usize, candidate: usize, cfg: &HboaConfig) -> f64 {
    let (m0, m1) = counts(selected, leaf_rows, target);
    let c = split_counts(selected, leaf_rows, target, candidate);
    gain_from_counts(m0, m1, c, cfg.split_penalty(selected.len()))
}

fn gain_from_counts(m0: usize, m1: usize, c: [usize; 4], penalty: f64) -> f64 {
    leaf_score(c[0], c[1]) + leaf_score(c[2], c[3]) - leaf_score(m0, m1) - penalty
}

enum ArenaNode {
    Leaf,
    Split { var: usize, low: usize, high: usize },
}

struct OpenLeaf {
    target: usize,
    node: usize,
    rows: Vec<u32>,
    path: Vec<usize>,
    /// Gain per candidate variable; `None` where the split is not allowed
    /// by the path.
    gains: Vec<Option<f64>>,
}

struct Learner<'a> {
    selected: &'a [Genome],
    cfg: &'a HboaConfig,
    n: usize,
    penalty: f64,
    arenas: Vec<Vec<ArenaNode>>,
    leaves: Vec<Option<OpenLeaf>>,
    /// `reach[a][b]`: a directed path of dependencies leads from `a` to `b`.
    reach: Vec<Vec<bool>>,
    tree_vars: Vec<BTreeSet<usize>>,
}

impl<'a> Learner<'a> {
    fn open_leaf(&self, target: usize, node: usize, rows: Vec<u32>, path: Vec<usize>) -> OpenLeaf {
        let (m0, m1) = counts(self.selected, &rows, target);
        let gains = (0..self.n)
            .map(|j| {
                if j == target || path.contains(&j) {
                    None
                } else {
                    let c = split_counts(self.selected, &rows, target, j);
                    Some(gain_from_counts(m0, m1, c, self.penalty))
                }
            })
            .collect();
        OpenLeaf {
            target,
            node,
            rows,
            path,
            gains,
        }
    }

    fn edge_allowed(&self, parent: usize, child: usize) -> bool {
        if self.tree_vars[child].contains(&parent) {
            return true;
        }
        if let Some(cap) = self.cfg.max_tree_vars {
            if self.tree_vars[child].len() >= cap {
                return false;
            }
        }
        !self.reach[child][parent]
    }

    fn add_edge(&mut self, parent: usize, child: usize) {
        if !self.tree_vars[child].insert(parent) {
            return;
        }
        let sources: Vec<usize> = (0..self.n).filter(|&a| a == parent || self.reach[a][parent]).collect();
        let sinks: Vec<usize> = (0..self.n).filter(|&b| b == child || self.reach[child][b]).collect();
        for &a in &sources {
            for &b in &sinks {
                self.reach[a][b] = true;
            }
        }
    }

    /// Best allowed split as `(gain, target, candidate, leaf slot)`.
    fn best_split(&self) -> Option<(f64, usize, usize, usize)> {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (slot, leaf) in self.leaves.iter().enumerate() {
            let Some(leaf) = leaf else { continue };
            for (j, g) in leaf.gains.iter().enumerate() {
                let Some(g) = *g else { continue };
                if g <= 0.0 || !self.edge_allowed(j, leaf.target) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bg, bt, bj, bs)) => {
                        g > bg || (g == bg && (leaf.target, j, slot) < (bt, bj, bs))
                    }
                };
                if better {
                    best = Some((g, leaf.target, j, slot));
                }
            }
        }
        best
    }

    fn apply(&mut self, slot: usize, var: usize) {
        let leaf = self.leaves[slot].take().expect("open leaf");
        let arena = &mut self.arenas[leaf.target];
        let low = arena.len();
        arena.push(ArenaNode::Leaf);
        arena.push(ArenaNode::Leaf);
        arena[leaf.node] = ArenaNode::Split { var, low, high: low + 1 };

        let (high_rows, low_rows): (Vec<u32>, Vec<u32>) =
            leaf.rows.iter().partition(|&&r| self.selected[r as usize].bits[var]);
        let mut path = leaf.path;
        path.push(var);
        let low_leaf = self.open_leaf(leaf.target, low, low_rows, path.clone());
        let high_leaf = self.open_leaf(leaf.target, low + 1, high_rows, path);
        self.leaves[slot] = Some(low_leaf);
        self.leaves.push(Some(high_leaf));
        self.add_edge(var, leaf.target);
    }

    fn build_tree(&self, target: usize, node: usize) -> TreeNode {
        match &self.arenas[target][node] {
            ArenaNode::Split { var, low, high } => TreeNode::Split {
                test_var: *var,
                low: Box::new(self.build_tree(target, *low)),
                high: Box::new(self.build_tree(target, *high)),
            },
            ArenaNode::Leaf => {
                let leaf = self
                    .leaves
                    .iter()
                    .flatten()
                    .find(|l| l.target == target && l.node == node)
                    .expect("every arena leaf is open");
                let (m0, m1) = counts(self.selected, &leaf.rows, target);
                TreeNode::Leaf { m0, m1 }
            }
        }
    }
}

/// Greedy structure learning from a selected population.
pub fn learn_model(selected: &[Genome], cfg: &HboaConfig) -> Result<BayesNetModel> {
    let first = selected.first().ok_or_else(|| invalid("cannot learn from an empty selection"))?;
    let n = first.len();
    let all_rows: Vec<u32> = (0..selected.len() as u32).collect();
    let mut learner = Learner {
        selected,
        cfg,
        n,
        penalty: cfg.split_penalty(selected.len()),
        arenas: (0..n).map(|_| vec![ArenaNode::Leaf]).collect(),
        leaves: Vec::with_capacity(2 * n),
        reach: vec![vec![false; n]; n],
        tree_vars: vec![BTreeSet::new(); n],
    };
    let mut score = 0.0;
    for target in 0..n {
        let leaf = learner.open_leaf(target, 0, all_rows.clone(), Vec::new());
        let (m0, m1) = counts(selected, &leaf.rows, target);
        score += leaf_score(m0, m1);
        learner.leaves.push(Some(leaf));
    }

    while let Some((gain, _, var, slot)) = learner.best_split() {
        learner.apply(slot, var);
        score += gain;
    }

    let trees: Vec<DecisionTree> = (0..n)
        .map(|target| DecisionTree {
            target,
            root: learner.build_tree(target, 0),
        })
        .collect();
    let order = topological_order(n, &learner.tree_vars);
    Ok(BayesNetModel { trees, order, score })
}

/// Kahn's algorithm, always releasing the lowest ready variable first.
fn topological_order(n: usize, parents: &[BTreeSet<usize>]) -> Vec<usize> {
    let mut missing: Vec<usize> = parents.iter().map(BTreeSet::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| missing[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            missing[c] -= 1;
            if missing[c] == 0 {
                ready.insert(c);
            }
        }
    }
    assert_eq!(order.len(), n, "dependency graph has a cycle");
    order
}

/// Ancestral sampling in topological order.
pub fn sample_model(model: &BayesNetModel, count: usize, rng: &mut Rng) -> Vec<Genome> {
    let n = model.trees.len();
    (0..count)
        .map(|_| {
            let mut bits = vec![false; n];
            for &v in &model.order {
                let p = model.trees[v].root.prob_one(&bits);
                bits[v] = rng.gen::<f64>() < p;
            }
            Genome::new(bits)
        })
        .collect()
}
