//! CART regression trees and bagged random forests.
//!
//! Splits maximize the reduction in squared error. Candidate thresholds are
//! midpoints between consecutive distinct feature values; ties go to the
//! lowest feature index and then the lowest threshold. Samples inside a node
//! are ordered by `(value, target)` before accumulating sums, so a tree fitted
//! without bootstrap does not depend on the order of the training rows.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForestError {
    #[error("empty training set")]
    Empty,
    #[error("{rows} feature rows but {targets} targets")]
    Length { rows: usize, targets: usize },
    #[error("{rows} rows is fewer than the minimum leaf size {min_leaf}")]
    TooFewRows { rows: usize, min_leaf: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("prediction input has {got} features, model expects {expected}")]
    Features { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub mtry: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` uses `floor(sqrt(d))`, at least 1.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    /// Fit trees on the rayon pool. Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            parallel: false,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::Config("min_leaf must be at least 1".into()));
        }
        if self.mtry == Some(0) {
            return Err(ForestError::Config("mtry must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1))
            .min(n_features)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self) -> String {
        fn go(t: &RegressionTree, i: usize, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match t.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(out, "{pad}x[{feature}] <= {threshold}");
                    go(t, left, depth + 1, out);
                    let _ = writeln!(out, "{pad}x[{feature}] > {threshold}");
                    go(t, right, depth + 1, out);
                }
                Node::Leaf { value, count } => {
                    let _ = writeln!(out, "{pad}leaf {value} (n={count})");
                }
            }
        }
        let mut out = String::new();
        go(self, 0, 0, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub tree_seeds: Vec<u64>,
    pub mtry: usize,
    pub config: ForestConfig,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        s / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        check_width(self.trees[0].n_features, x)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }
}

fn check_width(expected: usize, x: &Matrix) -> Result<(), ForestError> {
    if x.cols() != expected {
        return Err(ForestError::Features {
            expected,
            got: x.cols(),
        });
    }
    Ok(())
}

fn check_inputs(x: &Matrix, y: &[f64], min_leaf: usize) -> Result<(), ForestError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(ForestError::Empty);
    }
    if x.rows() != y.len() {
        return Err(ForestError::Length {
            rows: x.rows(),
            targets: y.len(),
        });
    }
    if y.len() < min_leaf {
        return Err(ForestError::TooFewRows {
            rows: y.len(),
            min_leaf,
        });
    }
    if !x.data().iter().chain(y).all(|v| v.is_finite()) {
        return Err(ForestError::NonFinite);
    }
    Ok(())
}

pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    config: &TreeConfig,
    seed: u64,
) -> Result<RegressionTree, ForestError> {
    if config.min_leaf == 0 || config.mtry == Some(0) {
        return Err(ForestError::Config("min_leaf and mtry must be at least 1".into()));
    }
    check_inputs(x, y, config.min_leaf)?;
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(grow(x, y, rows, config, &mut rng))
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    config: &'a TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
    // reusable (value, target) buffer
    pairs: Vec<(f64, f64)>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

fn grow<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    config: &TreeConfig,
    rng: &mut R,
) -> RegressionTree {
    let mut b = Builder {
        x,
        y,
        config,
        rng,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(rows.len()),
    };
    b.build(rows, 0);
    RegressionTree {
        nodes: b.nodes,
        n_features: x.cols(),
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
    }
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mut t: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        t.sort_by(f64::total_cmp);
        let value = t.iter().sum::<f64>() / t.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            count: rows.len(),
        });
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let first = self.y[rows[0]];
        let constant = rows.iter().all(|&i| self.y[i] == first);
        if constant || depth >= self.config.max_depth || n < 2 * self.config.min_leaf {
            return self.leaf(&rows);
        }
        let Some(best) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
        let left = self.build(lrows, depth + 1);
        let right = self.build(rrows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match self.config.mtry {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let min_leaf = self.config.min_leaf;
        let n = rows.len();
        let mut pairs = std::mem::take(&mut self.pairs);
        let mut sorted_t: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        sorted_t.sort_by(f64::total_cmp);
        let total: f64 = sorted_t.iter().sum();
        let base = total * total / n as f64;
        let scale: f64 = sorted_t.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += pairs[k].1;
                let nl = k + 1;
                if nl < min_leaf {
                    continue;
                }
                if n - nl < min_leaf {
                    break;
                }
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64
                    + right_sum * right_sum / (n - nl) as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0),
                    });
                }
            }
        }
        self.pairs = pairs;
        // require a gain above accumulated rounding
        best.filter(|b| b.score - base > 1e-12 * scale)
    }
}

/// Deterministic per-tree seeds drawn from the root seed.
pub fn tree_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

pub fn fit_forest(
    x: &Matrix,
    y: &[f64],
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    config.validate()?;
    check_inputs(x, y, config.min_leaf)?;
    let mtry = config.resolved_mtry(x.cols());
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        mtry: Some(mtry),
    };
    let seeds = tree_seeds(seed, config.n_trees);
    let n = x.rows();
    let fit_one = |&s: &u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow(x, y, rows, &tree_config, &mut rng)
    };
    let trees: Vec<RegressionTree> = if config.parallel {
        seeds.par_iter().map(fit_one).collect()
    } else {
        seeds.iter().map(fit_one).collect()
    };
    Ok(ForestModel {
        trees,
        tree_seeds: seeds,
        mtry,
        config: *config,
    })
}

#[cfg(test)]
mod tests;
