//! Finite Markov chains over map locations.
//!
//! A [`TransitionMatrix`] is the movement kernel shared by every agent. Rows
//! are stored sparsely (nonzero entries in ascending column order), which
//! keeps 10⁴-cell grid maps small and makes power iteration O(nnz).

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use std::collections::VecDeque;
use thiserror::Error;

use crate::rng::UniformSource;

/// Absolute tolerance on every row sum.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("transition matrix has no rows")]
    Empty,
    #[error("transition matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },
    #[error(
        "chain is not ergodic ({communicating_class_count} communicating classes, period {period})"
    )]
    NotErgodic {
        communicating_class_count: usize,
        period: usize,
    },
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("grid side must be at least 1")]
    ZeroSide,
    #[error("stay probability {0} is outside [0, 1)")]
    InvalidStayProbability(f64),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
}

/// Row-stochastic movement kernel. Row = current location, column = next.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    /// Validates a dense row-major matrix.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, MarkovError> {
        let n = rows.len();
        if n == 0 {
            return Err(MarkovError::Empty);
        }
        let mut sparse = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MarkovError::NonSquare {
                    row: i,
                    len: row.len(),
                    expected: n,
                });
            }
            sparse.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, p)| (j, *p))
                    .collect::<Vec<_>>(),
            );
        }
        Self::from_sparse_rows(n, sparse)
    }

    /// Validates rows given as `(column, probability)` lists. Columns must be
    /// strictly ascending within each row; zero entries may be omitted.
    pub fn from_sparse_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, MarkovError> {
        if n == 0 || rows.is_empty() {
            return Err(MarkovError::Empty);
        }
        if rows.len() != n {
            return Err(MarkovError::NonSquare {
                row: rows.len().min(n),
                len: rows.len(),
                expected: n,
            });
        }
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut probs = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut sum = 0.0;
            let mut last: Option<usize> = None;
            for (j, p) in row {
                if j >= n || last.is_some_and(|l| j <= l) {
                    return Err(MarkovError::NonSquare {
                        row: i,
                        len: j + 1,
                        expected: n,
                    });
                }
                last = Some(j);
                if !p.is_finite() {
                    return Err(MarkovError::NonFinite { row: i, col: j });
                }
                if p < 0.0 {
                    return Err(MarkovError::NegativeEntry {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
                sum += p;
                if p > 0.0 {
                    cols.push(j);
                    probs.push(p);
                }
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MarkovError::RowSumViolation { row: i, sum });
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            probs,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.n
    }

    /// Nonzero entries of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.probs[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.probs[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut row = vec![0.0; self.n];
                for (j, p) in self.row(i) {
                    row[j] = p;
                }
                row
            })
            .collect()
    }

    /// Columns also sum to 1 within the row tolerance.
    pub fn is_doubly_stochastic(&self) -> bool {
        let mut col_sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, p) in self.row(i) {
                col_sums[j] += p;
            }
        }
        col_sums
            .iter()
            .all(|s| (s - 1.0).abs() <= ROW_SUM_TOLERANCE)
    }

    /// `pi · T` into `out`.
    fn left_multiply(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += w * p;
            }
        }
    }
}

/// Irreducibility and periodicity of the nonzero-pattern graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    pub communicating_class_count: usize,
    /// gcd of cycle lengths; 1 when aperiodic.
    pub period: usize,
}

impl ErgodicityReport {
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.aperiodic
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Strongly connected components and the chain period.
///
/// The period of each class is the gcd of `level(u) + 1 - level(v)` over
/// the class's internal edges, with levels from a BFS rooted anywhere in the
/// class. A self-loop makes its class aperiodic immediately. The reported
/// period is the gcd over all classes that contain a cycle.
pub fn ergodicity(matrix: &TransitionMatrix) -> ErgodicityReport {
    let n = matrix.n_locations();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, matrix.nnz());
    for _ in 0..n {
        graph.add_node(());
    }
    for i in 0..n {
        for (j, _) in matrix.row(i) {
            graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
        }
    }
    let components = tarjan_scc(&graph);

    let mut class_of = vec![0usize; n];
    for (c, members) in components.iter().enumerate() {
        for v in members {
            class_of[v.index()] = c;
        }
    }

    let mut level = vec![usize::MAX; n];
    let mut period = 0usize;
    let mut queue = VecDeque::new();
    for (c, members) in components.iter().enumerate() {
        let root = members[0].index();
        let has_self_loop = members
            .iter()
            .any(|v| matrix.get(v.index(), v.index()) > 0.0);
        if has_self_loop {
            period = gcd(period, 1);
            continue;
        }
        if members.len() == 1 {
            // no internal cycle
            continue;
        }
        let mut class_gcd = 0usize;
        level[root] = 0;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for (v, _) in matrix.row(u) {
                if class_of[v] != c {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    class_gcd = gcd(class_gcd, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
        period = gcd(period, class_gcd);
    }
    // Every row has an out-edge, so the graph always contains a cycle.
    debug_assert!(period > 0);

    let communicating_class_count = components.len();
    ErgodicityReport {
        irreducible: communicating_class_count == 1,
        aperiodic: period == 1,
        communicating_class_count,
        period,
    }
}

/// Long-run location distribution of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StationaryDistribution {
    /// Wraps an explicit probability vector (nonnegative, summing to 1 within 1e-12).
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self, MarkovError> {
        if probs.is_empty() {
            return Err(MarkovError::InvalidDistribution("empty vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(MarkovError::InvalidDistribution(format!(
                "entry {p} is not a probability"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MarkovError::InvalidDistribution(format!(
                "entries sum to {sum}"
            )));
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability that two independent agents, each at stationarity,
    /// share a location: Σ π_p².
    pub fn meetup_probability(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }

    /// `‖πT − π‖∞`.
    pub fn residual(&self, matrix: &TransitionMatrix) -> f64 {
        let mut next = vec![0.0; self.probs.len()];
        matrix.left_multiply(&self.probs, &mut next);
        next.iter()
            .zip(&self.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Draws a location by cumulative inversion in ascending index order.
    pub fn sample<R: UniformSource + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.next_uniform();
        invert_cumulative(&self.cumulative, &self.probs, u)
    }
}

fn invert_cumulative(cumulative: &[f64], probs: &[f64], u: f64) -> usize {
    match cumulative.iter().position(|&c| u < c) {
        Some(k) => k,
        // rounding left the last cumulative value just below u
        None => probs.iter().rposition(|&p| p > 0.0).unwrap_or(0),
    }
}

/// Stopping rule for power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Stop once successive iterates differ by less than this in ∞-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_iterations: 1_000_000,
        }
    }
}

pub fn stationary_distribution(
    matrix: &TransitionMatrix,
) -> Result<StationaryDistribution, MarkovError> {
    stationary_distribution_with(matrix, PowerIteration::default())
}

/// Power iteration from the uniform vector. Requires an ergodic chain.
pub fn stationary_distribution_with(
    matrix: &TransitionMatrix,
    options: PowerIteration,
) -> Result<StationaryDistribution, MarkovError> {
    let report = ergodicity(matrix);
    if !report.is_ergodic() {
        return Err(MarkovError::NotErgodic {
            communicating_class_count: report.communicating_class_count,
            period: report.period,
        });
    }
    let n = matrix.n_locations();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..options.max_iterations {
        matrix.left_multiply(&pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let diff = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MarkovError::NoConvergence {
            iterations: options.max_iterations,
        });
    }
    StationaryDistribution::from_probabilities(pi)
}

/// Σ π_p².
pub fn meetup_probability(pi: &StationaryDistribution) -> f64 {
    pi.meetup_probability()
}

/// Next location from `current`: one draw, cumulative inversion over the row.
pub fn sample_next<R: UniformSource + ?Sized>(
    matrix: &TransitionMatrix,
    current: usize,
    rng: &mut R,
) -> usize {
    let u = rng.next_uniform();
    let mut acc = 0.0;
    let mut last = current;
    for (j, p) in matrix.row(current) {
        acc += p;
        if u < acc {
            return j;
        }
        last = j;
    }
    last
}

pub fn sample_stationary<R: UniformSource + ?Sized>(
    pi: &StationaryDistribution,
    rng: &mut R,
) -> usize {
    pi.sample(rng)
}

/// Lazy 4-neighbour walk on a `side × side` grid, cells indexed row-major.
///
/// Each cell keeps `stay_prob` on itself and splits the remainder evenly
/// among the neighbours that exist, so edge and corner cells give each
/// neighbour a larger share. A 1×1 grid keeps all its mass.
pub fn grid_walk_map(side: usize, stay_prob: f64) -> Result<TransitionMatrix, MarkovError> {
    if side == 0 {
        return Err(MarkovError::ZeroSide);
    }
    if !(0.0..1.0).contains(&stay_prob) {
        return Err(MarkovError::InvalidStayProbability(stay_prob));
    }
    let n = side * side;
    let mut rows = Vec::with_capacity(n);
    for r in 0..side {
        for c in 0..side {
            let idx = r * side + c;
            let mut neighbours = Vec::with_capacity(4);
            if r > 0 {
                neighbours.push(idx - side);
            }
            if c > 0 {
                neighbours.push(idx - 1);
            }
            if c + 1 < side {
                neighbours.push(idx + 1);
            }
            if r + 1 < side {
                neighbours.push(idx + side);
            }
            if neighbours.is_empty() {
                rows.push(vec![(idx, 1.0)]);
                continue;
            }
            let share = (1.0 - stay_prob) / neighbours.len() as f64;
            let mut row: Vec<(usize, f64)> = neighbours.into_iter().map(|j| (j, share)).collect();
            if stay_prob > 0.0 {
                row.push((idx, stay_prob));
            }
            row.sort_by_key(|(j, _)| *j);
            rows.push(row);
        }
    }
    TransitionMatrix::from_sparse_rows(n, rows)
}
