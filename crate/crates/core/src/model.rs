//! Bandit project instances: finite dense/sparse models, countable rule-based
//! models, validation, random generators, and reachable-set enumeration.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

/// Tolerance on row sums of a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Name of the PRNG used by the instance generators, recorded in run metadata.
pub const PRNG_NAME: &str = "ChaCha8 (64-bit seed, per-field streams)";

/// A single invariant violation found while validating a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonStochasticRow { row: usize, sum: f64 },
    NegativeProbability { row: usize, col: usize, p: f64 },
    BadDiscount { beta: f64 },
    NonFiniteReward { state: usize },
    FanoutExceeded { row: usize, count: usize, bound: usize },
    EmptyStateSpace,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonStochasticRow { row, sum } => {
                write!(f, "row {row} sums to {sum}, expected 1 within {ROW_SUM_TOL}")
            }
            Violation::NegativeProbability { row, col, p } => {
                write!(f, "p({row}, {col}) = {p} is negative")
            }
            Violation::BadDiscount { beta } => {
                write!(f, "discount factor {beta} outside (0, 1]")
            }
            Violation::NonFiniteReward { state } => {
                write!(f, "reward at state {state} is not finite")
            }
            Violation::FanoutExceeded { row, count, bound } => {
                write!(f, "row {row} has {count} nonzeros, fanout bound is {bound}")
            }
            Violation::EmptyStateSpace => write!(f, "model must have at least one state"),
        }
    }
}

/// Model construction failed; lists every violation found.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError(pub Vec<Violation>);

/// A finite-state bandit project: row-stochastic transition matrix `P`,
/// expected active rewards `R`, and discount factor `β ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditModel {
    p: Array2<f64>,
    rewards: Vec<f64>,
    beta: f64,
}

fn check_discount_rewards(beta: f64, rewards: &[f64], violations: &mut Vec<Violation>) {
    if !(beta > 0.0 && beta <= 1.0) {
        violations.push(Violation::BadDiscount { beta });
    }
    for (state, r) in rewards.iter().enumerate() {
        if !r.is_finite() {
            violations.push(Violation::NonFiniteReward { state });
        }
    }
    if rewards.is_empty() {
        violations.push(Violation::EmptyStateSpace);
    }
}

impl BanditModel {
    /// Validates and builds a model. `p` must be `n × n` row-stochastic,
    /// `rewards` of length `n`, and `beta ∈ (0, 1]`.
    pub fn new(p: Array2<f64>, rewards: Vec<f64>, beta: f64) -> Result<Self, ValidationError> {
        assert_eq!(p.nrows(), rewards.len(), "P and R dimension mismatch");
        assert_eq!(p.nrows(), p.ncols(), "P must be square");
        let mut violations = Vec::new();
        check_discount_rewards(beta, &rewards, &mut violations);
        for (row, r) in p.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for (col, &v) in r.iter().enumerate() {
                if v < 0.0 {
                    violations.push(Violation::NegativeProbability { row, col, p: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::NonStochasticRow { row, sum });
            }
        }
        if violations.is_empty() {
            Ok(Self { p, rewards, beta })
        } else {
            Err(ValidationError(violations))
        }
    }

    pub fn n(&self) -> usize {
        self.rewards.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn transition_matrix(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.p.row(i)
    }

    pub fn min_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Converts to the sparse representation, keeping strictly positive entries.
    pub fn to_sparse(&self) -> SparseBanditModel {
        let rows: Vec<Vec<(usize, f64)>> = self
            .p
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        let fanout = rows.iter().map(Vec::len).max().unwrap_or(0);
        SparseBanditModel::new(rows, self.rewards.clone(), self.beta, fanout)
            .expect("dense model already validated")
    }

    /// Returns a copy with every reward shifted by `-charge` (a per-engagement
    /// activity charge). The index of the shifted model is `λ* - charge`.
    pub fn with_activity_charge(&self, charge: f64) -> Self {
        Self {
            p: self.p.clone(),
            rewards: self.rewards.iter().map(|r| r - charge).collect(),
            beta: self.beta,
        }
    }
}

/// A finite-state bandit with per-row adjacency lists and a fanout bound `N`:
/// no row may hold more than `N` nonzero transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBanditModel {
    rows: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
    beta: f64,
    fanout: usize,
}

impl SparseBanditModel {
    pub fn new(
        rows: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        beta: f64,
        fanout: usize,
    ) -> Result<Self, ValidationError> {
        assert_eq!(rows.len(), rewards.len(), "rows and R dimension mismatch");
        let mut violations = Vec::new();
        check_discount_rewards(beta, &rewards, &mut violations);
        for (row, entries) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(col, p) in entries {
                if p < 0.0 {
                    violations.push(Violation::NegativeProbability { row, col, p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::NonStochasticRow { row, sum });
            }
            if entries.len() > fanout {
                violations.push(Violation::FanoutExceeded {
                    row,
                    count: entries.len(),
                    bound: fanout,
                });
            }
        }
        if violations.is_empty() {
            Ok(Self { rows, rewards, beta, fanout })
        } else {
            Err(ValidationError(violations))
        }
    }

    pub fn n(&self) -> usize {
        self.rewards.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    /// Nonzero entries `(j, p(i, j))` of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Expands to a dense model.
    pub fn to_dense(&self) -> BanditModel {
        let n = self.n();
        let mut p = Array2::zeros((n, n));
        for (i, entries) in self.rows.iter().enumerate() {
            for &(j, v) in entries {
                p[(i, j)] += v;
            }
        }
        BanditModel::new(p, self.rewards.clone(), self.beta)
            .expect("sparse model already validated")
    }
}

/// Draws an `n`-state instance with Uniform(0,1) rewards and a transition
/// matrix built from Uniform(0,1) entries normalized row by row.
/// Deterministic in `(n, seed)`; transitions and rewards use independent
/// PRNG streams so either field can be regenerated alone.
pub fn random_dense_instance(n: usize, seed: u64) -> BanditModel {
    assert!(n >= 1);
    let mut p_rng = ChaCha8Rng::seed_from_u64(seed);
    p_rng.set_stream(1);
    let mut r_rng = ChaCha8Rng::seed_from_u64(seed);
    r_rng.set_stream(2);

    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v: f64 = p_rng.gen();
            p[(i, j)] = v;
            sum += v;
        }
        // Renormalize so the row sums to 1 exactly up to the last ulp.
        for j in 0..n {
            p[(i, j)] /= sum;
        }
        let row_sum: f64 = p.row(i).sum();
        p[(i, i)] += 1.0 - row_sum;
    }
    let rewards: Vec<f64> = (0..n).map(|_| r_rng.gen()).collect();
    BanditModel::new(p, rewards, 1.0).expect("generated instance is stochastic")
}

/// Same generator with an explicit discount factor.
pub fn random_dense_instance_with_beta(n: usize, seed: u64, beta: f64) -> BanditModel {
    let m = random_dense_instance(n, seed);
    BanditModel::new(m.p, m.rewards, beta).expect("only beta changed")
}

/// A birth-death chain on `n` states with fanout 3 (stay, up, down), used for
/// sparse-path scaling experiments. Rewards Uniform(0,1), deterministic in seed.
pub fn random_birth_death_instance(n: usize, seed: u64, beta: f64) -> SparseBanditModel {
    assert!(n >= 2);
    let mut r_rng = ChaCha8Rng::seed_from_u64(seed);
    r_rng.set_stream(2);
    let mut w_rng = ChaCha8Rng::seed_from_u64(seed);
    w_rng.set_stream(3);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let up: f64 = w_rng.gen::<f64>() * 0.45;
        let down: f64 = w_rng.gen::<f64>() * 0.45;
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(3);
        let mut stay = 1.0;
        if i + 1 < n {
            entries.push((i + 1, up));
            stay -= up;
        }
        if i > 0 {
            entries.push((i - 1, down));
            stay -= down;
        }
        entries.push((i, stay));
        entries.sort_by_key(|&(j, _)| j);
        rows.push(entries);
    }
    let rewards: Vec<f64> = (0..n).map(|_| r_rng.gen()).collect();
    SparseBanditModel::new(rows, rewards, beta, 3).expect("birth-death rows are stochastic")
}

/// A project over a countable (finite or infinite) state space given by a
/// successor rule with bounded fanout.
pub trait CountableModel {
    /// Comparable state key; ordering fixes all iteration layouts.
    type State: Clone + Ord + fmt::Debug;

    fn beta(&self) -> f64;

    /// Upper bound on the number of positive-probability successors per state.
    fn fanout(&self) -> usize;

    fn reward(&self, state: &Self::State) -> f64;

    /// Positive-probability successors `(next, p)`; probabilities sum to 1.
    fn successors(&self, state: &Self::State) -> Vec<(Self::State, f64)>;
}

/// Posterior parameters of a Beta distribution: `i` successes, `j` failures
/// (both ≥ 1, counting the prior pseudo-observations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BetaState {
    pub i: u32,
    pub j: u32,
}

impl BetaState {
    pub fn new(i: u32, j: u32) -> Self {
        assert!(i >= 1 && j >= 1, "Beta parameters must be >= 1");
        Self { i, j }
    }
}

impl fmt::Display for BetaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.i, self.j)
    }
}

/// Bayesian Bernoulli bandit with a Beta posterior. Engaging in state `(i, j)`
/// yields expected reward `i/(i+j)`; a success moves to `(i+1, j)` with that
/// probability and a failure to `(i, j+1)` otherwise.
#[derive(Debug, Clone, Copy)]
pub struct BetaBernoulli {
    beta: f64,
}

impl BetaBernoulli {
    pub fn new(beta: f64) -> Self {
        assert!(beta > 0.0 && beta <= 1.0, "discount factor outside (0, 1]");
        Self { beta }
    }
}

impl CountableModel for BetaBernoulli {
    type State = BetaState;

    fn beta(&self) -> f64 {
        self.beta
    }

    fn fanout(&self) -> usize {
        2
    }

    fn reward(&self, state: &BetaState) -> f64 {
        f64::from(state.i) / f64::from(state.i + state.j)
    }

    fn successors(&self, state: &BetaState) -> Vec<(BetaState, f64)> {
        let p = self.reward(state);
        vec![
            (BetaState::new(state.i + 1, state.j), p),
            (BetaState::new(state.i, state.j + 1), 1.0 - p),
        ]
    }
}

impl CountableModel for SparseBanditModel {
    type State = usize;

    fn beta(&self) -> f64 {
        self.beta
    }

    fn fanout(&self) -> usize {
        self.fanout
    }

    fn reward(&self, state: &usize) -> f64 {
        self.rewards[*state]
    }

    fn successors(&self, state: &usize) -> Vec<(usize, f64)> {
        self.rows[*state].clone()
    }
}

/// Nested reachable sets `X_0(i₀) ⊆ X_1(i₀) ⊆ … ⊆ X_T(i₀)`.
///
/// States are stored in breadth-first discovery order (each frontier expanded
/// in sorted key order), so `X_s` is a prefix of `X_{s+1}` and every level
/// shares one index layout.
#[derive(Debug, Clone)]
pub struct ReachableSets<K: Clone + Ord> {
    states: Vec<K>,
    level_sizes: Vec<usize>,
    index: BTreeMap<K, usize>,
}

impl<K: Clone + Ord + fmt::Debug> ReachableSets<K> {
    /// Number of steps covered (sets `X_0 .. X_depth`).
    pub fn depth(&self) -> usize {
        self.level_sizes.len() - 1
    }

    /// `|X_s(i₀)|`.
    pub fn size(&self, s: usize) -> usize {
        self.level_sizes[s]
    }

    /// States of `X_s` in discovery order (a prefix of the global layout).
    pub fn set(&self, s: usize) -> &[K] {
        &self.states[..self.level_sizes[s]]
    }

    /// All discovered states in layout order.
    pub fn states(&self) -> &[K] {
        &self.states
    }

    /// Layout position of `state`, if reachable within `depth` steps.
    pub fn position(&self, state: &K) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// Breadth-first closure of positive-probability successors from `i0`,
/// truncated at depth `horizon`.
pub fn reachable_sets<M: CountableModel>(
    model: &M,
    i0: &M::State,
    horizon: usize,
) -> ReachableSets<M::State> {
    let mut states = vec![i0.clone()];
    let mut index = BTreeMap::new();
    index.insert(i0.clone(), 0usize);
    let mut level_sizes = vec![1usize];
    let mut frontier_start = 0usize;
    for _ in 0..horizon {
        let frontier_end = states.len();
        let mut discovered: Vec<M::State> = Vec::new();
        for pos in frontier_start..frontier_end {
            let s = states[pos].clone();
            for (next, p) in model.successors(&s) {
                if p > 0.0 && !index.contains_key(&next) && !discovered.contains(&next) {
                    discovered.push(next);
                }
            }
        }
        discovered.sort();
        for s in discovered {
            index.insert(s.clone(), states.len());
            states.push(s);
        }
        frontier_start = frontier_end;
        level_sizes.push(states.len());
    }
    ReachableSets { states, level_sizes, index }
}

/// Raw on-disk model description (JSON, one object).
#[derive(Debug, Deserialize)]
struct RawModelFile {
    n: Option<usize>,
    beta: f64,
    rewards: Option<Vec<f64>>,
    dense: Option<Vec<Vec<f64>>>,
    sparse: Option<Vec<SparseEntry>>,
    family: Option<String>,
    i0: Option<u32>,
    j0: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct SparseEntry {
    row: usize,
    col: usize,
    p: f64,
}

/// A parsed model file.
#[derive(Debug, Clone)]
pub enum ParsedModel {
    Dense(BanditModel),
    Sparse(SparseBanditModel),
    BetaBernoulli { spec: BetaBernoulli, i0: BetaState },
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown model family {0:?}")]
    UnknownFamily(String),
    #[error("model file must specify exactly one of `dense`, `sparse`, or `family`")]
    AmbiguousKind,
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Parses the JSON model format: `n`, `beta`, `rewards` plus either `dense`
/// (row-major matrix) or `sparse` (`{row, col, p}` triplets), or
/// `family: "beta_bernoulli"` plus `i0`, `j0`. Unknown families are rejected.
pub fn parse_model_file(json: &str) -> Result<ParsedModel, ModelFileError> {
    let raw: RawModelFile = serde_json::from_str(json)?;
    if let Some(family) = raw.family {
        if family != "beta_bernoulli" {
            return Err(ModelFileError::UnknownFamily(family));
        }
        if !(raw.beta > 0.0 && raw.beta <= 1.0) {
            return Err(ValidationError(vec![Violation::BadDiscount { beta: raw.beta }]).into());
        }
        let i0 = raw.i0.ok_or(ModelFileError::MissingField("i0"))?;
        let j0 = raw.j0.ok_or(ModelFileError::MissingField("j0"))?;
        return Ok(ParsedModel::BetaBernoulli {
            spec: BetaBernoulli::new(raw.beta),
            i0: BetaState::new(i0.max(1), j0.max(1)),
        });
    }
    let n = raw.n.ok_or(ModelFileError::MissingField("n"))?;
    let rewards = raw.rewards.ok_or(ModelFileError::MissingField("rewards"))?;
    if rewards.len() != n {
        return Err(ModelFileError::Dimension(format!(
            "rewards has {} entries, n = {n}",
            rewards.len()
        )));
    }
    match (raw.dense, raw.sparse) {
        (Some(dense), None) => {
            if dense.len() != n || dense.iter().any(|r| r.len() != n) {
                return Err(ModelFileError::Dimension(format!("dense matrix is not {n}x{n}")));
            }
            let mut p = Array2::zeros((n, n));
            for (i, row) in dense.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    p[(i, j)] = v;
                }
            }
            Ok(ParsedModel::Dense(BanditModel::new(p, rewards, raw.beta)?))
        }
        (None, Some(entries)) => {
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
            for e in &entries {
                if e.row >= n || e.col >= n {
                    return Err(ModelFileError::Dimension(format!(
                        "sparse entry ({}, {}) outside {n}-state space",
                        e.row, e.col
                    )));
                }
                rows[e.row].push((e.col, e.p));
            }
            for row in &mut rows {
                row.sort_by_key(|&(j, _)| j);
            }
            let fanout = rows.iter().map(Vec::len).max().unwrap_or(0);
            Ok(ParsedModel::Sparse(SparseBanditModel::new(rows, rewards, raw.beta, fanout)?))
        }
        _ => Err(ModelFileError::AmbiguousKind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Two states swapping deterministically, rewards (1, 0), β = 1.
    pub(crate) fn swap_instance() -> BanditModel {
        BanditModel::new(array![[0.0, 1.0], [1.0, 0.0]], vec![1.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn identity_chain_is_valid() {
        let m = BanditModel::new(array![[1.0]], vec![5.0], 1.0).unwrap();
        assert_eq!(m.n(), 1);
    }

    #[test]
    fn non_stochastic_row_rejected() {
        let err = BanditModel::new(array![[0.5, 0.6], [0.5, 0.5]], vec![0.0, 0.0], 0.9)
            .unwrap_err();
        assert!(matches!(err.0[0], Violation::NonStochasticRow { row: 0, .. }));
    }

    #[test]
    fn zero_discount_rejected() {
        let err = BanditModel::new(array![[1.0]], vec![1.0], 0.0).unwrap_err();
        assert!(matches!(err.0[0], Violation::BadDiscount { .. }));
    }

    #[test]
    fn all_violations_reported() {
        let err =
            BanditModel::new(array![[-0.1, 1.0], [1.0, 0.0]], vec![f64::NAN, 0.0], 1.5)
                .unwrap_err();
        assert!(err.0.iter().any(|v| matches!(v, Violation::BadDiscount { .. })));
        assert!(err.0.iter().any(|v| matches!(v, Violation::NonFiniteReward { .. })));
        assert!(err.0.iter().any(|v| matches!(v, Violation::NegativeProbability { .. })));
    }

    #[test]
    fn random_instance_is_deterministic() {
        let a = random_dense_instance(100, 7);
        let b = random_dense_instance(100, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn random_instance_rows_sum_to_one() {
        let m = random_dense_instance(37, 3);
        for i in 0..m.n() {
            let s: f64 = m.row(i).sum();
            assert!((s - 1.0).abs() <= ROW_SUM_TOL, "row {i} sums to {s}");
        }
        assert!(m.rewards().iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn birth_death_has_fanout_three() {
        let m = random_birth_death_instance(50, 1, 0.9);
        assert!(m.fanout() <= 3);
        for i in 0..m.n() {
            let s: f64 = m.row(i).iter().map(|&(_, p)| p).sum();
            assert!((s - 1.0).abs() <= ROW_SUM_TOL);
        }
    }

    #[test]
    fn beta_bernoulli_law() {
        let spec = BetaBernoulli::new(1.0);
        let s = BetaState::new(1, 1);
        assert_eq!(spec.reward(&s), 0.5);
        assert_eq!(spec.fanout(), 2);
        let succ = spec.successors(&s);
        assert_eq!(succ, vec![(BetaState::new(2, 1), 0.5), (BetaState::new(1, 2), 0.5)]);
    }

    #[test]
    fn beta_reachable_counts() {
        let spec = BetaBernoulli::new(1.0);
        let reach = reachable_sets(&spec, &BetaState::new(1, 1), 50);
        for s in 0..=50 {
            assert_eq!(reach.size(s), (s + 1) * (s + 2) / 2, "at depth {s}");
        }
        assert_eq!(
            reach.set(1),
            &[BetaState::new(1, 1), BetaState::new(1, 2), BetaState::new(2, 1)]
        );
    }

    #[test]
    fn reachable_depth_zero_is_initial_state() {
        let spec = BetaBernoulli::new(0.9);
        let reach = reachable_sets(&spec, &BetaState::new(3, 2), 0);
        assert_eq!(reach.set(0), &[BetaState::new(3, 2)]);
    }

    #[test]
    fn reachable_sets_nested_for_sparse_chain() {
        let m = random_birth_death_instance(20, 5, 1.0);
        let reach = reachable_sets(&m, &10usize, 6);
        for s in 0..6 {
            assert!(reach.size(s) <= reach.size(s + 1));
            // prefix property
            assert_eq!(reach.set(s), &reach.set(s + 1)[..reach.size(s)]);
        }
    }

    #[test]
    fn parse_dense_model_file() {
        let json = r#"{"n":2,"beta":1.0,"rewards":[1.0,0.0],
                       "dense":[[0.0,1.0],[1.0,0.0]]}"#;
        match parse_model_file(json).unwrap() {
            ParsedModel::Dense(m) => assert_eq!(m, swap_instance()),
            other => panic!("expected dense model, got {other:?}"),
        }
    }

    #[test]
    fn parse_sparse_model_file() {
        let json = r#"{"n":2,"beta":0.9,"rewards":[1.0,0.0],
                       "sparse":[{"row":0,"col":1,"p":1.0},{"row":1,"col":0,"p":1.0}]}"#;
        match parse_model_file(json).unwrap() {
            ParsedModel::Sparse(m) => assert_eq!(m.fanout(), 1),
            other => panic!("expected sparse model, got {other:?}"),
        }
    }

    #[test]
    fn unknown_family_rejected() {
        let json = r#"{"beta":1.0,"family":"poisson_gamma","i0":1,"j0":1}"#;
        assert!(matches!(
            parse_model_file(json),
            Err(ModelFileError::UnknownFamily(_))
        ));
    }
}
