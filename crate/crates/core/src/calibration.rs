//! The calibration method: approximate index values read off a λ-grid from the
//! one-armed DP, plus the exact one-armed DP solver reused by the oracle and
//! policy modules.

use ndarray::Array2;
use thiserror::Error;

use crate::model::BanditModel;

/// Relative tolerance used by default for the grid stopping test.
pub const DEFAULT_CAL_EPS: f64 = 1e-9;

/// Discounted horizon weights `h_d`: the value of `d` periods of the standard
/// arm per unit reward. `h_d = (1-β^d)/(1-β)` for `β < 1`, `h_d = d` for `β = 1`.
#[derive(Debug, Clone)]
pub struct HorizonWeights {
    h: Vec<f64>,
}

impl HorizonWeights {
    /// `h_d` for `1 ≤ d ≤ T`.
    pub fn get(&self, d: usize) -> f64 {
        self.h[d - 1]
    }

    pub fn horizon(&self) -> usize {
        self.h.len()
    }
}

/// Builds `h_1, …, h_T` via the recurrence `h_d = 1 + β·h_{d-1}`, with the
/// exact branch `h_d = d` when `β = 1`.
pub fn h_sequence(beta: f64, horizon: usize) -> HorizonWeights {
    assert!(beta > 0.0 && beta <= 1.0, "discount factor outside (0, 1]");
    assert!(horizon >= 1);
    let mut h = Vec::with_capacity(horizon);
    if beta == 1.0 {
        for d in 1..=horizon {
            h.push(d as f64);
        }
    } else {
        let mut acc = 1.0;
        h.push(acc);
        for _ in 2..=horizon {
            acc = 1.0 + beta * acc;
            h.push(acc);
        }
    }
    HorizonWeights { h }
}

/// Optimal action in the one-armed problem at a given `(d, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmAction {
    Active,
    Passive,
    /// Both branch values agree within `1e-12·max(1, |λ h_d|)`.
    Indifferent,
}

/// Values and optimal actions of the one-armed (two-armed, one arm known)
/// problem: the unknown project against a standard arm of reward `λ`.
#[derive(Debug, Clone)]
pub struct OneArmedSolution {
    n: usize,
    horizon: usize,
    lambda: f64,
    values: Vec<f64>,
    actions: Vec<ArmAction>,
}

impl OneArmedSolution {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `v_d(i; λ)` for `1 ≤ d ≤ T`.
    pub fn value(&self, d: usize, i: usize) -> f64 {
        self.values[(d - 1) * self.n + i]
    }

    pub fn action(&self, d: usize, i: usize) -> ArmAction {
        self.actions[(d - 1) * self.n + i]
    }
}

fn classify(active: f64, passive: f64, scale: f64) -> ArmAction {
    let tol = 1e-12 * scale.abs().max(1.0);
    if (active - passive).abs() <= tol {
        ArmAction::Indifferent
    } else if active > passive {
        ArmAction::Active
    } else {
        ArmAction::Passive
    }
}

/// Backward induction for the one-armed problem:
/// `v_1(i; λ) = max{λ, R(i)}` and, for `d ≥ 2`,
/// `v_d(i; λ) = max{λ h_d, R(i) + β Σ_j p(i, j) v_{d-1}(j; λ)}`.
pub fn solve_one_armed(model: &BanditModel, lambda: f64, horizon: usize) -> OneArmedSolution {
    let n = model.n();
    let beta = model.beta();
    let h = h_sequence(beta, horizon);
    let mut values = Vec::with_capacity(horizon * n);
    let mut actions = Vec::with_capacity(horizon * n);
    for i in 0..n {
        let active = model.reward(i);
        values.push(active.max(lambda));
        actions.push(classify(active, lambda, lambda));
    }
    for d in 2..=horizon {
        let passive = lambda * h.get(d);
        let prev = &values[(d - 2) * n..(d - 1) * n];
        let mut cont = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &p) in model.row(i).iter().enumerate() {
                acc += p * prev[j];
            }
            cont[i] = model.reward(i) + beta * acc;
        }
        for i in 0..n {
            values.push(cont[i].max(passive));
            actions.push(classify(cont[i], passive, passive));
        }
    }
    OneArmedSolution { n, horizon, lambda, values, actions }
}

/// A sorted grid of candidate λ values.
#[derive(Debug, Clone)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "grid needs at least two points");
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { values }
    }

    /// Uniform grid of `points` values spanning `[lo, hi]`, endpoints included.
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Self {
        assert!(points >= 2 && hi >= lo);
        let step = (hi - lo) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|l| lo + step * l as f64).collect();
        values[points - 1] = hi;
        Self { values }
    }

    /// Grid of `10^digits + 1` equally-spaced values over `[min R, max R]`.
    pub fn from_model_digits(model: &BanditModel, digits: u32) -> Self {
        assert!(digits >= 1, "need at least one significant digit");
        let points = 10usize.pow(digits) + 1;
        Self::uniform(model.min_reward(), model.max_reward(), points)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Largest gap between consecutive grid points.
    pub fn spacing(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Approximate index table produced by the calibration method.
#[derive(Debug, Clone)]
pub struct CalibratedTable {
    n: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl CalibratedTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `λ̂(d, i)` for `1 ≤ d ≤ T`.
    pub fn value(&self, d: usize, i: usize) -> f64 {
        self.values[(d - 1) * self.n + i]
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no grid point satisfies the stopping equality at (d={d}, i={i}); grid does not cover [min R, max R]")]
    GridDoesNotCover { d: usize, i: usize },
}

/// Stopping predicate of the grid search: `v ≤ λ h_d` up to relative `eps`.
fn stops(v: f64, lambda_h: f64, eps: f64) -> bool {
    v <= lambda_h + eps * lambda_h.abs().max(1.0)
}

/// Smallest grid index whose λ satisfies the stopping predicate, found by
/// binary search; valid because `v_d(i; λ) - λ h_d` is nonincreasing in λ.
fn first_stopping_index(
    grid: &[f64],
    value_at: impl Fn(usize) -> f64,
    h_d: f64,
    eps: f64,
) -> Option<usize> {
    let (mut lo, mut hi) = (0usize, grid.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if stops(value_at(mid), grid[mid] * h_d, eps) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo < grid.len()).then_some(lo)
}

/// BlockCAL: solves the one-armed DP for all grid λ at once, carrying the
/// `n × L` value block through one dense matrix product per stage, and reads
/// `λ̂(d, i)` as the smallest grid point where the standard arm is optimal.
pub fn calibrate_index(
    model: &BanditModel,
    grid: &LambdaGrid,
    horizon: usize,
    eps: f64,
) -> Result<CalibratedTable, CalibrationError> {
    let n = model.n();
    if model.min_reward() == model.max_reward() {
        // Every stopping rule earns the same rate; no grid needed.
        let r = model.min_reward();
        return Ok(CalibratedTable {
            n,
            horizon,
            values: vec![r; horizon * n],
        });
    }
    let beta = model.beta();
    let h = h_sequence(beta, horizon);
    let lambdas = grid.values();
    let big_l = lambdas.len();
    let mut values = vec![0.0; horizon * n];

    // d = 1: the index is the immediate reward.
    let mut block = Array2::zeros((n, big_l));
    for i in 0..n {
        values[i] = model.reward(i);
        for (l, &lam) in lambdas.iter().enumerate() {
            block[(i, l)] = model.reward(i).max(lam);
        }
    }
    let b = model.transition_matrix().mapv(|p| beta * p);
    for d in 2..=horizon {
        block = b.dot(&block);
        let h_d = h.get(d);
        for i in 0..n {
            let r_i = model.reward(i);
            for (l, &lam) in lambdas.iter().enumerate() {
                block[(i, l)] = (r_i + block[(i, l)]).max(lam * h_d);
            }
        }
        for i in 0..n {
            let l = first_stopping_index(lambdas, |l| block[(i, l)], h_d, eps)
                .ok_or(CalibrationError::GridDoesNotCover { d, i })?;
            values[(d - 1) * n + i] = lambdas[l];
        }
    }
    Ok(CalibratedTable { n, horizon, values })
}

/// Scalar reference path: solves the DP one λ at a time, counting arithmetic
/// operations exactly as the per-λ accounting `2(T-1)[n(n+1)+1] + n`.
/// Returns the same table as [`calibrate_index`] plus the operation count.
pub fn calibrate_index_scalar(
    model: &BanditModel,
    grid: &LambdaGrid,
    horizon: usize,
    eps: f64,
) -> Result<(CalibratedTable, u64), CalibrationError> {
    let n = model.n();
    if model.min_reward() == model.max_reward() {
        let r = model.min_reward();
        return Ok((
            CalibratedTable { n, horizon, values: vec![r; horizon * n] },
            0,
        ));
    }
    let beta = model.beta();
    let h = h_sequence(beta, horizon);
    let lambdas = grid.values();
    let mut ops: u64 = 0;
    let mut values = vec![f64::NAN; horizon * n];
    for i in 0..n {
        values[i] = model.reward(i);
    }
    // first_hit[d-2][i]: smallest grid index already known to stop at (d, i);
    // the per-λ pass fills them in increasing λ order.
    let mut first_hit: Vec<Vec<Option<usize>>> = vec![vec![None; n]; horizon.saturating_sub(1)];
    for (l, &lam) in lambdas.iter().enumerate() {
        // v_1: one subtraction per state to resolve max{λ, R(i)}.
        let mut v: Vec<f64> = (0..n).map(|i| model.reward(i).max(lam)).collect();
        ops += n as u64;
        let mut lambda_h = lam;
        for d in 2..=horizon {
            // h̃_d = λ + β h̃_{d-1}: 2 AOs.
            lambda_h = lam + beta * lambda_h;
            ops += 2;
            let mut next = vec![0.0; n];
            for i in 0..n {
                // Dot product: 2n - 1 AOs; scale, add R(i), compare: 3 AOs.
                let mut acc = 0.0;
                for (j, &p) in model.row(i).iter().enumerate() {
                    acc += p * v[j];
                }
                let cont = model.reward(i) + beta * acc;
                next[i] = cont.max(lambda_h);
                ops += (2 * n - 1) as u64 + 3;
                if first_hit[d - 2][i].is_none() && stops(next[i], lambda_h, eps) {
                    first_hit[d - 2][i] = Some(l);
                    values[(d - 1) * n + i] = lam;
                }
            }
            v = next;
        }
        debug_assert!((lambda_h - lam * h.get(horizon)).abs() <= 1e-9 * lambda_h.abs().max(1.0));
    }
    for d in 2..=horizon {
        for i in 0..n {
            if first_hit[d - 2][i].is_none() {
                return Err(CalibrationError::GridDoesNotCover { d, i });
            }
        }
    }
    Ok((CalibratedTable { n, horizon, values }, ops))
}

/// Closed-form operation count of the calibration method:
/// `2(T-1)L[n(n+1)+1] + Ln`.
pub fn predicted_calibration_ops(n: u64, horizon: u64, grid_size: u64) -> u64 {
    2 * (horizon - 1) * grid_size * (n * (n + 1) + 1) + grid_size * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::swap_instance;
    use approx::assert_abs_diff_eq;

    #[test]
    fn h_sequence_values() {
        let h = h_sequence(1.0, 4);
        assert_eq!(h.get(4), 4.0);
        let h = h_sequence(0.5, 3);
        assert_eq!(h.get(3), 1.75);
        assert_eq!(h.get(1), 1.0);
        let h = h_sequence(0.37, 8);
        assert_eq!(h.get(1), 1.0);
        for d in 2..=8 {
            assert!(h.get(d) > h.get(d - 1));
        }
    }

    #[test]
    fn standard_arm_dominates_single_state() {
        let m = crate::model::BanditModel::new(ndarray::array![[1.0]], vec![5.0], 1.0).unwrap();
        let sol = solve_one_armed(&m, 10.0, 3);
        assert_eq!(sol.value(1, 0), 10.0);
        assert_eq!(sol.value(2, 0), 20.0);
        assert_eq!(sol.value(3, 0), 30.0);
        for d in 1..=3 {
            assert_eq!(sol.action(d, 0), ArmAction::Passive);
        }
    }

    #[test]
    fn swap_instance_boundary_indifference() {
        // λ = λ*(2, 2) = 0.5: both actions optimal at (d=2, state 2).
        let sol = solve_one_armed(&swap_instance(), 0.5, 2);
        assert_abs_diff_eq!(sol.value(2, 1), 1.0, epsilon = 1e-15);
        assert_eq!(sol.action(2, 1), ArmAction::Indifferent);
    }

    #[test]
    fn one_period_value_is_max() {
        let m = crate::model::random_dense_instance(6, 11);
        let sol = solve_one_armed(&m, 0.3, 4);
        for i in 0..6 {
            assert_eq!(sol.value(1, i), m.reward(i).max(0.3));
        }
    }

    #[test]
    fn standard_arm_always_available() {
        let m = crate::model::random_dense_instance_with_beta(5, 2, 0.9);
        let h = h_sequence(0.9, 5);
        for &lam in &[0.1, 0.5, 0.9] {
            let sol = solve_one_armed(&m, lam, 5);
            for d in 1..=5 {
                for i in 0..5 {
                    assert!(sol.value(d, i) >= lam * h.get(d) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_from_model_spans_rewards() {
        let m = crate::model::random_dense_instance(8, 4);
        let g = LambdaGrid::from_model_digits(&m, 2);
        assert_eq!(g.len(), 101);
        assert_eq!(g.min(), m.min_reward());
        assert_eq!(g.max(), m.max_reward());
    }

    #[test]
    fn calibrate_first_row_is_reward() {
        let m = crate::model::random_dense_instance(7, 9);
        let g = LambdaGrid::from_model_digits(&m, 2);
        let t = calibrate_index(&m, &g, 4, DEFAULT_CAL_EPS).unwrap();
        for i in 0..7 {
            assert_eq!(t.value(1, i), m.reward(i));
        }
    }

    #[test]
    fn calibrate_swap_on_exact_grid() {
        let g = LambdaGrid::from_values(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let t = calibrate_index(&swap_instance(), &g, 2, DEFAULT_CAL_EPS).unwrap();
        assert_eq!(t.value(2, 1), 0.5);
        assert_eq!(t.value(2, 0), 1.0);
    }

    #[test]
    fn scalar_path_matches_block_path_and_formula() {
        let m = crate::model::random_dense_instance_with_beta(10, 3, 0.9);
        let g = LambdaGrid::from_model_digits(&m, 2);
        let (scalar, ops) = calibrate_index_scalar(&m, &g, 5, DEFAULT_CAL_EPS).unwrap();
        let block = calibrate_index(&m, &g, 5, DEFAULT_CAL_EPS).unwrap();
        for d in 1..=5 {
            for i in 0..10 {
                assert_eq!(scalar.value(d, i), block.value(d, i), "at ({d}, {i})");
            }
        }
        assert_eq!(ops, predicted_calibration_ops(10, 5, 101));
    }

    #[test]
    fn predicted_ops_closed_form() {
        assert_eq!(predicted_calibration_ops(10, 5, 1), 898);
        assert_eq!(predicted_calibration_ops(5, 1, 7), 35); // T = 1: Ln only
        assert_eq!(
            predicted_calibration_ops(100, 50, 1000),
            2 * 49 * 1000 * 10101 + 100_000
        );
    }

    #[test]
    fn degenerate_constant_rewards() {
        let m =
            crate::model::BanditModel::new(ndarray::array![[0.5, 0.5], [0.5, 0.5]], vec![2.0, 2.0], 0.9)
                .unwrap();
        let g = LambdaGrid::uniform(2.0, 2.0 + 1e-9, 3);
        let t = calibrate_index(&m, &g, 3, DEFAULT_CAL_EPS).unwrap();
        for d in 1..=3 {
            for i in 0..2 {
                assert_eq!(t.value(d, i), 2.0);
            }
        }
    }

    #[test]
    fn lambda_hat_monotone_in_d_with_slack() {
        let m = crate::model::random_dense_instance_with_beta(5, 21, 0.9);
        let g = LambdaGrid::from_model_digits(&m, 3);
        let t = calibrate_index(&m, &g, 6, DEFAULT_CAL_EPS).unwrap();
        let delta = g.spacing();
        for i in 0..5 {
            for d in 1..6 {
                assert!(t.value(d + 1, i) >= t.value(d, i) - delta - 1e-12);
            }
        }
    }

    #[test]
    fn retirement_property_of_action_table() {
        // If passive is optimal at (d, i), it stays optimal at (d-1, i).
        for seed in 0..5 {
            let m = crate::model::random_dense_instance_with_beta(4, seed, 0.9);
            let sol = solve_one_armed(&m, 0.5, 5);
            for d in 2..=5 {
                for i in 0..4 {
                    if sol.action(d, i) == ArmAction::Passive {
                        assert_ne!(sol.action(d - 1, i), ArmAction::Active, "({d}, {i})");
                    }
                }
            }
        }
    }
}
