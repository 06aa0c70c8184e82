//! Scaling experiments: operation-counted runs over instance families,
//! closed-form memory accounting, and polynomial least-squares fits used to
//! confirm the empirical growth orders.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::{calibrate_index_scalar, LambdaGrid, DEFAULT_CAL_EPS};
use crate::countable::{rag_from_initial, relevant_count};
use crate::model::{random_birth_death_instance, random_dense_instance_with_beta, BetaState};
use crate::model::BetaBernoulli;
use crate::rag::{block_rag_full, block_rag_full_with_stats, rag_full_sparse_with_stats, rag_full_with_stats};

/// Algorithms covered by the scaling harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchAlgo {
    /// Staged recursion on dense random instances; axis is `n`.
    Rag,
    /// Block implementation on the same instances; axis is `n`.
    BlockRag,
    /// Sparse fast path on birth-death chains (fanout 3); axis is `n`.
    RagSparse,
    /// Grid calibration on dense random instances; axis is `n`.
    Calibration,
    /// Initial-state-restricted run on the Bayesian Bernoulli family; the
    /// size axis is the horizon `T`.
    RagInitial,
}

impl BenchAlgo {
    pub fn name(self) -> &'static str {
        match self {
            BenchAlgo::Rag => "rag",
            BenchAlgo::BlockRag => "block_rag",
            BenchAlgo::RagSparse => "rag_sparse",
            BenchAlgo::Calibration => "calibration",
            BenchAlgo::RagInitial => "rag_i0",
        }
    }
}

/// One measured run.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingRecord {
    pub algo: String,
    pub n: usize,
    pub horizon: usize,
    /// Grid size `L` for calibration runs, absent otherwise.
    pub grid: Option<usize>,
    pub seed: u64,
    /// Counted multiply/add operations.
    pub ops: u64,
    /// Closed-form working-memory slot count.
    pub slots: u64,
    pub wall_ms: f64,
}

/// Sweep parameters. `sizes` is the state count `n`, except for
/// [`BenchAlgo::RagInitial`] where it is the horizon `T`.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub algos: Vec<BenchAlgo>,
    pub sizes: Vec<usize>,
    pub horizon: usize,
    pub beta: f64,
    pub seed: u64,
    /// Decimal digits of calibration accuracy; grid size is `10^digits + 1`.
    pub digits: u32,
}

/// Closed-form working-memory slot counts (8-byte floats) of each algorithm.
/// The calibration block needs `2Ln + L`; the staged recursion `(4T+1)n² + 5n`
/// in the worst case; the restricted Bernoulli run a polynomial in `T` alone.
pub fn memory_slots(algo: BenchAlgo, n: usize, horizon: usize, grid: usize) -> u64 {
    let n = n as u64;
    let t = horizon as u64;
    let l = grid as u64;
    match algo {
        BenchAlgo::Calibration => 2 * l * n + l,
        BenchAlgo::Rag | BenchAlgo::BlockRag | BenchAlgo::RagSparse => {
            (4 * t + 1) * n * n + 5 * n
        }
        BenchAlgo::RagInitial => {
            (2 * t.pow(5) + 12 * t.pow(4) + 26 * t.pow(3) + 45 * t.pow(2) + 65 * t + 36) / 6
        }
    }
}

/// Thread count for sweep cells: the `BANDIT_BENCH_THREADS` environment
/// variable, else the machine's available parallelism.
fn sweep_threads() -> usize {
    std::env::var("BANDIT_BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
        })
}

/// Runs every configured algorithm at every size, recording counted ops,
/// closed-form memory slots, and wall time. Cells run concurrently (each cell
/// is internally deterministic, so only `wall_ms` varies between runs).
pub fn run_scaling_sweep(config: &SweepConfig) -> Vec<ScalingRecord> {
    let cells: Vec<(BenchAlgo, usize)> = config
        .algos
        .iter()
        .flat_map(|&algo| config.sizes.iter().map(move |&size| (algo, size)))
        .collect();
    let threads = sweep_threads().min(cells.len().max(1));
    if threads <= 1 {
        return cells.iter().map(|&(algo, size)| run_one(algo, size, config)).collect();
    }
    let mut slots: Vec<Option<ScalingRecord>> = vec![None; cells.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|worker| {
                let cells = &cells;
                scope.spawn(move || {
                    cells
                        .iter()
                        .enumerate()
                        .skip(worker)
                        .step_by(threads)
                        .map(|(idx, &(algo, size))| (idx, run_one(algo, size, config)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (idx, record) in h.join().expect("sweep worker panicked") {
                slots[idx] = Some(record);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("all cells computed")).collect()
}

fn run_one(algo: BenchAlgo, size: usize, config: &SweepConfig) -> ScalingRecord {
    let horizon = config.horizon;
    let start = Instant::now();
    let (n, hz, grid, ops) = match algo {
        BenchAlgo::Rag => {
            let m = random_dense_instance_with_beta(size, config.seed, config.beta);
            let (_, stats) = rag_full_with_stats(&m, horizon);
            (size, horizon, None, stats.total_ops())
        }
        BenchAlgo::BlockRag => {
            let m = random_dense_instance_with_beta(size, config.seed, config.beta);
            let (_, stats) = block_rag_full_with_stats(&m, horizon);
            (size, horizon, None, stats.total_ops())
        }
        BenchAlgo::RagSparse => {
            let m = random_birth_death_instance(size, config.seed, config.beta);
            let (_, stats) = rag_full_sparse_with_stats(&m, horizon);
            (size, horizon, None, stats.total_ops())
        }
        BenchAlgo::Calibration => {
            let m = random_dense_instance_with_beta(size, config.seed, config.beta);
            let grid = LambdaGrid::from_model_digits(&m, config.digits);
            let points = grid.len();
            let (_, ops) = calibrate_index_scalar(&m, &grid, horizon, DEFAULT_CAL_EPS)
                .expect("grid from model bounds covers every index value");
            (size, horizon, Some(points), ops)
        }
        BenchAlgo::RagInitial => {
            let spec = BetaBernoulli::new(config.beta);
            let i0 = BetaState::new(1, 1);
            let table = rag_from_initial(&spec, &i0, size);
            let pairs = table.relevant_count();
            debug_assert_eq!(pairs, relevant_count(&spec, &i0, size));
            (pairs, size, None, pairs as u64)
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    ScalingRecord {
        algo: algo.name().to_string(),
        n,
        horizon: hz,
        grid,
        seed: config.seed,
        ops,
        slots: memory_slots(algo, n, hz, grid.unwrap_or(0)),
        wall_ms,
    }
}

/// A least-squares polynomial fit `y ≈ Σ coeffs[k] x^k`.
#[derive(Debug, Clone, Serialize)]
pub struct PolyFit {
    pub order: usize,
    pub coeffs: Vec<f64>,
    pub rmse: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} distinct sample points for an order-{order} fit, got {got}")]
    TooFewPoints { order: usize, need: usize, got: usize },
    #[error("normal equations are rank deficient at column {column}")]
    RankDeficient { column: usize },
}

/// Least-squares fit of a degree-`order` polynomial. The basis is centered and
/// scaled internally for conditioning; returned coefficients are in the
/// original variable.
pub fn ls_polyfit(xs: &[f64], ys: &[f64], order: usize) -> Result<PolyFit, FitError> {
    assert_eq!(xs.len(), ys.len());
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < order + 1 {
        return Err(FitError::TooFewPoints {
            order,
            need: order + 1,
            got: distinct.len(),
        });
    }
    let m = xs.len();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let spread = xs
        .iter()
        .map(|x| (x - mean).abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let ts: Vec<f64> = xs.iter().map(|x| (x - mean) / spread).collect();

    // Normal equations over the scaled monomial basis.
    let dim = order + 1;
    let mut g = vec![vec![0.0; dim]; dim];
    let mut rhs = vec![0.0; dim];
    for (t, &y) in ts.iter().zip(ys) {
        let mut powers = vec![1.0; dim];
        for k in 1..dim {
            powers[k] = powers[k - 1] * t;
        }
        for p in 0..dim {
            rhs[p] += powers[p] * y;
            for q in 0..dim {
                g[p][q] += powers[p] * powers[q];
            }
        }
    }
    let scale = g
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |a, &b| a.max(b.abs()));
    // Gaussian elimination with partial pivoting.
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&a, &b| g[a][col].abs().partial_cmp(&g[b][col].abs()).unwrap())
            .unwrap();
        if g[pivot_row][col].abs() <= 1e-12 * scale {
            return Err(FitError::RankDeficient { column: col });
        }
        g.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..dim {
            let f = g[row][col] / g[col][col];
            for k in col..dim {
                g[row][k] -= f * g[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut c = vec![0.0; dim];
    for row in (0..dim).rev() {
        let mut acc = rhs[row];
        for k in row + 1..dim {
            acc -= g[row][k] * c[k];
        }
        c[row] = acc / g[row][row];
    }

    // Map the scaled-basis coefficients back to powers of x:
    // Σ c_k ((x - mean)/spread)^k expanded by polynomial multiplication.
    let mut coeffs = vec![0.0; dim];
    let base = [-mean / spread, 1.0 / spread];
    let mut power = vec![1.0]; // ((x - mean)/spread)^k as a poly in x
    for k in 0..dim {
        for (deg, &v) in power.iter().enumerate() {
            coeffs[deg] += c[k] * v;
        }
        if k + 1 < dim {
            let mut next = vec![0.0; power.len() + 1];
            for (deg, &v) in power.iter().enumerate() {
                next[deg] += v * base[0];
                next[deg + 1] += v * base[1];
            }
            power = next;
        }
    }
    let rmse = {
        let sse: f64 = ts
            .iter()
            .zip(ys)
            .map(|(&t, &y)| {
                let mut acc = 0.0;
                for k in (0..dim).rev() {
                    acc = acc * t + c[k];
                }
                let e: f64 = acc - y;
                e * e
            })
            .sum();
        (sse / m as f64).sqrt()
    };
    Ok(PolyFit { order, coeffs, rmse })
}

/// Fits every candidate order and returns the fits together with the order of
/// the lowest root-mean-square error.
pub fn best_fit_order(
    xs: &[f64],
    ys: &[f64],
    orders: &[usize],
) -> Result<(usize, Vec<PolyFit>), FitError> {
    assert!(!orders.is_empty());
    let fits: Vec<PolyFit> = orders
        .iter()
        .map(|&o| ls_polyfit(xs, ys, o))
        .collect::<Result<_, _>>()?;
    let best = fits
        .iter()
        .min_by(|a, b| a.rmse.partial_cmp(&b.rmse).unwrap())
        .unwrap()
        .order;
    Ok((best, fits))
}

/// A block run must not be slower than the staged run; exposed for desk-scale
/// comparisons.
pub fn time_block_vs_staged(n: usize, horizon: usize, beta: f64, seed: u64) -> (f64, f64) {
    let m = random_dense_instance_with_beta(n, seed, beta);
    let start = Instant::now();
    let staged = crate::rag::rag_full(&m, horizon);
    let staged_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let block = block_rag_full(&m, horizon);
    let block_ms = start.elapsed().as_secs_f64() * 1e3;
    assert!(staged.max_abs_diff(&block) <= 1e-9);
    (staged_ms, block_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::predicted_calibration_ops;

    #[test]
    fn memory_closed_forms() {
        assert_eq!(memory_slots(BenchAlgo::Calibration, 100, 10, 1001), 201201);
        assert_eq!(memory_slots(BenchAlgo::Rag, 100, 50, 0), 2010500);
        assert_eq!(memory_slots(BenchAlgo::RagInitial, 0, 10, 0), 58531);
        assert_eq!(memory_slots(BenchAlgo::RagInitial, 0, 1, 0), 31);
    }

    #[test]
    fn exact_cubic_recovered() {
        let xs: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * x * x - x + 3.0).collect();
        let fit = ls_polyfit(&xs, &ys, 3).unwrap();
        assert!(fit.rmse <= 1e-9, "rmse {}", fit.rmse);
        assert!((fit.coeffs[3] - 2.0).abs() <= 1e-9, "{:?}", fit.coeffs);
        assert!((fit.coeffs[2]).abs() <= 1e-8);
        assert!((fit.coeffs[1] + 1.0).abs() <= 1e-8);
        assert!((fit.coeffs[0] - 3.0).abs() <= 1e-8);
    }

    #[test]
    fn underfit_has_positive_rmse() {
        let xs: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let quad = ls_polyfit(&xs, &ys, 2).unwrap();
        let cubic = ls_polyfit(&xs, &ys, 3).unwrap();
        assert!(quad.rmse > 1.0);
        assert!(cubic.rmse < 1e-8);
        let (best, _) = best_fit_order(&xs, &ys, &[2, 3, 4]).unwrap();
        assert_eq!(best, 3);
    }

    #[test]
    fn degenerate_fit_rejected() {
        let xs = [2.0, 2.0, 2.0];
        let ys = [1.0, 1.0, 1.0];
        assert!(matches!(
            ls_polyfit(&xs, &ys, 1),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn sweep_records_expected_shape() {
        let config = SweepConfig {
            algos: vec![BenchAlgo::Rag, BenchAlgo::Calibration, BenchAlgo::RagInitial],
            sizes: vec![5, 8],
            horizon: 4,
            beta: 1.0,
            seed: 11,
            digits: 2,
        };
        let records = run_scaling_sweep(&config);
        assert_eq!(records.len(), 6);
        for rec in &records {
            assert!(rec.ops > 0);
            assert!(rec.slots > 0);
            if rec.algo == "calibration" {
                assert_eq!(rec.grid, Some(101));
                assert_eq!(
                    rec.ops,
                    predicted_calibration_ops(rec.n as u64, rec.horizon as u64, 101)
                );
            }
        }
        let i0_recs: Vec<_> = records.iter().filter(|r| r.algo == "rag_i0").collect();
        assert_eq!(i0_recs[0].n, 5 * 6 * 7 / 6);
        assert_eq!(i0_recs[1].n, 8 * 9 * 10 / 6);
    }

    #[test]
    fn dense_op_counts_grow_cubically_in_n() {
        let config = SweepConfig {
            algos: vec![BenchAlgo::Rag],
            sizes: vec![10, 20, 40],
            horizon: 8,
            beta: 1.0,
            seed: 5,
            digits: 2,
        };
        let records = run_scaling_sweep(&config);
        let r10 = records[0].ops as f64;
        let r40 = records[2].ops as f64;
        // doubling n twice should multiply work by roughly 64 (cubic), and
        // certainly by far more than a quadratic's 16
        assert!(r40 / r10 > 25.0, "ratio {}", r40 / r10);
    }
}
