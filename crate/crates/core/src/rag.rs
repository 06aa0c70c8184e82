//! Exact index computation for finite-state projects: the one-pass
//! adaptive-greedy reference, the staged recursive algorithm (RAG), its
//! sparse fast path, and the block implementation that batches the bottleneck
//! measure refreshes into one dense matrix product per stage.

use ndarray::Array2;
use serde::Serialize;

use crate::model::{BanditModel, SparseBanditModel};

/// One emission of the adaptive-greedy chain: the augmented state `(s, i)`
/// added at this step and the index value assigned to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEntry {
    pub s: usize,
    pub i: usize,
    pub lambda: f64,
}

/// The computed index map `(d, i) → λ*(d, i)` together with the emission order
/// and per-stage step counts.
#[derive(Debug, Clone)]
pub struct IndexTable {
    n: usize,
    horizon: usize,
    values: Vec<f64>,
    order: Vec<OrderEntry>,
    stage_steps: Vec<usize>,
}

impl IndexTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `λ*(d, i)` for `1 ≤ d ≤ T`, `0 ≤ i < n`.
    pub fn value(&self, d: usize, i: usize) -> f64 {
        self.values[(d - 1) * self.n + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The full `T·n`-step emission chain: each augmented state `(s, i)`
    /// appears exactly once and values are nonincreasing.
    pub fn order(&self) -> &[OrderEntry] {
        &self.order
    }

    /// Number of loop steps `L_d` each stage took (`stage_steps[d-1]`; the
    /// first stage always takes `n` steps, later stages fewer than `d·n`).
    /// For the one-pass reference this is `n` per stage.
    pub fn stage_steps(&self) -> &[usize] {
        &self.stage_steps
    }

    /// Largest absolute difference of index values against another table.
    pub fn max_abs_diff(&self, other: &IndexTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Arithmetic-operation and memory accounting for one index computation.
/// Only floating multiply/add in measure updates and block products are
/// counted; comparisons and index bookkeeping are not.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OpStats {
    /// Multiply/adds spent in full measure refreshes (the bottleneck update).
    pub refresh_ops: u64,
    /// Multiply/adds spent in rank-1 column updates.
    pub rank1_ops: u64,
    /// Number of stage-end dense block products.
    pub block_products: u64,
    /// Multiply/adds spent inside block products.
    pub block_product_ops: u64,
    /// Peak number of auxiliary floating-point slots held at once.
    pub peak_slots: u64,
}

impl OpStats {
    pub fn total_ops(&self) -> u64 {
        self.refresh_ops + self.rank1_ops + self.block_product_ops
    }

    fn observe_slots(&mut self, slots: u64) {
        self.peak_slots = self.peak_slots.max(slots);
    }
}

/// Per-step archives of one completed stage: the emission pairs with their
/// values and the before-step measure vectors `w^{k-1}, r^{k-1}` for
/// `k = 1..L_d`.
struct StageArchive {
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
    w: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl StageArchive {
    fn slots(&self) -> u64 {
        self.w.iter().map(|v| v.len() as u64).sum::<u64>() * 2
    }
}

/// Emission record of one stage kept for chain reconstruction.
struct StageRecord {
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
    /// How many leading entries the next stage consumed from this archive.
    consumed_by_next: usize,
}

/// Stage-1 output: `λ*(1, i) = R(i)`, emitted in nonincreasing reward order
/// (ties to the lowest state id); measures are constant across steps.
fn stage_one(rewards: &[f64]) -> StageArchive {
    let n = rewards.len();
    let mut ord: Vec<usize> = (0..n).collect();
    ord.sort_by(|&a, &b| rewards[b].partial_cmp(&rewards[a]).unwrap().then(a.cmp(&b)));
    let pairs: Vec<(usize, usize)> = ord.iter().map(|&i| (1, i)).collect();
    let lambdas: Vec<f64> = ord.iter().map(|&i| rewards[i]).collect();
    let w = vec![vec![1.0; n]; n];
    let r = vec![rewards.to_vec(); n];
    StageArchive { pairs, lambdas, w, r }
}

/// Concatenates the last stage's chain with each earlier stage's unconsumed
/// archive suffix, yielding the full nonincreasing `T·n` emission chain.
fn reconstruct_chain(records: &[StageRecord]) -> Vec<OrderEntry> {
    let mut order = Vec::new();
    for (idx, record) in records.iter().enumerate().rev() {
        let from = if idx + 1 == records.len() { 0 } else { record.consumed_by_next };
        for (pair, &lambda) in record.pairs[from..].iter().zip(&record.lambdas[from..]) {
            order.push(OrderEntry { s: pair.0, i: pair.1, lambda });
        }
    }
    order
}

/// Argmax of `r/w` over states not yet in the stage set; lowest id on ties.
fn best_candidate(r: &[f64], w: &[f64], in_set: &[bool]) -> (usize, f64) {
    let mut best_i = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for i in 0..r.len() {
        if !in_set[i] {
            let ratio = r[i] / w[i];
            if ratio > best {
                best = ratio;
                best_i = i;
            }
        }
    }
    (best_i, best)
}

/// Access to the scaled transition structure `b(i, j) = β p(i, j)` used by a
/// stage run, dense or sparse.
trait ScaledTransitions {
    fn n(&self) -> usize;
    fn rewards(&self) -> &[f64];
    /// `w(i) += b(i, i*) · w_scalar`, `r(i) += b(i, i*) · r_scalar` for all i.
    fn rank1(
        &self,
        target: usize,
        ws: f64,
        rs: f64,
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    );
    /// `w(i) = 1 + Σ_{j ∈ active} b(i, j) w_prev(j)`, same shape for `r`.
    fn refresh(
        &self,
        active: &[usize],
        active_mask: &[bool],
        w_prev: &[f64],
        r_prev: &[f64],
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    );
}

struct DenseB<'a> {
    b: Vec<f64>,
    rewards: &'a [f64],
    n: usize,
}

impl<'a> DenseB<'a> {
    fn new(model: &'a BanditModel) -> Self {
        let n = model.n();
        let beta = model.beta();
        let mut b = Vec::with_capacity(n * n);
        for i in 0..n {
            for &p in model.row(i) {
                b.push(beta * p);
            }
        }
        Self { b, rewards: model.rewards(), n }
    }
}

impl ScaledTransitions for DenseB<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn rewards(&self) -> &[f64] {
        self.rewards
    }

    fn rank1(
        &self,
        target: usize,
        ws: f64,
        rs: f64,
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    ) {
        for i in 0..self.n {
            let b = self.b[i * self.n + target];
            w[i] += b * ws;
            r[i] += b * rs;
        }
        stats.rank1_ops += 4 * self.n as u64;
    }

    fn refresh(
        &self,
        active: &[usize],
        _active_mask: &[bool],
        w_prev: &[f64],
        r_prev: &[f64],
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    ) {
        for i in 0..self.n {
            let row = &self.b[i * self.n..(i + 1) * self.n];
            let mut acc_w = 0.0;
            let mut acc_r = 0.0;
            for &j in active {
                acc_w += row[j] * w_prev[j];
                acc_r += row[j] * r_prev[j];
            }
            w[i] = 1.0 + acc_w;
            r[i] = self.rewards[i] + acc_r;
        }
        stats.refresh_ops += self.n as u64 * (4 * active.len() as u64 + 2);
    }
}

struct SparseB<'a> {
    rows: Vec<Vec<(usize, f64)>>,
    rewards: &'a [f64],
    n: usize,
}

impl<'a> SparseB<'a> {
    fn new(model: &'a SparseBanditModel) -> Self {
        let n = model.n();
        let beta = model.beta();
        let rows = (0..n)
            .map(|i| model.row(i).iter().map(|&(j, p)| (j, beta * p)).collect())
            .collect();
        Self { rows, rewards: model.rewards(), n }
    }
}

impl ScaledTransitions for SparseB<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn rewards(&self) -> &[f64] {
        self.rewards
    }

    fn rank1(
        &self,
        target: usize,
        ws: f64,
        rs: f64,
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    ) {
        let mut touched = 0u64;
        for i in 0..self.n {
            if let Some(&(_, b)) = self.rows[i].iter().find(|&&(j, _)| j == target) {
                w[i] += b * ws;
                r[i] += b * rs;
                touched += 1;
            }
        }
        stats.rank1_ops += 4 * touched;
    }

    fn refresh(
        &self,
        _active: &[usize],
        active_mask: &[bool],
        w_prev: &[f64],
        r_prev: &[f64],
        w: &mut [f64],
        r: &mut [f64],
        stats: &mut OpStats,
    ) {
        let mut used = 0u64;
        for i in 0..self.n {
            let mut acc_w = 0.0;
            let mut acc_r = 0.0;
            for &(j, b) in &self.rows[i] {
                if active_mask[j] {
                    acc_w += b * w_prev[j];
                    acc_r += b * r_prev[j];
                    used += 1;
                }
            }
            w[i] = 1.0 + acc_w;
            r[i] = self.rewards[i] + acc_r;
        }
        stats.refresh_ops += 4 * used + 2 * self.n as u64;
    }
}

/// Runs stage `d ≥ 2` over the previous stage's archive. Writes `λ*(d, ·)`
/// into `values` and returns this stage's archive plus the number of archive
/// entries consumed from the previous stage.
fn run_stage<B: ScaledTransitions>(
    b: &B,
    d: usize,
    prev: &StageArchive,
    values: &mut [f64],
    stats: &mut OpStats,
) -> (StageArchive, usize) {
    let n = b.n();
    let mut w: Vec<f64> = vec![1.0; n];
    let mut r: Vec<f64> = b.rewards().to_vec();
    let mut in_ad = vec![false; n];
    let mut active_mask = vec![false; n]; // A_{d-1}
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut k_d = 0usize;
    let mut l0 = 0usize;
    let mut pairs = Vec::new();
    let mut lambdas = Vec::new();
    let mut arch_w: Vec<Vec<f64>> = Vec::new();
    let mut arch_r: Vec<Vec<f64>> = Vec::new();
    loop {
        arch_w.push(w.clone());
        arch_r.push(r.clone());
        let (cand_i, cand) = best_candidate(&r, &w, &in_ad);
        // Horizon d wins ties against the archived candidate.
        let take_horizon_d = match prev.lambdas.get(l0) {
            Some(&archived) => cand >= archived,
            None => true,
        };
        if take_horizon_d {
            values[cand_i] = cand;
            pairs.push((d, cand_i));
            lambdas.push(cand);
            in_ad[cand_i] = true;
            k_d += 1;
            if k_d == n {
                break;
            }
        } else {
            let (s_star, i_star) = prev.pairs[l0];
            pairs.push((s_star, i_star));
            lambdas.push(prev.lambdas[l0]);
            if s_star == d - 1 {
                b.rank1(i_star, prev.w[l0][i_star], prev.r[l0][i_star], &mut w, &mut r, stats);
                active_mask[i_star] = true;
                active.push(i_star);
            } else {
                // The refresh never consumes the last archived entry (which is
                // always a horizon d-1 emission), so l0 + 1 is in bounds.
                b.refresh(
                    &active,
                    &active_mask,
                    &prev.w[l0 + 1],
                    &prev.r[l0 + 1],
                    &mut w,
                    &mut r,
                    stats,
                );
            }
            l0 += 1;
        }
    }
    let out = StageArchive { pairs, lambdas, w: arch_w, r: arch_r };
    stats.observe_slots(prev.slots() + out.slots() + 4 * n as u64);
    (out, l0)
}

fn rag_full_impl<B: ScaledTransitions>(b: &B, horizon: usize) -> (IndexTable, OpStats) {
    assert!(horizon >= 1);
    let n = b.n();
    let mut stats = OpStats::default();
    let mut values = vec![0.0; horizon * n];
    values[..n].copy_from_slice(b.rewards());
    let mut archive = stage_one(b.rewards());
    let mut records: Vec<StageRecord> = vec![StageRecord {
        pairs: archive.pairs.clone(),
        lambdas: archive.lambdas.clone(),
        consumed_by_next: 0,
    }];
    for d in 2..=horizon {
        let (next, consumed) =
            run_stage(b, d, &archive, &mut values[(d - 1) * n..d * n], &mut stats);
        records.last_mut().unwrap().consumed_by_next = consumed;
        records.push(StageRecord {
            pairs: next.pairs.clone(),
            lambdas: next.lambdas.clone(),
            consumed_by_next: 0,
        });
        archive = next;
    }
    let order = reconstruct_chain(&records);
    let stage_steps = records.iter().map(|rec| rec.pairs.len()).collect();
    (IndexTable { n, horizon, values, order, stage_steps }, stats)
}

/// The T-stage recursive adaptive-greedy algorithm: computes all index values
/// `λ*(d, i)` for `1 ≤ d ≤ T`, reusing each stage's archives in the next.
pub fn rag_full(model: &BanditModel, horizon: usize) -> IndexTable {
    rag_full_with_stats(model, horizon).0
}

pub fn rag_full_with_stats(model: &BanditModel, horizon: usize) -> (IndexTable, OpStats) {
    rag_full_impl(&DenseB::new(model), horizon)
}

/// RAG over the sparse representation: identical output, with every transition
/// product restricted to stored nonzeros.
pub fn rag_full_sparse(model: &SparseBanditModel, horizon: usize) -> IndexTable {
    rag_full_sparse_with_stats(model, horizon).0
}

pub fn rag_full_sparse_with_stats(
    model: &SparseBanditModel,
    horizon: usize,
) -> (IndexTable, OpStats) {
    rag_full_impl(&SparseB::new(model), horizon)
}

/// One-pass adaptive-greedy reference: recomputes every measure from scratch
/// at each of the `T·n` steps. Slow but straightforward; used as a trusted
/// cross-check for the staged variants.
pub fn ag_reference(model: &BanditModel, horizon: usize) -> IndexTable {
    assert!(horizon >= 1);
    let n = model.n();
    let beta = model.beta();
    let mut in_set = vec![vec![false; n]; horizon + 2]; // 1-based s; s = T+1 is full
    in_set[horizon + 1] = vec![true; n];
    let mut values = vec![0.0; horizon * n];
    let mut order = Vec::with_capacity(horizon * n);
    for _step in 0..horizon * n {
        // Modified measures of the current profile, bottom-up in s.
        let mut w_by_s: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        let mut r_by_s: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        w_by_s.push(vec![1.0; n]);
        r_by_s.push(model.rewards().to_vec());
        for s in 2..=horizon {
            let (w_prev, r_prev) = (&w_by_s[s - 2], &r_by_s[s - 2]);
            let mut w_s = vec![0.0; n];
            let mut r_s = vec![0.0; n];
            for i in 0..n {
                let mut acc_w = 0.0;
                let mut acc_r = 0.0;
                for (j, &p) in model.row(i).iter().enumerate() {
                    if in_set[s - 1][j] {
                        acc_w += p * w_prev[j];
                        acc_r += p * r_prev[j];
                    }
                }
                w_s[i] = 1.0 + beta * acc_w;
                r_s[i] = model.reward(i) + beta * acc_r;
            }
            w_by_s.push(w_s);
            r_by_s.push(r_s);
        }
        // Admissible augmentations: i ∈ A_{s+1} \ A_s. Highest s, then lowest
        // id, on ties.
        let mut best = f64::NEG_INFINITY;
        let mut best_pair = (0usize, 0usize);
        for s in (1..=horizon).rev() {
            for i in 0..n {
                if !in_set[s][i] && in_set[s + 1][i] {
                    let ratio = r_by_s[s - 1][i] / w_by_s[s - 1][i];
                    if ratio > best {
                        best = ratio;
                        best_pair = (s, i);
                    }
                }
            }
        }
        let (s, i) = best_pair;
        in_set[s][i] = true;
        values[(s - 1) * n + i] = best;
        order.push(OrderEntry { s, i, lambda: best });
    }
    let stage_steps = vec![n; horizon];
    IndexTable { n, horizon, values, order, stage_steps }
}

/// Premultiplied archives of one completed block stage: `ŵ^m(i) =
/// Σ_{j ∈ A_d^m} b(i, j) w^m(j)` for each step `m`, plus the snapshot scalars
/// captured when each state entered the stage set.
struct BlockArchive {
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
    hat_w: Vec<Vec<f64>>,
    hat_r: Vec<Vec<f64>>,
    w_star: Vec<f64>,
    r_star: Vec<f64>,
}

/// Masks each state's step vectors before it entered the stage set, then folds
/// the whole retained block through one dense product with `B`.
fn premultiply(
    b: &Array2<f64>,
    mut arch_w: Vec<Vec<f64>>,
    mut arch_r: Vec<Vec<f64>>,
    entered_at: &[usize],
    stats: &mut OpStats,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = b.nrows();
    let steps = arch_w.len();
    for (i, &k_star) in entered_at.iter().enumerate() {
        for m in 0..=k_star.min(steps - 1) {
            arch_w[m][i] = 0.0;
            arch_r[m][i] = 0.0;
        }
    }
    let mut block = Array2::zeros((n, 2 * steps));
    for m in 0..steps {
        for i in 0..n {
            block[(i, 2 * m)] = arch_w[m][i];
            block[(i, 2 * m + 1)] = arch_r[m][i];
        }
    }
    let product = b.dot(&block);
    stats.block_products += 1;
    stats.block_product_ops += 2 * (n * n * 2 * steps) as u64;
    let mut hat_w = Vec::with_capacity(steps);
    let mut hat_r = Vec::with_capacity(steps);
    for m in 0..steps {
        hat_w.push((0..n).map(|i| product[(i, 2 * m)]).collect());
        hat_r.push((0..n).map(|i| product[(i, 2 * m + 1)]).collect());
    }
    (hat_w, hat_r)
}

/// Block implementation of RAG: inside each stage the `s* ≤ d-2` case becomes
/// a vector add against premultiplied archives and the `s* = d-1` case a
/// rank-1 column update from snapshot scalars; the bottleneck products are
/// batched into a single dense matrix product at the end of each stage.
pub fn block_rag_full(model: &BanditModel, horizon: usize) -> IndexTable {
    block_rag_full_with_stats(model, horizon).0
}

pub fn block_rag_full_with_stats(model: &BanditModel, horizon: usize) -> (IndexTable, OpStats) {
    assert!(horizon >= 1);
    let n = model.n();
    let beta = model.beta();
    let mut stats = OpStats::default();
    let b = model.transition_matrix().mapv(|p| beta * p);
    let mut values = vec![0.0; horizon * n];
    values[..n].copy_from_slice(model.rewards());

    // Stage 1: constant measures, emitted in nonincreasing reward order.
    let one = stage_one(model.rewards());
    let mut entered_at = vec![0usize; n];
    for (m, &(_, i)) in one.pairs.iter().enumerate() {
        entered_at[i] = m;
    }
    let mut records: Vec<StageRecord> = vec![StageRecord {
        pairs: one.pairs.clone(),
        lambdas: one.lambdas.clone(),
        consumed_by_next: 0,
    }];
    let mut archive = {
        let (hat_w, hat_r) = if horizon >= 2 {
            premultiply(&b, one.w, one.r, &entered_at, &mut stats)
        } else {
            (Vec::new(), Vec::new())
        };
        BlockArchive {
            pairs: one.pairs,
            lambdas: one.lambdas,
            hat_w,
            hat_r,
            w_star: vec![1.0; n],
            r_star: model.rewards().to_vec(),
        }
    };

    for d in 2..=horizon {
        let mut w: Vec<f64> = vec![1.0; n];
        let mut r: Vec<f64> = model.rewards().to_vec();
        let mut in_ad = vec![false; n];
        let mut k_d = 0usize;
        let mut l0 = 0usize;
        let mut pairs = Vec::new();
        let mut lambdas = Vec::new();
        let mut arch_w: Vec<Vec<f64>> = Vec::new();
        let mut arch_r: Vec<Vec<f64>> = Vec::new();
        let mut entered_at = vec![0usize; n];
        let mut w_star = vec![0.0; n];
        let mut r_star = vec![0.0; n];
        loop {
            arch_w.push(w.clone());
            arch_r.push(r.clone());
            let (cand_i, cand) = best_candidate(&r, &w, &in_ad);
            let take_horizon_d = match archive.lambdas.get(l0) {
                Some(&archived) => cand >= archived,
                None => true,
            };
            if take_horizon_d {
                values[(d - 1) * n + cand_i] = cand;
                pairs.push((d, cand_i));
                lambdas.push(cand);
                in_ad[cand_i] = true;
                entered_at[cand_i] = arch_w.len() - 1; // k - 1
                w_star[cand_i] = w[cand_i];
                r_star[cand_i] = r[cand_i];
                k_d += 1;
                if k_d == n {
                    break;
                }
            } else {
                let (s_star, i_star) = archive.pairs[l0];
                pairs.push((s_star, i_star));
                lambdas.push(archive.lambdas[l0]);
                if s_star == d - 1 {
                    let ws = archive.w_star[i_star];
                    let rs = archive.r_star[i_star];
                    for i in 0..n {
                        let bv = b[(i, i_star)];
                        w[i] += bv * ws;
                        r[i] += bv * rs;
                    }
                    stats.rank1_ops += 4 * n as u64;
                } else {
                    let hw = &archive.hat_w[l0 + 1];
                    let hr = &archive.hat_r[l0 + 1];
                    for i in 0..n {
                        w[i] = 1.0 + hw[i];
                        r[i] = model.reward(i) + hr[i];
                    }
                    stats.refresh_ops += 2 * n as u64;
                }
                l0 += 1;
            }
        }
        records.last_mut().unwrap().consumed_by_next = l0;
        records.push(StageRecord {
            pairs: pairs.clone(),
            lambdas: lambdas.clone(),
            consumed_by_next: 0,
        });
        let next_hats = if d < horizon {
            premultiply(&b, arch_w, arch_r, &entered_at, &mut stats)
        } else {
            (Vec::new(), Vec::new())
        };
        let slots: u64 = (next_hats.0.len() as u64 * 2 + archive.hat_w.len() as u64 * 2)
            * n as u64
            + 8 * n as u64;
        stats.observe_slots(slots);
        archive = BlockArchive {
            pairs,
            lambdas,
            hat_w: next_hats.0,
            hat_r: next_hats.1,
            w_star,
            r_star,
        };
    }
    let order = reconstruct_chain(&records);
    let stage_steps = records.iter().map(|rec| rec.pairs.len()).collect();
    (IndexTable { n, horizon, values, order, stage_steps }, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        random_birth_death_instance, random_dense_instance, random_dense_instance_with_beta,
        BanditModel,
    };
    use crate::testutil::swap_instance;
    use ndarray::array;
    use std::collections::BTreeSet;

    fn assert_tables_close(a: &IndexTable, b: &IndexTable, tol: f64, ctx: &str) {
        let diff = a.max_abs_diff(b);
        assert!(diff <= tol, "{ctx}: max diff {diff}");
    }

    fn assert_chain_well_formed(t: &IndexTable, tol: f64, ctx: &str) {
        assert_eq!(t.order().len(), t.horizon() * t.n(), "{ctx}: chain length");
        let distinct: BTreeSet<(usize, usize)> = t.order().iter().map(|e| (e.s, e.i)).collect();
        assert_eq!(distinct.len(), t.horizon() * t.n(), "{ctx}: chain has duplicates");
        for pair in t.order().windows(2) {
            assert!(
                pair[0].lambda >= pair[1].lambda - tol,
                "{ctx}: {:?} then {:?}",
                pair[0],
                pair[1]
            );
        }
        for e in t.order() {
            assert_eq!(e.lambda, t.value(e.s, e.i), "{ctx}: chain value mismatch");
        }
    }

    #[test]
    fn single_state_all_horizons() {
        let m = BanditModel::new(array![[1.0]], vec![2.5], 0.9).unwrap();
        let t = rag_full(&m, 4);
        for d in 1..=4 {
            assert_eq!(t.value(d, 0), 2.5);
        }
        assert_chain_well_formed(&t, 0.0, "single state");
    }

    #[test]
    fn swap_instance_table() {
        let t = rag_full(&swap_instance(), 2);
        assert_eq!(t.value(1, 0), 1.0);
        assert_eq!(t.value(1, 1), 0.0);
        assert_eq!(t.value(2, 0), 1.0);
        assert_eq!(t.value(2, 1), 0.5);
        let ag = ag_reference(&swap_instance(), 2);
        assert_tables_close(&t, &ag, 1e-15, "swap rag vs ag");
        assert_chain_well_formed(&t, 0.0, "swap");
    }

    #[test]
    fn absorbing_states_keep_own_reward() {
        let m = BanditModel::new(
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![0.3, 0.9, 0.1],
            0.95,
        )
        .unwrap();
        let t = ag_reference(&m, 4);
        for d in 1..=4 {
            for i in 0..3 {
                assert!((t.value(d, i) - m.reward(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn staged_matches_reference_random() {
        for seed in 0..8 {
            for &beta in &[0.5, 0.9, 1.0] {
                let m = random_dense_instance_with_beta(4, seed, beta);
                let ag = ag_reference(&m, 5);
                let rag = rag_full(&m, 5);
                assert_tables_close(&ag, &rag, 1e-12, &format!("seed {seed} beta {beta}"));
            }
        }
    }

    #[test]
    fn block_and_sparse_match_staged() {
        for seed in 0..6 {
            let m = random_dense_instance_with_beta(5, seed, 0.9);
            let rag = rag_full(&m, 6);
            let block = block_rag_full(&m, 6);
            let sparse = rag_full_sparse(&m.to_sparse(), 6);
            assert_tables_close(&rag, &block, 1e-12, &format!("block seed {seed}"));
            assert_tables_close(&rag, &sparse, 1e-12, &format!("sparse seed {seed}"));
            assert_eq!(rag.stage_steps(), block.stage_steps());
        }
    }

    #[test]
    fn birth_death_sparse_matches_dense() {
        let m = random_birth_death_instance(50, 3, 1.0);
        let dense = rag_full(&m.to_dense(), 10);
        let sparse = rag_full_sparse(&m, 10);
        assert_tables_close(&dense, &sparse, 1e-12, "birth-death 50");
    }

    #[test]
    fn emission_chain_well_formed() {
        for seed in 0..5 {
            let m = random_dense_instance_with_beta(4, seed, 0.9);
            let t = rag_full(&m, 5);
            assert_chain_well_formed(&t, 1e-12, &format!("rag seed {seed}"));
            let ag = ag_reference(&m, 5);
            assert_chain_well_formed(&ag, 1e-12, &format!("ag seed {seed}"));
            let block = block_rag_full(&m, 5);
            assert_chain_well_formed(&block, 1e-12, &format!("block seed {seed}"));
        }
    }

    #[test]
    fn index_monotone_in_horizon_and_bounded() {
        for seed in 0..5 {
            let m = random_dense_instance_with_beta(4, seed, 0.9);
            let t = rag_full(&m, 5);
            for i in 0..4 {
                for d in 1..5 {
                    assert!(t.value(d + 1, i) >= t.value(d, i) - 1e-12);
                }
                for d in 1..=5 {
                    assert!(t.value(d, i) >= m.min_reward() - 1e-12);
                    assert!(t.value(d, i) <= m.max_reward() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn activity_charge_shifts_index() {
        let m = random_dense_instance_with_beta(4, 2, 0.9);
        let charged = m.with_activity_charge(0.3);
        let t = rag_full(&m, 4);
        let tc = rag_full(&charged, 4);
        for d in 1..=4 {
            for i in 0..4 {
                assert!((tc.value(d, i) - (t.value(d, i) - 0.3)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stage_step_counts_bounded() {
        let m = random_dense_instance(6, 9);
        let t = rag_full(&m, 5);
        let n = 6;
        assert_eq!(t.stage_steps()[0], n);
        for d in 2..=5 {
            assert!(t.stage_steps()[d - 1] < d * n, "stage {d}");
        }
    }

    #[test]
    fn block_performs_one_product_per_nonfinal_stage() {
        let m = random_dense_instance(8, 4);
        let (_, stats) = block_rag_full_with_stats(&m, 6);
        assert_eq!(stats.block_products, 5);
    }

    #[test]
    fn sparse_refresh_op_bound() {
        let m = random_birth_death_instance(40, 2, 0.9);
        let (t, stats) = rag_full_sparse_with_stats(&m, 8);
        // Per refresh at most 2(2N+1)n multiply-adds with N = 3, and the
        // number of refreshes is bounded by the total step count.
        let steps: u64 = t.stage_steps().iter().map(|&s| s as u64).sum();
        assert!(stats.refresh_ops <= steps * 2 * 7 * 40);
    }

    #[test]
    fn adversarial_ties_all_equal_rewards() {
        // Every candidate ties at every step; outputs must still agree.
        let m = BanditModel::new(
            array![[0.2, 0.3, 0.5], [0.1, 0.8, 0.1], [0.4, 0.4, 0.2]],
            vec![1.0, 1.0, 1.0],
            1.0,
        )
        .unwrap();
        let rag = rag_full(&m, 4);
        let block = block_rag_full(&m, 4);
        let ag = ag_reference(&m, 4);
        assert_tables_close(&rag, &block, 1e-12, "ties block");
        assert_tables_close(&rag, &ag, 1e-12, "ties ag");
        for d in 1..=4 {
            for i in 0..3 {
                assert!((rag.value(d, i) - 1.0).abs() < 1e-12);
            }
        }
    }
}
