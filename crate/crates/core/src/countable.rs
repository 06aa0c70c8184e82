//! Index computation from a fixed initial state over a countable state space:
//! each stage only touches the states reachable in the remaining time, so the
//! work grows with the reachable sets rather than with any global state count.

use std::fmt;

use ndarray::Array2;
use thiserror::Error;

use crate::model::{reachable_sets, BanditModel, CountableModel, ReachableSets};
use crate::rag::rag_full;

/// One emission of the restricted chain: remaining horizon `s`, state, value.
#[derive(Debug, Clone, PartialEq)]
pub struct CountableOrderEntry<K> {
    pub s: usize,
    pub state: K,
    pub lambda: f64,
}

/// Index values `λ*(d, i)` for every pair with `1 ≤ d ≤ T` and
/// `i ∈ X_{T-d}(i₀)` (the states reachable from `i₀` in `T - d` steps: the
/// only pairs a `T`-horizon play starting at `i₀` can ever occupy).
#[derive(Debug, Clone)]
pub struct CountableIndexTable<K: Clone + Ord + fmt::Debug> {
    horizon: usize,
    reach: ReachableSets<K>,
    values: Vec<Vec<f64>>, // values[d-1][q] for layout position q in X_{T-d}
    order: Vec<CountableOrderEntry<K>>,
    stage_steps: Vec<usize>,
}

impl<K: Clone + Ord + fmt::Debug> CountableIndexTable<K> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `λ*(d, state)` if `state ∈ X_{T-d}(i₀)`.
    pub fn value(&self, d: usize, state: &K) -> Option<f64> {
        let q = self.reach.position(state)?;
        self.values[d - 1].get(q).copied()
    }

    /// States covered at remaining horizon `d`, in layout order.
    pub fn states_at(&self, d: usize) -> &[K] {
        self.reach.set(self.horizon - d)
    }

    pub fn values_at(&self, d: usize) -> &[f64] {
        &self.values[d - 1]
    }

    /// Total number of `(d, i)` pairs computed.
    pub fn relevant_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Full emission chain in nonincreasing value order.
    pub fn order(&self) -> &[CountableOrderEntry<K>] {
        &self.order
    }

    pub fn stage_steps(&self) -> &[usize] {
        &self.stage_steps
    }
}

struct StageArchive {
    pairs: Vec<(usize, usize)>, // (s, layout position)
    lambdas: Vec<f64>,
    w: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

struct StageRecord {
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
    consumed_by_next: usize,
}

/// Number of augmented states `(d, i)` with `i ∈ X_{T-d}(i₀)`, `1 ≤ d ≤ T`.
pub fn relevant_count<M: CountableModel>(model: &M, i0: &M::State, horizon: usize) -> usize {
    assert!(horizon >= 1);
    let reach = reachable_sets(model, i0, horizon - 1);
    (0..horizon).map(|s| reach.size(s)).sum()
}

/// Runs the staged adaptive-greedy recursion restricted to the reachable sets
/// of `i0`: stage `d` computes `λ*(d, i)` exactly for every `i ∈ X_{T-d}(i₀)`.
pub fn rag_from_initial<M: CountableModel>(
    model: &M,
    i0: &M::State,
    horizon: usize,
) -> CountableIndexTable<M::State> {
    assert!(horizon >= 1);
    let beta = model.beta();
    let reach = reachable_sets(model, i0, horizon.saturating_sub(1));
    let layout = reach.states();
    let rewards: Vec<f64> = layout.iter().map(|s| model.reward(s)).collect();
    // Scaled successor lists b(q, t) = β p(q, t) in layout positions; only
    // needed for rows that ever feed a stage with d ≥ 2.
    let succ_rows = if horizon >= 2 { reach.size(horizon - 2) } else { 0 };
    let succ: Vec<Vec<(usize, f64)>> = (0..succ_rows)
        .map(|q| {
            model
                .successors(&layout[q])
                .into_iter()
                .filter(|&(_, p)| p > 0.0)
                .map(|(next, p)| {
                    let t = reach
                        .position(&next)
                        .expect("successor of a reachable state is reachable");
                    (t, beta * p)
                })
                .collect()
        })
        .collect();

    // Stage 1 over X_{T-1}: λ*(1, i) = R(i), nonincreasing reward order.
    let n1 = reach.size(horizon - 1);
    let mut ord: Vec<usize> = (0..n1).collect();
    ord.sort_by(|&a, &b| rewards[b].partial_cmp(&rewards[a]).unwrap().then(a.cmp(&b)));
    let mut values: Vec<Vec<f64>> = vec![rewards[..n1].to_vec()];
    let mut archive = StageArchive {
        pairs: ord.iter().map(|&q| (1, q)).collect(),
        lambdas: ord.iter().map(|&q| rewards[q]).collect(),
        w: vec![vec![1.0; n1]; n1],
        r: vec![rewards[..n1].to_vec(); n1],
    };
    let mut records: Vec<StageRecord> = vec![StageRecord {
        pairs: archive.pairs.clone(),
        lambdas: archive.lambdas.clone(),
        consumed_by_next: 0,
    }];

    for d in 2..=horizon {
        let n_d = reach.size(horizon - d);
        let n_prev = reach.size(horizon - d + 1);
        let mut w: Vec<f64> = vec![1.0; n_d];
        let mut r: Vec<f64> = rewards[..n_d].to_vec();
        let mut in_ad = vec![false; n_d];
        let mut active_mask = vec![false; n_prev]; // A_{d-1} in layout positions
        let mut k_d = 0usize;
        let mut l0 = 0usize;
        let mut pairs = Vec::new();
        let mut lambdas = Vec::new();
        let mut arch_w: Vec<Vec<f64>> = Vec::new();
        let mut arch_r: Vec<Vec<f64>> = Vec::new();
        let mut stage_values = vec![0.0; n_d];
        loop {
            arch_w.push(w.clone());
            arch_r.push(r.clone());
            let mut cand_q = usize::MAX;
            let mut cand = f64::NEG_INFINITY;
            for q in 0..n_d {
                if !in_ad[q] {
                    let ratio = r[q] / w[q];
                    if ratio > cand {
                        cand = ratio;
                        cand_q = q;
                    }
                }
            }
            let take_horizon_d = match archive.lambdas.get(l0) {
                Some(&archived) => cand >= archived,
                None => true,
            };
            if take_horizon_d {
                stage_values[cand_q] = cand;
                pairs.push((d, cand_q));
                lambdas.push(cand);
                in_ad[cand_q] = true;
                k_d += 1;
                if k_d == n_d {
                    break;
                }
            } else {
                let (s_star, q_star) = archive.pairs[l0];
                pairs.push((s_star, q_star));
                lambdas.push(archive.lambdas[l0]);
                if s_star == d - 1 {
                    let ws = archive.w[l0][q_star];
                    let rs = archive.r[l0][q_star];
                    for q in 0..n_d {
                        if let Some(&(_, b)) = succ[q].iter().find(|&&(t, _)| t == q_star) {
                            w[q] += b * ws;
                            r[q] += b * rs;
                        }
                    }
                    active_mask[q_star] = true;
                } else {
                    let w_prev = &archive.w[l0 + 1];
                    let r_prev = &archive.r[l0 + 1];
                    for q in 0..n_d {
                        let mut acc_w = 0.0;
                        let mut acc_r = 0.0;
                        for &(t, b) in &succ[q] {
                            if active_mask[t] {
                                acc_w += b * w_prev[t];
                                acc_r += b * r_prev[t];
                            }
                        }
                        w[q] = 1.0 + acc_w;
                        r[q] = rewards[q] + acc_r;
                    }
                }
                l0 += 1;
            }
        }
        values.push(stage_values);
        records.last_mut().unwrap().consumed_by_next = l0;
        records.push(StageRecord {
            pairs: pairs.clone(),
            lambdas: lambdas.clone(),
            consumed_by_next: 0,
        });
        archive = StageArchive { pairs, lambdas, w: arch_w, r: arch_r };
    }

    let mut order = Vec::new();
    for (idx, record) in records.iter().enumerate().rev() {
        let from = if idx + 1 == records.len() { 0 } else { record.consumed_by_next };
        for (&(s, q), &lambda) in record.pairs[from..].iter().zip(&record.lambdas[from..]) {
            order.push(CountableOrderEntry { s, state: layout[q].clone(), lambda });
        }
    }
    let stage_steps = records.iter().map(|rec| rec.pairs.len()).collect();
    CountableIndexTable { horizon, reach, values, order, stage_steps }
}

/// One disagreement between the restricted run and its finite embedding.
#[derive(Debug, Clone)]
pub struct Mismatch<K> {
    pub d: usize,
    pub state: K,
    pub restricted: f64,
    pub embedded: f64,
}

#[derive(Debug, Error)]
#[error("{} index values disagree beyond {tol}; first: {first:?}", .mismatches.len())]
pub struct MismatchReport<K: fmt::Debug> {
    pub tol: f64,
    pub first: Mismatch<K>,
    pub mismatches: Vec<Mismatch<K>>,
}

/// Cross-checks the restricted run against an explicit finite construction:
/// the augmented states `(d, i)` with `i ∈ X_{T-d}(i₀)` plus one absorbing
/// zero-reward sink form an ordinary finite project whose index at `(d, i)`
/// must coincide with `λ*(d, i)` computed directly, because a `d`-horizon play
/// from `(d, i)` can never engage the sink.
pub fn finite_embedding_crosscheck<M: CountableModel>(
    model: &M,
    i0: &M::State,
    horizon: usize,
    tol: f64,
) -> Result<(), MismatchReport<M::State>> {
    let table = rag_from_initial(model, i0, horizon);
    let reach = reachable_sets(model, i0, horizon.saturating_sub(1));
    let layout = reach.states();

    // Embedded layout: blocks of X_{T-d} for d = 1..=T, then the sink.
    let mut offset = vec![0usize; horizon + 2];
    for d in 1..=horizon {
        offset[d + 1] = offset[d] + reach.size(horizon - d);
    }
    let n_emb = offset[horizon + 1] + 1;
    let sink = n_emb - 1;
    let mut p = Array2::zeros((n_emb, n_emb));
    let mut rewards = vec![0.0; n_emb];
    p[(sink, sink)] = 1.0;
    for d in 1..=horizon {
        for q in 0..reach.size(horizon - d) {
            let row = offset[d] + q;
            rewards[row] = model.reward(&layout[q]);
            if d == 1 {
                p[(row, sink)] = 1.0;
            } else {
                for (next, prob) in model.successors(&layout[q]) {
                    if prob > 0.0 {
                        let t = reach.position(&next).expect("successor reachable");
                        p[(row, offset[d - 1] + t)] += prob;
                    }
                }
            }
        }
    }
    let emb = BanditModel::new(p, rewards, model.beta()).expect("embedding is stochastic");
    let emb_table = rag_full(&emb, horizon);

    let mut mismatches = Vec::new();
    for d in 1..=horizon {
        for q in 0..reach.size(horizon - d) {
            let restricted = table.values_at(d)[q];
            let embedded = emb_table.value(d, offset[d] + q);
            if (restricted - embedded).abs() > tol {
                mismatches.push(Mismatch {
                    d,
                    state: layout[q].clone(),
                    restricted,
                    embedded,
                });
            }
        }
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(MismatchReport { tol, first: mismatches[0].clone(), mismatches })
    }
}
