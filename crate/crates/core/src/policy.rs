//! Policy-level uses of the index: consistency of the one-armed optimal rule
//! with the index threshold, exact dynamic programming for small multiarmed
//! instances, and exact evaluation of index/myopic priority heuristics.

use thiserror::Error;

use crate::calibration::{solve_one_armed, ArmAction};
use crate::model::BanditModel;
use crate::rag::{rag_full, IndexTable};

/// Joint-state-space budget for the exact recursions: `Π n_m · T` at most this.
pub const JOINT_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("joint recursion needs {size} state-stage pairs, budget is {JOINT_BUDGET}")]
    BudgetExceeded { size: u128 },
    #[error("index table for project {project} covers horizon {have}, need {need}")]
    MissingIndexValue { project: usize, have: usize, need: usize },
    #[error("expected {expected} index tables, got {got}")]
    TableCountMismatch { expected: usize, got: usize },
}

/// One inconsistency between the one-armed optimal action and the index
/// threshold rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdViolation {
    pub d: usize,
    pub i: usize,
    pub index: f64,
    pub action: ArmAction,
}

/// Outcome of checking index-threshold consistency of the one-armed problem.
#[derive(Debug, Clone)]
pub struct OneArmedCheck {
    pub lambda: f64,
    pub checked: usize,
    pub violations: Vec<ThresholdViolation>,
}

/// Verifies that for every `(d, i)` the optimal one-armed action against a
/// standard arm of reward `lambda` follows the index: engaging is optimal
/// whenever `λ*(d, i) > λ + tol` and retiring whenever `λ*(d, i) < λ - tol`
/// (within `tol` of the threshold either action may be optimal).
pub fn verify_one_armed_optimality(
    model: &BanditModel,
    horizon: usize,
    lambda: f64,
    tol: f64,
) -> OneArmedCheck {
    let table = rag_full(model, horizon);
    let sol = solve_one_armed(model, lambda, horizon);
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for d in 1..=horizon {
        for i in 0..model.n() {
            checked += 1;
            let index = table.value(d, i);
            let action = sol.action(d, i);
            let bad = (index > lambda + tol && action == ArmAction::Passive)
                || (index < lambda - tol && action == ArmAction::Active);
            if bad {
                violations.push(ThresholdViolation { d, i, index, action });
            }
        }
    }
    OneArmedCheck { lambda, checked, violations }
}

/// How many projects may be engaged per period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngagementMode {
    /// Exactly one project must be engaged each period.
    ExactlyOne,
    /// Any subset of at most `K` projects, possibly none.
    UpTo(usize),
}

/// A finite-horizon multiarmed bandit instance: several projects sharing one
/// discount factor, a horizon, an engagement mode, and a joint initial state.
#[derive(Debug, Clone)]
pub struct FhmabInstance {
    projects: Vec<BanditModel>,
    horizon: usize,
    mode: EngagementMode,
    initial: Vec<usize>,
}

impl FhmabInstance {
    pub fn new(
        projects: Vec<BanditModel>,
        horizon: usize,
        mode: EngagementMode,
        initial: Vec<usize>,
    ) -> Self {
        assert!(!projects.is_empty() && horizon >= 1);
        assert_eq!(projects.len(), initial.len());
        let beta = projects[0].beta();
        for m in &projects {
            assert_eq!(m.beta(), beta, "projects must share one discount factor");
        }
        for (m, &i) in projects.iter().zip(&initial) {
            assert!(i < m.n());
        }
        Self { projects, horizon, mode, initial }
    }

    pub fn projects(&self) -> &[BanditModel] {
        &self.projects
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mode(&self) -> EngagementMode {
        self.mode
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    fn strides(&self) -> (Vec<usize>, usize) {
        let mut strides = Vec::with_capacity(self.projects.len());
        let mut total = 1usize;
        for m in &self.projects {
            strides.push(total);
            total *= m.n();
        }
        (strides, total)
    }

    fn check_budget(&self) -> Result<(usize, Vec<usize>), PolicyError> {
        let mut size: u128 = self.horizon as u128;
        for m in &self.projects {
            size = size.saturating_mul(m.n() as u128);
        }
        if size > JOINT_BUDGET as u128 {
            return Err(PolicyError::BudgetExceeded { size });
        }
        let (strides, total) = self.strides();
        Ok((total, strides))
    }

    fn decode(&self, code: usize, strides: &[usize]) -> Vec<usize> {
        self.projects
            .iter()
            .enumerate()
            .map(|(m, model)| (code / strides[m]) % model.n())
            .collect()
    }

    /// Candidate engagement sets for one period.
    fn action_sets(&self) -> Vec<Vec<usize>> {
        let mm = self.projects.len();
        let mut sets = Vec::new();
        match self.mode {
            EngagementMode::ExactlyOne => {
                for m in 0..mm {
                    sets.push(vec![m]);
                }
            }
            EngagementMode::UpTo(k) => {
                for mask in 0..(1usize << mm) {
                    let members: Vec<usize> = (0..mm).filter(|m| mask & (1 << m) != 0).collect();
                    if members.len() <= k {
                        sets.push(members);
                    }
                }
            }
        }
        sets
    }

    /// Immediate reward plus `β`-discounted expected continuation of engaging
    /// `set` from joint `code`, with next-period values in `prev`.
    fn action_value(&self, code: usize, strides: &[usize], set: &[usize], prev: &[f64]) -> f64 {
        let states = self.decode(code, strides);
        let reward: f64 = set.iter().map(|&m| self.projects[m].reward(states[m])).sum();
        let beta = self.projects[0].beta();
        // Expectation over the product law of the engaged projects.
        let mut terms: Vec<(usize, f64)> = vec![(code, 1.0)];
        for &m in set {
            let base_sub = states[m] * strides[m];
            let mut next_terms = Vec::with_capacity(terms.len() * self.projects[m].n());
            for &(c, pr) in &terms {
                for (j, &p) in self.projects[m].row(states[m]).iter().enumerate() {
                    if p > 0.0 {
                        next_terms.push((c - base_sub + j * strides[m], pr * p));
                    }
                }
            }
            terms = next_terms;
        }
        let cont: f64 = terms.iter().map(|&(c, pr)| pr * prev[c]).sum();
        reward + beta * cont
    }
}

/// Optimal expected total discounted reward of the instance, by backward
/// induction over the joint state space.
pub fn fhmab_optimal_value(instance: &FhmabInstance) -> Result<f64, PolicyError> {
    let (total, strides) = instance.check_budget()?;
    let sets = instance.action_sets();
    let mut prev = vec![0.0; total];
    let mut cur = vec![0.0; total];
    for _t in 1..=instance.horizon {
        for code in 0..total {
            let mut best = f64::NEG_INFINITY;
            for set in &sets {
                let v = instance.action_value(code, &strides, set, &prev);
                if v > best {
                    best = v;
                }
            }
            cur[code] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let code: usize = instance
        .initial
        .iter()
        .zip(&strides)
        .map(|(&i, &s)| i * s)
        .sum();
    Ok(prev[code])
}

/// Priority rules evaluated exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicRule {
    /// Engage by largest index `λ*(t, i_m)` at the remaining time `t`.
    Index,
    /// Engage by largest immediate reward `R_m(i_m)`.
    Myopic,
}

/// Exact expected value of playing a priority heuristic. `tables` must hold
/// one index table per project covering the instance horizon (only used by
/// the index rule). Under `UpTo(K)` the rule engages the top-priority
/// projects, at most `K`, skipping any whose priority is not strictly
/// positive; under `ExactlyOne` it always engages the single best project.
/// Ties go to the lowest project id.
pub fn evaluate_heuristic(
    instance: &FhmabInstance,
    rule: HeuristicRule,
    tables: &[IndexTable],
) -> Result<f64, PolicyError> {
    let mm = instance.projects.len();
    if rule == HeuristicRule::Index {
        if tables.len() != mm {
            return Err(PolicyError::TableCountMismatch { expected: mm, got: tables.len() });
        }
        for (m, t) in tables.iter().enumerate() {
            if t.horizon() < instance.horizon {
                return Err(PolicyError::MissingIndexValue {
                    project: m,
                    have: t.horizon(),
                    need: instance.horizon,
                });
            }
        }
    }
    let (total, strides) = instance.check_budget()?;
    let mut prev = vec![0.0; total];
    let mut cur = vec![0.0; total];
    for t in 1..=instance.horizon {
        for code in 0..total {
            let states = instance.decode(code, &strides);
            let priority = |m: usize| -> f64 {
                match rule {
                    HeuristicRule::Index => tables[m].value(t, states[m]),
                    HeuristicRule::Myopic => instance.projects[m].reward(states[m]),
                }
            };
            let mut ranked: Vec<usize> = (0..mm).collect();
            ranked.sort_by(|&a, &b| priority(b).partial_cmp(&priority(a)).unwrap().then(a.cmp(&b)));
            let set: Vec<usize> = match instance.mode {
                EngagementMode::ExactlyOne => vec![ranked[0]],
                EngagementMode::UpTo(k) => ranked
                    .into_iter()
                    .filter(|&m| priority(m) > 0.0)
                    .take(k)
                    .collect(),
            };
            cur[code] = instance.action_value(code, &strides, &set, &prev);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let code: usize = instance
        .initial
        .iter()
        .zip(&strides)
        .map(|(&i, &s)| i * s)
        .sum();
    Ok(prev[code])
}

/// Value of one policy and its shortfall against the optimum.
#[derive(Debug, Clone)]
pub struct PolicyReport {
    pub policy: String,
    pub value: f64,
    pub gap: f64,
}

/// Evaluates the optimal policy and both heuristics on one instance.
pub fn policy_reports(instance: &FhmabInstance) -> Result<Vec<PolicyReport>, PolicyError> {
    let opt = fhmab_optimal_value(instance)?;
    let tables: Vec<IndexTable> = instance
        .projects()
        .iter()
        .map(|m| rag_full(m, instance.horizon()))
        .collect();
    let index = evaluate_heuristic(instance, HeuristicRule::Index, &tables)?;
    let myopic = evaluate_heuristic(instance, HeuristicRule::Myopic, &tables)?;
    Ok(vec![
        PolicyReport { policy: "optimal".into(), value: opt, gap: 0.0 },
        PolicyReport { policy: "index".into(), value: index, gap: opt - index },
        PolicyReport { policy: "myopic".into(), value: myopic, gap: opt - myopic },
    ])
}
