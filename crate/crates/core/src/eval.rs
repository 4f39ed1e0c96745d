//! Exact model-based evaluation.
//!
//! Everything here is computed by enumeration and dynamic programming, and
//! serves as the ground truth for the sample-based estimators. Enumeration
//! sizes are guarded by [`EvalOptions::cap`]; exceeding it is an error unless
//! the Monte-Carlo fallback is explicitly enabled, in which case the report
//! is flagged as approximate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{GameDefinition, TransitionKernel};
use crate::joint::{next_combo, JointSpace};
use crate::policy::{JointPolicy, LocalPolicy};
use crate::sampling::{sample_episodes, RngSpec};
use crate::table::LocalTable;

pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Maximum number of enumerated profiles for any single exact computation.
    pub cap: u128,
    /// Used by [`expected_return`] when the joint enumeration exceeds the cap.
    pub monte_carlo: Option<MonteCarlo>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            monte_carlo: None,
        }
    }
}

/// `d[i][h][s]`: probability that agent `i` is in local state `s` at stage `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDistributionTable {
    dists: Vec<Vec<Vec<f64>>>,
}

impl StateDistributionTable {
    pub fn get(&self, agent: usize, stage: usize) -> &[f64] {
        &self.dists[agent][stage]
    }

    pub fn agent(&self, agent: usize) -> &[Vec<f64>] {
        &self.dists[agent]
    }

    /// `min_{i,h,s} d[i][h][s]`, the measured exploration constant.
    pub fn min_visitation(&self) -> f64 {
        self.dists
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Forward recursion of one agent's marginal state distribution.
pub fn local_state_distribution(
    kernel: &TransitionKernel,
    policy: &LocalPolicy,
    initial: &[f64],
    horizon: usize,
) -> Vec<Vec<f64>> {
    let ns = kernel.num_states();
    let mut out = Vec::with_capacity(horizon);
    out.push(initial.to_vec());
    for h in 0..horizon - 1 {
        let current = &out[h];
        let mut next = vec![0.0; ns];
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(h, s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let w = mass * pa;
                for (sn, &p) in kernel.row(h, s, a).iter().enumerate() {
                    next[sn] += w * p;
                }
            }
        }
        out.push(next);
    }
    out
}

pub fn state_distributions(game: &GameDefinition, policy: &JointPolicy) -> StateDistributionTable {
    let dists = (0..game.num_agents())
        .map(|i| {
            local_state_distribution(game.kernel(i), policy.agent(i), game.initial(i), game.horizon())
        })
        .collect();
    StateDistributionTable { dists }
}

/// Distribution over joint states computed on the joint chain, `[h][joint state]`.
///
/// Exists as an independent check of the product form; cost is quadratic in
/// the joint state count.
pub fn joint_state_distribution(
    game: &GameDefinition,
    policy: &JointPolicy,
    opts: &EvalOptions,
) -> Result<Vec<Vec<f64>>> {
    let space = game.joint_space();
    space.checked_profile_count(opts.cap)?;
    let n = game.num_agents();
    let ns = space.num_joint_states();
    let na = space.num_joint_actions();
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    let mut next_states = vec![0; n];

    let mut first = vec![0.0; ns];
    for (js, slot) in first.iter_mut().enumerate() {
        space.decode_state(js, &mut states);
        *slot = (0..n).map(|i| game.initial(i)[states[i]]).product();
    }
    let mut out = vec![first];
    for h in 0..game.horizon() - 1 {
        let mut next = vec![0.0; ns];
        for js in 0..ns {
            let mass = out[h][js];
            if mass == 0.0 {
                continue;
            }
            space.decode_state(js, &mut states);
            for ja in 0..na {
                space.decode_action(ja, &mut actions);
                let pa: f64 = (0..n)
                    .map(|i| policy.agent(i).prob(h, states[i], actions[i]))
                    .product();
                if pa == 0.0 {
                    continue;
                }
                for (jn, slot) in next.iter_mut().enumerate() {
                    space.decode_state(jn, &mut next_states);
                    let pt: f64 = (0..n)
                        .map(|i| game.kernel(i).prob(h, states[i], actions[i], next_states[i]))
                        .product();
                    *slot += mass * pa * pt;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// Agent `i`'s Q-function on the joint space, `[h][profile]`.
#[derive(Debug, Clone)]
pub struct JointQ {
    pub space: JointSpace,
    pub values: Vec<Vec<f64>>,
}

impl JointQ {
    pub fn get(&self, h: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.values[h][self.space.profile_index(states, actions)]
    }
}

/// Backward induction over the joint chain.
pub fn joint_q_values(
    game: &GameDefinition,
    policy: &JointPolicy,
    agent: usize,
    opts: &EvalOptions,
) -> Result<JointQ> {
    let space = game.joint_space();
    space.checked_profile_count(opts.cap)?;
    let n = game.num_agents();
    let horizon = game.horizon();
    let ns = space.num_joint_states();
    let na = space.num_joint_actions();
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    let mut next_states = vec![0; n];

    let mut values = vec![vec![0.0; ns * na]; horizon];
    for h in (0..horizon).rev() {
        // V_{h+1}(s') = sum_a' pi(a'|s') Q_{h+1}(s', a')
        let next_value: Option<Vec<f64>> = (h + 1 < horizon).then(|| {
            (0..ns)
                .map(|jn| {
                    space.decode_state(jn, &mut next_states);
                    let mut v = 0.0;
                    for ja in 0..na {
                        space.decode_action(ja, &mut actions);
                        let pa: f64 = (0..n)
                            .map(|j| policy.agent(j).prob(h + 1, next_states[j], actions[j]))
                            .product();
                        v += pa * values[h + 1][jn * na + ja];
                    }
                    v
                })
                .collect()
        });
        for js in 0..ns {
            space.decode_state(js, &mut states);
            for ja in 0..na {
                space.decode_action(ja, &mut actions);
                let mut q = game.reward(agent, h, &states, &actions);
                if let Some(vnext) = &next_value {
                    for (jn, &v) in vnext.iter().enumerate() {
                        space.decode_state(jn, &mut next_states);
                        let pt: f64 = (0..n)
                            .map(|j| game.kernel(j).prob(h, states[j], actions[j], next_states[j]))
                            .product();
                        q += pt * v;
                    }
                }
                values[h][js * na + ja] = q;
            }
        }
    }
    Ok(JointQ { space, values })
}

/// Weighted local entries `(state, action, weight)` of the agents other than `skip`,
/// used to integrate them out of joint queries.
struct Opponents {
    agents: Vec<usize>,
    entries: Vec<Vec<(usize, usize, f64)>>,
}

impl Opponents {
    fn check_cap(game: &GameDefinition, skip: Option<usize>, cap: u128) -> Result<()> {
        let with_actions = game.oracle().depends_on_actions();
        let size = game.spaces().iter().fold(1u128, |acc, space| {
            let actions = if with_actions { space.num_actions as u128 } else { 1 };
            acc.saturating_mul(space.num_states as u128 * actions)
        });
        if size > cap {
            let what = match skip {
                Some(i) => format!("counterfactual profiles for agent {i}"),
                None => "joint profiles".to_string(),
            };
            return Err(Error::CapExceeded { what, size, cap });
        }
        Ok(())
    }

    fn new(
        game: &GameDefinition,
        policy: &JointPolicy,
        dists: &StateDistributionTable,
        skip: Option<usize>,
        stage: usize,
    ) -> Self {
        let with_actions = game.oracle().depends_on_actions();
        let mut agents = Vec::new();
        let mut entries = Vec::new();
        for j in 0..game.num_agents() {
            if Some(j) == skip {
                continue;
            }
            let d = dists.get(j, stage);
            let mut list = Vec::new();
            for (s, &ps) in d.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                if with_actions {
                    for (a, &pa) in policy.agent(j).row(stage, s).iter().enumerate() {
                        if pa != 0.0 {
                            list.push((s, a, ps * pa));
                        }
                    }
                } else {
                    list.push((s, 0, ps));
                }
            }
            agents.push(j);
            entries.push(list);
        }
        Self { agents, entries }
    }

    /// Calls `f(weight, states, actions)` for every combination; slots of the
    /// skipped agent are left for the caller to fill.
    fn for_each(&self, n: usize, mut f: impl FnMut(f64, &mut [usize], &mut [usize])) {
        if self.entries.iter().any(|e| e.is_empty()) {
            return;
        }
        let radices: Vec<usize> = self.entries.iter().map(|e| e.len()).collect();
        let mut digits = vec![0; radices.len()];
        let mut states = vec![0; n];
        let mut actions = vec![0; n];
        loop {
            let mut w = 1.0;
            for (k, &j) in self.agents.iter().enumerate() {
                let (s, a, p) = self.entries[k][digits[k]];
                states[j] = s;
                actions[j] = a;
                w *= p;
            }
            f(w, &mut states, &mut actions);
            if !next_combo(&radices, &mut digits) {
                break;
            }
        }
    }
}

fn averaged_reward_with(
    game: &GameDefinition,
    policy: &JointPolicy,
    dists: &StateDistributionTable,
    agent: usize,
) -> LocalTable {
    let space = game.space(agent);
    let (ns, na) = (space.num_states, space.num_actions);
    let with_actions = game.oracle().depends_on_actions();
    let mut table = LocalTable::zeros(ns, na, game.horizon());
    for h in 0..game.horizon() {
        let opponents = Opponents::new(game, policy, dists, Some(agent), h);
        let row_len = if with_actions { na } else { 1 };
        let mut acc = vec![0.0; ns * row_len];
        opponents.for_each(game.num_agents(), |w, states, actions| {
            for s in 0..ns {
                states[agent] = s;
                for a in 0..row_len {
                    actions[agent] = a;
                    acc[s * row_len + a] += w * game.reward(agent, h, states, actions);
                }
            }
        });
        for s in 0..ns {
            for a in 0..na {
                let v = if with_actions { acc[s * na + a] } else { acc[s] };
                table.set(h, s, a, v);
            }
        }
    }
    table
}

/// `rbar[h][s_i][a_i]`: agent `i`'s stage reward with every other agent's state
/// and action integrated out under their marginals and policies.
pub fn averaged_reward(
    game: &GameDefinition,
    policy: &JointPolicy,
    agent: usize,
    opts: &EvalOptions,
) -> Result<LocalTable> {
    policy.check_against(game)?;
    Opponents::check_cap(game, Some(agent), opts.cap)?;
    let dists = state_distributions(game, policy);
    Ok(averaged_reward_with(game, policy, &dists, agent))
}

/// Backward recursion `Q_h = r_h + sum_{s',a'} P_h(s'|s,a) pi_{h+1}(a'|s') Q_{h+1}(s',a')`
/// on one agent's local space, with `Q_{H+1} = 0`.
pub fn local_bellman(kernel: &TransitionKernel, policy: &LocalPolicy, rewards: &LocalTable) -> LocalTable {
    let (ns, na) = (rewards.num_states(), rewards.num_actions());
    let horizon = rewards.horizon();
    let mut q = LocalTable::zeros(ns, na, horizon);
    for h in (0..horizon).rev() {
        let next_value: Option<Vec<f64>> = (h + 1 < horizon).then(|| {
            (0..ns)
                .map(|sn| {
                    policy
                        .row(h + 1, sn)
                        .iter()
                        .zip(q.row(h + 1, sn))
                        .map(|(p, v)| p * v)
                        .sum()
                })
                .collect()
        });
        for s in 0..ns {
            for a in 0..na {
                let mut value = rewards.get(h, s, a);
                if let Some(v) = &next_value {
                    value += kernel
                        .row(h, s, a)
                        .iter()
                        .zip(v)
                        .map(|(p, x)| p * x)
                        .sum::<f64>();
                }
                q.set(h, s, a, value);
            }
        }
    }
    q
}

/// `A = Q - sum_a pi(a|s) Q(s, a)`.
pub fn advantages(policy: &LocalPolicy, q: &LocalTable) -> LocalTable {
    let mut abar = q.clone();
    for h in 0..q.horizon() {
        for s in 0..q.num_states() {
            let mean: f64 = policy.row(h, s).iter().zip(q.row(h, s)).map(|(p, v)| p * v).sum();
            for v in abar.row_mut(h, s) {
                *v -= mean;
            }
        }
    }
    abar
}

/// Averaged reward, averaged Q and averaged advantage of one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedTables {
    pub agent: usize,
    pub rbar: LocalTable,
    pub qbar: LocalTable,
    pub abar: LocalTable,
}

impl AveragedTables {
    /// `sum_h max_{s,a} abar[h][s][a]`, an upper bound on this agent's NE-gap.
    pub fn advantage_bound(&self) -> f64 {
        (0..self.abar.horizon()).map(|h| self.abar.stage_max(h)).sum()
    }
}

fn averaged_q_with(
    game: &GameDefinition,
    policy: &JointPolicy,
    dists: &StateDistributionTable,
    agent: usize,
) -> AveragedTables {
    let rbar = averaged_reward_with(game, policy, dists, agent);
    let qbar = local_bellman(game.kernel(agent), policy.agent(agent), &rbar);
    let abar = advantages(policy.agent(agent), &qbar);
    AveragedTables {
        agent,
        rbar,
        qbar,
        abar,
    }
}

pub fn averaged_q(
    game: &GameDefinition,
    policy: &JointPolicy,
    agent: usize,
    opts: &EvalOptions,
) -> Result<AveragedTables> {
    policy.check_against(game)?;
    Opponents::check_cap(game, Some(agent), opts.cap)?;
    let dists = state_distributions(game, policy);
    Ok(averaged_q_with(game, policy, &dists, agent))
}

/// Averaged tables for every agent, evaluated concurrently.
pub fn averaged_q_all(
    game: &GameDefinition,
    policy: &JointPolicy,
    opts: &EvalOptions,
) -> Result<Vec<AveragedTables>> {
    policy.check_against(game)?;
    Opponents::check_cap(game, None, opts.cap)?;
    let dists = state_distributions(game, policy);
    Ok((0..game.num_agents())
        .into_par_iter()
        .map(|i| averaged_q_with(game, policy, &dists, i))
        .collect())
}

/// `J_i = sum_s rho(s) sum_a pi_1(a|s) Qbar_1(s, a)`.
pub fn return_from_q(initial: &[f64], policy: &LocalPolicy, qbar: &LocalTable) -> f64 {
    initial
        .iter()
        .enumerate()
        .map(|(s, &rho)| {
            rho * policy
                .row(0, s)
                .iter()
                .zip(qbar.row(0, s))
                .map(|(p, q)| p * q)
                .sum::<f64>()
        })
        .sum()
}

/// Per-agent returns, welfare and total potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnReport {
    pub returns: Vec<f64>,
    pub welfare: f64,
    pub potential: Option<f64>,
    /// True when computed by the Monte-Carlo fallback.
    pub approximate: bool,
}

/// Exact expectations by accumulating over the product of local state distributions.
pub fn expected_return(
    game: &GameDefinition,
    policy: &JointPolicy,
    opts: &EvalOptions,
) -> Result<ReturnReport> {
    policy.check_against(game)?;
    match Opponents::check_cap(game, None, opts.cap) {
        Ok(()) => {}
        Err(err) => {
            return match opts.monte_carlo {
                Some(mc) => monte_carlo_return(game, policy, mc),
                None => Err(err),
            }
        }
    }
    let n = game.num_agents();
    let dists = state_distributions(game, policy);
    let with_potential = game.has_potential();
    let mut returns = vec![0.0; n];
    let mut welfare = 0.0;
    let mut potential = 0.0;
    for h in 0..game.horizon() {
        let everyone = Opponents::new(game, policy, &dists, None, h);
        everyone.for_each(n, |w, states, actions| {
            for (i, ret) in returns.iter_mut().enumerate() {
                *ret += w * game.reward(i, h, states, actions);
            }
            welfare += w * game.welfare(h, states, actions);
            if with_potential {
                potential += w * game.potential(h, states, actions).unwrap_or(0.0);
            }
        });
    }
    Ok(ReturnReport {
        returns,
        welfare,
        potential: with_potential.then_some(potential),
        approximate: false,
    })
}

fn monte_carlo_return(game: &GameDefinition, policy: &JointPolicy, mc: MonteCarlo) -> Result<ReturnReport> {
    let batch = sample_episodes(game, policy, mc.episodes, RngSpec::new(mc.seed, 0xE7A1))?;
    let n = game.num_agents();
    let with_potential = game.has_potential();
    let mut returns = vec![0.0; n];
    let mut welfare = 0.0;
    let mut potential = 0.0;
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    for k in 0..batch.num_episodes() {
        for h in 0..game.horizon() {
            batch.joint_step(k, h, &mut states, &mut actions);
            for (i, ret) in returns.iter_mut().enumerate() {
                *ret += game.reward(i, h, &states, &actions);
            }
            welfare += game.welfare(h, &states, &actions);
            if with_potential {
                potential += game.potential(h, &states, &actions).unwrap_or(0.0);
            }
        }
    }
    let scale = 1.0 / batch.num_episodes() as f64;
    Ok(ReturnReport {
        returns: returns.into_iter().map(|r| r * scale).collect(),
        welfare: welfare * scale,
        potential: with_potential.then_some(potential * scale),
        approximate: true,
    })
}

/// Greedy policy and optimal value of the single-agent MDP with rewards `rbar`.
///
/// Ties go to the lowest action index.
pub fn best_response_from_rewards(
    kernel: &TransitionKernel,
    initial: &[f64],
    rbar: &LocalTable,
) -> (LocalPolicy, f64) {
    let (ns, na) = (rbar.num_states(), rbar.num_actions());
    let horizon = rbar.horizon();
    let mut value = vec![0.0; ns];
    let mut choice = vec![vec![0; ns]; horizon];
    for h in (0..horizon).rev() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let mut q = rbar.get(h, s, a);
                if h + 1 < horizon {
                    q += kernel.row(h, s, a).iter().zip(&value).map(|(p, v)| p * v).sum::<f64>();
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            choice[h][s] = best_a;
        }
        value = next;
    }
    let total = initial.iter().zip(&value).map(|(r, v)| r * v).sum();
    (LocalPolicy::deterministic(ns, na, &choice), total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse {
    pub policy: LocalPolicy,
    pub value: f64,
}

/// Best response of `agent` against the other agents' policies in `policy`.
///
/// Other agents' trajectories do not depend on agent `i`'s policy, so this is
/// a finite-horizon MDP on `S_i` with rewards `rbar` and kernel `P_i`.
pub fn best_response(
    game: &GameDefinition,
    policy: &JointPolicy,
    agent: usize,
    opts: &EvalOptions,
) -> Result<BestResponse> {
    let rbar = averaged_reward(game, policy, agent, opts)?;
    let (policy, value) = best_response_from_rewards(game.kernel(agent), game.initial(agent), &rbar);
    Ok(BestResponse { policy, value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub returns: Vec<f64>,
    pub welfare: f64,
    pub potential: Option<f64>,
    pub best_response_values: Vec<f64>,
    pub ne_gap: Vec<f64>,
    pub ne_gap_total: f64,
    pub approximate: bool,
}

/// Gap report built from already computed averaged tables.
pub fn ne_gap_from_tables(
    game: &GameDefinition,
    policy: &JointPolicy,
    tables: &[AveragedTables],
    totals: &ReturnReport,
) -> EvaluationReport {
    let mut returns = Vec::with_capacity(tables.len());
    let mut best = Vec::with_capacity(tables.len());
    for t in tables {
        let i = t.agent;
        returns.push(return_from_q(game.initial(i), policy.agent(i), &t.qbar));
        best.push(best_response_from_rewards(game.kernel(i), game.initial(i), &t.rbar).1);
    }
    let ne_gap: Vec<f64> = best.iter().zip(&returns).map(|(b, j)| b - j).collect();
    EvaluationReport {
        ne_gap_total: ne_gap.iter().sum(),
        returns,
        welfare: totals.welfare,
        potential: totals.potential,
        best_response_values: best,
        ne_gap,
        approximate: totals.approximate,
    }
}

pub fn ne_gap(game: &GameDefinition, policy: &JointPolicy, opts: &EvalOptions) -> Result<EvaluationReport> {
    let tables = averaged_q_all(game, policy, opts)?;
    let totals = expected_return(game, policy, opts)?;
    Ok(ne_gap_from_tables(game, policy, &tables, &totals))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageWitness {
    pub stage: usize,
    pub agent: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub deviation_state: usize,
    pub deviation_action: usize,
    pub reward_diff: f64,
    pub potential_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyWitness {
    pub trial: usize,
    pub agent: usize,
    pub return_diff: f64,
    pub potential_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    pub stage_exhaustive: bool,
    pub stage_checks: usize,
    pub stage_violations: Vec<StageWitness>,
    pub policy_checks: usize,
    pub policy_violations: Vec<PolicyWitness>,
}

impl PotentialReport {
    pub fn stage_passed(&self) -> bool {
        self.stage_violations.is_empty()
    }

    pub fn policy_passed(&self) -> bool {
        self.policy_violations.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.stage_passed() && self.policy_passed()
    }
}

pub const STAGE_POTENTIAL_TOL: f64 = 1e-9;
pub const POLICY_POTENTIAL_TOL: f64 = 1e-8;
const MAX_WITNESSES: usize = 16;

/// Checks that unilateral reward differences match potential differences,
/// first stage by stage, then on total returns for `trials` random policy pairs.
///
/// The stage check is exhaustive when the enumeration fits under the cap,
/// otherwise `trials` random quadruples are drawn.
pub fn verify_potential(
    game: &GameDefinition,
    trials: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<PotentialReport> {
    if !game.has_potential() {
        return Err(Error::MissingPotential);
    }
    let n = game.num_agents();
    let space = game.joint_space();
    let with_actions = game.oracle().depends_on_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let action_factor = |k: usize| if with_actions { k as u128 } else { 1 };
    let deviations: u128 = game
        .spaces()
        .iter()
        .map(|s| s.num_states as u128 * action_factor(s.num_actions))
        .sum();
    let profiles = game.spaces().iter().fold(1u128, |acc, s| {
        acc.saturating_mul(s.num_states as u128 * action_factor(s.num_actions))
    });
    let exhaustive = (game.horizon() as u128)
        .saturating_mul(profiles)
        .saturating_mul(deviations)
        <= opts.cap;

    let mut stage_checks = 0;
    let mut stage_violations = Vec::new();
    let mut check = |h: usize, i: usize, states: &[usize], actions: &[usize], s2: usize, a2: usize| {
        let mut dev_states = states.to_vec();
        let mut dev_actions = actions.to_vec();
        dev_states[i] = s2;
        dev_actions[i] = a2;
        let dr = game.reward(i, h, &dev_states, &dev_actions) - game.reward(i, h, states, actions);
        let dp = game.potential(h, &dev_states, &dev_actions).unwrap_or(0.0)
            - game.potential(h, states, actions).unwrap_or(0.0);
        stage_checks += 1;
        if (dr - dp).abs() > STAGE_POTENTIAL_TOL && stage_violations.len() < MAX_WITNESSES {
            stage_violations.push(StageWitness {
                stage: h,
                agent: i,
                states: states.to_vec(),
                actions: actions.to_vec(),
                deviation_state: s2,
                deviation_action: a2,
                reward_diff: dr,
                potential_diff: dp,
            });
        }
    };

    if exhaustive {
        let mut states = vec![0; n];
        let mut actions = vec![0; n];
        let action_count = if with_actions { space.num_joint_actions() } else { 1 };
        for h in 0..game.horizon() {
            for js in 0..space.num_joint_states() {
                space.decode_state(js, &mut states);
                for ja in 0..action_count {
                    space.decode_action(ja, &mut actions);
                    for i in 0..n {
                        let sp = game.space(i);
                        let na = if with_actions { sp.num_actions } else { 1 };
                        for s2 in 0..sp.num_states {
                            for a2 in 0..na {
                                check(h, i, &states, &actions, s2, a2);
                            }
                        }
                    }
                }
            }
        }
    } else {
        for _ in 0..trials {
            let h = rng.random_range(0..game.horizon());
            let states: Vec<usize> = game.spaces().iter().map(|s| rng.random_range(0..s.num_states)).collect();
            let actions: Vec<usize> = game.spaces().iter().map(|s| rng.random_range(0..s.num_actions)).collect();
            let i = rng.random_range(0..n);
            let s2 = rng.random_range(0..game.space(i).num_states);
            let a2 = rng.random_range(0..game.space(i).num_actions);
            check(h, i, &states, &actions, s2, a2);
        }
    }

    let mut policy_violations = Vec::new();
    for trial in 0..trials {
        let base = crate::policy::random_joint_policy(game, &mut rng);
        let i = trial % n;
        let other = crate::policy::random_joint_policy(game, &mut rng);
        let deviated = base.with_agent(i, other.agent(i).clone());
        let before = expected_return(game, &base, opts)?;
        let after = expected_return(game, &deviated, opts)?;
        let dj = after.returns[i] - before.returns[i];
        let dp = after.potential.unwrap_or(0.0) - before.potential.unwrap_or(0.0);
        if (dj - dp).abs() > POLICY_POTENTIAL_TOL && policy_violations.len() < MAX_WITNESSES {
            policy_violations.push(PolicyWitness {
                trial,
                agent: i,
                return_diff: dj,
                potential_diff: dp,
            });
        }
    }

    Ok(PotentialReport {
        stage_exhaustive: exhaustive,
        stage_checks,
        stage_violations,
        policy_checks: trials,
        policy_violations,
    })
}
