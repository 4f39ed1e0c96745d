//! Trajectory sampling and the sample-based estimators of the transition
//! kernels, averaged rewards and averaged Q-functions.
//!
//! Randomness is counter-based: every (episode, agent) pair gets its own
//! generator whose seed is a SplitMix64 mix of `(master_seed, stream,
//! episode, agent)`. Batches are therefore identical regardless of how
//! episodes are scheduled across worker threads.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::local_bellman;
use crate::game::{GameDefinition, TransitionKernel};
use crate::policy::{JointPolicy, LocalPolicy};
use crate::table::LocalTable;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    /// Distinguishes independent datasets drawn from the same master seed.
    pub stream: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self { master_seed, stream }
    }

    pub fn sub_seed(&self, episode: u64, agent: u64) -> u64 {
        let mut z = splitmix64(self.master_seed);
        z = splitmix64(z ^ self.stream);
        z = splitmix64(z ^ episode);
        splitmix64(z ^ agent.wrapping_mul(0xD6E8_FEB8_6659_FD93))
    }

    pub fn episode_rng(&self, episode: usize, agent: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.sub_seed(episode as u64, agent as u64))
    }

    /// Stream for dataset `index` of kind `tag` (e.g. one per iteration).
    pub fn derive(&self, tag: u64, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream: splitmix64(splitmix64(self.stream ^ tag) ^ index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProvenance {
    pub policy: String,
    pub episodes: usize,
    pub rng: RngSpec,
}

/// `T` episodes, each holding every agent's visited `(s_h, a_h)` for all stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    num_agents: usize,
    horizon: usize,
    /// Indexed `((k * n + i) * H + h)`.
    states: Vec<usize>,
    actions: Vec<usize>,
    pub provenance: BatchProvenance,
}

impl TrajectoryBatch {
    pub fn num_episodes(&self) -> usize {
        self.provenance.episodes
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn index(&self, episode: usize, agent: usize, stage: usize) -> usize {
        (episode * self.num_agents + agent) * self.horizon + stage
    }

    pub fn state(&self, episode: usize, agent: usize, stage: usize) -> usize {
        self.states[self.index(episode, agent, stage)]
    }

    pub fn action(&self, episode: usize, agent: usize, stage: usize) -> usize {
        self.actions[self.index(episode, agent, stage)]
    }

    /// Fills the joint state and action of episode `k` at stage `h`.
    pub fn joint_step(&self, episode: usize, stage: usize, states: &mut [usize], actions: &mut [usize]) {
        for i in 0..self.num_agents {
            let idx = self.index(episode, i, stage);
            states[i] = self.states[idx];
            actions[i] = self.actions[idx];
        }
    }

    /// Columnar text dump: one `episode,agent,horizon,state,action` row per step,
    /// horizon 1-based, preceded by `#` provenance lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        let _ = writeln!(out, "# policy={}", p.policy);
        let _ = writeln!(out, "# episodes={}", p.episodes);
        let _ = writeln!(out, "# agents={}", self.num_agents);
        let _ = writeln!(out, "# horizon={}", self.horizon);
        let _ = writeln!(out, "# master_seed={}", p.rng.master_seed);
        let _ = writeln!(out, "# stream={}", p.rng.stream);
        out.push_str("episode,agent,horizon,state,action\n");
        for k in 0..self.num_episodes() {
            for i in 0..self.num_agents {
                for h in 0..self.horizon {
                    let _ = writeln!(out, "{k},{i},{},{},{}", h + 1, self.state(k, i, h), self.action(k, i, h));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !saw_header {
                if line != "episode,agent,horizon,state,action" {
                    return Err(Error::Parse(format!("line {}: unexpected header {line:?}", lineno + 1)));
                }
                saw_header = true;
                continue;
            }
            let fields: std::result::Result<Vec<usize>, _> = line.split(',').map(|f| f.trim().parse()).collect();
            match fields {
                Ok(f) if f.len() == 5 => rows.push(f),
                _ => return Err(Error::Parse(format!("line {}: bad row {line:?}", lineno + 1))),
            }
        }
        let get = |key: &str| -> Result<String> {
            meta.get(key)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("missing provenance field {key}")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| Error::Parse(format!("bad provenance field {key}")))
        };
        let episodes = num("episodes")? as usize;
        let num_agents = num("agents")? as usize;
        let horizon = num("horizon")? as usize;
        let total = episodes * num_agents * horizon;
        if rows.len() != total {
            return Err(Error::Parse(format!("expected {total} rows, found {}", rows.len())));
        }
        let mut batch = TrajectoryBatch {
            num_agents,
            horizon,
            states: vec![0; total],
            actions: vec![0; total],
            provenance: BatchProvenance {
                policy: get("policy")?,
                episodes,
                rng: RngSpec::new(num("master_seed")?, num("stream")?),
            },
        };
        for row in rows {
            let (k, i, h) = (row[0], row[1], row[2]);
            if k >= episodes || i >= num_agents || h == 0 || h > horizon {
                return Err(Error::Parse(format!("row index out of range: {row:?}")));
            }
            let idx = batch.index(k, i, h - 1);
            batch.states[idx] = row[3];
            batch.actions[idx] = row[4];
        }
        Ok(batch)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_csv(&text)
    }

    /// Every recorded index lies inside the game's spaces.
    pub fn is_consistent_with(&self, game: &GameDefinition) -> bool {
        self.num_agents == game.num_agents()
            && self.horizon == game.horizon()
            && (0..self.num_episodes()).all(|k| {
                (0..self.num_agents).all(|i| {
                    let sp = game.space(i);
                    (0..self.horizon)
                        .all(|h| self.state(k, i, h) < sp.num_states && self.action(k, i, h) < sp.num_actions)
                })
            })
    }
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn sample_trajectory(
    game: &GameDefinition,
    policy: &LocalPolicy,
    agent: usize,
    rng: &mut ChaCha8Rng,
    states: &mut [usize],
    actions: &mut [usize],
) {
    let kernel = game.kernel(agent);
    let mut s = sample_index(game.initial(agent), rng.random());
    for h in 0..game.horizon() {
        let a = sample_index(policy.row(h, s), rng.random());
        states[h] = s;
        actions[h] = a;
        if h + 1 < game.horizon() {
            s = sample_index(kernel.row(h, s, a), rng.random());
        }
    }
}

/// Draws `count` episodes; each agent moves through its own kernel independently.
pub fn sample_episodes(
    game: &GameDefinition,
    policy: &JointPolicy,
    count: usize,
    rng: RngSpec,
) -> Result<TrajectoryBatch> {
    sample_episodes_labeled(game, policy, count, rng, "unlabeled")
}

pub fn sample_episodes_labeled(
    game: &GameDefinition,
    policy: &JointPolicy,
    count: usize,
    rng: RngSpec,
    label: &str,
) -> Result<TrajectoryBatch> {
    if count == 0 {
        return Err(Error::InvalidParameter("episode count must be at least 1".into()));
    }
    policy.check_against(game)?;
    let n = game.num_agents();
    let horizon = game.horizon();
    let per_episode: Vec<(Vec<usize>, Vec<usize>)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut states = vec![0; n * horizon];
            let mut actions = vec![0; n * horizon];
            for i in 0..n {
                let mut r = rng.episode_rng(k, i);
                let range = i * horizon..(i + 1) * horizon;
                sample_trajectory(
                    game,
                    policy.agent(i),
                    i,
                    &mut r,
                    &mut states[range.clone()],
                    &mut actions[range],
                );
            }
            (states, actions)
        })
        .collect();
    let mut states = Vec::with_capacity(count * n * horizon);
    let mut actions = Vec::with_capacity(count * n * horizon);
    for (s, a) in per_episode {
        states.extend(s);
        actions.extend(a);
    }
    Ok(TrajectoryBatch {
        num_agents: n,
        horizon,
        states,
        actions,
        provenance: BatchProvenance {
            policy: label.to_string(),
            episodes: count,
            rng,
        },
    })
}

/// Estimated kernels plus `visits[i][h][s * A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub kernels: Vec<TransitionKernel>,
    pub visits: Vec<Vec<Vec<usize>>>,
}

impl TransitionEstimate {
    /// Number of `(i, h, s, a)` cells that fell back to the self-loop row.
    pub fn unvisited_cells(&self) -> usize {
        self.visits.iter().flatten().flatten().filter(|&&c| c == 0).count()
    }
}

/// Count ratios `count(s, a, s') / count(s, a)`; unvisited `(s, a)` rows become
/// the self-loop indicator.
pub fn estimate_transitions(game: &GameDefinition, batch: &TrajectoryBatch) -> Result<TransitionEstimate> {
    if batch.num_agents() != game.num_agents() || batch.horizon() != game.horizon() {
        return Err(Error::Shape("batch does not match the game".into()));
    }
    let layers = game.horizon() - 1;
    let mut kernels = Vec::with_capacity(game.num_agents());
    let mut visits = Vec::with_capacity(game.num_agents());
    for i in 0..game.num_agents() {
        let sp = game.space(i);
        let (ns, na) = (sp.num_states, sp.num_actions);
        let mut counts = vec![vec![0usize; ns * na * ns]; layers];
        let mut totals = vec![vec![0usize; ns * na]; layers];
        for k in 0..batch.num_episodes() {
            for h in 0..layers {
                let (s, a, sn) = (batch.state(k, i, h), batch.action(k, i, h), batch.state(k, i, h + 1));
                counts[h][(s * na + a) * ns + sn] += 1;
                totals[h][s * na + a] += 1;
            }
        }
        let tables = (0..layers)
            .map(|h| {
                let mut table = vec![0.0; ns * na * ns];
                for s in 0..ns {
                    for a in 0..na {
                        let total = totals[h][s * na + a];
                        let row = &mut table[(s * na + a) * ns..(s * na + a + 1) * ns];
                        if total == 0 {
                            row[s] = 1.0;
                        } else {
                            for (sn, slot) in row.iter_mut().enumerate() {
                                *slot = counts[h][(s * na + a) * ns + sn] as f64 / total as f64;
                            }
                        }
                    }
                }
                table
            })
            .collect();
        kernels.push(TransitionKernel::new(ns, na, tables)?);
        visits.push(totals);
    }
    Ok(TransitionEstimate { kernels, visits })
}

/// Estimated averaged rewards of one agent plus `state_visits[h][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardEstimate {
    pub table: LocalTable,
    pub state_visits: Vec<Vec<usize>>,
}

impl RewardEstimate {
    pub fn unvisited_states(&self) -> usize {
        self.state_visits.iter().flatten().filter(|&&c| c == 0).count()
    }
}

/// For every `(s_i, a_i)`: mean over episodes that visited `s_i` at stage `h` of the
/// counterfactual reward with agent `i`'s action replaced by `a_i`; zero when
/// `s_i` was never visited.
///
/// The batch must have been drawn under the policy whose averaged rewards are
/// being estimated. The sampled own action is discarded.
pub fn estimate_averaged_reward(game: &GameDefinition, batch: &TrajectoryBatch, agent: usize) -> Result<RewardEstimate> {
    if batch.num_agents() != game.num_agents() || batch.horizon() != game.horizon() {
        return Err(Error::Shape("batch does not match the game".into()));
    }
    let n = game.num_agents();
    let sp = game.space(agent);
    let (ns, na) = (sp.num_states, sp.num_actions);
    let with_actions = game.oracle().depends_on_actions();
    let mut table = LocalTable::zeros(ns, na, game.horizon());
    let mut state_visits = vec![vec![0usize; ns]; game.horizon()];
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    for h in 0..game.horizon() {
        let mut sums = vec![0.0; ns * na];
        for k in 0..batch.num_episodes() {
            batch.joint_step(k, h, &mut states, &mut actions);
            let s = states[agent];
            state_visits[h][s] += 1;
            if with_actions {
                for a in 0..na {
                    actions[agent] = a;
                    sums[s * na + a] += game.reward(agent, h, &states, &actions);
                }
            } else {
                let r = game.reward(agent, h, &states, &actions);
                for a in 0..na {
                    sums[s * na + a] += r;
                }
            }
        }
        for s in 0..ns {
            let count = state_visits[h][s];
            if count > 0 {
                for a in 0..na {
                    table.set(h, s, a, sums[s * na + a] / count as f64);
                }
            }
        }
    }
    Ok(RewardEstimate { table, state_visits })
}

/// Backward dynamic programming with the estimated kernel and rewards.
pub fn estimate_averaged_q(
    policy: &LocalPolicy,
    p_hat: &TransitionKernel,
    r_hat: &LocalTable,
) -> Result<LocalTable> {
    let shapes_match = p_hat.num_states() == r_hat.num_states()
        && p_hat.num_actions() == r_hat.num_actions()
        && policy.num_states() == r_hat.num_states()
        && policy.num_actions() == r_hat.num_actions()
        && policy.horizon() == r_hat.horizon()
        && p_hat.num_layers() + 1 == r_hat.horizon();
    if !shapes_match {
        return Err(Error::Shape("estimated kernel, rewards and policy disagree".into()));
    }
    Ok(local_bellman(p_hat, policy, r_hat))
}

/// Largest sup-norm error of the estimated Q at each stage implied by input errors
/// `eps_r` (rewards) and `eps_p` (kernel entries).
///
/// With stage `h` 0-based this is `eps_r (H - h) + eps_p H (H - h) |S| scale`,
/// where `scale` bounds the absolute stage reward (1 for rewards in [0, 1]).
pub fn q_error_bound(eps_r: f64, eps_p: f64, horizon: usize, stage: usize, num_states: usize, reward_scale: f64) -> f64 {
    let remaining = (horizon - stage) as f64;
    eps_r * remaining + eps_p * horizon as f64 * remaining * num_states as f64 * reward_scale
}

/// Estimated kernels, averaged rewards and averaged Q-functions for every agent.
#[derive(Debug, Clone)]
pub struct EstimatedModel {
    pub transitions: TransitionEstimate,
    pub rewards: Vec<RewardEstimate>,
    pub q_hat: Vec<LocalTable>,
    pub pre_provenance: BatchProvenance,
    pub on_policy_provenance: Vec<BatchProvenance>,
}

impl EstimatedModel {
    pub fn unvisited_reward_states(&self) -> usize {
        self.rewards.iter().map(|r| r.unvisited_states()).sum()
    }
}

/// Reward and Q estimates for each agent from its on-policy batch.
///
/// `on_policy[i]` is the batch used for agent `i`; pass the same batch for
/// every agent to share one dataset.
pub fn estimate_model(
    game: &GameDefinition,
    policy: &JointPolicy,
    transitions: &TransitionEstimate,
    pre_provenance: &BatchProvenance,
    on_policy: &[&TrajectoryBatch],
) -> Result<EstimatedModel> {
    if on_policy.len() != game.num_agents() {
        return Err(Error::Shape("one on-policy batch per agent required".into()));
    }
    let rewards: Vec<RewardEstimate> = (0..game.num_agents())
        .into_par_iter()
        .map(|i| estimate_averaged_reward(game, on_policy[i], i))
        .collect::<Result<_>>()?;
    let q_hat = (0..game.num_agents())
        .map(|i| estimate_averaged_q(policy.agent(i), &transitions.kernels[i], &rewards[i].table))
        .collect::<Result<_>>()?;
    Ok(EstimatedModel {
        transitions: transitions.clone(),
        rewards,
        q_hat,
        pre_provenance: pre_provenance.clone(),
        on_policy_provenance: on_policy.iter().map(|b| b.provenance.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{averaged_q, EvalOptions};
    use crate::game::{micro_g1, tabular_game, AgentSpace, TabularOracle};
    use crate::joint::JointSpace;
    use crate::policy::uniform_policy;

    /// Two states, one action; from either state move to state 1 w.p. 0.75.
    fn biased_chain(horizon: usize) -> GameDefinition {
        let space = JointSpace::new(vec![2], vec![1]);
        let oracle =
            TabularOracle::new(space, vec![vec![vec![0.0, 1.0]; horizon]], vec![vec![0.0, 1.0]; horizon], None)
                .unwrap();
        let kernel = TransitionKernel::stationary(2, 1, vec![0.25, 0.75, 0.25, 0.75], horizon - 1).unwrap();
        tabular_game(vec![AgentSpace::new(2, 1)], horizon, vec![kernel], vec![vec![1.0, 0.0]], oracle).unwrap()
    }

    #[test]
    fn deterministic_setting_gives_identical_episodes() {
        let game = micro_g1();
        let pi = JointPolicy::new(vec![LocalPolicy::deterministic(1, 2, &[vec![1]])]);
        let batch = sample_episodes(&game, &pi, 50, RngSpec::new(1, 2)).unwrap();
        assert!((0..50).all(|k| batch.state(k, 0, 0) == 0 && batch.action(k, 0, 0) == 1));
    }

    #[test]
    fn same_seed_same_batch() {
        let game = biased_chain(4);
        let pi = uniform_policy(&game);
        let a = sample_episodes(&game, &pi, 200, RngSpec::new(9, 1)).unwrap();
        let b = sample_episodes(&game, &pi, 200, RngSpec::new(9, 1)).unwrap();
        assert_eq!(a, b);
        let c = sample_episodes(&game, &pi, 200, RngSpec::new(9, 2)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn empirical_frequency_matches_kernel() {
        let game = biased_chain(2);
        let batch = sample_episodes(&game, &uniform_policy(&game), 10_000, RngSpec::new(5, 0)).unwrap();
        let hits = (0..10_000).filter(|&k| batch.state(k, 0, 1) == 1).count();
        assert!((hits as f64 / 1e4 - 0.75).abs() < 0.02);
    }

    #[test]
    fn zero_episodes_rejected() {
        let game = micro_g1();
        assert!(sample_episodes(&game, &uniform_policy(&game), 0, RngSpec::new(0, 0)).is_err());
    }

    fn handmade_batch(states: Vec<usize>, actions: Vec<usize>, episodes: usize, horizon: usize) -> TrajectoryBatch {
        TrajectoryBatch {
            num_agents: 1,
            horizon,
            states,
            actions,
            provenance: BatchProvenance {
                policy: "test".into(),
                episodes,
                rng: RngSpec::new(0, 0),
            },
        }
    }

    #[test]
    fn transition_counts_and_fallback() {
        let game = biased_chain(2);
        // 3 of 4 episodes go 0 -> 1; state 1 is never visited at stage 0
        let batch = handmade_batch(vec![0, 1, 0, 1, 0, 1, 0, 0], vec![0; 8], 4, 2);
        let est = estimate_transitions(&game, &batch).unwrap();
        assert_eq!(est.kernels[0].row(0, 0, 0), &[0.25, 0.75]);
        assert_eq!(est.kernels[0].row(0, 1, 0), &[0.0, 1.0]);
        assert_eq!(est.unvisited_cells(), 1);
    }

    #[test]
    fn unvisited_reward_state_is_zero() {
        let game = biased_chain(2);
        let batch = handmade_batch(vec![0, 1, 0, 1], vec![0; 4], 2, 2);
        let est = estimate_averaged_reward(&game, &batch, 0).unwrap();
        assert_eq!(est.table.get(0, 1, 0), 0.0);
        assert_eq!(est.state_visits[0], vec![2, 0]);
        assert_eq!(est.table.get(1, 1, 0), 1.0);
    }

    #[test]
    fn single_agent_reward_estimate_is_exact_on_visited_states() {
        let game = micro_g1();
        let batch = sample_episodes(&game, &uniform_policy(&game), 10, RngSpec::new(3, 3)).unwrap();
        let est = estimate_averaged_reward(&game, &batch, 0).unwrap();
        assert!((est.table.get(0, 0, 0) - 0.3).abs() < 1e-12);
        assert!((est.table.get(0, 0, 1) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn exact_inputs_reproduce_averaged_q() {
        let game = biased_chain(4);
        let pi = uniform_policy(&game);
        let exact = averaged_q(&game, &pi, 0, &EvalOptions::default()).unwrap();
        let q = estimate_averaged_q(pi.agent(0), game.kernel(0), &exact.rbar).unwrap();
        assert!(q.max_abs_diff(&exact.qbar) < 1e-12);
        let h1 = micro_g1();
        let r = LocalTable::from_layers(1, 2, vec![vec![0.3, 0.7]]);
        let q1 = estimate_averaged_q(uniform_policy(&h1).agent(0), h1.kernel(0), &r).unwrap();
        assert_eq!(q1, r);
    }

    #[test]
    fn csv_round_trip() {
        let game = biased_chain(3);
        let batch = sample_episodes_labeled(&game, &uniform_policy(&game), 7, RngSpec::new(11, 4), "uniform").unwrap();
        let back = TrajectoryBatch::from_csv(&batch.to_csv()).unwrap();
        assert_eq!(back, batch);
        assert!(back.is_consistent_with(&game));
        assert!(TrajectoryBatch::from_csv("episode,agent\n").is_err());
    }

    #[test]
    fn sub_seeds_differ_per_tuple() {
        let spec = RngSpec::new(42, 7);
        let seeds: std::collections::HashSet<u64> =
            (0..50).flat_map(|k| (0..4).map(move |i| spec.sub_seed(k, i))).collect();
        assert_eq!(seeds.len(), 200);
    }
}
