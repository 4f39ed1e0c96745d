//! Finite-horizon Markov games with decoupled per-agent dynamics.
//!
//! Each agent `i` owns a local state space `S_i`, a local action space `A_i`,
//! a transition kernel `P_{i,h}(s' | s, a)` and an initial distribution
//! `rho_i`. Rewards may couple agents: they are queried through a
//! [`GameOracle`] on the joint state and joint action.
//!
//! Stages are indexed `0..horizon`; stage `h` corresponds to horizon `h + 1`
//! in the usual 1-based notation. Kernels exist for stages `0..horizon - 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::JointSpace;

const ROW_TOL: f64 = 1e-12;

/// Local state and action space of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpace {
    pub num_states: usize,
    pub num_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
}

impl AgentSpace {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            state_labels: None,
            action_labels: None,
        }
    }

    pub fn with_labels(mut self, states: Vec<String>, actions: Vec<String>) -> Self {
        self.state_labels = Some(states);
        self.action_labels = Some(actions);
        self
    }
}

/// `P[h][s][a][s']` for one agent, stored densely per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    layers: Vec<Vec<f64>>,
}

impl TransitionKernel {
    /// `layers[h]` is the flattened `[s][a][s']` table for stage `h`.
    pub fn new(num_states: usize, num_actions: usize, layers: Vec<Vec<f64>>) -> Result<Self> {
        let expected = num_states * num_actions * num_states;
        for (h, layer) in layers.iter().enumerate() {
            if layer.len() != expected {
                return Err(Error::Shape(format!(
                    "kernel layer {h} has {} entries, expected {expected}",
                    layer.len()
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            layers,
        })
    }

    /// Same kernel at every one of `num_layers` stages.
    pub fn stationary(
        num_states: usize,
        num_actions: usize,
        table: Vec<f64>,
        num_layers: usize,
    ) -> Result<Self> {
        Self::new(num_states, num_actions, vec![table; num_layers])
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.layers[h][start..start + self.num_states]
    }

    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.layers[h][start..start + self.num_states]
    }

    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.row(h, s, a)[next]
    }

    pub fn layer(&self, h: usize) -> &[f64] {
        &self.layers[h]
    }

    /// Largest entrywise difference between two kernels of the same shape.
    pub fn max_abs_diff(&self, other: &TransitionKernel) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Reward, welfare and (optional) stage-potential queries on joint profiles.
///
/// Implementations must be pure: equal arguments give bitwise-equal results,
/// and any joint state is a legal argument, including profiles where one
/// agent's coordinate was substituted counterfactually.
pub trait GameOracle: Send + Sync {
    fn reward(&self, agent: usize, stage: usize, states: &[usize], actions: &[usize]) -> f64;

    fn welfare(&self, stage: usize, states: &[usize], actions: &[usize]) -> f64;

    fn has_potential(&self) -> bool {
        false
    }

    fn potential(&self, _stage: usize, _states: &[usize], _actions: &[usize]) -> Option<f64> {
        None
    }

    /// When false, reward, welfare and potential ignore the action arguments,
    /// which lets exact evaluation marginalise actions away.
    fn depends_on_actions(&self) -> bool {
        true
    }
}

/// A decoupled finite-horizon Markov game.
#[derive(Clone)]
pub struct GameDefinition {
    spaces: Vec<AgentSpace>,
    horizon: usize,
    kernels: Vec<TransitionKernel>,
    initial: Vec<Vec<f64>>,
    reward_range: (f64, f64),
    oracle: Arc<dyn GameOracle>,
}

impl fmt::Debug for GameDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDefinition")
            .field("spaces", &self.spaces)
            .field("horizon", &self.horizon)
            .field("reward_range", &self.reward_range)
            .finish_non_exhaustive()
    }
}

impl GameDefinition {
    /// Checks shapes only; stochasticity is reported by [`validate_game`].
    pub fn new(
        spaces: Vec<AgentSpace>,
        horizon: usize,
        kernels: Vec<TransitionKernel>,
        initial: Vec<Vec<f64>>,
        reward_range: (f64, f64),
        oracle: Arc<dyn GameOracle>,
    ) -> Result<Self> {
        if spaces.is_empty() {
            return Err(Error::Shape("game needs at least one agent".into()));
        }
        if horizon == 0 {
            return Err(Error::Shape("horizon must be at least 1".into()));
        }
        if kernels.len() != spaces.len() || initial.len() != spaces.len() {
            return Err(Error::Shape(format!(
                "{} agents but {} kernels and {} initial distributions",
                spaces.len(),
                kernels.len(),
                initial.len()
            )));
        }
        for (i, ((space, kernel), rho)) in spaces.iter().zip(&kernels).zip(&initial).enumerate() {
            if space.num_states == 0 || space.num_actions == 0 {
                return Err(Error::Shape(format!("agent {i} has an empty space")));
            }
            if kernel.num_states() != space.num_states
                || kernel.num_actions() != space.num_actions
            {
                return Err(Error::Shape(format!("agent {i} kernel does not match its space")));
            }
            if kernel.num_layers() != horizon - 1 {
                return Err(Error::Shape(format!(
                    "agent {i} kernel has {} layers, expected {}",
                    kernel.num_layers(),
                    horizon - 1
                )));
            }
            if rho.len() != space.num_states {
                return Err(Error::Shape(format!(
                    "agent {i} initial distribution has length {}, expected {}",
                    rho.len(),
                    space.num_states
                )));
            }
        }
        if !(reward_range.0 <= reward_range.1) {
            return Err(Error::Shape(format!("bad reward range {reward_range:?}")));
        }
        Ok(Self {
            spaces,
            horizon,
            kernels,
            initial,
            reward_range,
            oracle,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.spaces.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn spaces(&self) -> &[AgentSpace] {
        &self.spaces
    }

    pub fn space(&self, agent: usize) -> &AgentSpace {
        &self.spaces[agent]
    }

    pub fn kernel(&self, agent: usize) -> &TransitionKernel {
        &self.kernels[agent]
    }

    pub fn kernels(&self) -> &[TransitionKernel] {
        &self.kernels
    }

    pub fn initial(&self, agent: usize) -> &[f64] {
        &self.initial[agent]
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_range
    }

    /// Largest absolute stage reward allowed by the declared range.
    pub fn reward_scale(&self) -> f64 {
        self.reward_range.0.abs().max(self.reward_range.1.abs())
    }

    pub fn oracle(&self) -> &Arc<dyn GameOracle> {
        &self.oracle
    }

    pub fn reward(&self, agent: usize, stage: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.oracle.reward(agent, stage, states, actions)
    }

    pub fn welfare(&self, stage: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.oracle.welfare(stage, states, actions)
    }

    pub fn potential(&self, stage: usize, states: &[usize], actions: &[usize]) -> Option<f64> {
        self.oracle.potential(stage, states, actions)
    }

    pub fn has_potential(&self) -> bool {
        self.oracle.has_potential()
    }

    pub fn joint_space(&self) -> JointSpace {
        JointSpace::new(
            self.spaces.iter().map(|s| s.num_states).collect(),
            self.spaces.iter().map(|s| s.num_actions).collect(),
        )
    }

    /// Same dynamics with a different oracle.
    pub fn with_oracle(&self, oracle: Arc<dyn GameOracle>) -> Self {
        Self {
            oracle,
            ..self.clone()
        }
    }
}

/// One invariant violation found by [`validate_game`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub agent: Option<usize>,
    pub stage: Option<usize>,
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(i) = self.agent {
            parts.push(format!("agent {i}"));
        }
        if let Some(h) = self.stage {
            parts.push(format!("stage {h}"));
        }
        if let Some(s) = self.state {
            parts.push(format!("state {s}"));
        }
        if let Some(a) = self.action {
            parts.push(format!("action {a}"));
        }
        if parts.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", parts.join(", "), self.message)
        }
    }
}

fn check_distribution(row: &[f64]) -> Option<String> {
    if let Some(bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Some(format!("entry {bad} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Some(format!("sum {sum}"));
    }
    None
}

/// Lists every violated invariant; an empty list means the game is well formed.
pub fn validate_game(game: &GameDefinition) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, space) in game.spaces().iter().enumerate() {
        if let Some(labels) = &space.state_labels {
            if labels.len() != space.num_states {
                out.push(Violation {
                    agent: Some(i),
                    stage: None,
                    state: None,
                    action: None,
                    message: format!("{} state labels for {} states", labels.len(), space.num_states),
                });
            }
        }
        if let Some(labels) = &space.action_labels {
            if labels.len() != space.num_actions {
                out.push(Violation {
                    agent: Some(i),
                    stage: None,
                    state: None,
                    action: None,
                    message: format!(
                        "{} action labels for {} actions",
                        labels.len(),
                        space.num_actions
                    ),
                });
            }
        }
        if let Some(msg) = check_distribution(game.initial(i)) {
            out.push(Violation {
                agent: Some(i),
                stage: None,
                state: None,
                action: None,
                message: format!("initial distribution {msg}"),
            });
        }
        let kernel = game.kernel(i);
        for h in 0..kernel.num_layers() {
            for s in 0..space.num_states {
                for a in 0..space.num_actions {
                    if let Some(msg) = check_distribution(kernel.row(h, s, a)) {
                        out.push(Violation {
                            agent: Some(i),
                            stage: Some(h),
                            state: Some(s),
                            action: Some(a),
                            message: format!("transition row {msg}"),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Dense reward/welfare/potential tables over flattened joint profiles.
///
/// Intended for tiny games: tables have `horizon * |S| * |A|` entries where
/// `|S|`, `|A|` are the joint space sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularOracle {
    space: JointSpace,
    /// `rewards[i][h][profile]`
    rewards: Vec<Vec<Vec<f64>>>,
    /// `welfare[h][profile]`
    welfare: Vec<Vec<f64>>,
    potential: Option<Vec<Vec<f64>>>,
}

impl TabularOracle {
    pub fn new(
        space: JointSpace,
        rewards: Vec<Vec<Vec<f64>>>,
        welfare: Vec<Vec<f64>>,
        potential: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let profiles = space.num_profiles();
        let horizon = welfare.len();
        let check = |tables: &[Vec<f64>], label: &str| -> Result<()> {
            if tables.len() != horizon {
                return Err(Error::Shape(format!("{label} has {} stages", tables.len())));
            }
            for t in tables {
                if t.len() != profiles {
                    return Err(Error::Shape(format!(
                        "{label} stage table has {} entries, expected {profiles}",
                        t.len()
                    )));
                }
                if t.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(label.to_string()));
                }
            }
            Ok(())
        };
        if rewards.len() != space.num_agents() {
            return Err(Error::Shape("one reward table per agent required".into()));
        }
        for (i, r) in rewards.iter().enumerate() {
            check(r, &format!("reward table of agent {i}"))?;
        }
        check(&welfare, "welfare table")?;
        if let Some(p) = &potential {
            check(p, "potential table")?;
        }
        Ok(Self {
            space,
            rewards,
            welfare,
            potential,
        })
    }

    pub fn space(&self) -> &JointSpace {
        &self.space
    }

    pub fn rewards(&self) -> &[Vec<Vec<f64>>] {
        &self.rewards
    }

    pub fn welfare_tables(&self) -> &[Vec<f64>] {
        &self.welfare
    }

    pub fn potential_tables(&self) -> Option<&[Vec<f64>]> {
        self.potential.as_deref()
    }

    /// Smallest and largest reward entry.
    pub fn reward_bounds(&self) -> (f64, f64) {
        self.rewards
            .iter()
            .flatten()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }
}

impl GameOracle for TabularOracle {
    fn reward(&self, agent: usize, stage: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.rewards[agent][stage][self.space.profile_index(states, actions)]
    }

    fn welfare(&self, stage: usize, states: &[usize], actions: &[usize]) -> f64 {
        self.welfare[stage][self.space.profile_index(states, actions)]
    }

    fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    fn potential(&self, stage: usize, states: &[usize], actions: &[usize]) -> Option<f64> {
        self.potential
            .as_ref()
            .map(|p| p[stage][self.space.profile_index(states, actions)])
    }
}

/// Builds a game backed by dense tables, inferring the reward range from the entries.
pub fn tabular_game(
    spaces: Vec<AgentSpace>,
    horizon: usize,
    kernels: Vec<TransitionKernel>,
    initial: Vec<Vec<f64>>,
    oracle: TabularOracle,
) -> Result<GameDefinition> {
    let (lo, hi) = oracle.reward_bounds();
    GameDefinition::new(spaces, horizon, kernels, initial, (lo, hi), Arc::new(oracle))
}

/// The one-state, one-stage, two-action game with rewards 0.3 and 0.7.
pub fn micro_g1() -> GameDefinition {
    let space = JointSpace::new(vec![1], vec![2]);
    let oracle = TabularOracle::new(
        space,
        vec![vec![vec![0.3, 0.7]]],
        vec![vec![0.3, 0.7]],
        Some(vec![vec![0.3, 0.7]]),
    )
    .expect("static tables");
    let kernel = TransitionKernel::new(1, 2, vec![]).expect("static kernel");
    GameDefinition::new(
        vec![AgentSpace::new(1, 2)],
        1,
        vec![kernel],
        vec![vec![1.0]],
        (0.0, 1.0),
        Arc::new(oracle),
    )
    .expect("static game")
}
