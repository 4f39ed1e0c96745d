//! JSON documents for tabular games, stage games and policies.
//!
//! A tabular game document looks like
//!
//! ```json
//! {
//!   "horizon": 2,
//!   "agents": [
//!     { "num_states": 2, "num_actions": 2, "initial": [1.0, 0.0],
//!       "transitions": [[[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]]] }
//!   ],
//!   "rewards": [[[0.0, 1.0, 0.5, 0.5], [1.0, 0.0, 0.0, 1.0]]],
//!   "welfare": [[0.0, 1.0, 0.5, 0.5], [1.0, 0.0, 0.0, 1.0]]
//! }
//! ```
//!
//! `transitions[h][s][a][s']` has `horizon - 1` layers. Reward, welfare and
//! potential tables are indexed `[h][profile]` (rewards `[i][h][profile]`),
//! where `profile = joint_state * |A_joint| + joint_action` and joint indices
//! are mixed radix with agent 0 most significant. `potential`, `reward_range`
//! and the label lists are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AgentSpace, GameDefinition, TabularOracle, TransitionKernel};
use crate::poa::StageGame;
use crate::policy::{JointPolicy, LocalPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub num_states: usize,
    pub num_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularGameDoc {
    pub horizon: usize,
    pub agents: Vec<AgentDoc>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub welfare: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_range: Option<[f64; 2]>,
}

fn kernel_from_doc(i: usize, agent: &AgentDoc) -> Result<TransitionKernel> {
    let (ns, na) = (agent.num_states, agent.num_actions);
    let mut layers = Vec::with_capacity(agent.transitions.len());
    for (h, layer) in agent.transitions.iter().enumerate() {
        if layer.len() != ns || layer.iter().any(|rows| rows.len() != na || rows.iter().any(|r| r.len() != ns)) {
            return Err(Error::Shape(format!("agent {i}: transition layer {h} must be {ns}x{na}x{ns}")));
        }
        layers.push(layer.iter().flatten().flatten().copied().collect());
    }
    TransitionKernel::new(ns, na, layers)
}

pub fn game_from_doc(doc: &TabularGameDoc) -> Result<GameDefinition> {
    let mut spaces = Vec::with_capacity(doc.agents.len());
    let mut kernels = Vec::with_capacity(doc.agents.len());
    for (i, a) in doc.agents.iter().enumerate() {
        let mut space = AgentSpace::new(a.num_states, a.num_actions);
        space.state_labels = a.state_labels.clone();
        space.action_labels = a.action_labels.clone();
        spaces.push(space);
        kernels.push(kernel_from_doc(i, a)?);
    }
    let joint = crate::joint::JointSpace::new(
        spaces.iter().map(|s| s.num_states).collect(),
        spaces.iter().map(|s| s.num_actions).collect(),
    );
    let oracle = TabularOracle::new(joint, doc.rewards.clone(), doc.welfare.clone(), doc.potential.clone())?;
    let range = match doc.reward_range {
        Some([lo, hi]) => (lo, hi),
        None => oracle.reward_bounds(),
    };
    GameDefinition::new(
        spaces,
        doc.horizon,
        kernels,
        doc.agents.iter().map(|a| a.initial.clone()).collect(),
        range,
        std::sync::Arc::new(oracle),
    )
}

/// Dense document of any game whose joint profile space fits under `cap` per stage.
pub fn doc_from_game(game: &GameDefinition, cap: u128) -> Result<TabularGameDoc> {
    let space = game.joint_space();
    let profiles = space.checked_profile_count(cap)?;
    let n = game.num_agents();
    let horizon = game.horizon();
    let mut rewards = vec![vec![vec![0.0; profiles]; horizon]; n];
    let mut welfare = vec![vec![0.0; profiles]; horizon];
    let mut potential = game.has_potential().then(|| vec![vec![0.0; profiles]; horizon]);
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    for h in 0..horizon {
        for p in 0..profiles {
            space.decode_profile(p, &mut states, &mut actions);
            for (i, r) in rewards.iter_mut().enumerate() {
                r[h][p] = game.reward(i, h, &states, &actions);
            }
            welfare[h][p] = game.welfare(h, &states, &actions);
            if let Some(pt) = potential.as_mut() {
                pt[h][p] = game.potential(h, &states, &actions).unwrap_or(0.0);
            }
        }
    }
    let agents = (0..n)
        .map(|i| {
            let sp = game.space(i);
            let k = game.kernel(i);
            AgentDoc {
                num_states: sp.num_states,
                num_actions: sp.num_actions,
                state_labels: sp.state_labels.clone(),
                action_labels: sp.action_labels.clone(),
                initial: game.initial(i).to_vec(),
                transitions: (0..k.num_layers())
                    .map(|h| {
                        (0..sp.num_states)
                            .map(|s| (0..sp.num_actions).map(|a| k.row(h, s, a).to_vec()).collect())
                            .collect()
                    })
                    .collect(),
            }
        })
        .collect();
    let (lo, hi) = game.reward_range();
    Ok(TabularGameDoc {
        horizon,
        agents,
        rewards,
        welfare,
        potential,
        reward_range: Some([lo, hi]),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_tabular_game(path: impl AsRef<Path>) -> Result<GameDefinition> {
    let path = path.as_ref();
    game_from_doc(&parse(path, &read(path)?)?)
}

pub fn save_tabular_game(path: impl AsRef<Path>, game: &GameDefinition, cap: u128) -> Result<()> {
    write_json(path.as_ref(), &doc_from_game(game, cap)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageGameDoc {
    pub strategy_counts: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
    pub welfare: Vec<f64>,
}

impl StageGameDoc {
    pub fn into_stage_game(self) -> Result<StageGame> {
        StageGame::new(self.strategy_counts, self.rewards, self.welfare)
    }
}

pub fn load_stage_game(path: impl AsRef<Path>) -> Result<StageGame> {
    let path = path.as_ref();
    parse::<StageGameDoc>(path, &read(path)?)?.into_stage_game()
}

pub fn save_policy(path: impl AsRef<Path>, policy: &JointPolicy) -> Result<()> {
    write_json(path.as_ref(), policy)
}

/// Loads a policy document, re-validating every layer's shape.
pub fn load_policy(path: impl AsRef<Path>) -> Result<JointPolicy> {
    let path = path.as_ref();
    let raw: JointPolicy = parse(path, &read(path)?)?;
    policy_checked(raw)
}

pub fn policy_from_json(text: &str) -> Result<JointPolicy> {
    let raw: JointPolicy = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    policy_checked(raw)
}

fn policy_checked(raw: JointPolicy) -> Result<JointPolicy> {
    let agents = raw
        .agents()
        .iter()
        .map(|p| LocalPolicy::new(p.num_states(), p.num_actions(), p.layers().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointPolicy::new(agents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::build_counterexample;
    use crate::eval::{ne_gap, EvalOptions};
    use crate::policy::uniform_policy;

    #[test]
    fn documented_example_parses() {
        let text = r#"{
          "horizon": 2,
          "agents": [
            { "num_states": 2, "num_actions": 2, "initial": [1.0, 0.0],
              "transitions": [[[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]]] }
          ],
          "rewards": [[[0.0, 1.0, 0.5, 0.5], [1.0, 0.0, 0.0, 1.0]]],
          "welfare": [[0.0, 1.0, 0.5, 0.5], [1.0, 0.0, 0.0, 1.0]]
        }"#;
        let doc: TabularGameDoc = serde_json::from_str(text).unwrap();
        let game = game_from_doc(&doc).unwrap();
        assert_eq!(game.horizon(), 2);
        assert_eq!(game.reward_range(), (0.0, 1.0));
        assert!(serde_json::from_str::<TabularGameDoc>(&text.replace("\"welfare\"", "\"welfre\"")).is_err());
    }

    #[test]
    fn round_trip_preserves_evaluation() {
        let game = build_counterexample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("game.json");
        save_tabular_game(&path, &game, 1_000_000).unwrap();
        let back = load_tabular_game(&path).unwrap();
        let pi = uniform_policy(&game);
        let a = ne_gap(&game, &pi, &EvalOptions::default()).unwrap();
        let b = ne_gap(&back, &pi, &EvalOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.space(0).state_labels, game.space(0).state_labels);
    }

    #[test]
    fn policy_round_trip_and_validation() {
        let game = build_counterexample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let pi = uniform_policy(&game);
        save_policy(&path, &pi).unwrap();
        assert_eq!(load_policy(&path).unwrap(), pi);
        let bad = r#"{"agents":[{"num_states":2,"num_actions":2,"layers":[[0.5,0.5,1.0]]}]}"#;
        assert!(matches!(policy_from_json(bad), Err(Error::Shape(_))));
        assert!(matches!(policy_from_json("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn ragged_kernel_rejected() {
        let doc = TabularGameDoc {
            horizon: 2,
            agents: vec![AgentDoc {
                num_states: 2,
                num_actions: 1,
                state_labels: None,
                action_labels: None,
                initial: vec![1.0, 0.0],
                transitions: vec![vec![vec![vec![1.0, 0.0]]]],
            }],
            rewards: vec![vec![vec![0.0; 2]; 2]],
            welfare: vec![vec![0.0; 2]; 2],
            potential: None,
            reward_range: None,
        };
        assert!(matches!(game_from_doc(&doc), Err(Error::Shape(_))));
    }
}
