//! Local and joint policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameDefinition;

/// `pi_h(a | s)` for one agent at every stage, each row a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPolicy {
    num_states: usize,
    num_actions: usize,
    /// `layers[h]` is the flattened `[s][a]` table.
    layers: Vec<Vec<f64>>,
}

impl LocalPolicy {
    pub fn new(num_states: usize, num_actions: usize, layers: Vec<Vec<f64>>) -> Result<Self> {
        for (h, layer) in layers.iter().enumerate() {
            if layer.len() != num_states * num_actions {
                return Err(Error::Shape(format!(
                    "policy layer {h} has {} entries, expected {}",
                    layer.len(),
                    num_states * num_actions
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            layers,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            num_states,
            num_actions,
            layers: vec![vec![p; num_states * num_actions]; horizon],
        }
    }

    /// Deterministic policy from `choice[h][s]`.
    pub fn deterministic(num_states: usize, num_actions: usize, choice: &[Vec<usize>]) -> Self {
        let layers = choice
            .iter()
            .map(|row| {
                let mut layer = vec![0.0; num_states * num_actions];
                for (s, &a) in row.iter().enumerate() {
                    layer[s * num_actions + a] = 1.0;
                }
                layer
            })
            .collect();
        Self {
            num_states,
            num_actions,
            layers,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        &self.layers[h][s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let na = self.num_actions;
        &mut self.layers[h][s * na..(s + 1) * na]
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.layers[h][s * self.num_actions + a]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    fn same_shape(&self, other: &LocalPolicy) -> Result<()> {
        if self.num_states != other.num_states
            || self.num_actions != other.num_actions
            || self.layers.len() != other.layers.len()
        {
            return Err(Error::Shape(format!(
                "policies of shape {}x{}x{} and {}x{}x{}",
                self.layers.len(),
                self.num_states,
                self.num_actions,
                other.layers.len(),
                other.num_states,
                other.num_actions
            )));
        }
        Ok(())
    }

    /// Largest deviation of any row sum from 1, or `None` if some entry leaves [0, 1].
    pub fn max_row_error(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for layer in &self.layers {
            for row in layer.chunks(self.num_actions) {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return None;
                }
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        Some(worst)
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.max_row_error().is_some_and(|e| e <= tol)
    }
}

/// One local policy per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    agents: Vec<LocalPolicy>,
}

impl JointPolicy {
    pub fn new(agents: Vec<LocalPolicy>) -> Self {
        Self { agents }
    }

    /// Fails unless agent count and per-agent shapes match `game`.
    pub fn checked(agents: Vec<LocalPolicy>, game: &GameDefinition) -> Result<Self> {
        let policy = Self { agents };
        policy.check_against(game)?;
        Ok(policy)
    }

    pub fn check_against(&self, game: &GameDefinition) -> Result<()> {
        if self.agents.len() != game.num_agents() {
            return Err(Error::Shape(format!(
                "policy has {} agents, game has {}",
                self.agents.len(),
                game.num_agents()
            )));
        }
        for (i, (pi, space)) in self.agents.iter().zip(game.spaces()).enumerate() {
            if pi.num_states != space.num_states
                || pi.num_actions != space.num_actions
                || pi.horizon() != game.horizon()
            {
                return Err(Error::Shape(format!("policy of agent {i} does not match the game")));
            }
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &LocalPolicy {
        &self.agents[i]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut LocalPolicy {
        &mut self.agents[i]
    }

    pub fn agents(&self) -> &[LocalPolicy] {
        &self.agents
    }

    /// Copy with agent `i`'s policy replaced.
    pub fn with_agent(&self, i: usize, local: LocalPolicy) -> Self {
        let mut agents = self.agents.clone();
        agents[i] = local;
        Self { agents }
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.agents.iter().all(|p| p.is_row_stochastic(tol))
    }
}

pub fn uniform_policy(game: &GameDefinition) -> JointPolicy {
    JointPolicy::new(
        game.spaces()
            .iter()
            .map(|s| LocalPolicy::uniform(s.num_states, s.num_actions, game.horizon()))
            .collect(),
    )
}

/// Every row drawn from the flat Dirichlet distribution.
pub fn random_local_policy(num_states: usize, num_actions: usize, horizon: usize, rng: &mut impl Rng) -> LocalPolicy {
    let layers = (0..horizon)
        .map(|_| {
            let mut layer = Vec::with_capacity(num_states * num_actions);
            for _ in 0..num_states {
                let draws: Vec<f64> = (0..num_actions)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = draws.iter().sum();
                layer.extend(draws.iter().map(|x| x / total));
            }
            layer
        })
        .collect();
    LocalPolicy {
        num_states,
        num_actions,
        layers,
    }
}

pub fn random_joint_policy(game: &GameDefinition, rng: &mut impl Rng) -> JointPolicy {
    JointPolicy::new(
        game.spaces()
            .iter()
            .map(|s| random_local_policy(s.num_states, s.num_actions, game.horizon(), rng))
            .collect(),
    )
}

/// `max_s sum_a |p_h(a|s) - q_h(a|s)|` at stage `h`.
pub fn policy_l1_distance(p: &LocalPolicy, q: &LocalPolicy, h: usize) -> Result<f64> {
    p.same_shape(q)?;
    if h >= p.horizon() {
        return Err(Error::Shape(format!("stage {h} outside horizon {}", p.horizon())));
    }
    Ok((0..p.num_states)
        .map(|s| {
            p.row(h, s)
                .iter()
                .zip(q.row(h, s))
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max))
}

/// `(1 - eta) * base + eta * target`, row by row.
pub fn mix_policies(base: &LocalPolicy, target: &LocalPolicy, eta: f64) -> Result<LocalPolicy> {
    base.same_shape(target)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("mixing weight {eta} outside [0, 1]")));
    }
    let layers = base
        .layers
        .iter()
        .zip(&target.layers)
        .map(|(b, t)| b.iter().zip(t).map(|(x, y)| (1.0 - eta) * x + eta * y).collect())
        .collect();
    Ok(LocalPolicy {
        num_states: base.num_states,
        num_actions: base.num_actions,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::micro_g1;
    use proptest::prelude::*;

    fn single_row(row: &[f64]) -> LocalPolicy {
        LocalPolicy::new(1, row.len(), vec![row.to_vec()]).unwrap()
    }

    #[test]
    fn uniform_rows() {
        for (na, p) in [(2, 0.5), (4, 0.25), (1, 1.0)] {
            let pi = LocalPolicy::uniform(3, na, 2);
            for h in 0..2 {
                for s in 0..3 {
                    assert!(pi.row(h, s).iter().all(|&x| x == p));
                }
            }
        }
        let joint = uniform_policy(&micro_g1());
        assert_eq!(joint.agent(0).row(0, 0), &[0.5, 0.5]);
    }

    #[test]
    fn l1_distance_examples() {
        let a = single_row(&[1.0, 0.0]);
        let b = single_row(&[0.0, 1.0]);
        assert_eq!(policy_l1_distance(&a, &a, 0).unwrap(), 0.0);
        assert_eq!(policy_l1_distance(&a, &b, 0).unwrap(), 2.0);
        let c = single_row(&[0.5, 0.5]);
        let d = single_row(&[0.75, 0.25]);
        assert!((policy_l1_distance(&c, &d, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!(policy_l1_distance(&a, &single_row(&[1.0, 0.0, 0.0]), 0).is_err());
    }

    #[test]
    fn mix_examples() {
        let base = single_row(&[0.5, 0.5]);
        let target = single_row(&[1.0, 0.0]);
        assert_eq!(mix_policies(&base, &target, 0.0).unwrap(), base);
        assert_eq!(mix_policies(&base, &target, 1.0).unwrap(), target);
        assert_eq!(mix_policies(&base, &target, 0.5).unwrap().row(0, 0), &[0.75, 0.25]);
        assert!(mix_policies(&base, &target, 1.5).is_err());
        assert!(mix_policies(&base, &target, -0.1).is_err());
    }

    fn arb_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-3;
            let mut row: Vec<f64> = v.iter().map(|x| (x + 1e-3 / v.len() as f64) / s).collect();
            let head: f64 = row[1..].iter().sum();
            row[0] = 1.0 - head;
            row
        })
    }

    proptest! {
        #[test]
        fn mixing_preserves_stochasticity_and_moves_at_most_two_eta(
            base in arb_row(4), target in arb_row(4), eta in 0.0f64..=1.0
        ) {
            let b = single_row(&base);
            let t = single_row(&target);
            let m = mix_policies(&b, &t, eta).unwrap();
            prop_assert!(m.max_row_error().unwrap() <= 1e-12);
            prop_assert!(policy_l1_distance(&b, &m, 0).unwrap() <= 2.0 * eta + 1e-15);
        }
    }
}
