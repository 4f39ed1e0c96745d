//! Dynamic covering game on an `N x N` grid.
//!
//! Each agent's local state is its cell (`row * N + col`); actions are
//! up, right, down, left. With probability `1 - slip` the chosen move is
//! executed, otherwise a uniformly random one of the four (which may be the
//! chosen one). Moves leaving the grid keep the agent in place. An agent
//! covers every cell within Chebyshev distance `coverage_radius`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AgentSpace, GameDefinition, GameOracle, TransitionKernel};

pub const ACTION_NAMES: [&str; 4] = ["up", "right", "down", "left"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[serde(alias = "ii")]
    IdenticalInterest,
    #[serde(alias = "mc")]
    MarginalContribution,
    #[serde(alias = "us")]
    UtilitySharing,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::IdenticalInterest, Design::MarginalContribution, Design::UtilitySharing];

    pub fn short_name(&self) -> &'static str {
        match self {
            Design::IdenticalInterest => "ii",
            Design::MarginalContribution => "mc",
            Design::UtilitySharing => "us",
        }
    }

    pub fn parse(name: &str) -> Option<Design> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "ii" | "identical_interest" => Some(Design::IdenticalInterest),
            "mc" | "marginal_contribution" => Some(Design::MarginalContribution),
            "us" | "utility_sharing" => Some(Design::UtilitySharing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Treasure {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Treasure {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Uniform over all cells for every agent.
    #[default]
    Uniform,
    /// One starting cell `[row, col]` per agent.
    Cells(Vec<[usize; 2]>),
    /// One distribution over the `N^2` cells per agent.
    Explicit(Vec<Vec<f64>>),
}

fn default_radius() -> usize {
    1
}

fn default_slip() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    pub grid_size: usize,
    pub treasures: Vec<Treasure>,
    pub num_agents: usize,
    pub horizon: usize,
    #[serde(default = "default_radius")]
    pub coverage_radius: usize,
    #[serde(default = "default_slip")]
    pub slip_prob: f64,
    pub design: Design,
    #[serde(default)]
    pub initial: InitialDistribution,
}

impl CoveringConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.grid_size == 0 {
            return bad("grid size must be positive".into());
        }
        if self.num_agents == 0 || self.horizon == 0 {
            return bad("agent count and horizon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return bad(format!("slip probability {} outside [0, 1]", self.slip_prob));
        }
        for t in &self.treasures {
            if t.row >= self.grid_size || t.col >= self.grid_size {
                return bad(format!("treasure at ({}, {}) outside the grid", t.row, t.col));
            }
            if !(t.value >= 0.0 && t.value.is_finite()) {
                return bad(format!("treasure at ({}, {}) has value {}", t.row, t.col, t.value));
            }
        }
        let cells = self.grid_size * self.grid_size;
        match &self.initial {
            InitialDistribution::Uniform => {}
            InitialDistribution::Cells(c) => {
                if c.len() != self.num_agents {
                    return bad(format!("{} starting cells for {} agents", c.len(), self.num_agents));
                }
                if c.iter().any(|p| p[0] >= self.grid_size || p[1] >= self.grid_size) {
                    return bad("starting cell outside the grid".into());
                }
            }
            InitialDistribution::Explicit(d) => {
                if d.len() != self.num_agents || d.iter().any(|row| row.len() != cells) {
                    return bad(format!("explicit initial distributions must be {} rows of {cells}", self.num_agents));
                }
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.grid_size + col
    }

    pub fn cell_position(&self, index: usize) -> (usize, usize) {
        (index / self.grid_size, index % self.grid_size)
    }

    pub fn total_treasure(&self) -> f64 {
        self.treasures.iter().map(|t| t.value).sum()
    }

    fn initial_distributions(&self) -> Vec<Vec<f64>> {
        let cells = self.num_cells();
        match &self.initial {
            InitialDistribution::Uniform => vec![vec![1.0 / cells as f64; cells]; self.num_agents],
            InitialDistribution::Cells(c) => c
                .iter()
                .map(|p| {
                    let mut d = vec![0.0; cells];
                    d[self.cell_index(p[0], p[1])] = 1.0;
                    d
                })
                .collect(),
            InitialDistribution::Explicit(d) => d.clone(),
        }
    }
}

/// Cells covered from one position, clipped to the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageSet {
    pub cells: Vec<(usize, usize)>,
}

impl CoverageSet {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.cells.contains(&(row, col))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn coverage_set(pos: (usize, usize), config: &CoveringConfig) -> Result<CoverageSet> {
    let n = config.grid_size;
    if pos.0 >= n || pos.1 >= n {
        return Err(Error::InvalidParameter(format!("position {pos:?} outside the {n}x{n} grid")));
    }
    let r = config.coverage_radius;
    let mut cells = Vec::new();
    for row in pos.0.saturating_sub(r)..=(pos.0 + r).min(n - 1) {
        for col in pos.1.saturating_sub(r)..=(pos.1 + r).min(n - 1) {
            cells.push((row, col));
        }
    }
    Ok(CoverageSet { cells })
}

/// `f(m) = (m-1)! sum_{i >= m} 1/i! / (e - 1)`.
///
/// Evaluated as `S(m) / S(1)` with `S(m) = sum_{k >= 0} prod_{j=0..k} 1/(m+j)`
/// (so `S(1) = e - 1`), which avoids the factorial growth of the forward
/// recurrence `f(m+1) = m f(m) - 1/(e-1)`.
pub fn utility_f(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("utility f is defined for m >= 1".into()));
    }
    Ok(tail_series(m) / tail_series(1))
}

fn tail_series(m: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut j = m as f64;
    loop {
        term /= j;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
        j += 1.0;
    }
    sum
}

/// Precomputed cell values, shared by all agents.
struct Layout {
    grid_size: usize,
    radius: usize,
    treasures: Vec<(usize, usize, f64)>,
    design: Design,
    /// `f(1..=n)` at index `m - 1`.
    f: Vec<f64>,
    /// `sum_{l=1..m} f(l)` at index `m`.
    f_prefix: Vec<f64>,
}

impl Layout {
    fn covers(&self, cell: usize, t: &(usize, usize, f64)) -> bool {
        let (r, c) = (cell / self.grid_size, cell % self.grid_size);
        r.abs_diff(t.0) <= self.radius && c.abs_diff(t.1) <= self.radius
    }

    fn cover_count(&self, states: &[usize], t: &(usize, usize, f64), skip: Option<usize>) -> usize {
        states
            .iter()
            .enumerate()
            .filter(|&(j, &s)| Some(j) != skip && self.covers(s, t))
            .count()
    }

    fn welfare(&self, states: &[usize], skip: Option<usize>) -> f64 {
        self.treasures
            .iter()
            .filter(|t| self.cover_count(states, t, skip) > 0)
            .map(|t| t.2)
            .sum()
    }

    fn reward(&self, agent: usize, states: &[usize]) -> f64 {
        match self.design {
            Design::IdenticalInterest => self.welfare(states, None),
            Design::MarginalContribution => {
                let only_mine: f64 = self
                    .treasures
                    .iter()
                    .filter(|t| self.covers(states[agent], t) && self.cover_count(states, t, Some(agent)) == 0)
                    .map(|t| t.2)
                    .sum();
                debug_assert!((only_mine - (self.welfare(states, None) - self.welfare(states, Some(agent)))).abs() < 1e-12);
                only_mine
            }
            Design::UtilitySharing => self
                .treasures
                .iter()
                .filter(|t| self.covers(states[agent], t))
                .map(|t| t.2 * self.f[self.cover_count(states, t, None) - 1])
                .sum(),
        }
    }

    fn potential(&self, states: &[usize]) -> f64 {
        match self.design {
            Design::IdenticalInterest | Design::MarginalContribution => self.welfare(states, None),
            Design::UtilitySharing => self
                .treasures
                .iter()
                .map(|t| t.2 * self.f_prefix[self.cover_count(states, t, None)])
                .sum(),
        }
    }
}

/// Reward, welfare and potential oracle of a covering game. Depends on positions only.
pub struct CoveringOracle {
    layout: Layout,
}

impl GameOracle for CoveringOracle {
    fn reward(&self, agent: usize, _stage: usize, states: &[usize], _actions: &[usize]) -> f64 {
        self.layout.reward(agent, states)
    }

    fn welfare(&self, _stage: usize, states: &[usize], _actions: &[usize]) -> f64 {
        self.layout.welfare(states, None)
    }

    fn has_potential(&self) -> bool {
        true
    }

    fn potential(&self, _stage: usize, states: &[usize], _actions: &[usize]) -> Option<f64> {
        Some(self.layout.potential(states))
    }

    fn depends_on_actions(&self) -> bool {
        false
    }
}

fn oracle_for(config: &CoveringConfig) -> Result<CoveringOracle> {
    let f = (1..=config.num_agents).map(utility_f).collect::<Result<Vec<_>>>()?;
    let mut f_prefix = vec![0.0];
    for v in &f {
        f_prefix.push(f_prefix.last().unwrap() + v);
    }
    Ok(CoveringOracle {
        layout: Layout {
            grid_size: config.grid_size,
            radius: config.coverage_radius,
            treasures: config.treasures.iter().map(|t| (t.row, t.col, t.value)).collect(),
            design: config.design,
            f,
            f_prefix,
        },
    })
}

fn positions_to_states(positions: &[(usize, usize)], config: &CoveringConfig) -> Result<Vec<usize>> {
    positions
        .iter()
        .map(|&p| {
            coverage_set(p, config)?;
            Ok(config.cell_index(p.0, p.1))
        })
        .collect()
}

/// Treasure covered by the union of every agent's coverage.
pub fn stage_welfare(positions: &[(usize, usize)], config: &CoveringConfig) -> Result<f64> {
    let states = positions_to_states(positions, config)?;
    Ok(oracle_for(config)?.layout.welfare(&states, None))
}

pub fn stage_reward(agent: usize, positions: &[(usize, usize)], config: &CoveringConfig) -> Result<f64> {
    if agent >= positions.len() {
        return Err(Error::InvalidParameter(format!("agent {agent} out of range")));
    }
    let states = positions_to_states(positions, config)?;
    let mut cfg = config.clone();
    cfg.num_agents = cfg.num_agents.max(positions.len());
    Ok(oracle_for(&cfg)?.layout.reward(agent, &states))
}

/// Slip-noise movement kernel, identical for every stage.
pub fn covering_kernel(config: &CoveringConfig) -> Result<TransitionKernel> {
    let n = config.grid_size;
    let cells = n * n;
    let mut table = vec![0.0; cells * 4 * cells];
    for s in 0..cells {
        let (r, c) = config.cell_position(s);
        let targets: Vec<usize> = MOVES
            .iter()
            .map(|&(dr, dc)| {
                let nr = r as isize + dr;
                let nc = c as isize + dc;
                if nr < 0 || nc < 0 || nr >= n as isize || nc >= n as isize {
                    s
                } else {
                    nr as usize * n + nc as usize
                }
            })
            .collect();
        for a in 0..4 {
            let row = &mut table[(s * 4 + a) * cells..(s * 4 + a + 1) * cells];
            for (b, &target) in targets.iter().enumerate() {
                row[target] += config.slip_prob / 4.0 + if a == b { 1.0 - config.slip_prob } else { 0.0 };
            }
        }
    }
    TransitionKernel::stationary(cells, 4, table, config.horizon.saturating_sub(1))
}

pub fn build_covering_game(config: &CoveringConfig) -> Result<GameDefinition> {
    config.validate()?;
    let kernel = covering_kernel(config)?;
    let cells = config.num_cells();
    let labels: Vec<String> = (0..cells)
        .map(|s| {
            let (r, c) = config.cell_position(s);
            format!("({r},{c})")
        })
        .collect();
    let actions: Vec<String> = ACTION_NAMES.iter().map(|s| s.to_string()).collect();
    let space = AgentSpace::new(cells, 4).with_labels(labels, actions);
    let oracle = oracle_for(config)?;
    GameDefinition::new(
        vec![space; config.num_agents],
        config.horizon,
        vec![kernel; config.num_agents],
        config.initial_distributions(),
        (0.0, config.total_treasure()),
        Arc::new(oracle),
    )
}

pub fn paper_7x7(design: Design) -> CoveringConfig {
    let cells = [(0, 0), (0, 1), (1, 0), (0, 5), (0, 6), (1, 6), (5, 0), (6, 0), (6, 1)];
    CoveringConfig {
        grid_size: 7,
        treasures: cells.iter().map(|&(r, c)| Treasure::new(r, c, 1.0)).collect(),
        num_agents: 3,
        horizon: 10,
        coverage_radius: 1,
        slip_prob: 1.0 / 3.0,
        design,
        initial: InitialDistribution::Uniform,
    }
}

/// 5x5 grid, 2 agents, H = 4, three treasures in each of two opposite corners.
///
/// Treasure values are 1/6 so that every stage reward lies in [0, 1].
pub fn desk_5x5(design: Design) -> CoveringConfig {
    let cells = [(0, 0), (0, 1), (1, 0), (4, 4), (4, 3), (3, 4)];
    CoveringConfig {
        grid_size: 5,
        treasures: cells.iter().map(|&(r, c)| Treasure::new(r, c, 1.0 / 6.0)).collect(),
        num_agents: 2,
        horizon: 4,
        coverage_radius: 1,
        slip_prob: 1.0 / 3.0,
        design,
        initial: InitialDistribution::Uniform,
    }
}

/// 3x3 grid, 2 agents, treasures at two opposite corners.
pub fn tiny_3x3(design: Design, horizon: usize) -> CoveringConfig {
    CoveringConfig {
        grid_size: 3,
        treasures: vec![Treasure::new(0, 0, 1.0), Treasure::new(2, 2, 1.0)],
        num_agents: 2,
        horizon,
        coverage_radius: 1,
        slip_prob: 1.0 / 3.0,
        design,
        initial: InitialDistribution::Uniform,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{expected_return, state_distributions, EvalOptions};
    use crate::game::validate_game;
    use crate::policy::{random_joint_policy, JointPolicy, LocalPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series_oracle(m: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..m {
            fact *= i as f64;
        }
        let mut inv = 1.0 / (fact * m as f64);
        let mut sum = 0.0;
        let mut i = m;
        while inv > 1e-300 {
            sum += inv;
            i += 1;
            inv /= i as f64;
        }
        fact * sum / (std::f64::consts::E - 1.0)
    }

    #[test]
    fn utility_values() {
        let e = std::f64::consts::E;
        assert!((utility_f(1).unwrap() - 1.0).abs() < 1e-12);
        assert!((utility_f(2).unwrap() - (e - 2.0) / (e - 1.0)).abs() < 1e-12);
        assert!((utility_f(2).unwrap() - 0.4180233).abs() < 1e-7);
        for m in 1..=10 {
            let fm = utility_f(m).unwrap();
            assert!((fm - series_oracle(m)).abs() < 1e-12, "m={m}");
            let gap = m as f64 * fm - utility_f(m + 1).unwrap();
            assert!((gap - 1.0 / (e - 1.0)).abs() < 1e-12);
        }
        for m in 1..30 {
            let (a, b) = (utility_f(m).unwrap(), utility_f(m + 1).unwrap());
            assert!(b < a && b > 0.0 && a <= 1.0 + 1e-15);
        }
        assert!(utility_f(0).is_err());
    }

    #[test]
    fn coverage_examples() {
        let cfg = paper_7x7(Design::IdenticalInterest);
        assert_eq!(coverage_set((3, 3), &cfg).unwrap().len(), 9);
        let corner = coverage_set((0, 0), &cfg).unwrap();
        assert_eq!(corner.cells, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let mut r0 = cfg.clone();
        r0.coverage_radius = 0;
        assert_eq!(coverage_set((4, 2), &r0).unwrap().cells, vec![(4, 2)]);
        assert!(coverage_set((7, 0), &cfg).is_err());
    }

    #[test]
    fn welfare_examples() {
        let mut cfg = paper_7x7(Design::IdenticalInterest);
        cfg.num_agents = 1;
        assert_eq!(stage_welfare(&[(0, 0)], &cfg).unwrap(), 3.0);
        cfg.num_agents = 2;
        assert_eq!(stage_welfare(&[(0, 0), (0, 0)], &cfg).unwrap(), 3.0);
        cfg.num_agents = 3;
        assert_eq!(stage_welfare(&[(0, 0), (0, 6), (6, 0)], &cfg).unwrap(), 9.0);
    }

    #[test]
    fn reward_designs() {
        let mut cfg = paper_7x7(Design::IdenticalInterest);
        let pos = [(0, 0), (1, 1), (6, 0)];
        for i in 0..3 {
            assert_eq!(stage_reward(i, &pos, &cfg).unwrap(), stage_welfare(&pos, &cfg).unwrap());
        }
        cfg.design = Design::MarginalContribution;
        let disjoint = [(0, 0), (0, 6), (6, 6)];
        assert_eq!(stage_reward(0, &disjoint, &cfg).unwrap(), 3.0);
        assert_eq!(stage_reward(1, &disjoint, &cfg).unwrap(), 3.0);
        assert_eq!(stage_reward(2, &disjoint, &cfg).unwrap(), 0.0);
        // (1,1) covers all of the top-left treasure that (0,0) covers
        assert_eq!(stage_reward(0, &pos, &cfg).unwrap(), 0.0);
        cfg.design = Design::UtilitySharing;
        cfg.num_agents = 1;
        assert_eq!(stage_reward(0, &[(0, 5)], &cfg).unwrap(), 3.0);
    }

    #[test]
    fn mc_equals_welfare_loss_and_us_bounded_by_solo() {
        let mut cfg = tiny_3x3(Design::MarginalContribution, 1);
        cfg.treasures.push(Treasure::new(1, 2, 0.5));
        let oracle = oracle_for(&cfg).unwrap();
        let us = oracle_for(&CoveringConfig {
            design: Design::UtilitySharing,
            ..cfg.clone()
        })
        .unwrap();
        let solo = oracle_for(&CoveringConfig {
            design: Design::IdenticalInterest,
            num_agents: 1,
            ..cfg.clone()
        })
        .unwrap();
        for a in 0..9 {
            for b in 0..9 {
                let s = [a, b];
                for i in 0..2 {
                    let loss = oracle.layout.welfare(&s, None) - oracle.layout.welfare(&s, Some(i));
                    assert!((oracle.layout.reward(i, &s) - loss).abs() < 1e-12);
                    assert!(us.layout.reward(i, &s) <= solo.layout.welfare(&[s[i]], None) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let cfg = paper_7x7(Design::IdenticalInterest);
        let k = covering_kernel(&cfg).unwrap();
        let center = cfg.cell_index(3, 3);
        let up = cfg.cell_index(2, 3);
        assert!((k.prob(0, center, 0, up) - 0.75).abs() < 1e-15);
        for other in [cfg.cell_index(3, 4), cfg.cell_index(4, 3), cfg.cell_index(3, 2)] {
            assert!((k.prob(0, center, 0, other) - 1.0 / 12.0).abs() < 1e-15);
        }
        // at (0,0) moving up: up and left are blocked
        assert!((k.prob(0, 0, 0, 0) - (0.75 + 1.0 / 12.0)).abs() < 1e-15);
        assert!((k.prob(0, 0, 0, 1) - 1.0 / 12.0).abs() < 1e-15);
        let game = build_covering_game(&cfg).unwrap();
        assert!(validate_game(&game).is_empty());
        assert_eq!(game.kernel(0), game.kernel(2));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = tiny_3x3(Design::IdenticalInterest, 2);
        cfg.slip_prob = 1.5;
        assert!(build_covering_game(&cfg).is_err());
        let mut cfg = tiny_3x3(Design::IdenticalInterest, 2);
        cfg.treasures.push(Treasure::new(3, 0, 1.0));
        assert!(build_covering_game(&cfg).is_err());
        let mut cfg = tiny_3x3(Design::IdenticalInterest, 2);
        cfg.treasures[0].value = -1.0;
        assert!(build_covering_game(&cfg).is_err());
    }

    #[test]
    fn ii_and_mc_deviation_gains_match() {
        let ii = build_covering_game(&tiny_3x3(Design::IdenticalInterest, 2)).unwrap();
        let mc = build_covering_game(&tiny_3x3(Design::MarginalContribution, 2)).unwrap();
        let opts = EvalOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let pi = random_joint_policy(&ii, &mut rng);
            let other = random_joint_policy(&ii, &mut rng);
            let i = trial % 2;
            let dev = pi.with_agent(i, other.agent(i).clone());
            let gain = |g: &GameDefinition| {
                expected_return(g, &dev, &opts).unwrap().returns[i] - expected_return(g, &pi, &opts).unwrap().returns[i]
            };
            assert!((gain(&ii) - gain(&mc)).abs() < 1e-12);
        }
    }

    #[test]
    fn visitation_positive_under_adversarial_policies() {
        let cfg = tiny_3x3(Design::IdenticalInterest, 3);
        let game = build_covering_game(&cfg).unwrap();
        for a in 0..4 {
            let det = LocalPolicy::deterministic(9, 4, &vec![vec![a; 9]; 3]);
            let pi = JointPolicy::new(vec![det.clone(), det]);
            assert!(state_distributions(&game, &pi).min_visitation() > 0.0);
        }
        let mut point = cfg.clone();
        point.initial = InitialDistribution::Cells(vec![[0, 0], [0, 0]]);
        let game = build_covering_game(&point).unwrap();
        // push toward the start corner; everything is still reached by stage 2 except far cells
        let det = LocalPolicy::deterministic(9, 4, &vec![vec![0; 9]; 3]);
        let d = state_distributions(&game, &JointPolicy::new(vec![det.clone(), det]));
        assert!(d.get(0, 2).iter().filter(|&&p| p > 0.0).count() == 6);
    }
}
