//! A two-agent, three-stage game whose stage games have price of anarchy at
//! least 1/2 while the Markov game itself has price of anarchy 7/16.
//!
//! Local states are `init`, `X`, `Y`. At the first stage action `A` moves to
//! `X` and `B` to `Y`; `X` and `Y` are absorbing. Rewards (identical for both
//! agents and equal to the welfare) are 0 at the first stage and given by
//! [`SECOND_STAGE`] and [`THIRD_STAGE`] on the joint state afterwards.
//! Actions after the first stage have no effect.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{expected_return, EvalOptions};
use crate::game::{AgentSpace, GameDefinition, TabularOracle, TransitionKernel};
use crate::joint::{next_combo, JointSpace};
use crate::poa::{analyze_2x2, stage_from_game, NeSet2x2, StageGame};
use crate::policy::{JointPolicy, LocalPolicy};

pub const INIT: usize = 0;
pub const X: usize = 1;
pub const Y: usize = 2;

/// Rows: agent 0 in X, Y; columns: agent 1 in X, Y.
pub const SECOND_STAGE: [[f64; 2]; 2] = [[2.0, 0.0], [0.0, 2.0]];
pub const THIRD_STAGE: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 2.0]];

fn stage_value(table: &[[f64; 2]; 2], s0: usize, s1: usize) -> f64 {
    if s0 == INIT || s1 == INIT {
        0.0
    } else {
        table[s0 - 1][s1 - 1]
    }
}

pub fn build_counterexample() -> GameDefinition {
    let space = JointSpace::new(vec![3, 3], vec![2, 2]);
    let profiles = space.num_profiles();
    let mut tables = vec![vec![0.0; profiles]; 3];
    let mut states = [0; 2];
    let mut actions = [0; 2];
    for p in 0..profiles {
        space.decode_profile(p, &mut states, &mut actions);
        tables[1][p] = stage_value(&SECOND_STAGE, states[0], states[1]);
        tables[2][p] = stage_value(&THIRD_STAGE, states[0], states[1]);
    }
    let oracle = TabularOracle::new(space, vec![tables.clone(), tables.clone()], tables.clone(), Some(tables))
        .expect("static tables");

    // layer 0: init -A-> X, init -B-> Y; later layers keep every state in place
    let mut first = vec![0.0; 3 * 2 * 3];
    let mut stay = vec![0.0; 3 * 2 * 3];
    for s in 0..3 {
        for a in 0..2 {
            let target = if s == INIT { [X, Y][a] } else { s };
            first[(s * 2 + a) * 3 + target] = 1.0;
            stay[(s * 2 + a) * 3 + s] = 1.0;
        }
    }
    let kernel = TransitionKernel::new(3, 2, vec![first, stay]).expect("static kernel");
    let labels = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let agent = AgentSpace::new(3, 2).with_labels(labels(&["init", "X", "Y"]), labels(&["A", "B"]));
    let mut rho = vec![0.0; 3];
    rho[INIT] = 1.0;
    GameDefinition::new(
        vec![agent.clone(), agent],
        3,
        vec![kernel.clone(), kernel],
        vec![rho.clone(), rho],
        (0.0, 2.0),
        Arc::new(oracle),
    )
    .expect("static game")
}

/// Normal-form game over first-stage actions with payoffs the expected returns.
///
/// Requires every initial distribution to be a point mass and the returns to be
/// unaffected by behaviour after the first stage (checked by evaluating two
/// different continuation policies).
pub fn reduce_to_normal_form(game: &GameDefinition, opts: &EvalOptions) -> Result<StageGame> {
    let n = game.num_agents();
    let mut starts = Vec::with_capacity(n);
    for i in 0..n {
        let rho = game.initial(i);
        match rho.iter().position(|&p| p == 1.0) {
            Some(s) => starts.push(s),
            None => {
                return Err(Error::NotReducible(format!(
                    "initial distribution of agent {i} is not a point mass"
                )))
            }
        }
    }
    let counts: Vec<usize> = game.spaces().iter().map(|s| s.num_actions).collect();
    let profiles: usize = counts.iter().product();
    if profiles as u128 > opts.cap {
        return Err(Error::CapExceeded {
            what: "first-stage action profiles".into(),
            size: profiles as u128,
            cap: opts.cap,
        });
    }
    let policy_for = |choice: &[usize], later: usize| -> JointPolicy {
        JointPolicy::new(
            (0..n)
                .map(|i| {
                    let sp = game.space(i);
                    let rows: Vec<Vec<usize>> = (0..game.horizon())
                        .map(|h| {
                            (0..sp.num_states)
                                .map(|s| if h == 0 && s == starts[i] { choice[i] } else { later.min(sp.num_actions - 1) })
                                .collect()
                        })
                        .collect();
                    LocalPolicy::deterministic(sp.num_states, sp.num_actions, &rows)
                })
                .collect(),
        )
    };
    let mut rewards = vec![vec![0.0; profiles]; n];
    let mut welfare = vec![0.0; profiles];
    let mut digits = vec![0; n];
    let max_actions = counts.iter().copied().max().unwrap_or(1);
    for p in 0..profiles {
        let base = expected_return(game, &policy_for(&digits, 0), opts)?;
        if game.horizon() > 1 && max_actions > 1 {
            let alt = expected_return(game, &policy_for(&digits, max_actions - 1), opts)?;
            let differs = base.returns.iter().zip(&alt.returns).any(|(a, b)| (a - b).abs() > 1e-12)
                || (base.welfare - alt.welfare).abs() > 1e-12;
            if differs {
                return Err(Error::NotReducible(
                    "returns depend on actions after the first stage".into(),
                ));
            }
        }
        for (i, table) in rewards.iter_mut().enumerate() {
            table[p] = base.returns[i];
        }
        welfare[p] = base.welfare;
        next_combo(&counts, &mut digits);
    }
    StageGame::new(counts, rewards, welfare)
}

/// Stage `h` of the game restricted to the joint states that are reached.
fn reached_stage_2x2(table: &[[f64; 2]; 2]) -> StageGame {
    StageGame::from_matrix(&[table[0].to_vec(), table[1].to_vec()]).expect("static table")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub second_stage: NeSet2x2,
    pub third_stage: NeSet2x2,
    pub normal_form: Vec<Vec<f64>>,
    pub markov: NeSet2x2,
    pub markov_poa: f64,
    pub optimum: f64,
}

pub fn analyze_counterexample(opts: &EvalOptions) -> Result<CounterexampleReport> {
    let game = build_counterexample();
    let nf = reduce_to_normal_form(&game, opts)?;
    let markov = analyze_2x2(&nf)?;
    let w = nf.welfare_table();
    Ok(CounterexampleReport {
        second_stage: analyze_2x2(&reached_stage_2x2(&SECOND_STAGE))?,
        third_stage: analyze_2x2(&reached_stage_2x2(&THIRD_STAGE))?,
        normal_form: vec![w[0..2].to_vec(), w[2..4].to_vec()],
        markov_poa: markov.poa,
        optimum: markov.optimum_welfare,
        markov,
    })
}

/// Full stage game of stage `h` over all local `(state, action)` strategies.
pub fn counterexample_stage(h: usize) -> Result<StageGame> {
    stage_from_game(&build_counterexample(), h, 1_000_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::validate_game;

    fn pure(a0: usize, a1: usize) -> JointPolicy {
        let rows = |a| vec![vec![a, 0, 0], vec![0; 3], vec![0; 3]];
        JointPolicy::new(vec![
            LocalPolicy::deterministic(3, 2, &rows(a0)),
            LocalPolicy::deterministic(3, 2, &rows(a1)),
        ])
    }

    #[test]
    fn pure_profile_values() {
        let game = build_counterexample();
        assert!(validate_game(&game).is_empty());
        let opts = EvalOptions::default();
        assert_eq!(expected_return(&game, &pure(0, 0), &opts).unwrap().welfare, 2.0);
        assert_eq!(expected_return(&game, &pure(1, 1), &opts).unwrap().welfare, 4.0);
        assert_eq!(expected_return(&game, &pure(0, 1), &opts).unwrap().welfare, 1.0);
    }

    #[test]
    fn reduces_to_the_first_stage_table() {
        let nf = reduce_to_normal_form(&build_counterexample(), &EvalOptions::default()).unwrap();
        assert_eq!(nf.welfare_table(), &[2.0, 1.0, 1.0, 4.0]);
        assert_eq!(nf.rewards()[0], nf.rewards()[1]);
        let report = analyze_counterexample(&EvalOptions::default()).unwrap();
        assert!((report.markov_poa - 7.0 / 16.0).abs() < 1e-12);
        assert_eq!(report.optimum, 4.0);
        assert_eq!(report.second_stage.poa, 0.5);
        assert_eq!(report.third_stage.poa, 1.0);
    }

    #[test]
    fn single_stage_game_reduces_to_itself() {
        let g1 = crate::game::micro_g1();
        let nf = reduce_to_normal_form(&g1, &EvalOptions::default()).unwrap();
        assert_eq!(nf.rewards()[0], vec![0.3, 0.7]);
    }

    #[test]
    fn action_dependent_continuation_is_rejected() {
        let game = build_counterexample();
        let space = JointSpace::new(vec![3, 3], vec![2, 2]);
        let mut tables = vec![vec![0.0; space.num_profiles()]; 3];
        let mut s = [0; 2];
        let mut a = [0; 2];
        for p in 0..space.num_profiles() {
            space.decode_profile(p, &mut s, &mut a);
            tables[2][p] = a[0] as f64;
        }
        let oracle = TabularOracle::new(space, vec![tables.clone(), tables.clone()], tables, None).unwrap();
        let game = game.with_oracle(Arc::new(oracle));
        assert!(matches!(
            reduce_to_normal_form(&game, &EvalOptions::default()),
            Err(Error::NotReducible(_))
        ));
        let mut spread = build_counterexample();
        spread = GameDefinition::new(
            spread.spaces().to_vec(),
            3,
            spread.kernels().to_vec(),
            vec![vec![0.5, 0.5, 0.0]; 2],
            (0.0, 2.0),
            spread.oracle().clone(),
        )
        .unwrap();
        assert!(reduce_to_normal_form(&spread, &EvalOptions::default()).is_err());
    }

    #[test]
    fn full_stage_games_have_consistent_shape() {
        let sg = counterexample_stage(1).unwrap();
        assert_eq!(sg.strategy_counts(), &[6, 6]);
    }
}
