//! Multi-agent soft policy iteration and the theoretical sample-size calculator.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    averaged_q_all, expected_return, ne_gap, ne_gap_from_tables, state_distributions, AveragedTables, EvalOptions,
    EvaluationReport,
};
use crate::game::GameDefinition;
use crate::policy::{mix_policies, uniform_policy, JointPolicy, LocalPolicy};
use crate::sampling::{
    estimate_model, estimate_transitions, q_error_bound, sample_episodes_labeled, BatchProvenance, RngSpec,
    TrajectoryBatch,
};
use crate::table::LocalTable;

const TAG_TRANSITIONS: u64 = 0x4B;
const TAG_ON_POLICY: u64 = 0x4A;

/// Replacement for the default `1 / sqrt(4 n^2 H^3 t)` step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `eta_t = eta` for every iteration.
    Constant { eta: f64 },
    /// `eta_t = eta1 / sqrt(t)`.
    InvSqrt { eta1: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InvSqrt { eta1 } => eta1,
        };
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidParameter(format!("step size {v} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InvSqrt { eta1 } => eta1 / (t as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpiConfig {
    pub t_g: usize,
    pub t_j: usize,
    pub t_k: usize,
    pub master_seed: u64,
    pub stepsize_override: Option<StepSchedule>,
    /// Record exact NE-gaps, welfare, potential and Q errors every iteration.
    pub exact_eval_logging: bool,
    /// Draw a separate on-policy batch for each agent instead of one shared batch.
    pub per_agent_rollouts: bool,
    /// Use the exact averaged Q-functions instead of estimates.
    pub use_exact_q: bool,
    pub eval: EvalOptions,
}

impl Default for SpiConfig {
    fn default() -> Self {
        Self {
            t_g: 40,
            t_j: 800,
            t_k: 50_000,
            master_seed: 0,
            stepsize_override: None,
            exact_eval_logging: true,
            per_agent_rollouts: false,
            use_exact_q: false,
            eval: EvalOptions::default(),
        }
    }
}

impl SpiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_g == 0 || self.t_j == 0 || self.t_k == 0 {
            return Err(Error::InvalidParameter("T_G, T_J and T_K must all be at least 1".into()));
        }
        if let Some(s) = &self.stepsize_override {
            s.validate()?;
        }
        Ok(())
    }

    pub fn eta(&self, t: usize, n: usize, horizon: usize) -> f64 {
        match &self.stepsize_override {
            Some(s) => s.eta(t),
            None => stepsize(t, n, horizon),
        }
    }
}

/// `1 / sqrt(4 n^2 H^3 t)`, clamped to at most 1.
pub fn stepsize(t: usize, n: usize, horizon: usize) -> f64 {
    let (t, n, h) = (t as f64, n as f64, horizon as f64);
    (1.0 / (4.0 * n * n * h * h * h * t).sqrt()).min(1.0)
}

/// Deterministic policy putting all mass on the row argmax (lowest index on ties).
pub fn greedy_from_q(q: &LocalTable) -> Result<LocalPolicy> {
    if !q.all_finite() {
        return Err(Error::NonFinite("Q table has a non-finite entry".into()));
    }
    let choice: Vec<Vec<usize>> = (0..q.horizon())
        .map(|h| {
            (0..q.num_states())
                .map(|s| {
                    let row = q.row(h, s);
                    let mut best = 0;
                    for (a, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = a;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    Ok(LocalPolicy::deterministic(q.num_states(), q.num_actions(), &choice))
}

/// Every agent mixes toward its greedy policy from the same snapshot `policy`.
pub fn spi_update(policy: &JointPolicy, greedy: &[LocalPolicy], eta: f64) -> Result<JointPolicy> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("step size {eta} outside (0, 1]")));
    }
    if greedy.len() != policy.num_agents() {
        return Err(Error::Shape("one greedy policy per agent required".into()));
    }
    let agents = policy
        .agents()
        .iter()
        .zip(greedy)
        .map(|(p, g)| mix_policies(p, g, eta))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointPolicy::new(agents))
}

/// Quantities of the iterate `pi^(t)` that was updated at iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub t: usize,
    pub eta: f64,
    /// Per agent `max |Qhat - Qbar|` (exact logging only; zero in exact-Q mode).
    pub q_err: Option<Vec<f64>>,
    pub ne_gap: Option<Vec<f64>>,
    pub ne_gap_total: Option<f64>,
    pub welfare: Option<f64>,
    pub potential: Option<f64>,
    /// `sum_i sum_h max_{s,a} Abar_i`, exact logging only.
    pub advantage_sum: Option<f64>,
    /// Smallest local state probability under `pi^(t)`, exact logging only.
    pub min_visitation: Option<f64>,
    /// Kernel rows that fell back to the self-loop (fixed for the whole run).
    pub unvisited_transitions: usize,
    /// `(i, h, s)` cells never visited by the on-policy batch.
    pub unvisited_reward_states: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpiOutcome {
    pub policy: JointPolicy,
    pub logs: Vec<IterationLog>,
    /// Exact evaluation of the returned (final) policy, when exact logging is on.
    pub final_evaluation: Option<EvaluationReport>,
    /// `(t, gap)` of the logged iterate with the smallest total NE-gap.
    pub best_iterate: Option<(usize, f64)>,
    /// Provenance of the transition-estimation batch.
    pub transition_batch: Option<BatchProvenance>,
}

impl SpiOutcome {
    pub fn min_ne_gap(&self) -> Option<f64> {
        self.best_iterate.map(|(_, g)| g)
    }

    /// Minimum over the logged iterates and the returned policy.
    pub fn min_ne_gap_including_final(&self) -> Option<f64> {
        let fin = self.final_evaluation.as_ref().map(|e| e.ne_gap_total);
        match (self.min_ne_gap(), fin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

fn exact_q_errors(estimates: &[LocalTable], exact: &[AveragedTables]) -> Vec<f64> {
    estimates.iter().zip(exact).map(|(q, t)| q.max_abs_diff(&t.qbar)).collect()
}

/// Checks the measured Q error against the sensitivity bound built from the
/// measured reward and kernel errors.
fn check_q_error_bound(game: &GameDefinition, rhat: &[LocalTable], qhat: &[LocalTable], exact: &[AveragedTables], p_hat: &[crate::game::TransitionKernel]) -> bool {
    let horizon = game.horizon();
    (0..game.num_agents()).all(|i| {
        let eps_r = rhat[i].max_abs_diff(&exact[i].rbar);
        let eps_p = p_hat[i].max_abs_diff(game.kernel(i));
        (0..horizon).all(|h| {
            let err = qhat[i].stage_max_abs_diff(&exact[i].qbar, h);
            err <= q_error_bound(eps_r, eps_p, horizon, h, game.space(i).num_states, game.reward_scale()) + 1e-9
        })
    })
}

/// Runs `T_G` iterations starting from the uniform policy and returns the final iterate.
pub fn run(game: &GameDefinition, config: &SpiConfig) -> Result<SpiOutcome> {
    config.validate()?;
    let n = game.num_agents();
    let horizon = game.horizon();
    let rng = RngSpec::new(config.master_seed, 0);
    let mut policy = uniform_policy(game);

    let (transitions, transition_batch) = if config.use_exact_q {
        (None, None)
    } else {
        let batch = sample_episodes_labeled(game, &policy, config.t_k, rng.derive(TAG_TRANSITIONS, 0), "uniform")?;
        let est = estimate_transitions(game, &batch)?;
        (Some(est), Some(batch.provenance))
    };
    let unvisited_transitions = transitions.as_ref().map_or(0, |t| t.unvisited_cells());

    let mut logs = Vec::with_capacity(config.t_g);
    let mut best_iterate: Option<(usize, f64)> = None;
    for t in 1..=config.t_g {
        let start = Instant::now();
        let eta = config.eta(t, n, horizon);
        let exact = if config.use_exact_q || config.exact_eval_logging {
            Some(averaged_q_all(game, &policy, &config.eval)?)
        } else {
            None
        };

        let mut unvisited_reward_states = 0;
        let (q_tables, q_err) = match &transitions {
            None => {
                let tables = exact.as_ref().expect("exact tables in exact-Q mode");
                let q: Vec<LocalTable> = tables.iter().map(|t| t.qbar.clone()).collect();
                let err = config.exact_eval_logging.then(|| vec![0.0; n]);
                (q, err)
            }
            Some(trans) => {
                let label = format!("iterate-{t}");
                let batches: Vec<TrajectoryBatch> = if config.per_agent_rollouts {
                    (0..n)
                        .map(|i| {
                            let spec = rng.derive(TAG_ON_POLICY, (t * n + i) as u64);
                            sample_episodes_labeled(game, &policy, config.t_j, spec, &label)
                        })
                        .collect::<Result<_>>()?
                } else {
                    let spec = rng.derive(TAG_ON_POLICY, t as u64);
                    vec![sample_episodes_labeled(game, &policy, config.t_j, spec, &label)?]
                };
                let refs: Vec<&TrajectoryBatch> = (0..n).map(|i| &batches[i.min(batches.len() - 1)]).collect();
                let pre = transition_batch.as_ref().expect("transition provenance");
                let model = estimate_model(game, &policy, trans, pre, &refs)?;
                unvisited_reward_states = model.unvisited_reward_states();
                let err = exact.as_ref().map(|tables| {
                    debug_assert!(check_q_error_bound(
                        game,
                        &model.rewards.iter().map(|r| r.table.clone()).collect::<Vec<_>>(),
                        &model.q_hat,
                        tables,
                        &trans.kernels
                    ));
                    exact_q_errors(&model.q_hat, tables)
                });
                (model.q_hat, err)
            }
        };

        let mut log = IterationLog {
            t,
            eta,
            q_err,
            ne_gap: None,
            ne_gap_total: None,
            welfare: None,
            potential: None,
            advantage_sum: None,
            min_visitation: None,
            unvisited_transitions,
            unvisited_reward_states,
            wall_time_secs: 0.0,
        };
        if config.exact_eval_logging {
            let tables = exact.as_ref().expect("exact tables with exact logging");
            let totals = expected_return(game, &policy, &config.eval)?;
            let report = ne_gap_from_tables(game, &policy, tables, &totals);
            if best_iterate.is_none_or(|(_, g)| report.ne_gap_total < g) {
                best_iterate = Some((t, report.ne_gap_total));
            }
            log.ne_gap_total = Some(report.ne_gap_total);
            log.ne_gap = Some(report.ne_gap);
            log.welfare = Some(report.welfare);
            log.potential = report.potential;
            log.advantage_sum = Some(tables.iter().map(|t| t.advantage_bound()).sum());
            log.min_visitation = Some(state_distributions(game, &policy).min_visitation());
        }

        let greedy = q_tables.iter().map(greedy_from_q).collect::<Result<Vec<_>>>()?;
        let next = spi_update(&policy, &greedy, eta)?;
        debug_assert!(next.is_row_stochastic(1e-12));
        policy = next;
        log.wall_time_secs = start.elapsed().as_secs_f64();
        logs.push(log);
    }

    let final_evaluation = if config.exact_eval_logging {
        Some(ne_gap(game, &policy, &config.eval)?)
    } else {
        None
    };
    Ok(SpiOutcome {
        policy,
        logs,
        final_evaluation,
        best_iterate,
        transition_batch,
    })
}

/// One instance of the per-iteration ascent inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentCheck {
    pub t: usize,
    /// `Phi(pi^(t+1)) - Phi(pi^(t))`.
    pub lhs: f64,
    /// `c eta_t sum_{i,h} max Abar - 4 n^2 H^3 eta_t^2`.
    pub rhs: f64,
    pub c: f64,
}

impl AscentCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs >= self.rhs - slack
    }
}

/// Ascent checks for every logged iteration of an exact-logging run on a game with a potential.
///
/// `c` is the smaller of the minimum visitations of `pi^(t)` and `pi^(t+1)`.
pub fn ascent_checks(game: &GameDefinition, outcome: &SpiOutcome) -> Result<Vec<AscentCheck>> {
    let n = game.num_agents() as f64;
    let h = game.horizon() as f64;
    let final_phi = outcome.final_evaluation.as_ref().and_then(|e| e.potential);
    let final_c = state_distributions(game, &outcome.policy).min_visitation();
    let missing = || Error::InvalidParameter("ascent check needs exact logging on a game with a potential".into());
    let mut checks = Vec::with_capacity(outcome.logs.len());
    for (k, log) in outcome.logs.iter().enumerate() {
        let (phi_next, c_next) = match outcome.logs.get(k + 1) {
            Some(next) => (next.potential, next.min_visitation),
            None => (final_phi, Some(final_c)),
        };
        let (phi, phi_next) = (log.potential.ok_or_else(missing)?, phi_next.ok_or_else(missing)?);
        let c = log.min_visitation.ok_or_else(missing)?.min(c_next.ok_or_else(missing)?);
        let adv = log.advantage_sum.ok_or_else(missing)?;
        checks.push(AscentCheck {
            t: log.t,
            lhs: phi_next - phi,
            rhs: c * log.eta * adv - 4.0 * n * n * h * h * h * log.eta * log.eta,
            c,
        });
    }
    Ok(checks)
}

/// Theoretical lower bounds on the three sample sizes (as reals; they overflow integers quickly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSizes {
    pub t_g: f64,
    pub t_j: f64,
    pub t_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSizeInputs {
    pub num_agents: usize,
    pub horizon: usize,
    pub num_states: Vec<usize>,
    pub num_actions: Vec<usize>,
    pub phi_range: f64,
    pub c: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Ceilings of the sufficient `T_G`, `T_J`, `T_K` for an `epsilon`-NE with
/// probability `1 - delta`, assuming stage rewards in [0, 1]. `T_J` and `T_K`
/// are evaluated at the computed `T_G`.
pub fn theoretical_sample_sizes(inputs: &SampleSizeInputs) -> Result<SampleSizes> {
    let SampleSizeInputs {
        num_agents,
        horizon,
        ref num_states,
        ref num_actions,
        phi_range,
        c,
        epsilon,
        delta,
    } = *inputs;
    if num_agents == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("n and H must be at least 1".into()));
    }
    if num_states.len() != num_agents || num_actions.len() != num_agents {
        return Err(Error::Shape("one state and action count per agent required".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidParameter(format!("c {c} outside (0, 1]")));
    }
    if !(phi_range >= 0.0 && phi_range.is_finite()) {
        return Err(Error::InvalidParameter(format!("potential range {phi_range} must be non-negative")));
    }
    let n = num_agents as f64;
    let h = horizon as f64;
    let n2 = n * n;
    let log_term = (8.0 * n * h.powf(1.5) / (c * epsilon)).ln();
    let t_g = (64.0 * n2 * h.powi(3) * ((phi_range + 1.0) / 2.0 + log_term).powi(2) / (c * c * epsilon * epsilon)).ceil();
    let sa: f64 = num_states.iter().zip(num_actions).map(|(&s, &a)| (s * a) as f64).sum();
    let s2a: f64 = num_states.iter().zip(num_actions).map(|(&s, &a)| (s * s * a) as f64).sum();
    let max_s = *num_states.iter().max().expect("non-empty") as f64;
    let max_a = *num_actions.iter().max().expect("non-empty") as f64;
    let c4e2 = c.powi(4) * epsilon * epsilon;
    let t_j = (2048.0 * n2 * h.powi(4) * (8.0 / delta * n * h * t_g * sa).ln() / c4e2).ceil();
    let t_k = (2048.0 * n2 * max_s * max_s * max_a * max_a * h.powi(6) * (8.0 / delta * n * h * t_g * s2a).ln() / c4e2)
        .ceil();
    Ok(SampleSizes { t_g, t_j, t_k })
}

/// Text comparing the theoretical sizes against the ones actually used.
pub fn sample_size_report(inputs: &SampleSizeInputs, sizes: &SampleSizes, practical: Option<(usize, usize, usize)>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "n={} H={} c={:e} epsilon={} delta={} potential_range={}",
        inputs.num_agents, inputs.horizon, inputs.c, inputs.epsilon, inputs.delta, inputs.phi_range
    );
    let _ = writeln!(out, "assumes stage rewards in [0, 1]");
    let _ = writeln!(out, "theoretical T_G >= {:e}", sizes.t_g);
    let _ = writeln!(out, "theoretical T_J >= {:e}", sizes.t_j);
    let _ = writeln!(out, "theoretical T_K >= {:e}", sizes.t_k);
    if let Some((g, j, k)) = practical {
        let _ = writeln!(out, "practical T_G={g} T_J={j} T_K={k}");
        let _ = writeln!(
            out,
            "the practical settings are below the theoretical bounds by factors {:e} (T_G), {:e} (T_J), {:e} (T_K)",
            sizes.t_g / g as f64,
            sizes.t_j / j as f64,
            sizes.t_k / k as f64
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{micro_g1, tabular_game, AgentSpace, TabularOracle, TransitionKernel};
    use crate::joint::{next_combo, JointSpace};
    use crate::policy::policy_l1_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stepsize_examples() {
        assert_eq!(stepsize(1, 1, 1), 0.5);
        assert!((stepsize(1, 2, 3) - 1.0 / 432f64.sqrt()).abs() < 1e-15);
        assert!((stepsize(1, 2, 3) - 0.0481125).abs() < 1e-7);
        for (n, h) in [(1, 1), (2, 3), (3, 10)] {
            assert!((stepsize(4, n, h) - stepsize(1, n, h) / 2.0).abs() < 1e-15);
            assert!(stepsize(5, n, h) < stepsize(4, n, h));
        }
    }

    #[test]
    fn greedy_examples() {
        let pick = |row: &[f64]| {
            let q = LocalTable::from_layers(1, row.len(), vec![row.to_vec()]);
            greedy_from_q(&q).unwrap().row(0, 0).to_vec()
        };
        assert_eq!(pick(&[0.3, 0.7]), vec![0.0, 1.0]);
        assert_eq!(pick(&[0.5, 0.5]), vec![1.0, 0.0]);
        assert_eq!(pick(&[1.0, 2.0, 3.0, 2.0]), vec![0.0, 0.0, 1.0, 0.0]);
        let bad = LocalTable::from_layers(1, 2, vec![vec![f64::NAN, 1.0]]);
        assert!(greedy_from_q(&bad).is_err());
    }

    #[test]
    fn update_examples() {
        let pi = JointPolicy::new(vec![LocalPolicy::uniform(1, 2, 1)]);
        let g = LocalPolicy::deterministic(1, 2, &[vec![0]]);
        assert_eq!(spi_update(&pi, &[g.clone()], 1.0).unwrap().agent(0), &g);
        assert_eq!(spi_update(&pi, &[g.clone()], 0.5).unwrap().agent(0).row(0, 0), &[0.75, 0.25]);
        assert!(spi_update(&pi, &[g], 0.0).is_err());
    }

    #[test]
    fn single_agent_exact_run() {
        let game = micro_g1();
        let config = SpiConfig {
            t_g: 50,
            use_exact_q: true,
            ..SpiConfig::default()
        };
        let out = run(&game, &config).unwrap();
        assert_eq!(out.logs.len(), 50);
        assert!(out.policy.agent(0).prob(0, 0, 1) > 0.9);
        assert!(out.min_ne_gap().unwrap() < 0.05);
        for w in out.logs.windows(2) {
            assert!(w[1].eta < w[0].eta);
            assert!(w[0].eta > 0.0 && w[0].eta <= 1.0);
        }
    }

    #[test]
    fn single_iteration_equals_one_update() {
        let game = micro_g1();
        let config = SpiConfig {
            t_g: 1,
            use_exact_q: true,
            ..SpiConfig::default()
        };
        let out = run(&game, &config).unwrap();
        assert_eq!(out.logs.len(), 1);
        let g = LocalPolicy::deterministic(1, 2, &[vec![1]]);
        let expected = spi_update(&uniform_policy(&game), &[g], stepsize(1, 1, 1)).unwrap();
        assert_eq!(out.policy, expected);
    }

    #[test]
    fn zero_counts_rejected() {
        let config = SpiConfig {
            t_j: 0,
            ..SpiConfig::default()
        };
        assert!(run(&micro_g1(), &config).is_err());
    }

    /// Identical-interest game with random kernels and shared reward, potential = reward.
    fn random_mpg(seed: u64, ns: usize, na: usize, horizon: usize) -> GameDefinition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = JointSpace::new(vec![ns; 2], vec![na; 2]);
        let profiles = space.num_profiles();
        let shared: Vec<Vec<f64>> = (0..horizon)
            .map(|_| (0..profiles).map(|_| rng.random::<f64>()).collect())
            .collect();
        let oracle = TabularOracle::new(space, vec![shared.clone(), shared.clone()], shared.clone(), Some(shared)).unwrap();
        let kernel = |rng: &mut ChaCha8Rng| {
            let layers = (0..horizon - 1)
                .map(|_| {
                    (0..ns * na)
                        .flat_map(|_| {
                            let row: Vec<f64> = (0..ns).map(|_| 0.1 + rng.random::<f64>()).collect();
                            let total: f64 = row.iter().sum();
                            row.into_iter().map(move |x| x / total)
                        })
                        .collect()
                })
                .collect();
            TransitionKernel::new(ns, na, layers).unwrap()
        };
        let kernels = vec![kernel(&mut rng), kernel(&mut rng)];
        let rho = vec![1.0 / ns as f64; ns];
        tabular_game(vec![AgentSpace::new(ns, na); 2], horizon, kernels, vec![rho.clone(), rho], oracle).unwrap()
    }

    /// Potential range over all deterministic joint policies.
    fn potential_range(game: &GameDefinition) -> f64 {
        let digits_per_agent: Vec<usize> = game
            .spaces()
            .iter()
            .flat_map(|sp| std::iter::repeat_n(sp.num_actions, sp.num_states * game.horizon()))
            .collect();
        let mut digits = vec![0; digits_per_agent.len()];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        loop {
            let mut offset = 0;
            let agents = game
                .spaces()
                .iter()
                .map(|sp| {
                    let choice: Vec<Vec<usize>> = (0..game.horizon())
                        .map(|h| {
                            let start = offset + h * sp.num_states;
                            digits[start..start + sp.num_states].to_vec()
                        })
                        .collect();
                    offset += sp.num_states * game.horizon();
                    LocalPolicy::deterministic(sp.num_states, sp.num_actions, &choice)
                })
                .collect();
            let phi = expected_return(game, &JointPolicy::new(agents), &EvalOptions::default())
                .unwrap()
                .potential
                .unwrap();
            lo = lo.min(phi);
            hi = hi.max(phi);
            if !next_combo(&digits_per_agent, &mut digits) {
                break;
            }
        }
        hi - lo
    }

    #[test]
    fn sufficient_ascent_and_aggregate_bound_on_small_games() {
        for seed in 0..5 {
            let game = random_mpg(seed, 2, 2, 2);
            let config = SpiConfig {
                t_g: 30,
                use_exact_q: true,
                ..SpiConfig::default()
            };
            let out = run(&game, &config).unwrap();
            for check in ascent_checks(&game, &out).unwrap() {
                assert!(check.holds(1e-10), "seed {seed}: {check:?}");
            }
            let (n, h) = (2.0f64, 2.0f64);
            let c = out
                .logs
                .iter()
                .map(|l| l.min_visitation.unwrap())
                .fold(f64::INFINITY, f64::min);
            let lhs: f64 = out
                .logs
                .iter()
                .map(|l| l.ne_gap_total.unwrap() / (l.t as f64).sqrt())
                .sum();
            let rhs = (4.0 * n * n * h.powi(3)).sqrt() / c * (potential_range(&game) + 1.0 + (30f64).ln());
            assert!(lhs <= rhs, "seed {seed}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn iterates_move_at_most_two_eta() {
        let game = random_mpg(11, 2, 3, 3);
        let mut policy = uniform_policy(&game);
        for t in 1..10 {
            let tables = averaged_q_all(&game, &policy, &EvalOptions::default()).unwrap();
            let greedy: Vec<_> = tables.iter().map(|t| greedy_from_q(&t.qbar).unwrap()).collect();
            let eta = stepsize(t, 2, 3);
            let next = spi_update(&policy, &greedy, eta).unwrap();
            for i in 0..2 {
                for h in 0..3 {
                    assert!(policy_l1_distance(policy.agent(i), next.agent(i), h).unwrap() <= 2.0 * eta + 1e-15);
                }
            }
            assert!(next.is_row_stochastic(1e-12));
            policy = next;
        }
    }

    #[test]
    fn sampled_runs_are_reproducible() {
        let game = random_mpg(3, 2, 2, 3);
        let config = SpiConfig {
            t_g: 5,
            t_j: 100,
            t_k: 500,
            master_seed: 77,
            ..SpiConfig::default()
        };
        let a = run(&game, &config).unwrap();
        let b = run(&game, &config).unwrap();
        assert_eq!(a.policy, b.policy);
        for (x, y) in a.logs.iter().zip(&b.logs) {
            assert_eq!(x.ne_gap_total.map(f64::to_bits), y.ne_gap_total.map(f64::to_bits));
            assert_eq!(x.q_err, y.q_err);
        }
        let per_agent = SpiConfig {
            per_agent_rollouts: true,
            ..config
        };
        let c = run(&game, &per_agent).unwrap();
        assert!(c.logs.iter().all(|l| l.q_err.as_ref().unwrap().iter().all(|e| e.is_finite())));
    }

    fn inputs(c: f64, epsilon: f64) -> SampleSizeInputs {
        SampleSizeInputs {
            num_agents: 3,
            horizon: 10,
            num_states: vec![49; 3],
            num_actions: vec![4; 3],
            phi_range: 90.0,
            c,
            epsilon,
            delta: 0.1,
        }
    }

    #[test]
    fn sample_sizes_monotone() {
        let base = theoretical_sample_sizes(&inputs(0.01, 0.1)).unwrap();
        let half_eps = theoretical_sample_sizes(&inputs(0.01, 0.05)).unwrap();
        assert!(half_eps.t_g >= 4.0 * base.t_g);
        assert!(half_eps.t_j > base.t_j && half_eps.t_k > base.t_k);
        let half_c = theoretical_sample_sizes(&inputs(0.005, 0.1)).unwrap();
        assert!(half_c.t_j >= 16.0 * base.t_j);
        assert!(half_c.t_k >= 16.0 * base.t_k);
        assert!(theoretical_sample_sizes(&inputs(0.0, 0.1)).is_err());
        assert!(theoretical_sample_sizes(&inputs(0.1, 1.5)).is_err());
    }

    #[test]
    fn covering_instance_bounds_dwarf_practical_settings() {
        let c = (1.0 / 49.0) * (1.0f64 / 6.0).powi(10);
        let inp = inputs(c, 0.1);
        let sizes = theoretical_sample_sizes(&inp).unwrap();
        assert!(sizes.t_g > 1e20 && sizes.t_j > 1e40 && sizes.t_k > 1e40);
        let text = sample_size_report(&inp, &sizes, Some((40, 800, 50_000)));
        assert!(text.contains("below the theoretical bounds"));
    }
}
