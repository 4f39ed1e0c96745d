//! Experiment configuration, presets, dispatch and output files.

pub mod config;
pub mod plot;
pub mod presets;
pub mod report;

use std::f64::consts::E;

use serde_json::{json, Value};

use crate::counterexample::{analyze_counterexample, SECOND_STAGE, THIRD_STAGE};
use crate::covering::{build_covering_game, Design};
use crate::error::{Error, Result};
use crate::eval::{ne_gap, state_distributions, verify_potential, EvalOptions, MonteCarlo};
use crate::game::{micro_g1, GameDefinition};
use crate::io::{load_policy, load_tabular_game};
use crate::poa::{check_markov_smoothness, min_mu_for_lambda_markov, optimal_welfare};
use crate::policy::{uniform_policy, JointPolicy};
use crate::spi::{self, SampleSizeInputs, SpiConfig};

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind, StepsizeSpec, DEFAULT_SEED};
pub use presets::{lookup, PresetDefaults, PresetGame, PRESETS};
pub use report::{iterations_csv, write_report, IterationTable, RunReport, CSV_FIXED_COLUMNS};

/// Slack used when counting ascent violations in simulate summaries.
pub const ASCENT_SLACK: f64 = 1e-8;

/// A game together with the preset defaults that apply to it.
pub struct ResolvedGame {
    pub game: GameDefinition,
    pub defaults: PresetDefaults,
    /// Reward design when the game is a covering game.
    pub design: Option<Design>,
    pub description: String,
}

pub fn build_game(cfg: &ExperimentConfig) -> Result<ResolvedGame> {
    let g = &cfg.game;
    if let Some(name) = &g.preset {
        let (preset, defaults) = lookup(name, g.design)?;
        let (game, design) = match preset {
            PresetGame::Covering(c) => (build_covering_game(&c)?, Some(c.design)),
            PresetGame::Counterexample => (crate::counterexample::build_counterexample(), None),
            PresetGame::MicroG1 => (micro_g1(), None),
        };
        let description = match design {
            Some(d) => format!("preset {name} ({})", d.short_name()),
            None => format!("preset {name}"),
        };
        return Ok(ResolvedGame {
            game,
            defaults,
            design,
            description,
        });
    }
    if let Some(c) = &g.covering {
        return Ok(ResolvedGame {
            game: build_covering_game(c)?,
            defaults: presets::GENERIC_DEFAULTS,
            design: Some(c.design),
            description: format!("{}x{} covering game ({})", c.grid_size, c.grid_size, c.design.short_name()),
        });
    }
    if let Some(path) = &g.tabular {
        let full = cfg.resolve_path(path);
        return Ok(ResolvedGame {
            game: load_tabular_game(&full)?,
            defaults: presets::GENERIC_DEFAULTS,
            design: None,
            description: format!("tabular game {}", full.display()),
        });
    }
    Err(Error::Config("no game source given".into()))
}

/// Returns the config with every default filled in, so that the echo is a
/// complete description of the run. Relative game and policy paths become absolute.
pub fn resolve(cfg: &ExperimentConfig, defaults: &PresetDefaults) -> ExperimentConfig {
    let mut r = cfg.clone();
    r.experiment.get_or_insert(ExperimentKind::Simulate);
    r.seed.get_or_insert(DEFAULT_SEED);
    if let Some(p) = &r.game.tabular {
        r.game.tabular = Some(cfg.resolve_path(p).display().to_string());
    }
    let s = &mut r.spi;
    s.t_g.get_or_insert(defaults.t_g);
    s.t_j.get_or_insert(defaults.t_j);
    s.t_k.get_or_insert(defaults.t_k);
    s.exact_q.get_or_insert(false);
    s.exact_eval_logging.get_or_insert(true);
    s.per_agent_rollouts.get_or_insert(false);
    s.stepsize.get_or_insert(defaults.stepsize);
    let a = &mut r.analyzer;
    a.lambda.get_or_insert_with(|| vec![1.0]);
    a.mu.get_or_insert_with(Vec::new);
    a.mu_search.get_or_insert(true);
    a.pair_cap.get_or_insert(crate::poa::DEFAULT_PAIR_CAP as u64);
    let e = &mut r.eval;
    match &e.policy {
        Some(p) if p != "uniform" => e.policy = Some(cfg.resolve_path(p).display().to_string()),
        _ => e.policy = Some("uniform".into()),
    }
    e.cap.get_or_insert(crate::eval::DEFAULT_CAP as u64);
    e.monte_carlo_episodes.get_or_insert(0);
    e.potential_trials.get_or_insert(100);
    let z = &mut r.sample_sizes;
    z.epsilon.get_or_insert(0.1);
    z.delta.get_or_insert(0.05);
    if z.c.is_none() {
        z.c = defaults.c;
    }
    r.output.plot.get_or_insert(false);
    r.base_dir = cfg.base_dir.clone();
    r
}

fn eval_options(cfg: &ExperimentConfig) -> EvalOptions {
    EvalOptions {
        cap: cfg.eval_cap(),
        monte_carlo: match cfg.eval.monte_carlo_episodes {
            Some(episodes) if episodes > 0 => Some(MonteCarlo {
                episodes,
                seed: cfg.seed(),
            }),
            _ => None,
        },
    }
}

fn spi_config(cfg: &ExperimentConfig) -> SpiConfig {
    let s = &cfg.spi;
    SpiConfig {
        t_g: s.t_g.unwrap_or(1),
        t_j: s.t_j.unwrap_or(1),
        t_k: s.t_k.unwrap_or(1),
        master_seed: cfg.seed(),
        stepsize_override: s.stepsize.and_then(|x| x.schedule()),
        exact_eval_logging: s.exact_eval_logging.unwrap_or(true),
        per_agent_rollouts: s.per_agent_rollouts.unwrap_or(false),
        use_exact_q: s.exact_q.unwrap_or(false),
        eval: eval_options(cfg),
    }
}

fn with_context(kind: ExperimentKind, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", kind.name())),
        other => other,
    }
}

/// Runs the experiment named in the config (simulate when none is named).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.check()?;
    let kind = cfg.experiment.unwrap_or(ExperimentKind::Simulate);
    if kind == ExperimentKind::Counterexample && cfg.game.preset.is_none() && cfg.game.covering.is_none() && cfg.game.tabular.is_none() {
        let resolved = resolve(cfg, &presets::GENERIC_DEFAULTS);
        return run_counterexample(resolved).map_err(|e| with_context(kind, e));
    }
    let rg = build_game(cfg)?;
    let resolved = resolve(cfg, &rg.defaults);
    let out = match kind {
        ExperimentKind::Simulate => run_simulate(resolved, &rg),
        ExperimentKind::AnalyzeSmoothness => run_smoothness(resolved, &rg),
        ExperimentKind::Counterexample => run_counterexample(resolved),
        ExperimentKind::EvalPolicy => run_eval_policy(resolved, &rg),
        ExperimentKind::SampleSizes => run_sample_sizes(resolved, &rg),
    };
    out.map_err(|e| with_context(kind, e))
}

fn optimum_json(game: &GameDefinition, opts: &EvalOptions) -> (Option<f64>, Value) {
    match optimal_welfare(game, opts) {
        Ok(v) => (Some(v), json!(v)),
        Err(e) => (None, json!({ "unavailable": e.to_string() })),
    }
}

fn run_simulate(cfg: ExperimentConfig, rg: &ResolvedGame) -> Result<RunReport> {
    let game = &rg.game;
    let sc = spi_config(&cfg);
    let outcome = spi::run(game, &sc)?;
    let opts = eval_options(&cfg);
    let mut text = vec![format!(
        "simulate on {}: T_G={} T_J={} T_K={} seed={} exact_q={}",
        rg.description,
        sc.t_g,
        sc.t_j,
        sc.t_k,
        sc.master_seed,
        sc.use_exact_q
    )];
    let mut summary = json!({
        "game": rg.description,
        "iterations": outcome.logs.len(),
        "transition_batch": outcome.transition_batch,
        "unvisited_transitions": outcome.logs.first().map(|l| l.unvisited_transitions),
    });
    if let Some((t, gap)) = outcome.best_iterate {
        summary["min_ne_gap"] = json!({ "t": t, "value": gap });
        text.push(format!("min NE-gap {gap:.6e} at t={t}"));
    }
    let q_err_max = outcome
        .logs
        .iter()
        .filter_map(|l| l.q_err.as_ref())
        .flat_map(|v| v.iter().copied())
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    summary["q_err_max"] = json!(q_err_max);
    if let Some(fe) = &outcome.final_evaluation {
        summary["final"] = json!(fe);
        text.push(format!("final NE-gap {:.6e}, welfare {:.6}", fe.ne_gap_total, fe.welfare));
        let (opt, opt_json) = optimum_json(game, &opts);
        summary["optimal_welfare"] = opt_json;
        if let Some(o) = opt.filter(|o| *o > 0.0) {
            summary["welfare_ratio"] = json!(fe.welfare / o);
            text.push(format!("welfare / optimum {:.6} (optimum {o:.6})", fe.welfare / o));
        }
        if sc.use_exact_q && game.has_potential() {
            let checks = spi::ascent_checks(game, &outcome)?;
            let violations: Vec<usize> = checks.iter().filter(|c| !c.holds(ASCENT_SLACK)).map(|c| c.t).collect();
            let worst = checks.iter().map(|c| c.lhs - c.rhs).fold(f64::INFINITY, f64::min);
            text.push(format!("ascent inequality violated at {} of {} iterations", violations.len(), checks.len()));
            summary["ascent"] = json!({
                "checks": checks.len(),
                "violations": violations,
                "min_margin": if checks.is_empty() { Value::Null } else { json!(worst) },
            });
        }
    }
    Ok(RunReport {
        experiment: ExperimentKind::Simulate,
        seed: cfg.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        iterations: Some(IterationTable {
            num_agents: game.num_agents(),
            logs: outcome.logs.clone(),
        }),
        policy: Some(outcome.policy.clone()),
        config: cfg,
        summary,
        text,
    })
}

fn design_certificate(design: Design) -> Option<(f64, f64)> {
    match design {
        Design::IdenticalInterest => None,
        Design::MarginalContribution => Some((1.0, 1.0)),
        Design::UtilitySharing => Some((1.0, 1.0 / (E - 1.0))),
    }
}

fn run_smoothness(cfg: ExperimentConfig, rg: &ResolvedGame) -> Result<RunReport> {
    let game = &rg.game;
    let opts = eval_options(&cfg);
    let pair_cap = cfg.pair_cap();
    let lambdas = cfg.analyzer.lambda.clone().unwrap_or_default();
    let mus = cfg.analyzer.mu.clone().unwrap_or_default();
    let mut text = vec![format!("smoothness analysis of {}", rg.description)];
    let mut searches = Vec::new();
    let mut certificates = Vec::new();
    for &lambda in &lambdas {
        if cfg.analyzer.mu_search.unwrap_or(true) {
            let s = min_mu_for_lambda_markov(game, lambda, &opts, pair_cap)?;
            match (s.mu, s.poa_lower()) {
                (Some(mu), Some(b)) => text.push(format!("lambda={lambda}: smallest mu {mu:.12}, PoA >= {b:.12}")),
                _ => text.push(format!("lambda={lambda}: no mu certifies this lambda")),
            }
            searches.push(s);
        }
        for &mu in &mus {
            let c = check_markov_smoothness(game, lambda, mu, &opts, pair_cap)?;
            text.push(format!(
                "({lambda}, {mu}) {}",
                if c.certified { format!("certified, PoA >= {:.12}", c.poa_lower) } else { "not certified".into() }
            ));
            certificates.push(c);
        }
    }
    let mut summary = json!({
        "game": rg.description,
        "mu_search": searches,
        "certificates": certificates,
    });
    if let Some((lambda, mu)) = rg.design.and_then(design_certificate) {
        let c = check_markov_smoothness(game, lambda, mu, &opts, pair_cap)?;
        text.push(format!(
            "design certificate ({lambda}, {mu:.12}): {}, PoA >= {:.12}",
            if c.certified { "certified" } else { "NOT certified" },
            c.poa_lower
        ));
        summary["design_certificate"] = json!(c);
    }
    Ok(RunReport::summary_only(ExperimentKind::AnalyzeSmoothness, cfg, summary, text))
}

fn run_counterexample(cfg: ExperimentConfig) -> Result<RunReport> {
    let opts = EvalOptions {
        cap: cfg.eval_cap(),
        monte_carlo: None,
    };
    let r = analyze_counterexample(&opts)?;
    let text = vec![
        format!("stage 2 PoA {}", r.second_stage.poa),
        format!("stage 3 PoA {}", r.third_stage.poa),
        format!(
            "Markov game: worst NE p(A)={}, q(A)={} with welfare {}; optimum {}; PoA {}",
            r.markov.worst.p, r.markov.worst.q, r.markov.worst_welfare, r.optimum, r.markov_poa
        ),
    ];
    let summary = json!({
        "second_stage_table": SECOND_STAGE,
        "third_stage_table": THIRD_STAGE,
        "normal_form_table": r.normal_form,
        "report": r,
    });
    Ok(RunReport::summary_only(ExperimentKind::Counterexample, cfg, summary, text))
}

fn load_eval_policy(cfg: &ExperimentConfig, game: &GameDefinition) -> Result<JointPolicy> {
    match cfg.eval.policy.as_deref() {
        None | Some("uniform") => Ok(uniform_policy(game)),
        Some(p) => {
            let pi = load_policy(cfg.resolve_path(p))?;
            pi.check_against(game)?;
            Ok(pi)
        }
    }
}

fn run_eval_policy(cfg: ExperimentConfig, rg: &ResolvedGame) -> Result<RunReport> {
    let game = &rg.game;
    let opts = eval_options(&cfg);
    let pi = load_eval_policy(&cfg, game)?;
    let report = ne_gap(game, &pi, &opts)?;
    let mut text = vec![format!(
        "policy {} on {}: NE-gap {:.6e}, welfare {:.6}",
        cfg.eval.policy.as_deref().unwrap_or("uniform"),
        rg.description,
        report.ne_gap_total,
        report.welfare
    )];
    let (_, opt) = optimum_json(game, &opts);
    let mut summary = json!({
        "game": rg.description,
        "evaluation": report,
        "optimal_welfare": opt,
        "min_visitation": state_distributions(game, &pi).min_visitation(),
    });
    if game.has_potential() {
        let trials = cfg.eval.potential_trials.unwrap_or(100);
        let v = verify_potential(game, trials, cfg.seed(), &opts)?;
        text.push(format!(
            "potential check {} ({} stage checks, {} policy checks)",
            if v.passed() { "passed" } else { "FAILED" },
            v.stage_checks,
            v.policy_checks
        ));
        summary["potential_check"] = json!(v);
    }
    Ok(RunReport::summary_only(ExperimentKind::EvalPolicy, cfg, summary, text))
}

fn run_sample_sizes(cfg: ExperimentConfig, rg: &ResolvedGame) -> Result<RunReport> {
    let game = &rg.game;
    let n = game.num_agents();
    let (lo, hi) = game.reward_range();
    let z = &cfg.sample_sizes;
    // n unilateral switches, each moving a return by at most H (hi - lo)
    let phi_range = z.phi_range.unwrap_or(n as f64 * game.horizon() as f64 * (hi - lo));
    let c = match z.c {
        Some(c) => c,
        None => state_distributions(game, &uniform_policy(game)).min_visitation(),
    };
    let inputs = SampleSizeInputs {
        num_agents: n,
        horizon: game.horizon(),
        num_states: game.spaces().iter().map(|s| s.num_states).collect(),
        num_actions: game.spaces().iter().map(|s| s.num_actions).collect(),
        phi_range,
        c,
        epsilon: z.epsilon.unwrap_or(0.1),
        delta: z.delta.unwrap_or(0.05),
    };
    let sizes = spi::theoretical_sample_sizes(&inputs)?;
    let practical = (cfg.spi.t_g.unwrap_or(1), cfg.spi.t_j.unwrap_or(1), cfg.spi.t_k.unwrap_or(1));
    let body = spi::sample_size_report(&inputs, &sizes, Some(practical));
    let summary = json!({
        "game": rg.description,
        "inputs": inputs,
        "theoretical": sizes,
        "practical": { "T_G": practical.0, "T_J": practical.1, "T_K": practical.2 },
        "report": body,
    });
    let text = body.lines().map(str::to_string).collect();
    Ok(RunReport::summary_only(ExperimentKind::SampleSizes, cfg, summary, text))
}
