//! Named games with their default learner settings.

use crate::covering::{desk_5x5, paper_7x7, tiny_3x3, CoveringConfig, Design};
use crate::error::{Error, Result};
use crate::runner::config::StepsizeSpec;

/// `(name, description)` of every preset. Covering presets accept a
/// `-ii`, `-mc` or `-us` suffix selecting the reward design.
pub const PRESETS: &[(&str, &str)] = &[
    ("paper-7x7", "7x7 covering game, 3 agents, H=10, treasures in three corners"),
    ("desk-5x5", "5x5 covering game, 2 agents, H=4, treasures in two opposite corners"),
    ("tiny-3x3", "3x3 covering game, 2 agents, H=2, treasures at two opposite corners"),
    ("counterexample", "two-agent, three-stage game with Markov PoA 7/16"),
    ("micro-g1", "one agent, one state, one stage, rewards 0.3 and 0.7"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PresetGame {
    Covering(CoveringConfig),
    Counterexample,
    MicroG1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetDefaults {
    pub t_g: usize,
    pub t_j: usize,
    pub t_k: usize,
    pub stepsize: StepsizeSpec,
    /// Known exploration constant, when one is available.
    pub c: Option<f64>,
}

/// Settings for games that are not presets.
pub const GENERIC_DEFAULTS: PresetDefaults = PresetDefaults {
    t_g: 40,
    t_j: 800,
    t_k: 50_000,
    stepsize: StepsizeSpec::Default,
    c: None,
};

fn split_design(name: &str) -> Result<(&str, Option<Design>)> {
    for suffix in ["-ii", "-mc", "-us"] {
        if let Some(base) = name.strip_suffix(suffix) {
            return Ok((base, Design::parse(&suffix[1..])));
        }
    }
    Ok((name, None))
}

/// Resolves a preset name; `design` applies when the name has no design suffix
/// (identical interest if neither is given).
pub fn lookup(name: &str, design: Option<Design>) -> Result<(PresetGame, PresetDefaults)> {
    let (base, suffix) = split_design(name)?;
    if suffix.is_some() && design.is_some() && suffix != design {
        return Err(Error::Config(format!("preset {name} conflicts with game.design")));
    }
    let d = suffix.or(design).unwrap_or(Design::IdenticalInterest);
    let covering = |cfg: CoveringConfig, defaults| Ok((PresetGame::Covering(cfg), defaults));
    match base {
        "paper-7x7" => covering(
            paper_7x7(d),
            PresetDefaults {
                c: Some((1.0 / 49.0) * (1.0f64 / 6.0).powi(10)),
                ..GENERIC_DEFAULTS
            },
        ),
        "desk-5x5" => covering(
            desk_5x5(d),
            PresetDefaults {
                t_g: 200,
                t_j: 500,
                t_k: 20_000,
                stepsize: StepsizeSpec::InvSqrt { eta1: 0.25 },
                c: None,
            },
        ),
        "tiny-3x3" => covering(
            tiny_3x3(d, 2),
            PresetDefaults {
                t_g: 50,
                t_j: 200,
                t_k: 5_000,
                ..GENERIC_DEFAULTS
            },
        ),
        "counterexample" | "micro-g1" if suffix.is_some() || design.is_some() => {
            Err(Error::Config(format!("preset {base} has no reward designs")))
        }
        "counterexample" => Ok((
            PresetGame::Counterexample,
            PresetDefaults {
                t_g: 50,
                t_j: 200,
                t_k: 2_000,
                ..GENERIC_DEFAULTS
            },
        )),
        "micro-g1" => Ok((
            PresetGame::MicroG1,
            PresetDefaults {
                t_g: 50,
                t_j: 100,
                t_k: 100,
                ..GENERIC_DEFAULTS
            },
        )),
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Err(Error::Config(format!("unknown preset {name:?}; known presets: {}", known.join(", "))))
        }
    }
}
