//! Generalized smoothness certificates, price-of-anarchy bounds, exact
//! equilibrium analysis of 2x2 games and the centralized welfare optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::game::GameDefinition;
use crate::joint::{decode, encode, next_combo};

/// Largest number of ordered profile pairs a smoothness check enumerates by default.
pub const DEFAULT_PAIR_CAP: u128 = 100_000_000;

/// One stage of a game as a normal-form game over local strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGame {
    strategy_counts: Vec<usize>,
    /// `rewards[i][profile]`, profiles in mixed radix with player 0 most significant.
    rewards: Vec<Vec<f64>>,
    welfare: Vec<f64>,
}

impl StageGame {
    pub fn new(strategy_counts: Vec<usize>, rewards: Vec<Vec<f64>>, welfare: Vec<f64>) -> Result<Self> {
        if strategy_counts.is_empty() || strategy_counts.contains(&0) {
            return Err(Error::Shape("every player needs at least one strategy".into()));
        }
        let profiles: usize = strategy_counts.iter().product();
        if rewards.len() != strategy_counts.len() {
            return Err(Error::Shape(format!(
                "{} reward tables for {} players",
                rewards.len(),
                strategy_counts.len()
            )));
        }
        if welfare.len() != profiles || rewards.iter().any(|r| r.len() != profiles) {
            return Err(Error::Shape(format!("stage tables must have {profiles} entries")));
        }
        if welfare.iter().chain(rewards.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("stage game table".into()));
        }
        Ok(Self {
            strategy_counts,
            rewards,
            welfare,
        })
    }

    /// Every player receives the welfare.
    pub fn identical_interest(strategy_counts: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        let n = strategy_counts.len();
        Self::new(strategy_counts, vec![table.clone(); n], table)
    }

    /// Two-player identical-interest game from a row-major matrix.
    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<Self> {
        let rows = matrix.len();
        let cols = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix".into()));
        }
        Self::identical_interest(vec![rows, cols], matrix.concat())
    }

    pub fn num_players(&self) -> usize {
        self.strategy_counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn num_profiles(&self) -> usize {
        self.welfare.len()
    }

    pub fn profile_index(&self, strategies: &[usize]) -> usize {
        encode(&self.strategy_counts, strategies)
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_players()];
        decode(&self.strategy_counts, index, &mut out);
        out
    }

    pub fn reward(&self, player: usize, profile: usize) -> f64 {
        self.rewards[player][profile]
    }

    pub fn welfare(&self, profile: usize) -> f64 {
        self.welfare[profile]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn welfare_table(&self) -> &[f64] {
        &self.welfare
    }

    /// All rewards and welfare multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            strategy_counts: self.strategy_counts.clone(),
            rewards: self.rewards.iter().map(|r| r.iter().map(|x| x * c).collect()).collect(),
            welfare: self.welfare.iter().map(|x| x * c).collect(),
        }
    }

    /// Profile index with player `i`'s strategy replaced by `x`.
    fn replace(&self, profile: usize, player: usize, x: usize) -> usize {
        let stride: usize = self.strategy_counts[player + 1..].iter().product();
        let own = (profile / stride) % self.strategy_counts[player];
        profile - own * stride + x * stride
    }
}

/// Stage `stage` of `game` as a normal-form game; a player's strategy is its
/// local `(state, action)` pair, or just its state when rewards ignore actions.
pub fn stage_from_game(game: &GameDefinition, stage: usize, cap: u128) -> Result<StageGame> {
    if stage >= game.horizon() {
        return Err(Error::InvalidParameter(format!("stage {stage} outside horizon {}", game.horizon())));
    }
    let with_actions = game.oracle().depends_on_actions();
    let counts: Vec<usize> = game
        .spaces()
        .iter()
        .map(|sp| if with_actions { sp.num_states * sp.num_actions } else { sp.num_states })
        .collect();
    let size: u128 = counts.iter().map(|&c| c as u128).product();
    if size > cap {
        return Err(Error::CapExceeded {
            what: "stage game profiles".into(),
            size,
            cap,
        });
    }
    let n = game.num_agents();
    let profiles = size as usize;
    let mut rewards = vec![vec![0.0; profiles]; n];
    let mut welfare = vec![0.0; profiles];
    let mut digits = vec![0; n];
    let mut states = vec![0; n];
    let mut actions = vec![0; n];
    for p in 0..profiles {
        for i in 0..n {
            if with_actions {
                let na = game.space(i).num_actions;
                states[i] = digits[i] / na;
                actions[i] = digits[i] % na;
            } else {
                states[i] = digits[i];
            }
        }
        for (i, table) in rewards.iter_mut().enumerate() {
            table[p] = game.reward(i, stage, &states, &actions);
        }
        welfare[p] = game.welfare(stage, &states, &actions);
        next_combo(&counts, &mut digits);
    }
    StageGame::new(counts, rewards, welfare)
}

/// A profile pair violating (or binding) the smoothness inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessWitness {
    pub stage: Option<usize>,
    pub profile: Vec<usize>,
    pub deviation: Vec<usize>,
    /// `sum_i r_i(p) - r_i(p*_i, p_-i)`.
    pub lhs: f64,
    /// `(1 + mu) v(p) - lambda v(p*)`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessCertificate {
    pub lambda: f64,
    pub mu: f64,
    pub poa_lower: f64,
    pub certified: bool,
    pub pairs_checked: u128,
    pub witness: Option<SmoothnessWitness>,
}

fn tolerance(stage: &StageGame) -> f64 {
    let scale = stage
        .welfare
        .iter()
        .chain(stage.rewards.iter().flatten())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    1e-12 * (1.0 + scale) * stage.num_players() as f64
}

fn check_params(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu {mu} must be non-negative")));
    }
    Ok(())
}

fn pair_count(stage: &StageGame, cap: u128) -> Result<u128> {
    let p = stage.num_profiles() as u128;
    let pairs = p * p;
    if pairs > cap {
        return Err(Error::CapExceeded {
            what: "smoothness profile pairs".into(),
            size: pairs,
            cap,
        });
    }
    Ok(pairs)
}

/// Deviation gain sum of one ordered pair.
fn pair_lhs(stage: &StageGame, p: usize, q: &[usize]) -> f64 {
    (0..stage.num_players())
        .map(|i| stage.rewards[i][p] - stage.rewards[i][stage.replace(p, i, q[i])])
        .sum()
}

/// Exhaustive check of `sum_i r_i(p) - r_i(p*_i, p_-i) <= (1 + mu) v(p) - lambda v(p*)`
/// over all ordered profile pairs. The reported witness is the lexicographically
/// smallest violating pair.
pub fn check_smoothness(stage: &StageGame, lambda: f64, mu: f64, cap: u128) -> Result<SmoothnessCertificate> {
    check_params(lambda, mu)?;
    let pairs = pair_count(stage, cap)?;
    let tol = tolerance(stage);
    let profiles = stage.num_profiles();
    let witness = (0..profiles).into_par_iter().find_map_first(|p| {
        (0..profiles).find_map(|q| {
            let dev = stage.decode(q);
            let lhs = pair_lhs(stage, p, &dev);
            let rhs = (1.0 + mu) * stage.welfare[p] - lambda * stage.welfare[q];
            (lhs > rhs + tol).then(|| SmoothnessWitness {
                stage: None,
                profile: stage.decode(p),
                deviation: dev,
                lhs,
                rhs,
            })
        })
    });
    Ok(SmoothnessCertificate {
        lambda,
        mu,
        poa_lower: lambda / (1.0 + mu),
        certified: witness.is_none(),
        pairs_checked: pairs,
        witness,
    })
}

/// Per-stage certificates of a Markov game; certified only if every stage is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovSmoothness {
    pub lambda: f64,
    pub mu: f64,
    pub poa_lower: f64,
    pub certified: bool,
    pub stages: Vec<SmoothnessCertificate>,
}

impl MarkovSmoothness {
    pub fn first_witness(&self) -> Option<&SmoothnessWitness> {
        self.stages.iter().find_map(|c| c.witness.as_ref())
    }
}

pub fn check_markov_smoothness(
    game: &GameDefinition,
    lambda: f64,
    mu: f64,
    opts: &EvalOptions,
    pair_cap: u128,
) -> Result<MarkovSmoothness> {
    let stages = (0..game.horizon())
        .map(|h| {
            let sg = stage_from_game(game, h, opts.cap)?;
            let mut cert = check_smoothness(&sg, lambda, mu, pair_cap)?;
            if let Some(w) = cert.witness.as_mut() {
                w.stage = Some(h);
            }
            Ok(cert)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarkovSmoothness {
        lambda,
        mu,
        poa_lower: lambda / (1.0 + mu),
        certified: stages.iter().all(|c| c.certified),
        stages,
    })
}

/// Result of searching the smallest `mu` for a fixed `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSearch {
    pub lambda: f64,
    /// `None` when no `mu >= 0` works.
    pub mu: Option<f64>,
    pub certificate: Option<SmoothnessCertificate>,
    /// Pair forcing the value of `mu` (for feasible results).
    pub binding: Option<SmoothnessWitness>,
    /// A zero-welfare or negative-welfare pair that no `mu` can satisfy.
    pub infeasible: Option<SmoothnessWitness>,
}

impl MuSearch {
    pub fn poa_lower(&self) -> Option<f64> {
        self.mu.map(|mu| self.lambda / (1.0 + mu))
    }
}

/// Smallest `mu >= 0` such that the stage game is `(lambda, mu)`-smooth.
///
/// Each pair gives `mu v(p) >= g` with `g = lhs + lambda v(p*) - v(p)`:
/// a lower bound when `v(p) > 0`, an upper bound when `v(p) < 0` and a
/// `mu`-free feasibility condition when `v(p) = 0`.
pub fn min_mu_for_lambda(stage: &StageGame, lambda: f64, cap: u128) -> Result<MuSearch> {
    check_params(lambda, 0.0)?;
    pair_count(stage, cap)?;
    let tol = tolerance(stage);
    let profiles = stage.num_profiles();

    #[derive(Clone)]
    struct Bounds {
        lower: (f64, Option<(usize, usize)>),
        upper: (f64, Option<(usize, usize)>),
        infeasible: Option<(usize, usize)>,
    }
    let merge = |a: Bounds, b: Bounds| Bounds {
        lower: if b.lower.0 > a.lower.0 { b.lower } else { a.lower },
        upper: if b.upper.0 < a.upper.0 { b.upper } else { a.upper },
        infeasible: a.infeasible.or(b.infeasible),
    };
    let empty = Bounds {
        lower: (0.0, None),
        upper: (f64::INFINITY, None),
        infeasible: None,
    };
    let bounds = (0..profiles)
        .into_par_iter()
        .map(|p| {
            let mut b = empty.clone();
            let vp = stage.welfare[p];
            for q in 0..profiles {
                let g = pair_lhs(stage, p, &stage.decode(q)) + lambda * stage.welfare[q] - vp;
                if vp.abs() <= 1e-15 {
                    if g > tol && b.infeasible.is_none() {
                        b.infeasible = Some((p, q));
                    }
                } else if vp > 0.0 {
                    let m = g / vp;
                    if g > tol && m > b.lower.0 {
                        b.lower = (m, Some((p, q)));
                    }
                } else {
                    let m = g / vp;
                    if m < b.upper.0 {
                        b.upper = (m, Some((p, q)));
                    }
                }
            }
            b
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(empty.clone(), merge);

    let witness = |(p, q): (usize, usize), mu: f64| {
        let dev = stage.decode(q);
        SmoothnessWitness {
            stage: None,
            profile: stage.decode(p),
            lhs: pair_lhs(stage, p, &dev),
            rhs: (1.0 + mu) * stage.welfare[p] - lambda * stage.welfare[q],
            deviation: dev,
        }
    };
    let mu = bounds.lower.0;
    let slack = tol / stage.welfare.iter().fold(f64::INFINITY, |m, v| if v.abs() > 1e-15 { m.min(v.abs()) } else { m });
    let infeasible = bounds
        .infeasible
        .or_else(|| (mu > bounds.upper.0 + slack).then(|| bounds.upper.1.expect("finite upper bound has a pair")));
    if let Some(pair) = infeasible {
        return Ok(MuSearch {
            lambda,
            mu: None,
            certificate: None,
            binding: None,
            infeasible: Some(witness(pair, mu)),
        });
    }
    let certificate = check_smoothness(stage, lambda, mu, cap)?;
    Ok(MuSearch {
        lambda,
        mu: Some(mu),
        binding: bounds.lower.1.map(|pair| witness(pair, mu)),
        certificate: Some(certificate),
        infeasible: None,
    })
}

/// Smallest `mu` over all stages of a Markov game (the max of the per-stage values).
pub fn min_mu_for_lambda_markov(game: &GameDefinition, lambda: f64, opts: &EvalOptions, pair_cap: u128) -> Result<MuSearch> {
    let mut worst: Option<MuSearch> = None;
    for h in 0..game.horizon() {
        let sg = stage_from_game(game, h, opts.cap)?;
        let mut s = min_mu_for_lambda(&sg, lambda, pair_cap)?;
        for w in [s.binding.as_mut(), s.infeasible.as_mut()].into_iter().flatten() {
            w.stage = Some(h);
        }
        if s.mu.is_none() {
            return Ok(s);
        }
        if worst.as_ref().is_none_or(|w| s.mu > w.mu) {
            worst = Some(s);
        }
    }
    let mut result = worst.expect("horizon is at least one");
    if let Some(mu) = result.mu {
        let cert = check_markov_smoothness(game, lambda, mu, opts, pair_cap)?;
        result.certificate = Some(SmoothnessCertificate {
            lambda,
            mu,
            poa_lower: cert.poa_lower,
            certified: cert.certified,
            pairs_checked: cert.stages.iter().map(|c| c.pairs_checked).sum(),
            witness: cert.first_witness().cloned(),
        });
    }
    Ok(result)
}

/// `lambda / (1 + mu)` of a certified certificate.
pub fn poa_lower_bound(cert: &SmoothnessCertificate) -> Result<f64> {
    if !cert.certified {
        return Err(Error::Uncertified);
    }
    Ok(cert.lambda / (1.0 + cert.mu))
}

/// Mixed profile of a 2x2 game: probabilities of each player's first strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mixed2x2 {
    pub p: f64,
    pub q: f64,
}

impl Mixed2x2 {
    fn weights(&self) -> [f64; 4] {
        let (p, q) = (self.p, self.q);
        [p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)]
    }

    pub fn expected(&self, table: &[f64]) -> f64 {
        self.weights().iter().zip(table).map(|(w, x)| w * x).sum()
    }

    pub fn is_pure(&self) -> bool {
        (self.p == 0.0 || self.p == 1.0) && (self.q == 0.0 || self.q == 1.0)
    }
}

/// Sum of both players' best-response improvements at a mixed profile.
pub fn nash_gap_2x2(stage: &StageGame, m: Mixed2x2) -> f64 {
    let r1 = &stage.rewards[0];
    let r2 = &stage.rewards[1];
    let u1 = m.expected(r1);
    let u2 = m.expected(r2);
    let b1 = [
        m.q * r1[0] + (1.0 - m.q) * r1[1],
        m.q * r1[2] + (1.0 - m.q) * r1[3],
    ];
    let b2 = [
        m.p * r2[0] + (1.0 - m.p) * r2[2],
        m.p * r2[1] + (1.0 - m.p) * r2[3],
    ];
    (b1[0].max(b1[1]) - u1).max(0.0) + (b2[0].max(b2[1]) - u2).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium2x2 {
    pub profile: Mixed2x2,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeSet2x2 {
    pub pure: Vec<Equilibrium2x2>,
    pub mixed: Vec<Equilibrium2x2>,
    /// Some player is indifferent along a whole segment of equilibria.
    pub continuum: bool,
    pub worst_welfare: f64,
    pub worst: Mixed2x2,
    pub optimum_welfare: f64,
    pub poa: f64,
}

impl NeSet2x2 {
    pub fn all(&self) -> impl Iterator<Item = &Equilibrium2x2> {
        self.pure.iter().chain(&self.mixed)
    }
}

const NE_TOL: f64 = 1e-9;

/// Pure equilibria plus the mixed ones given by the indifference conditions.
pub fn analyze_2x2(stage: &StageGame) -> Result<NeSet2x2> {
    if stage.strategy_counts != [2, 2] {
        return Err(Error::Shape("analyze_2x2 needs exactly two players with two strategies".into()));
    }
    let r1 = &stage.rewards[0];
    let r2 = &stage.rewards[1];
    // p makes player 2 indifferent, q makes player 1 indifferent
    let solve = |num: f64, den: f64| -> Option<f64> {
        if den.abs() < 1e-15 {
            None
        } else {
            let x = num / den;
            (x > 0.0 && x < 1.0).then_some(x)
        }
    };
    let p_star = solve(r2[3] - r2[2], r2[0] - r2[2] - r2[1] + r2[3]);
    let q_star = solve(r1[3] - r1[1], r1[0] - r1[1] - r1[2] + r1[3]);
    let mut ps = vec![0.0, 1.0];
    ps.extend(p_star);
    let mut qs = vec![0.0, 1.0];
    qs.extend(q_star);

    let mut found: Vec<Mixed2x2> = Vec::new();
    for &p in &ps {
        for &q in &qs {
            let m = Mixed2x2 { p, q };
            if nash_gap_2x2(stage, m) <= NE_TOL {
                found.push(m);
            }
        }
    }
    let mut continuum = false;
    for (a, x) in found.iter().enumerate() {
        for y in &found[a + 1..] {
            if x.p == y.p || x.q == y.q {
                let mid = Mixed2x2 {
                    p: (x.p + y.p) / 2.0,
                    q: (x.q + y.q) / 2.0,
                };
                if nash_gap_2x2(stage, mid) <= NE_TOL {
                    continuum = true;
                }
            }
        }
    }
    let (mut pure, mut mixed) = (Vec::new(), Vec::new());
    for m in found {
        let e = Equilibrium2x2 {
            profile: m,
            welfare: m.expected(&stage.welfare),
        };
        if m.is_pure() {
            pure.push(e);
        } else {
            mixed.push(e);
        }
    }
    // welfare is linear along any segment of equilibria, so the candidates contain the worst one
    let worst = pure
        .iter()
        .chain(&mixed)
        .min_by(|a, b| a.welfare.total_cmp(&b.welfare))
        .cloned()
        .ok_or_else(|| Error::InvalidParameter("no equilibrium found".into()))?;
    let optimum_welfare = stage.welfare.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NeSet2x2 {
        pure,
        mixed,
        continuum,
        worst_welfare: worst.welfare,
        worst: worst.profile,
        optimum_welfare,
        poa: worst.welfare / optimum_welfare,
    })
}

/// Largest expected total welfare over all (centralized, joint-state) policies,
/// by dynamic programming on the joint MDP.
///
/// This upper-bounds the optimum over products of local policies.
pub fn optimal_welfare(game: &GameDefinition, opts: &EvalOptions) -> Result<f64> {
    let space = game.joint_space();
    let n = game.num_agents();
    let js = space.num_joint_states();
    let ja = space.num_joint_actions();
    let size = js as u128 * ja as u128;
    if size > opts.cap {
        return Err(Error::CapExceeded {
            what: "joint state-action pairs".into(),
            size,
            cap: opts.cap,
        });
    }
    let horizon = game.horizon();
    let state_radices: Vec<usize> = space.state_radices().to_vec();
    let mut value = vec![0.0; js];
    for h in (0..horizon).rev() {
        let next: Vec<f64> = (0..js)
            .into_par_iter()
            .map(|j| {
                let mut states = vec![0; n];
                let mut actions = vec![0; n];
                space.decode_state(j, &mut states);
                let mut best = f64::NEG_INFINITY;
                for a in 0..ja {
                    space.decode_action(a, &mut actions);
                    let mut q = game.welfare(h, &states, &actions);
                    if h + 1 < horizon {
                        let rows: Vec<Vec<(usize, f64)>> = (0..n)
                            .map(|i| {
                                game.kernel(i)
                                    .row(h, states[i], actions[i])
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, &p)| p > 0.0)
                                    .map(|(s, &p)| (s, p))
                                    .collect()
                            })
                            .collect();
                        q += expect_product(&rows, &state_radices, &value);
                    }
                    best = best.max(q);
                }
                best
            })
            .collect();
        value = next;
    }
    let mut total = 0.0;
    let mut states = vec![0; n];
    for (j, v) in value.iter().enumerate() {
        space.decode_state(j, &mut states);
        let w: f64 = (0..n).map(|i| game.initial(i)[states[i]]).product();
        total += w * v;
    }
    Ok(total)
}

fn expect_product(rows: &[Vec<(usize, f64)>], radices: &[usize], value: &[f64]) -> f64 {
    fn rec(rows: &[Vec<(usize, f64)>], radices: &[usize], value: &[f64], depth: usize, index: usize, weight: f64) -> f64 {
        if depth == rows.len() {
            return weight * value[index];
        }
        rows[depth]
            .iter()
            .map(|&(s, p)| rec(rows, radices, value, depth + 1, index * radices[depth] + s, weight * p))
            .sum()
    }
    rec(rows, radices, value, 0, 0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{build_covering_game, tiny_3x3, Design};
    use proptest::prelude::*;

    fn table(m: [[f64; 2]; 2]) -> StageGame {
        StageGame::from_matrix(&[m[0].to_vec(), m[1].to_vec()]).unwrap()
    }

    /// Independent re-check: payoff of each pure deviation by explicit sums.
    fn independent_gap(stage: &StageGame, p: f64, q: f64) -> f64 {
        let px = [p, 1.0 - p];
        let qx = [q, 1.0 - q];
        let mut gap = 0.0;
        for player in 0..2 {
            let r = &stage.rewards()[player];
            let mut current = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    current += px[a] * qx[b] * r[a * 2 + b];
                }
            }
            let mut best = f64::NEG_INFINITY;
            for dev in 0..2 {
                let mut v = 0.0;
                for other in 0..2 {
                    v += if player == 0 {
                        qx[other] * r[dev * 2 + other]
                    } else {
                        px[other] * r[other * 2 + dev]
                    };
                }
                best = best.max(v);
            }
            gap += best - current;
        }
        gap
    }

    #[test]
    fn table_two() {
        let ne = analyze_2x2(&table([[2.0, 0.0], [0.0, 2.0]])).unwrap();
        assert_eq!(ne.pure.len(), 2);
        assert_eq!(ne.mixed.len(), 1);
        assert_eq!(ne.mixed[0].profile, Mixed2x2 { p: 0.5, q: 0.5 });
        assert_eq!(ne.worst_welfare, 1.0);
        assert_eq!(ne.poa, 0.5);
        assert!(!ne.continuum);
    }

    #[test]
    fn table_three_and_four() {
        let ne = analyze_2x2(&table([[0.0, 1.0], [1.0, 2.0]])).unwrap();
        assert_eq!(ne.pure.len(), 1);
        assert!(ne.mixed.is_empty());
        assert_eq!(ne.pure[0].profile, Mixed2x2 { p: 0.0, q: 0.0 });
        assert_eq!(ne.poa, 1.0);
        let ne = analyze_2x2(&table([[2.0, 1.0], [1.0, 4.0]])).unwrap();
        assert_eq!(ne.worst, Mixed2x2 { p: 0.75, q: 0.75 });
        assert!((ne.worst_welfare - 1.75).abs() < 1e-12);
        assert!((ne.poa - 7.0 / 16.0).abs() < 1e-12);
        for e in ne.all() {
            assert!(independent_gap(&table([[2.0, 1.0], [1.0, 4.0]]), e.profile.p, e.profile.q) <= 1e-9);
        }
    }

    #[test]
    fn continuum_detected() {
        let ne = analyze_2x2(&table([[1.0, 1.0], [1.0, 1.0]])).unwrap();
        assert!(ne.continuum);
        assert_eq!(ne.poa, 1.0);
        assert!(analyze_2x2(&StageGame::identical_interest(vec![3, 2], vec![0.0; 6]).unwrap()).is_err());
    }

    #[test]
    fn smoothness_examples() {
        let t2 = table([[2.0, 0.0], [0.0, 2.0]]);
        let cert = check_smoothness(&t2, 1.0, 1.0, DEFAULT_PAIR_CAP).unwrap();
        assert!(!cert.certified);
        let w = cert.witness.unwrap();
        assert_eq!((w.profile, w.deviation), (vec![0, 0], vec![1, 1]));
        assert_eq!((w.lhs, w.rhs), (4.0, 2.0));
        let search = min_mu_for_lambda(&t2, 1.0, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(search.mu, Some(2.0));
        assert!((search.poa_lower().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(search.certificate.unwrap().certified);

        let solo = StageGame::identical_interest(vec![3], vec![0.2, 0.5, 0.9]).unwrap();
        let s = min_mu_for_lambda(&solo, 1.0, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(s.mu, Some(0.0));
        assert_eq!(s.poa_lower(), Some(1.0));
    }

    #[test]
    fn infeasible_zero_welfare_pair() {
        // v(p) = 0 at (1, 1) but every deviation loses reward
        let sg = StageGame::new(vec![2, 2], vec![vec![0.0, 0.0, 0.0, 5.0], vec![0.0, 0.0, 0.0, 5.0]], vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        let s = min_mu_for_lambda(&sg, 1.0, DEFAULT_PAIR_CAP).unwrap();
        assert!(s.mu.is_none());
        assert_eq!(s.infeasible.unwrap().profile, vec![1, 1]);
    }

    #[test]
    fn poa_bound_values() {
        let cert = |lambda, mu, certified| SmoothnessCertificate {
            lambda,
            mu,
            poa_lower: lambda / (1.0 + mu),
            certified,
            pairs_checked: 0,
            witness: None,
        };
        assert_eq!(poa_lower_bound(&cert(1.0, 1.0, true)).unwrap(), 0.5);
        let e = std::f64::consts::E;
        assert!((poa_lower_bound(&cert(1.0, 1.0 / (e - 1.0), true)).unwrap() - (1.0 - 1.0 / e)).abs() < 1e-15);
        assert_eq!(poa_lower_bound(&cert(1.0, 0.0, true)).unwrap(), 1.0);
        assert!(poa_lower_bound(&cert(1.0, 0.0, false)).is_err());
    }

    #[test]
    fn covering_stage_certificates() {
        let opts = EvalOptions::default();
        let mc = build_covering_game(&tiny_3x3(Design::MarginalContribution, 1)).unwrap();
        assert!(check_markov_smoothness(&mc, 1.0, 1.0, &opts, DEFAULT_PAIR_CAP).unwrap().certified);
        let us = build_covering_game(&tiny_3x3(Design::UtilitySharing, 1)).unwrap();
        let mu_f = 1.0 / (std::f64::consts::E - 1.0);
        assert!(check_markov_smoothness(&us, 1.0, mu_f, &opts, DEFAULT_PAIR_CAP).unwrap().certified);
        let ii = build_covering_game(&tiny_3x3(Design::IdenticalInterest, 1)).unwrap();
        let s = min_mu_for_lambda_markov(&ii, 1.0, &opts, DEFAULT_PAIR_CAP).unwrap();
        assert!(s.mu.unwrap() >= 1.0 - 1e-12);
        assert!(s.binding.is_some());
    }

    #[test]
    fn centralized_optimum_of_stage_only_game() {
        let game = build_covering_game(&tiny_3x3(Design::IdenticalInterest, 1)).unwrap();
        // from a uniform start the welfare depends only on the initial cells
        let opt = optimal_welfare(&game, &EvalOptions::default()).unwrap();
        let sg = stage_from_game(&game, 0, 1000).unwrap();
        let mean: f64 = sg.welfare_table().iter().sum::<f64>() / 81.0;
        assert!((opt - mean).abs() < 1e-12);
    }

    fn arb_game() -> impl Strategy<Value = StageGame> {
        prop::collection::vec(0.05f64..3.0, 4).prop_map(|v| StageGame::identical_interest(vec![2, 2], v).unwrap())
    }

    proptest! {
        #[test]
        fn worst_equilibrium_respects_certified_bound(sg in arb_game()) {
            let s = min_mu_for_lambda(&sg, 1.0, DEFAULT_PAIR_CAP).unwrap();
            let bound = s.poa_lower().unwrap();
            let ne = analyze_2x2(&sg).unwrap();
            prop_assert!(ne.poa >= bound - 1e-9);
            for e in ne.all() {
                prop_assert!(independent_gap(&sg, e.profile.p, e.profile.q) <= 1e-9);
            }
        }

        #[test]
        fn approximate_equilibria_respect_relaxed_bound(sg in arb_game(), dp in -0.2f64..0.2, dq in -0.2f64..0.2) {
            let s = min_mu_for_lambda(&sg, 1.0, DEFAULT_PAIR_CAP).unwrap();
            let mu = s.mu.unwrap();
            let ne = analyze_2x2(&sg).unwrap();
            for e in ne.all() {
                let m = Mixed2x2 { p: (e.profile.p + dp).clamp(0.0, 1.0), q: (e.profile.q + dq).clamp(0.0, 1.0) };
                let eps = nash_gap_2x2(&sg, m);
                let w = m.expected(sg.welfare_table());
                prop_assert!(w >= ne.optimum_welfare / (1.0 + mu) - eps / (1.0 + mu) - 1e-9);
            }
        }

        #[test]
        fn scaling_leaves_analysis_unchanged(sg in arb_game(), c in 0.1f64..10.0) {
            let scaled = sg.scaled(c);
            let a = min_mu_for_lambda(&sg, 1.0, DEFAULT_PAIR_CAP).unwrap();
            let b = min_mu_for_lambda(&scaled, 1.0, DEFAULT_PAIR_CAP).unwrap();
            prop_assert!((a.mu.unwrap() - b.mu.unwrap()).abs() < 1e-9);
            let cert_a = check_smoothness(&sg, 1.0, 1.0, DEFAULT_PAIR_CAP).unwrap();
            let cert_b = check_smoothness(&scaled, 1.0, 1.0, DEFAULT_PAIR_CAP).unwrap();
            prop_assert_eq!(cert_a.certified, cert_b.certified);
            let (na, nb) = (analyze_2x2(&sg).unwrap(), analyze_2x2(&scaled).unwrap());
            prop_assert_eq!(na.pure.len(), nb.pure.len());
            prop_assert_eq!(na.mixed.len(), nb.mixed.len());
            for (x, y) in na.all().zip(nb.all()) {
                prop_assert!((x.profile.p - y.profile.p).abs() < 1e-9 && (x.profile.q - y.profile.q).abs() < 1e-9);
            }
            prop_assert!((na.poa - nb.poa).abs() < 1e-9);
        }
    }
}
