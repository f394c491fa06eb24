//! Seeded generators for the synthetic benchmark games and for a world of
//! styled policies with known ground-truth style proximity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rating::{Composition, MatchRecord};
use crate::trajectory::{ActionSpace, ActionValue, Observation, Step, TrajectoryDataset};

pub const RPS_STRATEGIES: [&str; 3] = ["rock", "paper", "scissors"];

/// Outcome of RPS strategy `a` against `b` (indices into [`RPS_STRATEGIES`]).
pub fn rps_outcome(a: usize, b: usize) -> f64 {
    match (3 + a - b) % 3 {
        0 => 0.5,
        1 => 1.0,
        _ => 0.0,
    }
}

/// Uniformly sampled Rock–Paper–Scissors matches; mirror matches are draws.
pub fn gen_rps(match_count: usize, seed: u64) -> Result<Vec<MatchRecord>> {
    if match_count == 0 {
        return Err(Error::invalid("match count must be >= 1"));
    }
    let comps: Vec<Composition> = RPS_STRATEGIES
        .iter()
        .map(|s| Composition::new([*s]))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..match_count)
        .map(|_| {
            let a = rng.random_range(0..3);
            let b = rng.random_range(0..3);
            MatchRecord::new(comps[a].clone(), comps[b].clone(), rps_outcome(a, b))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RpsBonus {
    None,
    /// The side whose type `score mod 3` wins the RPS rule gains this bonus.
    TypeWinner(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationGameSpec {
    pub element_count: usize,
    pub team_size: usize,
    pub bonus: RpsBonus,
    pub match_count: usize,
    pub seed: u64,
}

impl CombinationGameSpec {
    pub fn simple(match_count: usize, seed: u64) -> Self {
        CombinationGameSpec {
            element_count: 20,
            team_size: 3,
            bonus: RpsBonus::None,
            match_count,
            seed,
        }
    }

    pub fn advanced(match_count: usize, seed: u64) -> Self {
        CombinationGameSpec {
            bonus: RpsBonus::TypeWinner(60),
            ..Self::simple(match_count, seed)
        }
    }
}

/// RPS type of a composition score: 0 rock, 1 paper, 2 scissors.
pub fn score_type(score: u32) -> usize {
    (score % 3) as usize
}

/// The combination game: element `k` (1-based) scores `k`, a team scores
/// the sum of its elements, and `a` beats `b` with probability
/// `s_a² / (s_a² + s_b²)` over the (possibly bonus-adjusted) scores.
#[derive(Debug, Clone)]
pub struct CombinationGame {
    spec: CombinationGameSpec,
    teams: Vec<(Composition, u32)>,
}

impl CombinationGame {
    pub fn new(spec: CombinationGameSpec) -> Result<Self> {
        if spec.team_size == 0 || spec.team_size > spec.element_count {
            return Err(Error::invalid("team size must be in 1..=element count"));
        }
        let width = spec.element_count.to_string().len();
        let mut teams = Vec::new();
        let mut pick: Vec<usize> = (1..=spec.team_size).collect();
        loop {
            let names: Vec<String> = pick.iter().map(|k| format!("e{k:0width$}")).collect();
            let score = pick.iter().map(|&k| k as u32).sum();
            teams.push((Composition::new(names)?, score));
            // next k-combination in lexicographic order
            let k = spec.team_size;
            let Some(i) = (0..k).rev().find(|&i| pick[i] < spec.element_count - (k - 1 - i)) else {
                break;
            };
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
        }
        if teams.len() < 2 {
            return Err(Error::invalid("combination game needs at least two teams"));
        }
        Ok(CombinationGame { spec, teams })
    }

    pub fn spec(&self) -> &CombinationGameSpec {
        &self.spec
    }

    pub fn teams(&self) -> &[(Composition, u32)] {
        &self.teams
    }

    /// Scores after the RPS bonus for the pair `(sa, sb)`.
    pub fn effective_scores(&self, sa: u32, sb: u32) -> (u32, u32) {
        match self.spec.bonus {
            RpsBonus::None => (sa, sb),
            RpsBonus::TypeWinner(bonus) => {
                let rule = rps_outcome(score_type(sa), score_type(sb));
                if rule == 1.0 {
                    (sa + bonus, sb)
                } else if rule == 0.0 {
                    (sa, sb + bonus)
                } else {
                    (sa, sb)
                }
            }
        }
    }

    /// Analytic probability that a team scoring `sa` beats one scoring `sb`.
    pub fn win_probability_scores(&self, sa: u32, sb: u32) -> f64 {
        let (ea, eb) = self.effective_scores(sa, sb);
        let (ea, eb) = (f64::from(ea), f64::from(eb));
        ea * ea / (ea * ea + eb * eb)
    }

    /// Analytic win probability between teams `i` and `j` of [`Self::teams`].
    pub fn win_probability(&self, i: usize, j: usize) -> f64 {
        self.win_probability_scores(self.teams[i].1, self.teams[j].1)
    }

    /// Uniform team pairs (self pairings excluded) with Bernoulli outcomes.
    pub fn generate(&self) -> Result<Vec<MatchRecord>> {
        if self.spec.match_count == 0 {
            return Err(Error::invalid("match count must be >= 1"));
        }
        let n = self.teams.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        (0..self.spec.match_count)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let p = self.win_probability(i, j);
                let outcome = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                MatchRecord::new(self.teams[i].0.clone(), self.teams[j].0.clone(), outcome)
            })
            .collect()
    }
}

pub fn gen_simple_combination(match_count: usize, seed: u64) -> Result<Vec<MatchRecord>> {
    CombinationGame::new(CombinationGameSpec::simple(match_count, seed))?.generate()
}

pub fn gen_advanced_combination(match_count: usize, seed: u64) -> Result<Vec<MatchRecord>> {
    CombinationGame::new(CombinationGameSpec::advanced(match_count, seed))?.generate()
}

/// A world of discrete-state, discrete-action policies that differ only in
/// a per-style bias added to shared base logits:
/// `π_k(a | s) = softmax(base(s, ·) + bias_k(s, ·))`.
///
/// States are visited uniformly and observed as the 1-d vector `[s]`, so
/// the identity encoder recovers them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyledPolicySpec {
    pub state_count: usize,
    pub action_count: usize,
    /// One `state_count x action_count` row-major bias matrix per style.
    pub style_biases: Vec<Vec<f64>>,
    /// Half-width of the uniform base logits shared by all styles.
    pub base_logit_scale: f64,
    pub episode_length: usize,
    pub episodes_per_dataset: usize,
    pub seed: u64,
}

impl StyledPolicySpec {
    /// `styles` styles, style `k` pushing `strength` logits toward action
    /// `(s + k) mod action_count` in every state `s`.
    pub fn separated(styles: usize, strength: f64, seed: u64) -> Self {
        let (states, actions) = (16, 5);
        let style_biases = (0..styles)
            .map(|k| {
                let mut bias = vec![0.0; states * actions];
                for s in 0..states {
                    bias[s * actions + (s + k) % actions] = strength;
                }
                bias
            })
            .collect();
        StyledPolicySpec {
            state_count: states,
            action_count: actions,
            style_biases,
            base_logit_scale: 1.0,
            episode_length: 64,
            episodes_per_dataset: 16,
            seed,
        }
    }

    /// A 1-d spectrum: style `k` applies `k · step` times a fixed random
    /// direction, so ground-truth proximity grows linearly along the list.
    pub fn spectrum(styles: usize, step: f64, seed: u64) -> Self {
        let (states, actions) = (16, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
        let direction: Vec<f64> = (0..states * actions)
            .map(|i| if i % actions == 0 { 1.0 } else { -1.0 / (actions - 1) as f64 } * rng.random_range(0.5..1.0))
            .collect();
        let style_biases = (0..styles)
            .map(|k| direction.iter().map(|d| d * step * k as f64).collect())
            .collect();
        StyledPolicySpec {
            state_count: states,
            action_count: actions,
            style_biases,
            base_logit_scale: 0.5,
            episode_length: 64,
            episodes_per_dataset: 16,
            seed,
        }
    }

    pub fn style_count(&self) -> usize {
        self.style_biases.len()
    }

    fn validate(&self) -> Result<()> {
        if self.state_count == 0 || self.action_count == 0 {
            return Err(Error::invalid("styled world needs states and actions"));
        }
        if self.style_biases.is_empty() {
            return Err(Error::invalid("styled world needs at least one style"));
        }
        if self.episode_length == 0 || self.episodes_per_dataset == 0 {
            return Err(Error::invalid("styled datasets need non-empty episodes"));
        }
        let cells = self.state_count * self.action_count;
        if self
            .style_biases
            .iter()
            .any(|b| b.len() != cells || b.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::invalid(format!(
                "every style bias must hold {cells} finite values"
            )));
        }
        Ok(())
    }

    /// L1 distance between the bias parameters of two styles.
    pub fn proximity(&self, a: usize, b: usize) -> f64 {
        self.style_biases[a]
            .iter()
            .zip(&self.style_biases[b])
            .map(|(x, y)| (x - y).abs())
            .sum()
    }
}

/// Per-style action probabilities of a [`StyledPolicySpec`].
#[derive(Debug, Clone)]
pub struct StyledWorld {
    spec: StyledPolicySpec,
    /// `policies[k][s]` is the action distribution of style `k` in state `s`.
    policies: Vec<Vec<Vec<f64>>>,
}

impl StyledWorld {
    pub fn new(spec: StyledPolicySpec) -> Result<Self> {
        spec.validate()?;
        let (ns, na) = (spec.state_count, spec.action_count);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let base: Vec<f64> = (0..ns * na)
            .map(|_| {
                if spec.base_logit_scale > 0.0 {
                    rng.random_range(-spec.base_logit_scale..spec.base_logit_scale)
                } else {
                    0.0
                }
            })
            .collect();
        let policies = spec
            .style_biases
            .iter()
            .map(|bias| {
                (0..ns)
                    .map(|s| {
                        let logits: Vec<f64> =
                            (0..na).map(|a| base[s * na + a] + bias[s * na + a]).collect();
                        softmax(&logits)
                    })
                    .collect()
            })
            .collect();
        Ok(StyledWorld { spec, policies })
    }

    pub fn spec(&self) -> &StyledPolicySpec {
        &self.spec
    }

    pub fn policy(&self, style: usize, state: usize) -> &[f64] {
        &self.policies[style][state]
    }

    /// Samples one dataset of `style` with its own stream `stream`.
    pub fn sample_dataset(&self, style: usize, stream: u64) -> Result<TrajectoryDataset> {
        self.sample_sized(
            style,
            stream,
            self.spec.episodes_per_dataset,
            self.spec.episode_length,
        )
    }

    pub fn sample_sized(
        &self,
        style: usize,
        stream: u64,
        episodes: usize,
        episode_length: usize,
    ) -> Result<TrajectoryDataset> {
        if style >= self.policies.len() {
            return Err(Error::invalid(format!("no style {style}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(stream.wrapping_mul(1024).wrapping_add(style as u64 + 1));
        let eps = (0..episodes)
            .map(|_| {
                (0..episode_length)
                    .map(|_| {
                        let s = rng.random_range(0..self.spec.state_count);
                        let a = sample_categorical(&self.policies[style][s], &mut rng);
                        Step::new(
                            Observation::Vector(vec![s as f64]),
                            ActionValue::Discrete(a),
                        )
                    })
                    .collect()
            })
            .collect();
        TrajectoryDataset::new(
            format!("style{style}"),
            ActionSpace::Discrete(self.spec.action_count),
            eps,
        )
    }
}

/// Output of [`gen_styled_policies`]: one candidate and one query dataset
/// per style, plus the ground-truth proximity matrix between styles.
#[derive(Debug, Clone)]
pub struct StyledPolicies {
    pub candidates: Vec<TrajectoryDataset>,
    pub queries: Vec<TrajectoryDataset>,
    pub proximity: Vec<Vec<f64>>,
}

pub fn gen_styled_policies(spec: &StyledPolicySpec) -> Result<StyledPolicies> {
    let world = StyledWorld::new(spec.clone())?;
    let n = spec.style_count();
    let candidates = (0..n)
        .map(|k| world.sample_dataset(k, 0))
        .collect::<Result<Vec<_>>>()?;
    let queries = (0..n)
        .map(|k| {
            world.sample_dataset(k, 1).map(|mut d| {
                d = TrajectoryDataset::new(
                    format!("query{k}"),
                    d.action_space(),
                    d.episodes().to_vec(),
                )
                .expect("sampled dataset is valid");
                d
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let proximity = (0..n)
        .map(|a| (0..n).map(|b| spec.proximity(a, b)).collect())
        .collect();
    Ok(StyledPolicies {
        candidates,
        queries,
        proximity,
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum: last non-zero cell
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
