//! Evaluation protocols: style retrieval accuracy and cross-validated
//! strength-relation accuracy of rating models.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counter::{fit_elo_rcc, CategoryMode, EloRccParams, EloRccPredictor};
use crate::error::{Error, Result};
use crate::measures::{Comparator, Measure, MeasureConfig, StyleProfile};
use crate::rating::{
    BradleyTerry, BtConfig, EloTable, IndexedMatch, LabelThresholds, MElo2, MElo2Config,
    MatchLog, PairOutcomes, PairWinTable, RatingMethod, WinPredictor, WinValueTable,
    ELO_DEFAULT_K,
};
use crate::trajectory::TrajectoryDataset;

/// Derives an independent seed for a labeled sub-task.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the parent seed (splitmix64 finalizer)
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub label: String,
    pub dataset: TrajectoryDataset,
}

#[derive(Debug, Clone)]
pub struct RetrievalTask {
    pub candidates: Vec<LabeledDataset>,
    pub queries: Vec<LabeledDataset>,
    pub measures: Vec<Measure>,
    pub config: MeasureConfig,
    /// Observation-action pairs drawn from every dataset per round.
    pub sample_size: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl RetrievalTask {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() || self.queries.is_empty() {
            return Err(Error::invalid("retrieval needs candidates and queries"));
        }
        if self.measures.is_empty() {
            return Err(Error::invalid("retrieval needs at least one measure"));
        }
        if self.sample_size == 0 || self.rounds == 0 {
            return Err(Error::invalid("sample size and rounds must be >= 1"));
        }
        if let Some(q) = self
            .queries
            .iter()
            .find(|q| !self.candidates.iter().any(|c| c.label == q.label))
        {
            return Err(Error::invalid(format!(
                "query label `{}` has no candidate",
                q.label
            )));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalAccuracy {
    pub measure: Measure,
    /// Mean accuracy over rounds, in percent.
    pub accuracy: f64,
    /// Sample standard deviation over rounds.
    pub std: f64,
    pub per_round: Vec<f64>,
    /// Queries that had no comparable candidate at all, over all rounds.
    pub flagged: usize,
}

/// Index of the best candidate, ties broken uniformly at random. `None`
/// when no candidate produced a value.
fn pick_best<R: Rng>(values: &[Option<f64>], higher: bool, rng: &mut R) -> Option<usize> {
    let better = |x: f64, y: f64| if higher { x > y } else { x < y };
    let mut best: Option<f64> = None;
    let mut ties: Vec<usize> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        match best {
            Some(b) if better(b, v) => {}
            Some(b) if b == v => ties.push(i),
            _ => {
                best = Some(v);
                ties.clear();
                ties.push(i);
            }
        }
    }
    match ties.len() {
        0 => None,
        1 => Some(ties[0]),
        n => Some(ties[rng.random_range(0..n)]),
    }
}

pub fn retrieval_accuracy(task: &RetrievalTask) -> Result<Vec<RetrievalAccuracy>> {
    task.validate()?;
    let comparator = Comparator::new(task.config.clone())?;
    let rounds: Vec<Vec<(f64, usize)>> = (0..task.rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(task.seed, &format!("retrieval/{round}")));
            let mut sample = |d: &LabeledDataset| {
                comparator.profile(&d.dataset.subsample(task.sample_size, &mut rng))
            };
            let cands = task
                .candidates
                .iter()
                .map(&mut sample)
                .collect::<Result<Vec<StyleProfile>>>()?;
            let queries = task
                .queries
                .iter()
                .map(&mut sample)
                .collect::<Result<Vec<StyleProfile>>>()?;
            let mut tie_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(task.seed, &format!("ties/{round}")));
            task.measures
                .iter()
                .map(|&measure| {
                    let table = comparator.compare_batch(measure, &queries, &cands)?;
                    let mut correct = 0;
                    let mut flagged = 0;
                    for (qi, row) in table.into_iter().enumerate() {
                        let values: Vec<Option<f64>> = row
                            .into_iter()
                            .map(|r| match r {
                                Ok(c) => Ok(Some(c.value)),
                                Err(Error::NoComparableContext) => Ok(None),
                                Err(e) => Err(e),
                            })
                            .collect::<Result<_>>()?;
                        match pick_best(&values, measure.higher_is_closer(), &mut tie_rng) {
                            Some(ci) if task.candidates[ci].label == task.queries[qi].label => {
                                correct += 1
                            }
                            Some(_) => {}
                            None => flagged += 1,
                        }
                    }
                    Ok((100.0 * correct as f64 / queries.len() as f64, flagged))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(task
        .measures
        .iter()
        .enumerate()
        .map(|(k, &measure)| {
            let per_round: Vec<f64> = rounds.iter().map(|r| r[k].0).collect();
            let (accuracy, std) = mean_std(&per_round);
            RetrievalAccuracy {
                measure,
                accuracy,
                std,
                per_round,
                flagged: rounds.iter().map(|r| r[k].1).sum(),
            }
        })
        .collect())
}

/// A rating model evaluated by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingModel {
    Table(RatingMethod),
    EloRcc { m: usize },
}

impl fmt::Display for RatingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingModel::Table(m) => write!(f, "{m}"),
            RatingModel::EloRcc { m } => write!(f, "elo-rcc-{m}"),
        }
    }
}

impl FromStr for RatingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(m) = lower.strip_prefix("elo-rcc-") {
            let m = m
                .parse()
                .map_err(|_| Error::invalid(format!("bad category count in `{s}`")))?;
            return Ok(RatingModel::EloRcc { m });
        }
        Ok(RatingModel::Table(lower.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub elo_k: f64,
    pub bt: BtConfig,
    pub melo2: MElo2Config,
    pub elo_rcc: EloRccParams,
    pub elo_rcc_epochs: usize,
    pub category_mode: CategoryMode,
    pub thresholds: LabelThresholds,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        CrossvalConfig {
            folds: 5,
            seed: 0,
            elo_k: ELO_DEFAULT_K,
            bt: BtConfig::default(),
            melo2: MElo2Config::default(),
            elo_rcc: EloRccParams::default(),
            elo_rcc_epochs: 5,
            category_mode: CategoryMode::Map,
            thresholds: LabelThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalResult {
    pub model: RatingModel,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub fold_train: Vec<f64>,
    pub fold_test: Vec<f64>,
}

/// Fold index of every match: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "folds")));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Train and test accuracy of `model` fitted on `train`.
pub fn fit_and_score(
    log: &MatchLog,
    model: RatingModel,
    train: &[IndexedMatch],
    test: &[IndexedMatch],
    cfg: &CrossvalConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = log.compositions().len();
    let train_pairs = PairOutcomes::from_matches(train);
    let test_pairs = PairOutcomes::from_matches(test);
    let score = |p: &dyn WinPredictor| -> Result<(f64, f64)> {
        let th = &cfg.thresholds;
        Ok((
            crate::rating::strength_relation_accuracy(|a, b| p.predict(a, b), &train_pairs, th)?,
            crate::rating::strength_relation_accuracy(|a, b| p.predict(a, b), &test_pairs, th)?,
        ))
    };
    match model {
        RatingModel::Table(RatingMethod::WinValue) => score(&WinValueTable::fit(n, train)?),
        RatingModel::Table(RatingMethod::PairWin) => score(&PairWinTable::fit(n, train)?),
        RatingModel::Table(RatingMethod::Elo) => score(&EloTable::fit(n, train, cfg.elo_k)?),
        RatingModel::Table(RatingMethod::Bt) => {
            let bt = BtConfig { seed, ..cfg.bt };
            score(&BradleyTerry::fit(n, train, &bt)?)
        }
        RatingModel::Table(RatingMethod::MElo2) => {
            let mc = MElo2Config { seed, ..cfg.melo2 };
            score(&MElo2::fit(n, train, mc)?)
        }
        RatingModel::EloRcc { m } => {
            let params = EloRccParams {
                m,
                seed,
                ..cfg.elo_rcc
            };
            let state = fit_elo_rcc(log, train, params, cfg.elo_rcc_epochs)?;
            score(&EloRccPredictor::new(&state, log, cfg.category_mode))
        }
    }
}

/// k-fold cross-validation by match record; mean and sample standard
/// deviation across folds.
pub fn crossval_rating(
    log: &MatchLog,
    model: RatingModel,
    cfg: &CrossvalConfig,
) -> Result<CrossvalResult> {
    if cfg.folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if log.len() < cfg.folds {
        return Err(Error::invalid(format!(
            "{} matches cannot fill {} folds",
            log.len(),
            cfg.folds
        )));
    }
    let fold = fold_assignment(log.len(), cfg.folds, cfg.seed);
    let scores: Vec<(f64, f64)> = (0..cfg.folds)
        .into_par_iter()
        .map(|k| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (m, &f) in log.matches().iter().zip(&fold) {
                if f == k { test.push(*m) } else { train.push(*m) }
            }
            let seed = derive_seed(cfg.seed, &format!("{model}/fold{k}"));
            fit_and_score(log, model, &train, &test, cfg, seed)
        })
        .collect::<Result<_>>()?;
    let fold_train: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let fold_test: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let (train_mean, train_std) = mean_std(&fold_train);
    let (test_mean, test_std) = mean_std(&fold_test);
    Ok(CrossvalResult {
        model,
        train_mean,
        train_std,
        test_mean,
        test_std,
        fold_train,
        fold_test,
    })
}
