//! Transitive strength models over compositions and the strength-relation
//! accuracy protocol used to evaluate them.
//!
//! All models work on a [`MatchLog`], which interns composition ids into
//! dense indices. A model fitted on a subset of the log still answers
//! queries for every index of the log; compositions it never saw fall back
//! to an explicit default and are reported by [`WinPredictor::knows`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A selectable entity or team: a sorted, deduplicated set of elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Composition {
    id: String,
    elements: Vec<String>,
}

impl Composition {
    pub const SEPARATOR: char = '+';

    pub fn new<I, S>(elements: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut elements: Vec<String> = elements.into_iter().map(Into::into).collect();
        if elements.is_empty() {
            return Err(Error::invalid("composition has no elements"));
        }
        if let Some(bad) = elements
            .iter()
            .find(|e| e.is_empty() || e.contains(Self::SEPARATOR))
        {
            return Err(Error::invalid(format!("invalid element id `{bad}`")));
        }
        elements.sort();
        elements.dedup();
        let id = elements.join(&Self::SEPARATOR.to_string());
        Ok(Composition { id, elements })
    }

    /// Parses a canonical (or unsorted) `a+b+c` id.
    pub fn parse(id: &str) -> Result<Self> {
        Self::new(id.split(Self::SEPARATOR))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Outcome from `a`'s perspective: 1 win, 0.5 tie, 0 loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub a: Composition,
    pub b: Composition,
    pub outcome: f64,
}

impl MatchRecord {
    pub fn new(a: Composition, b: Composition, outcome: f64) -> Result<Self> {
        check_outcome(outcome)?;
        Ok(MatchRecord { a, b, outcome })
    }
}

pub fn check_outcome(outcome: f64) -> Result<()> {
    if outcome == 0.0 || outcome == 0.5 || outcome == 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "match outcome must be 0, 0.5 or 1, got {outcome}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedMatch {
    pub a: usize,
    pub b: usize,
    pub outcome: f64,
}

/// Match records with compositions interned in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchLog {
    comps: Vec<Composition>,
    index: HashMap<String, usize>,
    matches: Vec<IndexedMatch>,
}

impl MatchLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<I: IntoIterator<Item = MatchRecord>>(records: I) -> Self {
        let mut log = Self::new();
        for r in records {
            log.push(r);
        }
        log
    }

    pub fn intern(&mut self, comp: &Composition) -> usize {
        if let Some(&i) = self.index.get(comp.id()) {
            return i;
        }
        let i = self.comps.len();
        self.index.insert(comp.id().to_string(), i);
        self.comps.push(comp.clone());
        i
    }

    pub fn push(&mut self, record: MatchRecord) {
        let a = self.intern(&record.a);
        let b = self.intern(&record.b);
        self.matches.push(IndexedMatch {
            a,
            b,
            outcome: record.outcome,
        });
    }

    pub fn compositions(&self) -> &[Composition] {
        &self.comps
    }

    pub fn composition(&self, i: usize) -> &Composition {
        &self.comps[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn matches(&self) -> &[IndexedMatch] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = MatchRecord> + '_ {
        self.matches.iter().map(|m| MatchRecord {
            a: self.comps[m.a].clone(),
            b: self.comps[m.b].clone(),
            outcome: m.outcome,
        })
    }
}

/// Anything that predicts the expected win value of `a` against `b`.
pub trait WinPredictor {
    fn predict(&self, a: usize, b: usize) -> f64;

    /// Whether the model has fitted parameters for composition `i`.
    fn knows(&self, i: usize) -> bool;
}

fn seen_mask(n: usize, matches: &[IndexedMatch]) -> Vec<bool> {
    let mut seen = vec![false; n];
    for m in matches {
        seen[m.a] = true;
        seen[m.b] = true;
    }
    seen
}

fn require_matches(matches: &[IndexedMatch]) -> Result<()> {
    if matches.is_empty() {
        Err(Error::invalid("no matches to fit"))
    } else {
        Ok(())
    }
}

/// Per-composition mean observed win value.
#[derive(Debug, Clone, PartialEq)]
pub struct WinValueTable {
    values: Vec<Option<f64>>,
}

impl WinValueTable {
    pub fn fit(n_comps: usize, matches: &[IndexedMatch]) -> Result<Self> {
        require_matches(matches)?;
        let mut sum = vec![0.0; n_comps];
        let mut count = vec![0usize; n_comps];
        for m in matches {
            sum[m.a] += m.outcome;
            count[m.a] += 1;
            sum[m.b] += 1.0 - m.outcome;
            count[m.b] += 1;
        }
        Ok(WinValueTable {
            values: sum
                .into_iter()
                .zip(count)
                .map(|(s, c)| (c > 0).then(|| s / c as f64))
                .collect(),
        })
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }
}

impl WinPredictor for WinValueTable {
    fn predict(&self, a: usize, b: usize) -> f64 {
        match (self.value(a), self.value(b)) {
            (Some(wa), Some(wb)) => (0.5 + wa - wb).clamp(0.0, 1.0),
            _ => 0.5,
        }
    }

    fn knows(&self, i: usize) -> bool {
        self.value(i).is_some()
    }
}

/// Lookup table of observed pair means; the reverse pair is completed as
/// `1 - mean`, unseen pairs predict 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWinTable {
    pairs: HashMap<(usize, usize), (f64, usize)>,
    seen: Vec<bool>,
}

impl PairWinTable {
    pub fn fit(n_comps: usize, matches: &[IndexedMatch]) -> Result<Self> {
        require_matches(matches)?;
        let mut pairs: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
        for m in matches {
            let e = pairs.entry((m.a, m.b)).or_default();
            e.0 += m.outcome;
            e.1 += 1;
            if m.a != m.b {
                let e = pairs.entry((m.b, m.a)).or_default();
                e.0 += 1.0 - m.outcome;
                e.1 += 1;
            }
        }
        Ok(PairWinTable {
            pairs,
            seen: seen_mask(n_comps, matches),
        })
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<(f64, usize)> {
        self.pairs.get(&(a, b)).map(|&(s, c)| (s / c as f64, c))
    }

    /// Observed pairs sorted by index, each with its mean and count.
    pub fn entries(&self) -> Vec<((usize, usize), f64, usize)> {
        let mut out: Vec<_> = self
            .pairs
            .iter()
            .map(|(&k, &(s, c))| (k, s / c as f64, c))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }
}

impl WinPredictor for PairWinTable {
    fn predict(&self, a: usize, b: usize) -> f64 {
        self.pair(a, b).map_or(0.5, |(m, _)| m)
    }

    fn knows(&self, i: usize) -> bool {
        self.seen.get(i).copied().unwrap_or(false)
    }
}

pub const ELO_INITIAL: f64 = 1500.0;
pub const ELO_DEFAULT_K: f64 = 16.0;

/// Expected score of a player rated `ra` against one rated `rb`.
pub fn elo_expected(ra: f64, rb: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0))
}

/// One Elo update; returns the new `(ra, rb)`.
pub fn elo_update(ra: f64, rb: f64, outcome: f64, k: f64) -> (f64, f64) {
    let ea = elo_expected(ra, rb);
    let delta = k * (outcome - ea);
    (ra + delta, rb - delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EloTable {
    ratings: Vec<f64>,
    seen: Vec<bool>,
    k: f64,
}

impl EloTable {
    pub fn new(n_comps: usize, k: f64) -> Result<Self> {
        if k.is_nan() || k <= 0.0 {
            return Err(Error::invalid("Elo K must be positive"));
        }
        Ok(EloTable {
            ratings: vec![ELO_INITIAL; n_comps],
            seen: vec![false; n_comps],
            k,
        })
    }

    /// Single online pass over `matches` in order.
    pub fn fit(n_comps: usize, matches: &[IndexedMatch], k: f64) -> Result<Self> {
        require_matches(matches)?;
        let mut table = Self::new(n_comps, k)?;
        for m in matches {
            table.update(m);
        }
        Ok(table)
    }

    pub fn update(&mut self, m: &IndexedMatch) {
        let (ra, rb) = elo_update(self.ratings[m.a], self.ratings[m.b], m.outcome, self.k);
        self.ratings[m.a] = ra;
        self.ratings[m.b] = rb;
        self.seen[m.a] = true;
        self.seen[m.b] = true;
    }

    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }
}

impl WinPredictor for EloTable {
    fn predict(&self, a: usize, b: usize) -> f64 {
        if !(self.seen[a] && self.seen[b]) {
            return 0.5;
        }
        elo_expected(self.ratings[a], self.ratings[b])
    }

    fn knows(&self, i: usize) -> bool {
        self.seen[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BtConfig {
    fn default() -> Self {
        BtConfig {
            epochs: 30,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Bradley–Terry log-strengths `λ`, one per composition, fitted by SGD on
/// the squared error between outcome and `e^λa / (e^λa + e^λb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BradleyTerry {
    lambda: Vec<f64>,
    seen: Vec<bool>,
    fallback: f64,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl BradleyTerry {
    pub fn fit(n_comps: usize, matches: &[IndexedMatch], cfg: &BtConfig) -> Result<Self> {
        require_matches(matches)?;
        if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 || cfg.epochs == 0 {
            return Err(Error::invalid("BT needs a positive learning rate and epochs"));
        }
        let mut lambda = vec![0.0; n_comps];
        let mut order: Vec<usize> = (0..matches.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // iterates of the final epoch are averaged to damp SGD noise
        let mut tail = vec![0.0; n_comps];
        for epoch in 0..cfg.epochs {
            let last = epoch + 1 == cfg.epochs;
            order.shuffle(&mut rng);
            for &i in &order {
                let m = &matches[i];
                let p = logistic(lambda[m.a] - lambda[m.b]);
                let grad = 2.0 * (p - m.outcome) * p * (1.0 - p);
                lambda[m.a] -= cfg.learning_rate * grad;
                lambda[m.b] += cfg.learning_rate * grad;
                if last {
                    tail.iter_mut().zip(&lambda).for_each(|(t, l)| *t += l);
                }
            }
        }
        let steps = matches.len() as f64;
        let lambda: Vec<f64> = tail.into_iter().map(|t| t / steps).collect();
        let seen = seen_mask(n_comps, matches);
        let (sum, n) = lambda
            .iter()
            .zip(&seen)
            .filter(|(_, &s)| s)
            .fold((0.0, 0usize), |(s, n), (l, _)| (s + l, n + 1));
        let fallback = sum / n as f64;
        Ok(BradleyTerry {
            lambda,
            seen,
            fallback,
        })
    }

    pub fn from_ratings(lambda: Vec<f64>) -> Self {
        let n = lambda.len().max(1) as f64;
        let fallback = lambda.iter().sum::<f64>() / n;
        BradleyTerry {
            seen: vec![true; lambda.len()],
            lambda,
            fallback,
        }
    }

    /// Fitted `λ`, or the mean `λ` of fitted compositions for unseen ones.
    pub fn rating(&self, i: usize) -> f64 {
        if self.seen[i] {
            self.lambda[i]
        } else {
            self.fallback
        }
    }

    pub fn ratings(&self) -> Vec<f64> {
        (0..self.lambda.len()).map(|i| self.rating(i)).collect()
    }
}

impl WinPredictor for BradleyTerry {
    fn predict(&self, a: usize, b: usize) -> f64 {
        let (la, lb) = (self.rating(a), self.rating(b));
        if a == b || la == lb {
            return 0.5;
        }
        logistic(la - lb)
    }

    fn knows(&self, i: usize) -> bool {
        self.seen[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MElo2Config {
    /// Learning rate of the scalar rating, on the logistic scale.
    pub rate_r: f64,
    /// Learning rate of the 2-d cyclic vectors.
    pub rate_c: f64,
    /// Half-width of the uniform initialization of the cyclic vectors.
    pub init_scale: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MElo2Config {
    fn default() -> Self {
        MElo2Config {
            rate_r: 1.0,
            rate_c: 0.1,
            init_scale: 0.1,
            epochs: 1,
            seed: 0,
        }
    }
}

/// Multidimensional Elo with one 2-d cyclic component:
/// `P(a > b) = σ(r_a − r_b + c_aᵀ Ω c_b)` with `Ω = [[0, 1], [−1, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MElo2 {
    r: Vec<f64>,
    c: Vec<[f64; 2]>,
    seen: Vec<bool>,
    cfg: MElo2Config,
}

impl MElo2 {
    pub fn new(n_comps: usize, cfg: MElo2Config) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = || {
            if cfg.init_scale > 0.0 {
                rng.random_range(-cfg.init_scale..cfg.init_scale)
            } else {
                0.0
            }
        };
        let c = (0..n_comps).map(|_| [init(), init()]).collect();
        MElo2 {
            r: vec![0.0; n_comps],
            c,
            seen: vec![false; n_comps],
            cfg,
        }
    }

    pub fn fit(n_comps: usize, matches: &[IndexedMatch], cfg: MElo2Config) -> Result<Self> {
        require_matches(matches)?;
        let mut model = Self::new(n_comps, cfg);
        for _ in 0..cfg.epochs.max(1) {
            for m in matches {
                model.update(m);
            }
        }
        Ok(model)
    }

    fn cyclic(&self, a: usize, b: usize) -> f64 {
        // c_aᵀ Ω c_b
        let (ca, cb) = (self.c[a], self.c[b]);
        ca[0] * cb[1] - ca[1] * cb[0]
    }

    fn raw_predict(&self, a: usize, b: usize) -> f64 {
        logistic(self.r[a] - self.r[b] + self.cyclic(a, b))
    }

    /// One online gradient step on the log-likelihood of `m`.
    pub fn update(&mut self, m: &IndexedMatch) {
        let (a, b) = (m.a, m.b);
        let delta = m.outcome - self.raw_predict(a, b);
        self.r[a] += self.cfg.rate_r * delta;
        self.r[b] -= self.cfg.rate_r * delta;
        let (ca, cb) = (self.c[a], self.c[b]);
        // ∂/∂c_a = Ω c_b, ∂/∂c_b = −Ω c_a, with Ω x = (x1, −x0)
        let step = self.cfg.rate_c * delta;
        if a != b {
            self.c[a] = [ca[0] + step * cb[1], ca[1] - step * cb[0]];
            self.c[b] = [cb[0] - step * ca[1], cb[1] + step * ca[0]];
        }
        self.seen[a] = true;
        self.seen[b] = true;
    }

    pub fn rating(&self, i: usize) -> f64 {
        self.r[i]
    }

    pub fn vector(&self, i: usize) -> [f64; 2] {
        self.c[i]
    }
}

impl WinPredictor for MElo2 {
    fn predict(&self, a: usize, b: usize) -> f64 {
        if !(self.seen[a] && self.seen[b]) {
            return 0.5;
        }
        self.raw_predict(a, b)
    }

    fn knows(&self, i: usize) -> bool {
        self.seen[i]
    }
}

/// Three-way strength relation of `a` relative to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthLabel {
    Stronger,
    Equal,
    Weaker,
}

impl StrengthLabel {
    pub fn flip(self) -> Self {
        match self {
            StrengthLabel::Stronger => StrengthLabel::Weaker,
            StrengthLabel::Equal => StrengthLabel::Equal,
            StrengthLabel::Weaker => StrengthLabel::Stronger,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelThresholds {
    pub stronger_above: f64,
    pub weaker_below: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds {
            stronger_above: 0.501,
            weaker_below: 0.499,
        }
    }
}

impl LabelThresholds {
    pub fn label(&self, win: f64) -> StrengthLabel {
        if win > self.stronger_above {
            StrengthLabel::Stronger
        } else if win < self.weaker_below {
            StrengthLabel::Weaker
        } else {
            StrengthLabel::Equal
        }
    }
}

/// Observed mean win value per ordered pair. Every match contributes to
/// both orientations, so the table is closed under swapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairOutcomes {
    pairs: BTreeMap<(usize, usize), (f64, usize)>,
}

impl PairOutcomes {
    pub fn from_matches<'a, I: IntoIterator<Item = &'a IndexedMatch>>(matches: I) -> Self {
        let mut pairs: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for m in matches {
            let e = pairs.entry((m.a, m.b)).or_default();
            e.0 += m.outcome;
            e.1 += 1;
            if m.a != m.b {
                let e = pairs.entry((m.b, m.a)).or_default();
                e.0 += 1.0 - m.outcome;
                e.1 += 1;
            }
        }
        PairOutcomes { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pairs.iter().map(|(&k, &(s, c))| (k, s / c as f64))
    }
}

/// Percentage of ordered pairs whose predicted three-way label matches the
/// label of the observed mean win value.
pub fn strength_relation_accuracy<F>(
    predict: F,
    pairs: &PairOutcomes,
    thresholds: &LabelThresholds,
) -> Result<f64>
where
    F: Fn(usize, usize) -> f64,
{
    if pairs.is_empty() {
        return Err(Error::NoLabeledPairs);
    }
    let correct = pairs
        .iter()
        .filter(|&((a, b), observed)| thresholds.label(predict(a, b)) == thresholds.label(observed))
        .count();
    Ok(100.0 * correct as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingMethod {
    WinValue,
    PairWin,
    Elo,
    Bt,
    MElo2,
}

impl RatingMethod {
    pub fn name(self) -> &'static str {
        match self {
            RatingMethod::WinValue => "winvalue",
            RatingMethod::PairWin => "pairwin",
            RatingMethod::Elo => "elo",
            RatingMethod::Bt => "bt",
            RatingMethod::MElo2 => "melo2",
        }
    }
}

impl fmt::Display for RatingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RatingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "winvalue" => RatingMethod::WinValue,
            "pairwin" => RatingMethod::PairWin,
            "elo" => RatingMethod::Elo,
            "bt" => RatingMethod::Bt,
            "melo2" => RatingMethod::MElo2,
            other => return Err(Error::invalid(format!("unknown rating method `{other}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(a: usize, b: usize, outcome: f64) -> IndexedMatch {
        IndexedMatch { a, b, outcome }
    }

    #[test]
    fn composition_is_canonical() {
        let c = Composition::new(["e3", "e1", "e2", "e1"]).unwrap();
        assert_eq!(c.id(), "e1+e2+e3");
        assert_eq!(c, Composition::parse("e2+e3+e1").unwrap());
        assert!(Composition::new(Vec::<String>::new()).is_err());
        assert!(Composition::new(["a+b"]).is_err());
        assert!(MatchRecord::new(c.clone(), c, 0.7).is_err());
    }

    #[test]
    fn winvalue() {
        let t = WinValueTable::fit(4, &[m(0, 1, 1.0), m(0, 1, 1.0)]).unwrap();
        assert_eq!(t.value(0), Some(1.0));
        assert_eq!(t.value(1), Some(0.0));
        assert_eq!(t.predict(0, 1), 1.0);
        assert_eq!(t.predict(2, 3), 0.5);
        assert!(!t.knows(2));

        // wv 0.8 vs 0.3: 0.5 + 0.5 = 1.0
        let mut ms = vec![];
        for i in 0..10 {
            ms.push(m(0, 2, if i < 8 { 1.0 } else { 0.0 }));
            ms.push(m(1, 3, if i < 3 { 1.0 } else { 0.0 }));
        }
        let t = WinValueTable::fit(4, &ms).unwrap();
        assert!((t.value(0).unwrap() - 0.8).abs() < 1e-12);
        assert!((t.value(1).unwrap() - 0.3).abs() < 1e-12);
        assert!((t.predict(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwin() {
        let t = PairWinTable::fit(3, &[m(0, 1, 1.0), m(0, 1, 1.0), m(0, 1, 0.0)]).unwrap();
        assert!((t.predict(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.predict(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.predict(0, 2), 0.5);

        let mut ms = vec![];
        for i in 0..10 {
            ms.push(m(0, 1, if i < 7 { 1.0 } else { 0.0 }));
        }
        let t = PairWinTable::fit(2, &ms).unwrap();
        assert!((t.predict(1, 0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn elo_rules() {
        assert_eq!(elo_update(1500.0, 1500.0, 0.5, 16.0), (1500.0, 1500.0));
        assert_eq!(elo_update(1500.0, 1500.0, 1.0, 16.0), (1508.0, 1492.0));
        assert!((elo_expected(1900.0, 1500.0) - 1.0 / 1.1).abs() < 1e-12);
        assert!(EloTable::new(2, 0.0).is_err());
    }

    #[test]
    fn bt_orders_a_dominant_player() {
        let ms: Vec<_> = (0..200).map(|_| m(0, 1, 1.0)).collect();
        let bt = BradleyTerry::fit(2, &ms, &BtConfig::default()).unwrap();
        assert!(bt.rating(0) > bt.rating(1));
        assert!(bt.predict(0, 1) > 0.9, "{}", bt.predict(0, 1));
    }

    #[test]
    fn bt_balanced_data_predicts_half() {
        let ms: Vec<_> = (0..400)
            .map(|i| if i % 2 == 0 { m(0, 1, 1.0) } else { m(0, 1, 0.0) })
            .collect();
        let bt = BradleyTerry::fit(2, &ms, &BtConfig::default()).unwrap();
        assert!((bt.predict(0, 1) - 0.5).abs() < 0.02, "{}", bt.predict(0, 1));
    }

    #[test]
    fn bt_unseen_uses_mean_rating() {
        let ms: Vec<_> = (0..50).map(|_| m(0, 1, 1.0)).collect();
        let bt = BradleyTerry::fit(3, &ms, &BtConfig::default()).unwrap();
        assert!(!bt.knows(2));
        assert!((bt.rating(2) - 0.5 * (bt.rating(0) + bt.rating(1))).abs() < 1e-12);
    }

    #[test]
    fn melo2_without_cycles_is_logistic_elo() {
        let cfg = MElo2Config {
            init_scale: 0.0,
            ..Default::default()
        };
        let ms: Vec<_> = (0..100)
            .map(|i| m(i % 3, (i + 1) % 3, if i % 3 == 0 { 1.0 } else { 0.5 }))
            .collect();
        let model = MElo2::fit(3, &ms, cfg).unwrap();
        for i in 0..3 {
            assert_eq!(model.vector(i), [0.0, 0.0]);
        }
        for a in 0..3 {
            for b in 0..3 {
                let want = logistic(model.rating(a) - model.rating(b));
                assert!((model.predict(a, b) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn labels_and_accuracy() {
        let th = LabelThresholds::default();
        assert_eq!(th.label(0.502), StrengthLabel::Stronger);
        assert_eq!(th.label(0.501), StrengthLabel::Equal);
        assert_eq!(th.label(0.4985), StrengthLabel::Weaker);

        let ms = [m(0, 1, 1.0), m(1, 2, 0.5), m(2, 0, 0.0), m(0, 0, 0.5)];
        let pairs = PairOutcomes::from_matches(&ms);
        assert_eq!(pairs.len(), 7);
        let pw = PairWinTable::fit(3, &ms).unwrap();
        assert_eq!(
            strength_relation_accuracy(|a, b| pw.predict(a, b), &pairs, &th).unwrap(),
            100.0
        );
        // constant 0.5 scores the share of "equal" pairs: (1,2), (2,1), (0,0)
        let acc = strength_relation_accuracy(|_, _| 0.5, &pairs, &th).unwrap();
        assert!((acc - 300.0 / 7.0).abs() < 1e-9);
        assert!(matches!(
            strength_relation_accuracy(|_, _| 0.5, &PairOutcomes::default(), &th),
            Err(Error::NoLabeledPairs)
        ));
    }

    fn arb_matches() -> impl Strategy<Value = Vec<IndexedMatch>> {
        prop::collection::vec(
            (0usize..5, 0usize..5, prop::sample::select(vec![0.0, 0.5, 1.0]))
                .prop_map(|(a, b, o)| m(a, b, o)),
            1..60,
        )
    }

    proptest! {
        #[test]
        fn elo_conserves_rating_mass(ra in 1000.0f64..2000.0, rb in 1000.0f64..2000.0,
                                     o in prop::sample::select(vec![0.0, 0.5, 1.0]), k in 0.1f64..64.0) {
            let (na, nb) = elo_update(ra, rb, o, k);
            prop_assert!(((na + nb) - (ra + rb)).abs() < 1e-9);
        }

        #[test]
        fn bt_antisymmetric_and_translation_invariant(ms in arb_matches(), shift in -5.0f64..5.0) {
            let bt = BradleyTerry::fit(5, &ms, &BtConfig { epochs: 3, ..Default::default() }).unwrap();
            let shifted = BradleyTerry::from_ratings(bt.ratings().iter().map(|l| l + shift).collect());
            let base = BradleyTerry::from_ratings(bt.ratings());
            for a in 0..5 {
                for b in 0..5 {
                    prop_assert!((bt.predict(a, b) + bt.predict(b, a) - 1.0).abs() < 1e-12);
                    prop_assert!((base.predict(a, b) - shifted.predict(a, b)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn pairwin_memorizes(ms in arb_matches()) {
            let pw = PairWinTable::fit(5, &ms).unwrap();
            for ((a, b), mean) in PairOutcomes::from_matches(&ms).iter() {
                prop_assert!((pw.predict(a, b) - mean).abs() < 1e-12);
            }
        }

        #[test]
        fn label_swap(w in 0.0f64..1.0) {
            let th = LabelThresholds::default();
            prop_assert_eq!(th.label(1.0 - w), th.label(w).flip());
        }
    }
}
