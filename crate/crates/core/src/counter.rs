//! Intransitive structure: the online Elo residual counter-category learner
//! and the Top-D / Top-B balance indicators.
//!
//! Every composition carries an Elo rating `R`, a distribution `C` over `M`
//! counter categories and an expected-residual vector `E`. A shared
//! antisymmetric `M x M` table `T` holds the residual win value (outcome
//! minus Elo expectation) between categories. Each match updates `R` with
//! a plain Elo step, samples a category per side, moves `T` and `E` toward
//! the observed residual, and pulls each `C` toward the category whose row
//! of `T` best explains that composition's residual profile.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rating::{elo_expected, Composition, IndexedMatch, MatchLog, WinPredictor, ELO_INITIAL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EloRccParams {
    pub m: usize,
    pub eta_r: f64,
    pub eta_t: f64,
    pub eta_c: f64,
    pub seed: u64,
}

impl Default for EloRccParams {
    fn default() -> Self {
        EloRccParams {
            m: 81,
            eta_r: 0.1,
            eta_t: 0.00025,
            eta_c: 0.01,
            seed: 0,
        }
    }
}

impl EloRccParams {
    pub fn with_m(m: usize) -> Self {
        EloRccParams {
            m,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("category count M must be >= 1"));
        }
        for (name, v, max) in [
            ("eta_r", self.eta_r, f64::INFINITY),
            ("eta_t", self.eta_t, 1.0),
            ("eta_c", self.eta_c, 1.0),
        ] {
            if !v.is_finite() || !(0.0..=max).contains(&v) {
                return Err(Error::invalid(format!("learning rate {name} = {v} out of range")));
            }
        }
        Ok(())
    }
}

/// How a composition's category is chosen when predicting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryMode {
    /// Most probable category, lowest index on ties.
    #[default]
    Map,
    /// A category drawn from `C`, deterministic per (seed, pair).
    Sampled,
    /// Expected residual `C_aᵀ T C_b`.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompState {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "E")]
    pub e: Vec<f64>,
}

impl CompState {
    fn fresh(m: usize) -> Self {
        CompState {
            r: ELO_INITIAL,
            c: vec![1.0 / m as f64; m],
            e: vec![0.0; m],
        }
    }

    /// Most probable category, lowest index on ties.
    pub fn category(&self) -> usize {
        argmax(&self.c)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct EloRccState {
    params: EloRccParams,
    /// Row-major `M x M` counter table.
    t: Vec<f64>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    comps: Vec<CompState>,
    rng: ChaCha8Rng,
    updates: u64,
}

impl EloRccState {
    pub fn new(params: EloRccParams) -> Result<Self> {
        params.validate()?;
        Ok(EloRccState {
            t: vec![0.0; params.m * params.m],
            ids: Vec::new(),
            index: HashMap::new(),
            comps: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            updates: 0,
            params,
        })
    }

    pub fn params(&self) -> &EloRccParams {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn counter(&self, a: usize, b: usize) -> f64 {
        self.t[a * self.params.m + b]
    }

    pub fn counter_table(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn comp(&self, i: usize) -> &CompState {
        &self.comps[i]
    }

    pub fn comp_by_id(&self, id: &str) -> Option<&CompState> {
        self.lookup(id).map(|i| &self.comps[i])
    }

    /// Registers a composition (R = 1500, uniform C, zero E) if unknown.
    pub fn register(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.comps.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        self.comps.push(CompState::fresh(self.params.m));
        i
    }

    pub fn update(&mut self, a: &Composition, b: &Composition, outcome: f64) {
        let i = self.register(a.id());
        let j = self.register(b.id());
        self.update_indexed(i, j, outcome);
    }

    /// One online step on a match between registered compositions `i`, `j`
    /// with outcome `o` from `i`'s perspective.
    pub fn update_indexed(&mut self, i: usize, j: usize, o: f64) {
        let m = self.params.m;
        let p = elo_expected(self.comps[i].r, self.comps[j].r);
        let dr = self.params.eta_r * (o - p);
        self.comps[i].r += dr;
        self.comps[j].r -= dr;

        let ci = sample_category(&self.comps[i].c, &mut self.rng);
        let cj = sample_category(&self.comps[j].c, &mut self.rng);
        let w_res = o - p;
        let eta_t = self.params.eta_t;
        // the diagonal stays 0: a category has no residual against itself
        if ci != cj {
            let v = self.t[ci * m + cj];
            let v = v + eta_t * (w_res - v);
            self.t[ci * m + cj] = v;
            self.t[cj * m + ci] = -v;
        }
        {
            let ei = &mut self.comps[i].e[cj];
            *ei += eta_t * (w_res - *ei);
        }
        {
            let ej = &mut self.comps[j].e[ci];
            *ej += eta_t * (-w_res - *ej);
        }
        let best_i = self.closest_category(i);
        let best_j = self.closest_category(j);
        self.refine(i, best_i);
        if j != i {
            self.refine(j, best_j);
        }
        self.updates += 1;
    }

    /// `argmin_c Σ_c' |T[c, c'] − E[c']|`, lowest index on ties.
    fn closest_category(&self, i: usize) -> usize {
        let m = self.params.m;
        let e = &self.comps[i].e;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, row) in self.t.chunks_exact(m).enumerate() {
            let d: f64 = row.iter().zip(e).map(|(t, e)| (t - e).abs()).sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    /// Soft one-hot refinement `C ← (1 − η_C) C + η_C onehot(c*)`.
    fn refine(&mut self, i: usize, target: usize) {
        let eta_c = self.params.eta_c;
        let c = &mut self.comps[i].c;
        for (k, x) in c.iter_mut().enumerate() {
            *x *= 1.0 - eta_c;
            if k == target {
                *x += eta_c;
            }
        }
        let total: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= total);
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Win value of registered `i` against registered `j`: Elo expectation
    /// plus the category residual, clamped to `[0, 1]`.
    pub fn predict_indexed(&self, i: usize, j: usize, mode: CategoryMode) -> f64 {
        let p = elo_expected(self.comps[i].r, self.comps[j].r);
        let residual = match mode {
            CategoryMode::Map => self.counter(self.comps[i].category(), self.comps[j].category()),
            CategoryMode::Sampled => {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.params.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        ^ (j as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f),
                );
                let ci = sample_category(&self.comps[i].c, &mut rng);
                let cj = sample_category(&self.comps[j].c, &mut rng);
                self.counter(ci, cj)
            }
            CategoryMode::Expected => {
                let m = self.params.m;
                let (ca, cb) = (&self.comps[i].c, &self.comps[j].c);
                let mut acc = 0.0;
                for (x, row) in ca.iter().zip(self.t.chunks_exact(m)) {
                    if *x != 0.0 {
                        acc += x * row.iter().zip(cb).map(|(t, y)| t * y).sum::<f64>();
                    }
                }
                acc
            }
        };
        (p + residual).clamp(0.0, 1.0)
    }

    /// Prediction by composition id; `None` (callers report 0.5, flagged)
    /// when either side was never registered.
    pub fn predict(&self, a: &str, b: &str, mode: CategoryMode) -> Option<f64> {
        Some(self.predict_indexed(self.lookup(a)?, self.lookup(b)?, mode))
    }

    /// Number of distinct MAP categories over registered compositions.
    pub fn utilized_categories(&self) -> usize {
        let mut used = vec![false; self.params.m];
        for c in &self.comps {
            used[c.category()] = true;
        }
        used.iter().filter(|&&u| u).count()
    }

    /// Bridge to the balance measures: Elo ratings become Bradley–Terry
    /// strengths `10^((R − R_max) / 400)`, categories are MAP categories.
    pub fn balance_inputs(&self, gap: f64) -> Result<BalanceInputs> {
        if self.comps.is_empty() {
            return Err(Error::invalid("state has no compositions"));
        }
        let r_max = self
            .comps
            .iter()
            .map(|c| c.r)
            .fold(f64::NEG_INFINITY, f64::max);
        let entries = self
            .ids
            .iter()
            .zip(&self.comps)
            .map(|(id, c)| BalanceEntry {
                id: id.clone(),
                rating: 10f64.powf((c.r - r_max) / 400.0),
                category: c.category(),
            })
            .collect();
        BalanceInputs::new(entries, self.params.m, self.t.clone(), gap)
    }

    pub fn snapshot(&self) -> EloRccSnapshot {
        EloRccSnapshot {
            m: self.params.m,
            t: self.t.chunks(self.params.m).map(<[f64]>::to_vec).collect(),
            comps: self
                .ids
                .iter()
                .cloned()
                .zip(self.comps.iter().cloned())
                .collect(),
            order: self.ids.clone(),
            seed: self.params.seed,
            eta_r: self.params.eta_r,
            eta_t: self.params.eta_t,
            eta_c: self.params.eta_c,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            updates: self.updates,
        }
    }

    pub fn from_snapshot(s: &EloRccSnapshot) -> Result<Self> {
        let params = EloRccParams {
            m: s.m,
            eta_r: s.eta_r,
            eta_t: s.eta_t,
            eta_c: s.eta_c,
            seed: s.seed,
        };
        let mut state = Self::new(params)?;
        if s.t.len() != s.m || s.t.iter().any(|row| row.len() != s.m) {
            return Err(Error::invalid("counter table is not M x M"));
        }
        state.t = s.t.concat();
        let order: Vec<&String> = if s.order.is_empty() {
            s.comps.keys().collect()
        } else {
            s.order.iter().collect()
        };
        if order.len() != s.comps.len() {
            return Err(Error::invalid("snapshot order does not list every composition"));
        }
        for id in order {
            let comp = s
                .comps
                .get(id)
                .ok_or_else(|| Error::invalid(format!("snapshot order names unknown `{id}`")))?;
            if comp.c.len() != s.m || comp.e.len() != s.m {
                return Err(Error::invalid(format!("composition `{id}` has wrong vector sizes")));
            }
            let i = state.register(id);
            state.comps[i] = comp.clone();
        }
        let pos: u128 = s
            .rng_word_pos
            .parse()
            .map_err(|_| Error::invalid("bad rng_word_pos"))?;
        state.rng.set_word_pos(pos);
        state.updates = s.updates;
        Ok(state)
    }
}

fn sample_category<R: Rng + ?Sized>(c: &[f64], rng: &mut R) -> usize {
    crate::synth::sample_categorical(c, rng)
}

/// Serialized Elo-RCC state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloRccSnapshot {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub comps: BTreeMap<String, CompState>,
    /// Registration order of `comps`; empty means sorted by id.
    #[serde(default)]
    pub order: Vec<String>,
    pub seed: u64,
    pub eta_r: f64,
    pub eta_t: f64,
    pub eta_c: f64,
    /// Position of the category-sampling stream, so a reloaded state
    /// continues bit-identically.
    #[serde(default = "zero_pos")]
    pub rng_word_pos: String,
    #[serde(default)]
    pub updates: u64,
}

fn zero_pos() -> String {
    "0".into()
}

/// Offline fit: `epochs` passes over the matches in a freshly shuffled
/// order each pass.
pub fn fit_elo_rcc(
    log: &MatchLog,
    matches: &[IndexedMatch],
    params: EloRccParams,
    epochs: usize,
) -> Result<EloRccState> {
    if matches.is_empty() {
        return Err(Error::invalid("no matches to fit"));
    }
    let mut state = EloRccState::new(params)?;
    let mut local = vec![usize::MAX; log.compositions().len()];
    for m in matches {
        for k in [m.a, m.b] {
            if local[k] == usize::MAX {
                local[k] = state.register(log.composition(k).id());
            }
        }
    }
    let mut order: Vec<usize> = (0..matches.len()).collect();
    let mut shuffler = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0x5eed));
    for _ in 0..epochs.max(1) {
        order.shuffle(&mut shuffler);
        for &k in &order {
            let m = &matches[k];
            state.update_indexed(local[m.a], local[m.b], m.outcome);
        }
    }
    Ok(state)
}

/// An [`EloRccState`] viewed through a [`MatchLog`]'s composition indices.
pub struct EloRccPredictor<'a> {
    state: &'a EloRccState,
    local: Vec<Option<usize>>,
    mode: CategoryMode,
}

impl<'a> EloRccPredictor<'a> {
    pub fn new(state: &'a EloRccState, log: &MatchLog, mode: CategoryMode) -> Self {
        let local = log
            .compositions()
            .iter()
            .map(|c| state.lookup(c.id()))
            .collect();
        EloRccPredictor { state, local, mode }
    }
}

impl WinPredictor for EloRccPredictor<'_> {
    fn predict(&self, a: usize, b: usize) -> f64 {
        match (self.local[a], self.local[b]) {
            (Some(i), Some(j)) => self.state.predict_indexed(i, j, self.mode),
            _ => 0.5,
        }
    }

    fn knows(&self, i: usize) -> bool {
        self.local[i].is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub id: String,
    /// Bradley–Terry strength, positive.
    pub rating: f64,
    pub category: usize,
}

/// Inputs to the balance measures.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceInputs {
    entries: Vec<BalanceEntry>,
    m: usize,
    counter: Vec<f64>,
    gap: f64,
}

impl BalanceInputs {
    pub fn new(entries: Vec<BalanceEntry>, m: usize, counter: Vec<f64>, gap: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("no compositions to balance"));
        }
        if let Some(e) = entries.iter().find(|e| e.rating.is_nan() || e.rating <= 0.0 || !e.rating.is_finite()) {
            return Err(Error::invalid(format!(
                "rating of `{}` must be positive, got {}",
                e.id, e.rating
            )));
        }
        if counter.len() != m * m {
            return Err(Error::invalid("counter table is not M x M"));
        }
        if let Some(e) = entries.iter().find(|e| e.category >= m) {
            return Err(Error::invalid(format!("category of `{}` is >= M", e.id)));
        }
        check_gap(gap)?;
        Ok(BalanceInputs {
            entries,
            m,
            counter,
            gap,
        })
    }

    pub fn entries(&self) -> &[BalanceEntry] {
        &self.entries
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Contextual win value: rating ratio plus category residual.
    pub fn contextual_win(&self, a: usize, b: usize) -> f64 {
        let (ea, eb) = (&self.entries[a], &self.entries[b]);
        ea.rating / (ea.rating + eb.rating) + self.counter[ea.category * self.m + eb.category]
    }
}

fn check_gap(gap: f64) -> Result<()> {
    if (0.0..=0.5).contains(&gap) {
        Ok(())
    } else {
        Err(Error::invalid(format!("win gap G must be in [0, 0.5], got {gap}")))
    }
}

/// Number of compositions `c` with `R(c) / (R(c) + R(top)) + G >= 0.5`.
pub fn top_d(ratings: &[f64], gap: f64) -> Result<usize> {
    if ratings.is_empty() {
        return Err(Error::invalid("no ratings"));
    }
    check_gap(gap)?;
    if let Some(r) = ratings.iter().find(|r| r.is_nan() || **r <= 0.0 || !r.is_finite()) {
        return Err(Error::invalid(format!("ratings must be positive, got {r}")));
    }
    let top = ratings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ratings
        .iter()
        .filter(|&&r| r / (r + top) + gap >= 0.5)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopB {
    pub count: usize,
    /// Non-dominated top compositions, by category.
    pub members: Vec<String>,
}

/// Top-B balance: among the top-rated composition of each utilized
/// category, count those no other top composition dominates. `c'`
/// dominates `c` when `Win(c', c'') > Win(c, c'')` for every top `c''`.
pub fn top_b(inputs: &BalanceInputs) -> Result<TopB> {
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, e) in inputs.entries.iter().enumerate() {
        best.entry(e.category)
            .and_modify(|cur| {
                let c = &inputs.entries[*cur];
                if e.rating > c.rating || (e.rating == c.rating && e.id < c.id) {
                    *cur = i;
                }
            })
            .or_insert(i);
    }
    if best.is_empty() {
        return Err(Error::invalid("no categories utilized"));
    }
    let tops: Vec<usize> = best.into_values().collect();
    let dominated = |c: usize| {
        tops.iter().any(|&other| {
            other != c
                && tops
                    .iter()
                    .all(|&x| inputs.contextual_win(other, x) > inputs.contextual_win(c, x))
        })
    };
    let members: Vec<String> = tops
        .iter()
        .filter(|&&c| !dominated(c))
        .map(|&c| inputs.entries[c].id.clone())
        .collect();
    Ok(TopB {
        count: members.len(),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_rps;
    use proptest::prelude::*;

    fn comp(id: &str) -> Composition {
        Composition::parse(id).unwrap()
    }

    #[test]
    fn zero_residual_first_match() {
        let mut s = EloRccState::new(EloRccParams::with_m(3)).unwrap();
        s.update(&comp("a"), &comp("b"), 0.5);
        assert_eq!(s.comp_by_id("a").unwrap().r, 1500.0);
        assert_eq!(s.comp_by_id("b").unwrap().r, 1500.0);
        assert!(s.counter_table().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn predict_identical_and_clamped() {
        let mut s = EloRccState::new(EloRccParams::with_m(3)).unwrap();
        s.register("a");
        s.register("b");
        assert_eq!(s.predict("a", "a", CategoryMode::Map), Some(0.5));
        // a in category 0, b in category 2, learned residual 0.5
        s.comps[0].c = vec![1.0, 0.0, 0.0];
        s.comps[1].c = vec![0.0, 0.0, 1.0];
        s.t[2] = 0.5;
        s.t[6] = -0.5;
        assert_eq!(s.predict("a", "b", CategoryMode::Map), Some(1.0));
        assert_eq!(s.predict("b", "a", CategoryMode::Map), Some(0.0));
        assert_eq!(s.predict("a", "b", CategoryMode::Expected), Some(1.0));
        assert_eq!(s.predict("a", "zzz", CategoryMode::Map), None);
    }

    #[test]
    fn fresh_state_uses_one_category() {
        let mut s = EloRccState::new(EloRccParams::with_m(5)).unwrap();
        for id in ["a", "b", "c"] {
            s.register(id);
        }
        assert_eq!(s.utilized_categories(), 1);
    }

    #[test]
    fn learns_rps_cycle() {
        let log = MatchLog::from_records(gen_rps(30_000, 5).unwrap());
        let state = fit_elo_rcc(&log, log.matches(), EloRccParams::with_m(3), 5).unwrap();
        assert_eq!(state.utilized_categories(), 3);
        let p = state.predict("rock", "paper", CategoryMode::Map).unwrap();
        assert!(p < 0.5, "{p}");
        let q = state.predict("rock", "scissors", CategoryMode::Map).unwrap();
        assert!(q > 0.5, "{q}");
    }

    #[test]
    fn snapshot_round_trip_continues_identically() {
        let log = MatchLog::from_records(gen_rps(2_000, 8).unwrap());
        let mut a = fit_elo_rcc(&log, log.matches(), EloRccParams::with_m(4), 1).unwrap();
        let json = serde_json::to_string(&a.snapshot()).unwrap();
        let mut b = EloRccState::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        for m in &log.matches()[..200] {
            a.update_indexed(m.a, m.b, m.outcome);
            b.update_indexed(m.a, m.b, m.outcome);
        }
        assert_eq!(
            serde_json::to_string(&a.snapshot()).unwrap(),
            serde_json::to_string(&b.snapshot()).unwrap()
        );
    }

    #[test]
    fn top_d_examples() {
        assert_eq!(top_d(&[10.0, 9.5, 1.0], 0.02).unwrap(), 2);
        assert_eq!(top_d(&[3.0; 7], 0.0).unwrap(), 7);
        assert_eq!(top_d(&[100.0, 1.0, 0.001], 0.5).unwrap(), 3);
        assert_eq!(top_d(&[5.0, 4.0, 1.0], 0.0).unwrap(), 1);
        assert!(top_d(&[], 0.1).is_err());
        assert!(top_d(&[1.0], 0.6).is_err());
        assert!(top_d(&[1.0, -1.0], 0.1).is_err());
    }

    fn entry(id: &str, rating: f64, category: usize) -> BalanceEntry {
        BalanceEntry {
            id: id.into(),
            rating,
            category,
        }
    }

    #[test]
    fn top_b_single_category() {
        let inp = BalanceInputs::new(
            vec![entry("a", 2.0, 1), entry("b", 1.0, 1)],
            3,
            vec![0.0; 9],
            0.0,
        )
        .unwrap();
        let r = top_b(&inp).unwrap();
        assert_eq!(r.count, 1);
        assert_eq!(r.members, vec!["a".to_string()]);
    }

    #[test]
    fn top_b_ideal_rps() {
        let t = vec![0.0, -0.5, 0.5, 0.5, 0.0, -0.5, -0.5, 0.5, 0.0];
        let inp = BalanceInputs::new(
            vec![entry("rock", 1.0, 0), entry("paper", 1.0, 1), entry("scissors", 1.0, 2)],
            3,
            t,
            0.0,
        )
        .unwrap();
        assert_eq!(top_b(&inp).unwrap().count, 3);
    }

    #[test]
    fn top_b_zero_residuals_reduces_to_rating_order() {
        let inp = BalanceInputs::new(
            vec![entry("x", 3.0, 0), entry("y", 2.0, 1), entry("z", 1.0, 2)],
            3,
            vec![0.0; 9],
            0.0,
        )
        .unwrap();
        let r = top_b(&inp).unwrap();
        assert_eq!(r.count, 1);
        assert_eq!(r.members, vec!["x".to_string()]);
    }

    proptest! {
        #[test]
        fn update_invariants(ms in prop::collection::vec((0usize..4, 0usize..4, prop::sample::select(vec![0.0, 0.5, 1.0])), 1..200), m in 1usize..6) {
            let mut s = EloRccState::new(EloRccParams { m, eta_t: 0.05, eta_c: 0.1, ..EloRccParams::default() }).unwrap();
            for id in ["a", "b", "c", "d"] { s.register(id); }
            for (a, b, o) in ms {
                s.update_indexed(a, b, o);
                for x in 0..m {
                    prop_assert_eq!(s.counter(x, x), 0.0);
                    for y in 0..m {
                        prop_assert_eq!(s.counter(x, y), -s.counter(y, x));
                    }
                }
                for c in &s.comps {
                    prop_assert!((c.c.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert!(c.c.iter().all(|&x| x >= 0.0));
                }
            }
            prop_assert!(s.utilized_categories() <= m);
        }

        #[test]
        fn top_d_properties(rs in prop::collection::vec(0.01f64..100.0, 1..30), g1 in 0.0f64..0.5, g2 in 0.0f64..0.5, k in 0.01f64..100.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(top_d(&rs, lo).unwrap() <= top_d(&rs, hi).unwrap());
            prop_assert_eq!(top_d(&rs, 0.5).unwrap(), rs.len());
            let scaled: Vec<f64> = rs.iter().map(|r| r * k).collect();
            prop_assert_eq!(top_d(&rs, lo).unwrap(), top_d(&scaled, lo).unwrap());
        }

        #[test]
        fn top_b_bounded_by_utilized(cats in prop::collection::vec((0.1f64..10.0, 0usize..4), 1..20), t in prop::collection::vec(-0.5f64..0.5, 6)) {
            let m = 4;
            let mut table = vec![0.0; 16];
            let mut k = 0;
            for a in 0..m { for b in a + 1..m { table[a * m + b] = t[k]; table[b * m + a] = -t[k]; k += 1; } }
            let entries: Vec<_> = cats.iter().enumerate().map(|(i, &(r, c))| entry(&format!("c{i}"), r, c)).collect();
            let used = entries.iter().map(|e| e.category).collect::<std::collections::BTreeSet<_>>().len();
            let inp = BalanceInputs::new(entries, m, table, 0.0).unwrap();
            let b = top_b(&inp).unwrap().count;
            prop_assert!(b >= 1 || used == 0);
            prop_assert!(b <= used && used <= m);
        }
    }
}
