//! Playstyle measures: Playstyle Distance, intersection similarity with its
//! perceptual kernel, the multiscale Jaccard index and the unified
//! Playstyle Similarity.
//!
//! Datasets are first turned into [`StyleProfile`]s (one state index plus
//! per-state empirical policies for every encoder). A [`Comparator`] then
//! evaluates any [`Measure`] on pairs of profiles. Batch comparison shares
//! one kernel-scaling constant across every pair of the batch.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::distance::{distribution_distance, empirical_policy, ActionDistribution, DistanceMetric};
use crate::error::{Error, Result};
use crate::trajectory::{
    build_indices, filtered_intersection, ActionSpace, EncoderSet, ScaledStateIndex, StateKey,
    TrajectoryDataset,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Uniform,
    Expected,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Averaging::Uniform),
            "expected" => Ok(Averaging::Expected),
            other => Err(Error::invalid(format!("unknown averaging `{other}`"))),
        }
    }
}

/// How local distances are rescaled before the perceptual kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelScaling {
    /// Mean of every per-state distance observed in the comparison batch.
    BatchAverage,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Measure {
    Distance,
    /// Mean kernel value over the multiscale intersection.
    Intersection,
    Jaccard,
    /// Jaccard-weighted intersection similarity.
    Similarity,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Distance => "distance",
            Measure::Intersection => "inter",
            Measure::Jaccard => "jaccard",
            Measure::Similarity => "psim",
        }
    }

    /// Whether larger values mean closer playstyles.
    pub fn higher_is_closer(self) -> bool {
        !matches!(self, Measure::Distance)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distance" => Ok(Measure::Distance),
            "inter" | "intersection" => Ok(Measure::Intersection),
            "jaccard" => Ok(Measure::Jaccard),
            "psim" | "similarity" => Ok(Measure::Similarity),
            other => Err(Error::invalid(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    pub encoders: EncoderSet,
    /// Filtered-intersection threshold for [`Measure::Distance`].
    pub threshold: usize,
    /// Filtered-intersection threshold for the similarity family.
    pub similarity_threshold: usize,
    pub metric: DistanceMetric,
    pub averaging: Averaging,
    pub scaling: KernelScaling,
    /// Keep per-state detail in results.
    pub detail: bool,
}

impl MeasureConfig {
    pub fn new(encoders: EncoderSet) -> Self {
        MeasureConfig {
            encoders,
            threshold: 1,
            similarity_threshold: 1,
            metric: DistanceMetric::W2,
            averaging: Averaging::Expected,
            scaling: KernelScaling::BatchAverage,
            detail: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() {
            return Err(Error::invalid("encoder set is empty"));
        }
        if self.threshold == 0 || self.similarity_threshold == 0 {
            return Err(Error::invalid("thresholds must be >= 1"));
        }
        if let KernelScaling::Fixed(d) = self.scaling {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::invalid(format!(
                    "fixed kernel scale must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }

    fn threshold_for(&self, measure: Measure) -> usize {
        match measure {
            Measure::Distance => self.threshold,
            _ => self.similarity_threshold,
        }
    }
}

/// Contribution of one intersected state to a result.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDetail {
    pub encoder_id: String,
    pub key: StateKey,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub value: f64,
    pub detail: Option<Vec<StateDetail>>,
    pub intersected: usize,
    pub union: usize,
}

/// Per-encoder state index and per-state empirical policies of a dataset.
#[derive(Debug, Clone)]
pub struct StyleProfile {
    id: String,
    action_space: ActionSpace,
    scales: Vec<ScaleProfile>,
}

#[derive(Debug, Clone)]
struct ScaleProfile {
    index: ScaledStateIndex,
    policies: BTreeMap<StateKey, ActionDistribution>,
}

impl StyleProfile {
    pub fn build(dataset: &TrajectoryDataset, encoders: &EncoderSet) -> Result<Self> {
        Self::from_indices(dataset.id(), build_indices(dataset, encoders)?)
    }

    pub fn from_indices(id: impl Into<String>, indices: Vec<ScaledStateIndex>) -> Result<Self> {
        let first = indices
            .first()
            .ok_or_else(|| Error::invalid("profile needs at least one encoder"))?;
        let action_space = first.action_space();
        let scales = indices
            .into_iter()
            .map(|index| {
                let policies = index
                    .iter()
                    .map(|(k, rec)| Ok((k.clone(), empirical_policy(rec.actions(), action_space)?)))
                    .collect::<Result<_>>()?;
                Ok(ScaleProfile { index, policies })
            })
            .collect::<Result<_>>()?;
        Ok(StyleProfile {
            id: id.into(),
            action_space,
            scales,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    pub fn indices(&self) -> impl Iterator<Item = &ScaledStateIndex> {
        self.scales.iter().map(|s| &s.index)
    }
}

/// Local distance at one intersected state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistance {
    pub key: StateKey,
    pub distance: f64,
    pub count_a: usize,
    pub count_b: usize,
}

/// Intersected states of one encoder with their local distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDistances {
    pub encoder_id: String,
    pub states: Vec<StateDistance>,
    /// Unfiltered union size at this scale.
    pub union: usize,
}

fn check_comparable(a: &StyleProfile, b: &StyleProfile) -> Result<()> {
    if a.action_space != b.action_space {
        return Err(Error::ActionSpace(format!(
            "`{}` declares {:?}, `{}` declares {:?}",
            a.id, a.action_space, b.id, b.action_space
        )));
    }
    let ids_a: Vec<&str> = a.indices().map(ScaledStateIndex::encoder_id).collect();
    let ids_b: Vec<&str> = b.indices().map(ScaledStateIndex::encoder_id).collect();
    if ids_a != ids_b {
        return Err(Error::EncoderMismatch(format!(
            "encoder sets differ: {ids_a:?} vs {ids_b:?}"
        )));
    }
    Ok(())
}

/// Local distances over the filtered intersection at every scale.
pub fn state_distances(
    a: &StyleProfile,
    b: &StyleProfile,
    metric: DistanceMetric,
    t: usize,
) -> Result<Vec<ScaleDistances>> {
    check_comparable(a, b)?;
    a.scales
        .iter()
        .zip(&b.scales)
        .map(|(sa, sb)| {
            let shared = filtered_intersection(&sa.index, &sb.index, 1)?.len();
            let keys = filtered_intersection(&sa.index, &sb.index, t)?;
            let states = keys
                .into_iter()
                .map(|k| {
                    let distance = distribution_distance(metric, &sa.policies[k], &sb.policies[k])?;
                    Ok(StateDistance {
                        key: k.clone(),
                        distance,
                        count_a: sa.index.visit_count(k),
                        count_b: sb.index.visit_count(k),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ScaleDistances {
                encoder_id: sa.index.encoder_id().to_string(),
                states,
                union: sa.index.state_count() + sb.index.state_count() - shared,
            })
        })
        .collect()
}

/// `P(d) = e^{-d}`.
pub fn perceptual_kernel(d: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::invalid(format!(
            "kernel input must be non-negative, got {d}"
        )));
    }
    Ok((-d).exp())
}

/// Mean of all local distances, or `None` when there are none.
pub fn mean_local_distance<'a, I>(scales: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a ScaleDistances>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for s in scales {
        for st in &s.states {
            sum += st.distance;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn intersected(scales: &[ScaleDistances]) -> usize {
    scales.iter().map(|s| s.states.len()).sum()
}

fn union(scales: &[ScaleDistances]) -> usize {
    scales.iter().map(|s| s.union).sum()
}

/// Playstyle Distance from precomputed local distances. Encoders without
/// any intersected state are left out of the multiscale average.
pub fn distance_from_states(
    scales: &[ScaleDistances],
    averaging: Averaging,
    detail: bool,
) -> Result<ComparisonResult> {
    let used: Vec<&ScaleDistances> = scales.iter().filter(|s| !s.states.is_empty()).collect();
    if used.is_empty() {
        return Err(Error::NoComparableContext);
    }
    let per_scale = 1.0 / used.len() as f64;
    let mut value = 0.0;
    let mut details = detail.then(Vec::new);
    for s in used {
        let weights: Vec<f64> = match averaging {
            Averaging::Uniform => vec![1.0 / s.states.len() as f64; s.states.len()],
            Averaging::Expected => {
                let mass_a: usize = s.states.iter().map(|st| st.count_a).sum();
                let mass_b: usize = s.states.iter().map(|st| st.count_b).sum();
                s.states
                    .iter()
                    .map(|st| {
                        0.5 * (st.count_b as f64 / mass_b as f64 + st.count_a as f64 / mass_a as f64)
                    })
                    .collect()
            }
        };
        let scale_value: f64 = match averaging {
            Averaging::Uniform => {
                s.states.iter().map(|st| st.distance).sum::<f64>() / s.states.len() as f64
            }
            Averaging::Expected => {
                let (a_given_b, b_given_a) = expected_directions(&s.states);
                0.5 * (a_given_b + b_given_a)
            }
        };
        value += per_scale * scale_value;
        if let Some(d) = details.as_mut() {
            d.extend(s.states.iter().zip(weights).map(|(st, w)| StateDetail {
                encoder_id: s.encoder_id.clone(),
                key: st.key.clone(),
                distance: st.distance,
                weight: per_scale * w,
            }));
        }
    }
    Ok(ComparisonResult {
        value,
        detail: details,
        intersected: intersected(scales),
        union: union(scales),
    })
}

/// `(d(A|B), d(B|A))`: local distances weighted by the other side's visit
/// counts, renormalized over the intersected mass.
pub fn expected_directions(states: &[StateDistance]) -> (f64, f64) {
    let mut num_ab = 0.0;
    let mut num_ba = 0.0;
    let mut mass_b = 0.0;
    let mut mass_a = 0.0;
    for st in states {
        num_ab += st.count_b as f64 * st.distance;
        mass_b += st.count_b as f64;
        num_ba += st.count_a as f64 * st.distance;
        mass_a += st.count_a as f64;
    }
    (num_ab / mass_b, num_ba / mass_a)
}

/// Kernel value of one local distance. BC values pass through unchanged,
/// BD values go through the kernel unscaled.
fn kernel_value(metric: DistanceMetric, d: f64, scale: f64) -> f64 {
    match metric {
        DistanceMetric::Bc => d,
        DistanceMetric::Bd => (-d).exp(),
        _ if scale > 0.0 => (-d / scale).exp(),
        _ => 1.0,
    }
}

/// Intersection similarity (`union = false`) or Playstyle Similarity
/// (`union = true`) from precomputed local distances.
pub fn similarity_from_states(
    scales: &[ScaleDistances],
    metric: DistanceMetric,
    scale: f64,
    over_union: bool,
    detail: bool,
) -> Result<ComparisonResult> {
    let n_inter = intersected(scales);
    let n_union = union(scales);
    let denom = if over_union { n_union } else { n_inter };
    if n_inter == 0 {
        if over_union && n_union > 0 {
            return Ok(ComparisonResult {
                value: 0.0,
                detail: detail.then(Vec::new),
                intersected: 0,
                union: n_union,
            });
        }
        return Err(Error::NoComparableContext);
    }
    let weight = 1.0 / denom as f64;
    let mut sum = 0.0;
    for s in scales {
        for st in &s.states {
            sum += kernel_value(metric, st.distance, scale);
        }
    }
    let details = detail.then(|| {
        scales
            .iter()
            .flat_map(|s| {
                s.states.iter().map(|st| StateDetail {
                    encoder_id: s.encoder_id.clone(),
                    key: st.key.clone(),
                    distance: st.distance,
                    weight,
                })
            })
            .collect()
    });
    Ok(ComparisonResult {
        value: sum / denom as f64,
        detail: details,
        intersected: n_inter,
        union: n_union,
    })
}

fn jaccard_from_profiles(a: &StyleProfile, b: &StyleProfile) -> Result<ComparisonResult> {
    check_comparable(a, b)?;
    let (mut inter, mut uni) = (0, 0);
    for (sa, sb) in a.scales.iter().zip(&b.scales) {
        let shared = filtered_intersection(&sa.index, &sb.index, 1)?.len();
        inter += shared;
        uni += sa.index.state_count() + sb.index.state_count() - shared;
    }
    if uni == 0 {
        return Err(Error::invalid("both datasets have no states"));
    }
    Ok(ComparisonResult {
        value: inter as f64 / uni as f64,
        detail: None,
        intersected: inter,
        union: uni,
    })
}

/// Evaluates measures between style profiles under one configuration.
#[derive(Debug, Clone)]
pub struct Comparator {
    cfg: MeasureConfig,
}

impl Comparator {
    pub fn new(cfg: MeasureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Comparator { cfg })
    }

    pub fn config(&self) -> &MeasureConfig {
        &self.cfg
    }

    pub fn profile(&self, dataset: &TrajectoryDataset) -> Result<StyleProfile> {
        StyleProfile::build(dataset, &self.cfg.encoders)
    }

    fn check_metric(&self, measure: Measure) -> Result<()> {
        if measure == Measure::Distance && self.cfg.metric == DistanceMetric::Bc {
            return Err(Error::UnsupportedMetric {
                metric: self.cfg.metric.to_string(),
                kind: "distance measure",
            });
        }
        Ok(())
    }

    fn finish(
        &self,
        measure: Measure,
        scales: &[ScaleDistances],
        scale: f64,
    ) -> Result<ComparisonResult> {
        let cfg = &self.cfg;
        match measure {
            Measure::Distance => distance_from_states(scales, cfg.averaging, cfg.detail),
            Measure::Intersection => {
                similarity_from_states(scales, cfg.metric, scale, false, cfg.detail)
            }
            Measure::Similarity => {
                similarity_from_states(scales, cfg.metric, scale, true, cfg.detail)
            }
            Measure::Jaccard => unreachable!("jaccard does not use local distances"),
        }
    }

    fn fixed_or(&self, batch: Option<f64>) -> f64 {
        match self.cfg.scaling {
            KernelScaling::Fixed(d) => d,
            KernelScaling::BatchAverage => batch.unwrap_or(0.0),
        }
    }

    /// One comparison; the kernel scale is the batch of this pair alone.
    pub fn compare(
        &self,
        measure: Measure,
        a: &StyleProfile,
        b: &StyleProfile,
    ) -> Result<ComparisonResult> {
        if measure == Measure::Jaccard {
            return jaccard_from_profiles(a, b);
        }
        self.check_metric(measure)?;
        let scales = state_distances(a, b, self.cfg.metric, self.cfg.threshold_for(measure))?;
        let scale = self.fixed_or(mean_local_distance(&scales));
        self.finish(measure, &scales, scale)
    }

    /// All `queries × candidates` comparisons. With batch scaling, the
    /// kernel scale is the mean local distance over every pair of the
    /// batch. Per-pair failures are kept in place.
    pub fn compare_batch(
        &self,
        measure: Measure,
        queries: &[StyleProfile],
        candidates: &[StyleProfile],
    ) -> Result<Vec<Vec<Result<ComparisonResult>>>> {
        if measure == Measure::Jaccard {
            return Ok(queries
                .par_iter()
                .map(|q| {
                    candidates
                        .iter()
                        .map(|c| jaccard_from_profiles(q, c))
                        .collect()
                })
                .collect());
        }
        self.check_metric(measure)?;
        let t = self.cfg.threshold_for(measure);
        let local: Vec<Vec<Result<Vec<ScaleDistances>>>> = queries
            .par_iter()
            .map(|q| {
                candidates
                    .iter()
                    .map(|c| state_distances(q, c, self.cfg.metric, t))
                    .collect()
            })
            .collect();
        let scale = self.fixed_or(mean_local_distance(
            local.iter().flatten().filter_map(|r| r.as_ref().ok()).flatten(),
        ));
        Ok(local
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|r| r.and_then(|s| self.finish(measure, &s, scale)))
                    .collect()
            })
            .collect())
    }
}

fn compare_datasets(
    measure: Measure,
    a: &TrajectoryDataset,
    b: &TrajectoryDataset,
    cfg: &MeasureConfig,
) -> Result<ComparisonResult> {
    let cmp = Comparator::new(cfg.clone())?;
    cmp.compare(measure, &cmp.profile(a)?, &cmp.profile(b)?)
}

pub fn playstyle_distance(
    a: &TrajectoryDataset,
    b: &TrajectoryDataset,
    cfg: &MeasureConfig,
) -> Result<ComparisonResult> {
    compare_datasets(Measure::Distance, a, b, cfg)
}

pub fn intersection_similarity(
    a: &TrajectoryDataset,
    b: &TrajectoryDataset,
    cfg: &MeasureConfig,
) -> Result<ComparisonResult> {
    compare_datasets(Measure::Intersection, a, b, cfg)
}

pub fn jaccard_index(
    a: &TrajectoryDataset,
    b: &TrajectoryDataset,
    cfg: &MeasureConfig,
) -> Result<ComparisonResult> {
    compare_datasets(Measure::Jaccard, a, b, cfg)
}

pub fn playstyle_similarity(
    a: &TrajectoryDataset,
    b: &TrajectoryDataset,
    cfg: &MeasureConfig,
) -> Result<ComparisonResult> {
    compare_datasets(Measure::Similarity, a, b, cfg)
}

/// Outcome of a spectrum check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    /// First position whose value breaks strict monotonicity.
    Violation(usize),
}

/// Checks that values ordered by ground-truth proximity strictly decrease
/// (similarities) or strictly increase (distances).
pub fn spectrum_consistency(values: &[f64], higher_is_closer: bool) -> Result<Consistency> {
    if values.len() < 2 {
        return Err(Error::invalid("spectrum needs at least 2 candidates"));
    }
    for i in 1..values.len() {
        let ok = if higher_is_closer {
            values[i] < values[i - 1]
        } else {
            values[i] > values[i - 1]
        };
        if !ok {
            return Ok(Consistency::Violation(i));
        }
    }
    Ok(Consistency::Consistent)
}

/// Spectrum check of `query` against candidates ordered by proximity,
/// evaluated as one comparison batch.
pub fn spectrum_consistency_of(
    comparator: &Comparator,
    measure: Measure,
    query: &StyleProfile,
    ordered: &[StyleProfile],
) -> Result<Consistency> {
    if ordered.len() < 2 {
        return Err(Error::invalid("spectrum needs at least 2 candidates"));
    }
    let row = comparator
        .compare_batch(measure, std::slice::from_ref(query), ordered)?
        .pop()
        .unwrap_or_default();
    let values = row
        .into_iter()
        .map(|r| r.map(|c| c.value))
        .collect::<Result<Vec<f64>>>()?;
    spectrum_consistency(&values, measure.higher_is_closer())
}
