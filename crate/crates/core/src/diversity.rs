//! Diverse trajectory counting.
//!
//! Trajectories are visited in order; each is compared with every
//! trajectory seen before it and counted as diverse only if all of those
//! similarities stay below the threshold. Every trajectory is stored,
//! diverse or not.

use crate::error::{Error, Result};
use crate::measures::{
    mean_local_distance, similarity_from_states, state_distances, KernelScaling, MeasureConfig,
    ScaleDistances, StyleProfile,
};
use crate::trajectory::TrajectoryDataset;

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityConfig {
    pub threshold: f64,
    pub measure: MeasureConfig,
    /// Only the first `max_trajectories` inputs are considered.
    pub max_trajectories: Option<usize>,
}

impl DiversityConfig {
    pub fn new(measure: MeasureConfig) -> Self {
        DiversityConfig {
            threshold: DEFAULT_SIMILARITY_THRESHOLD,
            measure,
            max_trajectories: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        if self.max_trajectories == Some(0) {
            return Err(Error::invalid("max trajectories must be >= 1"));
        }
        self.measure.validate()
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid(format!(
            "similarity threshold must be >= 0, got {t}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiversityOutcome {
    pub diverse: usize,
    pub total: usize,
    /// Per-trajectory verdict in input order.
    pub verdicts: Vec<bool>,
}

/// Runs the counting loop over `n` items with an arbitrary similarity.
/// `similarity(i, j)` is only called with `j < i`.
pub fn count_diverse<F>(n: usize, threshold: f64, mut similarity: F) -> Result<DiversityOutcome>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    check_threshold(threshold)?;
    if n == 0 {
        return Err(Error::invalid("no trajectories"));
    }
    let mut verdicts = Vec::with_capacity(n);
    for i in 0..n {
        let mut diverse = true;
        for j in 0..i {
            if similarity(i, j)? >= threshold {
                diverse = false;
                break;
            }
        }
        verdicts.push(diverse);
    }
    Ok(DiversityOutcome {
        diverse: verdicts.iter().filter(|&&v| v).count(),
        total: n,
        verdicts,
    })
}

/// Playstyle Similarity matrix (lower triangle) of trajectories, with one
/// kernel scale pooled over all distinct pairs.
pub fn similarity_matrix(profiles: &[StyleProfile], cfg: &MeasureConfig) -> Result<Vec<Vec<f64>>> {
    let mut local: Vec<Vec<Vec<ScaleDistances>>> = Vec::with_capacity(profiles.len());
    for (i, p) in profiles.iter().enumerate() {
        let row = profiles[..i]
            .iter()
            .map(|q| state_distances(p, q, cfg.metric, cfg.similarity_threshold))
            .collect::<Result<Vec<_>>>()?;
        local.push(row);
    }
    let scale = match cfg.scaling {
        KernelScaling::Fixed(d) => d,
        KernelScaling::BatchAverage => {
            mean_local_distance(local.iter().flatten().flatten()).unwrap_or(0.0)
        }
    };
    local
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| Ok(similarity_from_states(s, cfg.metric, scale, true, false)?.value))
                .collect()
        })
        .collect()
}

/// Counts diverse trajectories, each given as its own dataset.
pub fn diverse_trajectory_count(
    trajectories: &[TrajectoryDataset],
    cfg: &DiversityConfig,
) -> Result<DiversityOutcome> {
    cfg.validate()?;
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories"));
    }
    let n = cfg
        .max_trajectories
        .map_or(trajectories.len(), |m| m.min(trajectories.len()));
    let space = trajectories[0].action_space();
    if let Some(bad) = trajectories[..n].iter().find(|t| t.action_space() != space) {
        return Err(Error::ActionSpace(format!(
            "trajectory `{}` declares {:?}, expected {:?}",
            bad.id(),
            bad.action_space(),
            space
        )));
    }
    let profiles = trajectories[..n]
        .iter()
        .map(|t| StyleProfile::build(t, &cfg.measure.encoders))
        .collect::<Result<Vec<_>>>()?;
    let sims = similarity_matrix(&profiles, &cfg.measure)?;
    count_diverse(n, cfg.threshold, |i, j| Ok(sims[i][j]))
}
