//! Empirical action distributions and the distances between them.
//!
//! Discrete actions carry no geometry, so Wasserstein distances between
//! categorical distributions use the 0/1 ground metric: `W1` is the total
//! variation distance and `W2 = sqrt(W1)`. Continuous actions are summarized
//! by a Gaussian (sample mean, covariance plus a diagonal floor).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{ActionSpace, ActionValue};

/// Upper clip for the Bhattacharyya distance.
pub const BD_CLIP: f64 = 10.0;
/// Added to determinants in the Gaussian Bhattacharyya distance.
pub const DET_EPSILON: f64 = 1e-8;
/// Additive smoothing per cell before KL divergences.
pub const KL_SMOOTHING: f64 = 1e-6;
/// Diagonal floor added to empirical covariances.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    W1,
    W2,
    Kl,
    Mkl,
    /// Bhattacharyya coefficient (a similarity in `[0, 1]`).
    Bc,
    /// Bhattacharyya distance, clipped at [`BD_CLIP`].
    Bd,
}

impl DistanceMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::W1 => "w1",
            DistanceMetric::W2 => "w2",
            DistanceMetric::Kl => "kl",
            DistanceMetric::Mkl => "mkl",
            DistanceMetric::Bc => "bc",
            DistanceMetric::Bd => "bd",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "w1" => DistanceMetric::W1,
            "w2" => DistanceMetric::W2,
            "kl" => DistanceMetric::Kl,
            "mkl" => DistanceMetric::Mkl,
            "bc" => DistanceMetric::Bc,
            "bd" => DistanceMetric::Bd,
            other => return Err(Error::invalid(format!("unknown metric `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Categorical(Vec<f64>),
    Gaussian {
        mean: Vec<f64>,
        /// Row-major `d x d` covariance.
        cov: Vec<f64>,
        samples: usize,
    },
}

impl ActionDistribution {
    /// Normalizes non-negative counts into a categorical distribution.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if counts.is_empty() || counts.iter().any(|&c| c < 0.0 || !c.is_finite()) || total <= 0.0
        {
            return Err(Error::DistributionMismatch(
                "counts must be non-negative with a positive total".into(),
            ));
        }
        Ok(ActionDistribution::Categorical(
            counts.iter().map(|c| c / total).collect(),
        ))
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(Error::DistributionMismatch(format!(
                "gaussian of dimension {d} needs a {d}x{d} covariance"
            )));
        }
        Ok(ActionDistribution::Gaussian {
            mean,
            cov,
            samples: 0,
        })
    }

    fn kind(&self) -> &'static str {
        match self {
            ActionDistribution::Categorical(_) => "categorical",
            ActionDistribution::Gaussian { .. } => "gaussian",
        }
    }
}

/// Empirical action distribution of the records seen in one state.
pub fn empirical_policy(
    records: &[ActionValue],
    action_space: ActionSpace,
) -> Result<ActionDistribution> {
    if records.is_empty() {
        return Err(Error::invalid("no action records"));
    }
    for r in records {
        action_space.check(r)?;
    }
    match action_space {
        ActionSpace::Discrete(n) => {
            let mut counts = vec![0.0; n];
            for r in records {
                if let ActionValue::Discrete(a) = r {
                    counts[*a] += 1.0;
                }
            }
            ActionDistribution::from_counts(&counts)
        }
        ActionSpace::Continuous(d) => {
            let n = records.len() as f64;
            let rows: Vec<&[f64]> = records
                .iter()
                .filter_map(|r| match r {
                    ActionValue::Continuous(v) => Some(v.as_slice()),
                    ActionValue::Discrete(_) => None,
                })
                .collect();
            let mut mean = vec![0.0; d];
            for v in &rows {
                for (m, x) in mean.iter_mut().zip(v.iter()) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut cov = vec![0.0; d * d];
            for v in &rows {
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] += (v[i] - mean[i]) * (v[j] - mean[j]);
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] /= n;
                }
                cov[i * d + i] += COVARIANCE_FLOOR;
            }
            Ok(ActionDistribution::Gaussian {
                mean,
                cov,
                samples: records.len(),
            })
        }
    }
}

/// Distance (or, for [`DistanceMetric::Bc`], coefficient) between two
/// distributions of the same kind.
pub fn distribution_distance(
    metric: DistanceMetric,
    p: &ActionDistribution,
    q: &ActionDistribution,
) -> Result<f64> {
    match (p, q) {
        (ActionDistribution::Categorical(_), ActionDistribution::Categorical(_)) => {
            categorical_distance(metric, p, q)
        }
        (ActionDistribution::Gaussian { .. }, ActionDistribution::Gaussian { .. }) => {
            gaussian_distance(metric, p, q)
        }
        _ => Err(Error::DistributionMismatch(format!(
            "cannot compare {} with {}",
            p.kind(),
            q.kind()
        ))),
    }
}

pub fn categorical_distance(
    metric: DistanceMetric,
    p: &ActionDistribution,
    q: &ActionDistribution,
) -> Result<f64> {
    let (ActionDistribution::Categorical(p), ActionDistribution::Categorical(q)) = (p, q) else {
        return Err(Error::DistributionMismatch(
            "categorical distance needs two categorical distributions".into(),
        ));
    };
    if p.len() != q.len() {
        return Err(Error::DistributionMismatch(format!(
            "action counts differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(match metric {
        DistanceMetric::W1 => total_variation(p, q),
        DistanceMetric::W2 => total_variation(p, q).sqrt(),
        DistanceMetric::Kl => kl_divergence(p, q),
        DistanceMetric::Mkl => 0.5 * (kl_divergence(p, q) + kl_divergence(q, p)),
        DistanceMetric::Bc => bhattacharyya_coefficient(p, q),
        DistanceMetric::Bd => clip_bd(-bhattacharyya_coefficient(p, q).ln()),
    })
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    tv.clamp(0.0, 1.0)
}

fn smooth(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().map(|x| x + KL_SMOOTHING).sum();
    p.iter().map(|x| (x + KL_SMOOTHING) / total).collect()
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let (p, q) = (smooth(p), smooth(q));
    p.iter()
        .zip(&q)
        .map(|(a, b)| if a == b { 0.0 } else { a * (a / b).ln() })
        .sum::<f64>()
        .max(0.0)
}

fn bhattacharyya_coefficient(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a * b).sqrt())
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

fn clip_bd(bd: f64) -> f64 {
    if bd.is_nan() {
        return BD_CLIP;
    }
    bd.clamp(0.0, BD_CLIP)
}

pub fn gaussian_distance(
    metric: DistanceMetric,
    p: &ActionDistribution,
    q: &ActionDistribution,
) -> Result<f64> {
    let (
        ActionDistribution::Gaussian {
            mean: m1, cov: c1, ..
        },
        ActionDistribution::Gaussian {
            mean: m2, cov: c2, ..
        },
    ) = (p, q)
    else {
        return Err(Error::DistributionMismatch(
            "gaussian distance needs two gaussian distributions".into(),
        ));
    };
    if m1.len() != m2.len() || c1.len() != c2.len() {
        return Err(Error::DistributionMismatch(format!(
            "dimensions differ: {} vs {}",
            m1.len(),
            m2.len()
        )));
    }
    if !matches!(
        metric,
        DistanceMetric::W2 | DistanceMetric::Bd | DistanceMetric::Bc
    ) {
        return Err(Error::UnsupportedMetric {
            metric: metric.to_string(),
            kind: "gaussian",
        });
    }
    // fixed argument order keeps the result bitwise symmetric
    let ((m1, c1), (m2, c2)) = if param_order(m1, c1, m2, c2) == Ordering::Greater {
        ((m2, c2), (m1, c1))
    } else {
        ((m1, c1), (m2, c2))
    };
    let d = m1.len();
    let s1 = symmetric(d, c1)?;
    let s2 = symmetric(d, c2)?;
    let mu1 = DVector::from_column_slice(m1);
    let mu2 = DVector::from_column_slice(m2);
    if m1 == m2 && c1 == c2 {
        return Ok(if metric == DistanceMetric::Bc { 1.0 } else { 0.0 });
    }
    match metric {
        DistanceMetric::W2 => {
            let root2 = psd_sqrt(&s2);
            let cross = psd_sqrt(&(&root2 * &s1 * &root2));
            let mean_term = (&mu1 - &mu2).norm_squared();
            let trace_term = (&s1 + &s2 - cross * 2.0).trace();
            Ok((mean_term + trace_term).max(0.0).sqrt())
        }
        DistanceMetric::Bd => Ok(gaussian_bd(&mu1, &s1, &mu2, &s2)),
        DistanceMetric::Bc => Ok((-gaussian_bd(&mu1, &s1, &mu2, &s2)).exp()),
        _ => unreachable!(),
    }
}

fn gaussian_bd(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let s = (s1 + s2) * 0.5;
    let diff = mu1 - mu2;
    let inv = s
        .clone()
        .try_inverse()
        .or_else(|| s.clone().pseudo_inverse(1e-12).ok())
        .unwrap_or_else(|| DMatrix::zeros(s.nrows(), s.ncols()));
    let maha = (diff.transpose() * inv * &diff)[(0, 0)];
    let det = s.determinant().max(0.0) + DET_EPSILON;
    let det1 = s1.determinant().max(0.0) + DET_EPSILON;
    let det2 = s2.determinant().max(0.0) + DET_EPSILON;
    clip_bd(maha / 8.0 + 0.5 * (det / (det1 * det2).sqrt()).ln())
}

fn symmetric(d: usize, cov: &[f64]) -> Result<DMatrix<f64>> {
    let m = DMatrix::from_row_slice(d, d, cov);
    let scale = m.diagonal().iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::DistributionMismatch("covariance is not symmetric".into()));
            }
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
        return Err(Error::NotPositiveSemidefinite);
    }
    Ok(m)
}

/// Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn param_order(m1: &[f64], c1: &[f64], m2: &[f64], c2: &[f64]) -> Ordering {
    m1.iter()
        .chain(c1)
        .zip(m2.iter().chain(c2))
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat(p: &[f64]) -> ActionDistribution {
        ActionDistribution::Categorical(p.to_vec())
    }

    const ALL: [DistanceMetric; 6] = [
        DistanceMetric::W1,
        DistanceMetric::W2,
        DistanceMetric::Kl,
        DistanceMetric::Mkl,
        DistanceMetric::Bc,
        DistanceMetric::Bd,
    ];

    #[test]
    fn identical_categoricals() {
        let p = cat(&[0.2, 0.3, 0.5]);
        for m in ALL {
            let v = categorical_distance(m, &p, &p).unwrap();
            let want = if m == DistanceMetric::Bc { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "{m}: {v}");
        }
    }

    #[test]
    fn one_hot_extremes() {
        let p = cat(&[1.0, 0.0]);
        let q = cat(&[0.0, 1.0]);
        assert_eq!(categorical_distance(DistanceMetric::W1, &p, &q).unwrap(), 1.0);
        assert_eq!(categorical_distance(DistanceMetric::W2, &p, &q).unwrap(), 1.0);
        assert_eq!(categorical_distance(DistanceMetric::Bc, &p, &q).unwrap(), 0.0);
        assert_eq!(categorical_distance(DistanceMetric::Bd, &p, &q).unwrap(), 10.0);
        // KL is finite thanks to smoothing
        let kl = categorical_distance(DistanceMetric::Kl, &p, &q).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn categorical_errors() {
        let p = cat(&[1.0, 0.0]);
        let q = cat(&[0.5, 0.25, 0.25]);
        assert!(matches!(
            categorical_distance(DistanceMetric::W1, &p, &q),
            Err(Error::DistributionMismatch(_))
        ));
        let g = ActionDistribution::gaussian(vec![0.0], vec![1.0]).unwrap();
        assert!(categorical_distance(DistanceMetric::W1, &p, &g).is_err());
        assert!(distribution_distance(DistanceMetric::W2, &p, &g).is_err());
    }

    #[test]
    fn kl_is_asymmetric_mkl_symmetric() {
        let p = cat(&[0.9, 0.1]);
        let q = cat(&[0.5, 0.5]);
        let pq = categorical_distance(DistanceMetric::Kl, &p, &q).unwrap();
        let qp = categorical_distance(DistanceMetric::Kl, &q, &p).unwrap();
        assert!((pq - qp).abs() > 1e-3);
        let m = categorical_distance(DistanceMetric::Mkl, &p, &q).unwrap();
        assert!((m - 0.5 * (pq + qp)).abs() < 1e-15);
    }

    #[test]
    fn identical_gaussians() {
        let g = ActionDistribution::gaussian(vec![1.0, -2.0], vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        assert_eq!(gaussian_distance(DistanceMetric::W2, &g, &g).unwrap(), 0.0);
        assert_eq!(gaussian_distance(DistanceMetric::Bd, &g, &g).unwrap(), 0.0);
        assert_eq!(gaussian_distance(DistanceMetric::Bc, &g, &g).unwrap(), 1.0);
    }

    #[test]
    fn unit_covariance_bd_is_d_squared_over_8() {
        for d in [0.5, 1.0, 2.0, 3.0] {
            let p = ActionDistribution::gaussian(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
            let q = ActionDistribution::gaussian(
                vec![d / 2f64.sqrt(), d / 2f64.sqrt()],
                vec![1.0, 0.0, 0.0, 1.0],
            )
            .unwrap();
            let bd = gaussian_distance(DistanceMetric::Bd, &p, &q).unwrap();
            assert!((bd - d * d / 8.0).abs() < 1e-9, "d={d}: {bd}");
            let bc = gaussian_distance(DistanceMetric::Bc, &p, &q).unwrap();
            assert!((bc - (-bd).exp()).abs() < 1e-12);
            // equal covariances: W2 is the mean distance
            let w2 = gaussian_distance(DistanceMetric::W2, &p, &q).unwrap();
            assert!((w2 - d).abs() < 1e-9);
        }
    }

    #[test]
    fn w2_between_scaled_isotropic_gaussians() {
        // 1-D: W2^2 = (m1-m2)^2 + (s1-s2)^2
        let p = ActionDistribution::gaussian(vec![0.0], vec![4.0]).unwrap();
        let q = ActionDistribution::gaussian(vec![3.0], vec![1.0]).unwrap();
        let w2 = gaussian_distance(DistanceMetric::W2, &p, &q).unwrap();
        assert!((w2 - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_uses_epsilon_guard() {
        let p = ActionDistribution::gaussian(vec![0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let q = ActionDistribution::gaussian(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let bd = gaussian_distance(DistanceMetric::Bd, &p, &q).unwrap();
        assert!(bd.is_finite() && (0.0..=10.0).contains(&bd));
        let bad = ActionDistribution::gaussian(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            gaussian_distance(DistanceMetric::Bd, &p, &bad),
            Err(Error::NotPositiveSemidefinite)
        ));
    }

    #[test]
    fn gaussian_rejects_other_metrics_and_dims() {
        let p = ActionDistribution::gaussian(vec![0.0], vec![1.0]).unwrap();
        let q = ActionDistribution::gaussian(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(gaussian_distance(DistanceMetric::W2, &p, &q).is_err());
        assert!(matches!(
            gaussian_distance(DistanceMetric::Kl, &p, &p),
            Err(Error::UnsupportedMetric { .. })
        ));
    }

    #[test]
    fn empirical_policies() {
        let d = |v: &[usize]| v.iter().map(|&a| ActionValue::Discrete(a)).collect::<Vec<_>>();
        assert_eq!(
            empirical_policy(&d(&[0, 0, 1, 1]), ActionSpace::Discrete(2)).unwrap(),
            cat(&[0.5, 0.5])
        );
        assert_eq!(
            empirical_policy(&d(&[0, 0, 0, 1]), ActionSpace::Discrete(2)).unwrap(),
            cat(&[0.75, 0.25])
        );
        assert!(empirical_policy(&[], ActionSpace::Discrete(2)).is_err());

        let one = [ActionValue::Continuous(vec![1.5, -0.5])];
        match empirical_policy(&one, ActionSpace::Continuous(2)).unwrap() {
            ActionDistribution::Gaussian { mean, cov, samples } => {
                assert_eq!(mean, vec![1.5, -0.5]);
                assert_eq!(cov, vec![COVARIANCE_FLOOR, 0.0, 0.0, COVARIANCE_FLOOR]);
                assert_eq!(samples, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn categorical_bounds_and_symmetry((p, q) in (2usize..6).prop_flat_map(|n| (simplex(n), simplex(n)))) {
            let (p, q) = (cat(&p), cat(&q));
            for m in [DistanceMetric::W1, DistanceMetric::W2, DistanceMetric::Mkl, DistanceMetric::Bc, DistanceMetric::Bd] {
                let a = categorical_distance(m, &p, &q).unwrap();
                let b = categorical_distance(m, &q, &p).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
            let bc = categorical_distance(DistanceMetric::Bc, &p, &q).unwrap();
            let bd = categorical_distance(DistanceMetric::Bd, &p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&bc));
            prop_assert!((0.0..=BD_CLIP).contains(&bd));
            if bd < BD_CLIP {
                prop_assert!((bc - (-bd).exp()).abs() < 1e-12);
            }
            let w1 = categorical_distance(DistanceMetric::W1, &p, &q).unwrap();
            let w2 = categorical_distance(DistanceMetric::W2, &p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&w1) && (0.0..=1.0).contains(&w2));
        }

        #[test]
        fn gaussian_symmetry(
            m1 in prop::collection::vec(-3.0f64..3.0, 2),
            m2 in prop::collection::vec(-3.0f64..3.0, 2),
            a in 0.1f64..3.0, b in 0.1f64..3.0, r in -0.9f64..0.9,
        ) {
            let c1 = vec![a, r * (a * b).sqrt(), r * (a * b).sqrt(), b];
            let c2 = vec![b, 0.0, 0.0, a];
            let p = ActionDistribution::gaussian(m1, c1).unwrap();
            let q = ActionDistribution::gaussian(m2, c2).unwrap();
            for m in [DistanceMetric::W2, DistanceMetric::Bd, DistanceMetric::Bc] {
                let x = gaussian_distance(m, &p, &q).unwrap();
                let y = gaussian_distance(m, &q, &p).unwrap();
                prop_assert_eq!(x, y);
            }
        }
    }
}
