//! Tail statistics, optimal-transport distances between tail point clouds,
//! and stylized-fact statistics of return series.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// Fraction of the sample treated as the tail.
pub const TAIL_FRACTION: f64 = 0.05;
/// Lags at which the absolute-return autocorrelation is reported.
pub const AUTOCORR_LAGS: [usize; 4] = [1, 10, 20, 30];

/// Tail size `floor(0.05 * n)`, at least one.
pub fn default_k(n: usize) -> usize {
    ((n as f64 * TAIL_FRACTION).floor() as usize).max(1)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Shifts and scales to mean 0 and standard deviation 1 (population
/// normalisation, so `[2, 4]` maps to `[-1, 1]`).
pub fn standardize(returns: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if returns.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 1,
            got: returns.len(),
        });
    }
    if returns.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let m = mean(returns);
    let var = returns.iter().map(|x| (x - m).powi(2)).sum::<f64>() / returns.len() as f64;
    if var <= 0.0 {
        return Err(MetricsError::Degenerate("zero variance"));
    }
    let sd = var.sqrt();
    Ok(returns.iter().map(|x| (x - m) / sd).collect())
}

fn sorted_descending(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// `ln(x_(k) / x_(K+1))` for the k-th largest value, k = 1..=K.
pub fn tail_log_ratios(abs_returns: &[f64], k: usize) -> Result<Vec<f64>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::EmptyTail);
    }
    if abs_returns.len() <= k {
        return Err(MetricsError::TailTooLarge {
            k,
            n: abs_returns.len(),
        });
    }
    let sorted = sorted_descending(abs_returns)?;
    let threshold = sorted[k];
    if threshold <= 0.0 {
        return Err(MetricsError::DegenerateTail);
    }
    Ok(sorted[..k].iter().map(|x| (x / threshold).ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub hill: f64,
    pub k_used: usize,
    pub n_samples: usize,
}

/// Hill tail index `K / sum(ln ratios)` over the top `k` values.
pub fn hill_index(abs_returns: &[f64], k: usize) -> Result<TailStats, MetricsError> {
    let ratios = tail_log_ratios(abs_returns, k)?;
    let sum: f64 = ratios.iter().sum();
    if sum <= 0.0 {
        return Err(MetricsError::AllTies);
    }
    Ok(TailStats {
        hill: k as f64 / sum,
        k_used: k,
        n_samples: abs_returns.len(),
    })
}

/// Points stored row-major; `points.len()` is a multiple of `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<f64>,
    pub source_id: String,
}

impl PointCloud {
    pub fn one_dimensional(
        points: Vec<f64>,
        source_id: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        Self::new(1, points, source_id)
    }

    pub fn new(
        dim: usize,
        points: Vec<f64>,
        source_id: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(MetricsError::DimensionMismatch(dim, points.len()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self {
            dim,
            points,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// One-dimensional cloud of tail log-ratios.
pub fn build_tail_cloud(
    abs_returns: &[f64],
    k: usize,
    source_id: &str,
) -> Result<PointCloud, MetricsError> {
    PointCloud::one_dimensional(tail_log_ratios(abs_returns, k)?, source_id)
}

/// Uniform sample of `size` points without replacement.
pub fn subsample<R: Rng + ?Sized>(
    cloud: &PointCloud,
    size: usize,
    rng: &mut R,
) -> Result<PointCloud, MetricsError> {
    if size > cloud.len() {
        return Err(MetricsError::SubsampleTooLarge {
            requested: size,
            available: cloud.len(),
        });
    }
    let mut idx = rand::seq::index::sample(rng, cloud.len(), size).into_vec();
    idx.sort_unstable();
    let points = idx
        .iter()
        .flat_map(|&i| cloud.point(i).iter().copied())
        .collect();
    Ok(PointCloud {
        dim: cloud.dim,
        points,
        source_id: cloud.source_id.clone(),
    })
}

/// Squared-Euclidean optimal transport cost between the uniform empirical
/// measures on `a` and `b`.
///
/// Only `d = 1` is supported. There the monotone coupling of the sorted
/// points is optimal; it is built by the northwest-corner walk in integer
/// mass units of `1/(K*L)`, so the coupling itself is exact.
pub fn ot_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    if a.dim != b.dim {
        return Err(MetricsError::DimensionMismatch(a.dim, b.dim));
    }
    if a.dim != 1 {
        return Err(MetricsError::UnsupportedDimension(a.dim));
    }
    let mut xs = a.points.clone();
    let mut ys = b.points.clone();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (k, l) = (xs.len() as u64, ys.len() as u64);
    // each point of `a` carries mass l, each point of `b` mass k
    let (mut i, mut j) = (0usize, 0usize);
    let (mut left_a, mut left_b) = (l, k);
    let mut cost = 0.0;
    while i < xs.len() && j < ys.len() {
        let moved = left_a.min(left_b);
        let d = xs[i] - ys[j];
        cost += moved as f64 * d * d;
        left_a -= moved;
        left_b -= moved;
        if left_a == 0 {
            i += 1;
            left_a = l;
        }
        if left_b == 0 {
            j += 1;
            left_b = k;
        }
    }
    Ok(cost / (k as f64 * l as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanOt {
    pub mean: f64,
    /// Sample standard deviation across references (0 for a single one).
    pub std: f64,
    pub per_reference: Vec<f64>,
}

pub fn mean_ot(syn: &PointCloud, refs: &[PointCloud]) -> Result<MeanOt, MetricsError> {
    if refs.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    let per_reference = refs
        .iter()
        .map(|r| ot_distance(syn, r))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = mean_and_std(&per_reference);
    Ok(MeanOt {
        mean,
        std,
        per_reference,
    })
}

/// Mean OT over distinct ordered pairs of clouds (self-pairs excluded).
pub fn pairwise_mean_ot(clouds: &[PointCloud]) -> Result<MeanOt, MetricsError> {
    if clouds.len() < 2 {
        return Err(MetricsError::NoReferences);
    }
    let mut per_pair = Vec::new();
    for (i, a) in clouds.iter().enumerate() {
        for (j, b) in clouds.iter().enumerate() {
            if i != j {
                per_pair.push(ot_distance(a, b)?);
            }
        }
    }
    let (mean, std) = mean_and_std(&per_pair);
    Ok(MeanOt {
        mean,
        std,
        per_reference: per_pair,
    })
}

/// Mean and sample standard deviation; the deviation of fewer than two
/// values is 0.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

/// Hill index expected for the two-component scenario if the components'
/// effects were additive: `z0 - (z0 - z1) - (z0 - z2)`.
pub fn theoretical_hill(z0: f64, z1: f64, z2: f64) -> f64 {
    z0 - (z0 - z1) - (z0 - z2)
}

/// Excess kurtosis from population moments, `m4 / m2^2 - 3`.
pub fn excess_kurtosis(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() < 4 {
        return Err(MetricsError::TooShort {
            needed: 3,
            got: xs.len(),
        });
    }
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return Err(MetricsError::Degenerate("zero variance"));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Pearson correlation of paired samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 1,
            got: xs.len(),
        });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricsError::Degenerate(
            "zero variance in correlation input",
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `Corr(|r_t|, |r_{t-lag}|)` with pairs drawn only from within each segment,
/// so lags never straddle two trials.
pub fn abs_autocorr(segments: &[&[f64]], lag: usize) -> Result<f64, MetricsError> {
    let mut lead = Vec::new();
    let mut lagged = Vec::new();
    for seg in segments {
        if seg.len() > lag {
            lead.extend(seg[lag..].iter().map(|x| x.abs()));
            lagged.extend(seg[..seg.len() - lag].iter().map(|x| x.abs()));
        }
    }
    pearson(&lead, &lagged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactReport {
    pub kurtosis: f64,
    pub vol_volume_corr: f64,
    pub abs_autocorr: BTreeMap<usize, f64>,
}

/// Stylized facts of one aligned `(returns, volumes)` series.
pub fn stylized_facts(
    returns: &[f64],
    volumes: &[f64],
) -> Result<StylizedFactReport, MetricsError> {
    stylized_facts_segmented(&[(returns, volumes)])
}

/// Stylized facts pooled over independent segments (e.g. one per trial).
pub fn stylized_facts_segmented(
    segments: &[(&[f64], &[f64])],
) -> Result<StylizedFactReport, MetricsError> {
    let mut returns = Vec::new();
    let mut volumes = Vec::new();
    for (r, v) in segments {
        if r.len() != v.len() {
            return Err(MetricsError::LengthMismatch(r.len(), v.len()));
        }
        returns.extend_from_slice(r);
        volumes.extend_from_slice(v);
    }
    let needed = AUTOCORR_LAGS[AUTOCORR_LAGS.len() - 1] + 1;
    if returns.len() <= needed {
        return Err(MetricsError::TooShort {
            needed,
            got: returns.len(),
        });
    }
    let abs: Vec<f64> = returns.iter().map(|x| x.abs()).collect();
    let seg_returns: Vec<&[f64]> = segments.iter().map(|(r, _)| *r).collect();
    let abs_autocorr = AUTOCORR_LAGS
        .iter()
        .map(|&lag| abs_autocorr(&seg_returns, lag).map(|c| (lag, c)))
        .collect::<Result<_, _>>()?;
    Ok(StylizedFactReport {
        kurtosis: excess_kurtosis(&returns)?,
        vol_volume_corr: pearson(&abs, &volumes)?,
        abs_autocorr,
    })
}
