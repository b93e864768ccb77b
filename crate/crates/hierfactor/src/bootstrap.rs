//! Moving-block bootstrap intervals for the slope estimates.
//!
//! Whole time blocks are resampled to preserve serial dependence, and the
//! same resampled period sequence applies to every unit so cross-sectional
//! dependence survives too. Factor counts stay fixed at the values passed
//! in: replicates refit slopes and factors only and never rerun count
//! selection.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
/// Re-exported so callers can seed [`block_indices`] without pinning the
/// RNG crate themselves.
pub use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heterogeneous::fit_industry;
use crate::homogeneous::{capped_ranks, fit_alternating};
use crate::panel::{ModelConfig, PanelDataset};
use crate::seed::derive_seed;

/// Which slope model the replicates refit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// One pooled slope; each replicate yields one slope vector.
    Homogeneous,
    /// Per-industry slopes; each replicate yields one slope per industry.
    Heterogeneous,
}

/// Rule-of-thumb block length `floor(T^(1/3))`, never below 1.
pub fn default_block_length(periods: usize) -> usize {
    (((periods as f64).cbrt() + 1e-9).floor() as usize).max(1)
}

/// One resampled period sequence of length `periods`.
///
/// Draws `floor(T / block_length) + 1` block starts uniformly from
/// `0..periods - block_length`, concatenates the blocks, and truncates to
/// `periods`. Every start admits a full in-range block; under this start
/// range the final period never enters a resample.
pub fn block_indices(
    periods: usize,
    block_length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if block_length == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    if block_length >= periods {
        return Err(Error::InvalidArgument(format!(
            "block length {block_length} leaves no admissible start in {periods} periods"
        )));
    }
    let blocks = periods / block_length + 1;
    let starts: Vec<usize> =
        (0..blocks).map(|_| rng.random_range(0..periods - block_length)).collect();
    let mut indices = Vec::with_capacity(periods);
    'outer: for start in starts {
        for offset in 0..block_length {
            if indices.len() == periods {
                break 'outer;
            }
            indices.push(start + offset);
        }
    }
    Ok(indices)
}

/// Rebuilds the panel with every unit's rows taken at `indices`, in order.
///
/// One index sequence applies to all units, so cross-sectional structure at
/// each resampled period is the original structure at the source period.
pub fn resample(data: &PanelDataset, indices: &[usize]) -> Result<PanelDataset> {
    let t = data.periods();
    if let Some(&bad) = indices.iter().find(|&&idx| idx >= t) {
        return Err(Error::InvalidArgument(format!(
            "resample index {bad} out of range for {t} periods"
        )));
    }
    let len = indices.len();
    let d = data.regressor_count();
    let outcomes = (0..data.industries())
        .map(|i| {
            (0..data.countries(i))
                .map(|j| {
                    let y = data.outcome(i, j);
                    DVector::from_fn(len, |r, _| y[indices[r]])
                })
                .collect()
        })
        .collect();
    let regressors = (0..data.industries())
        .map(|i| {
            (0..data.countries(i))
                .map(|j| {
                    let x = data.regressor_matrix(i, j);
                    DMatrix::from_fn(len, d, |r, c| x[(indices[r], c)])
                })
                .collect()
        })
        .collect();
    PanelDataset::new(outcomes, regressors, None)
}

/// Percentile interval bounds from replicate slope draws.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// Two-sided miss probability the interval targets.
    pub level: f64,
    pub block_length: usize,
    /// Replications requested.
    pub replications: usize,
    /// Replications that produced a fit.
    pub completed: usize,
    /// One message per failed replication.
    pub failures: Vec<String>,
    /// Per-group interval bounds; one group for the pooled mode, one per
    /// industry otherwise.
    pub lower: Vec<DVector<f64>>,
    pub upper: Vec<DVector<f64>>,
    /// Completed replicate slopes, `[replicate][group]`, in replicate order.
    pub replicates: Vec<Vec<DVector<f64>>>,
}

fn too_many_failures(failures: usize, replications: usize) -> bool {
    failures * 20 > replications
}

/// Order-statistic bounds: the `ceil(a/2 n)`-th and `ceil((1 - a/2) n)`-th
/// smallest values, 1-indexed.
fn percentile_bounds(sorted: &[f64], level: f64) -> (f64, f64) {
    let n = sorted.len();
    let lo = (((level / 2.0) * n as f64).ceil() as usize).max(1);
    let hi = ((((1.0 - level / 2.0) * n as f64).ceil()) as usize).clamp(lo, n);
    (sorted[lo - 1], sorted[hi - 1])
}

/// Moving-block bootstrap percentile intervals for the slope, at the given
/// factor counts.
///
/// `global_count` and `specific_counts` come from a fit on the original
/// data and are held fixed; every replicate resamples periods, refits at
/// joint count `global_count + specific_counts[i]` per industry, and
/// records its slopes. More than 5% failed replicates fails the whole
/// call. Seeded by `config.seed`; identical inputs give identical output.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_ci(
    data: &PanelDataset,
    global_count: usize,
    specific_counts: &[usize],
    mode: FitMode,
    config: &ModelConfig,
    replications: usize,
    level: f64,
    block_length: Option<usize>,
) -> Result<BootstrapResult> {
    config.validate()?;
    if specific_counts.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} specific counts for {} industries",
            specific_counts.len(),
            data.industries()
        )));
    }
    if replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    if !(level.is_finite() && level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    let t = data.periods();
    let block_length = block_length.unwrap_or_else(|| default_block_length(t));
    if block_length >= t {
        return Err(Error::InvalidArgument(format!(
            "block length {block_length} must be shorter than the {t} observed periods"
        )));
    }
    let joint: Vec<usize> =
        capped_ranks(data, &specific_counts.iter().map(|&s| global_count + s).collect::<Vec<_>>());

    const STREAM_BASE: u64 = 2 << 32;
    let draws = crate::par::indexed_map(replications, |b| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_BASE + b as u64));
        let mut run = || -> Result<Vec<DVector<f64>>> {
            let indices = block_indices(t, block_length, &mut rng)?;
            let resampled = resample(data, &indices)?;
            match mode {
                FitMode::Homogeneous => {
                    let fit = fit_alternating(&resampled, &joint, config, None)?;
                    Ok(vec![fit.beta])
                }
                FitMode::Heterogeneous => {
                    let mut betas = Vec::with_capacity(resampled.industries());
                    for i in 0..resampled.industries() {
                        let fit = fit_industry(&resampled.industry(i), joint[i], config, None)?;
                        betas.push(fit.beta);
                    }
                    Ok(betas)
                }
            }
        };
        run().map_err(|e| format!("replicate {b}: {e}"))
    });

    let mut replicates = Vec::with_capacity(replications);
    let mut failures = Vec::new();
    for draw in draws {
        match draw {
            Ok(betas) => replicates.push(betas),
            Err(message) => failures.push(message),
        }
    }
    if too_many_failures(failures.len(), replications) {
        let first = failures.first().cloned().unwrap_or_default();
        return Err(Error::Bootstrap { failures: failures.len(), replications, first });
    }

    let groups = match mode {
        FitMode::Homogeneous => 1,
        FitMode::Heterogeneous => data.industries(),
    };
    let d = data.regressor_count();
    let mut lower = Vec::with_capacity(groups);
    let mut upper = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut lo = DVector::<f64>::zeros(d);
        let mut hi = DVector::<f64>::zeros(d);
        for k in 0..d {
            let mut values: Vec<f64> = replicates.iter().map(|r| r[g][k]).collect();
            values.sort_by(f64::total_cmp);
            let (l, h) = percentile_bounds(&values, level);
            lo[k] = l;
            hi[k] = h;
        }
        lower.push(lo);
        upper.push(hi);
    }

    Ok(BootstrapResult {
        level,
        block_length,
        replications,
        completed: replicates.len(),
        failures,
        lower,
        upper,
        replicates,
    })
}
