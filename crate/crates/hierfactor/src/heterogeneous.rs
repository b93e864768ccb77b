//! Per-industry slopes with the same two-layer factor structure.
//!
//! Each industry's slope and joint factor block are fit on that industry
//! alone; the layers are then selected and split exactly as in the pooled
//! pipeline, but with every industry's own slope behind its residuals.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::homogeneous::{capped_ranks, fit_alternating, AlternatingFit};
use crate::panel::{FactorStructure, ModelConfig, PanelDataset};
use crate::select::{
    default_threshold, extract_factors, extract_loadings, global_covariance, select_global,
    select_specific, specific_covariances, SelectionResult,
};

/// Alternating fit of one industry in isolation.
///
/// `industry_data` must hold exactly one industry (see
/// [`PanelDataset::industry`]).
pub fn fit_industry(
    industry_data: &PanelDataset,
    count: usize,
    config: &ModelConfig,
    beta_init: Option<&DVector<f64>>,
) -> Result<AlternatingFit> {
    if industry_data.industries() != 1 {
        return Err(Error::InvalidArgument(format!(
            "industry fit expects a single-industry panel, got {} industries",
            industry_data.industries()
        )));
    }
    fit_alternating(industry_data, &[count], config, beta_init)
}

/// A fitted per-industry-slope model with its selected two-layer structure.
#[derive(Debug, Clone)]
pub struct HeterogeneousFit {
    /// One slope per industry.
    pub betas: Vec<DVector<f64>>,
    pub factors: FactorStructure,
    pub selection: SelectionResult,
    /// Per-industry objective traces of the saturated first fits.
    pub stage_one_traces: Vec<Vec<f64>>,
    /// Per-industry objective traces of the final fits at selected counts.
    pub objective_traces: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Per-industry variant of the full pipeline: saturated industry fits,
/// count selection on the pooled residuals, industry refits at the selected
/// counts, and extraction of both layers.
pub fn fit_heterogeneous(data: &PanelDataset, config: &ModelConfig) -> Result<HeterogeneousFit> {
    config.validate()?;
    let t = data.periods();
    let saturated = capped_ranks(data, &vec![config.max_factors; data.industries()]);
    let stage_one = crate::par::indexed_map(data.industries(), |i| {
        fit_industry(&data.industry(i), saturated[i], config, None)
    });
    let mut betas = Vec::with_capacity(data.industries());
    let mut stage_one_traces = Vec::with_capacity(data.industries());
    let mut all_converged = true;
    for fit in stage_one {
        let fit = fit?;
        all_converged &= fit.converged;
        betas.push(fit.beta);
        stage_one_traces.push(fit.objective_trace);
    }

    let threshold = config
        .threshold_override
        .unwrap_or_else(|| default_threshold(data.total_units(), t));
    let scan_cap = config.max_factors.min(t - 1);
    let pooled = global_covariance(data, &betas)?;
    let (global_count, global_eigenvalues) = select_global(&pooled, scan_cap, threshold)?;
    let shared = extract_factors(&pooled, global_count)?;
    let projected = specific_covariances(data, &betas, &shared)?;
    let (specific_counts, specific_eigenvalues) =
        select_specific(&projected, scan_cap, threshold)?;
    let selection = SelectionResult {
        global_count,
        specific_counts: specific_counts.clone(),
        global_eigenvalues,
        specific_eigenvalues,
        threshold,
    };

    let joint: Vec<usize> = specific_counts.iter().map(|&s| global_count + s).collect();
    let joint = capped_ranks(data, &joint);
    let final_fits = crate::par::indexed_map(data.industries(), |i| {
        fit_industry(&data.industry(i), joint[i], config, Some(&betas[i]))
    });
    let mut final_betas = Vec::with_capacity(data.industries());
    let mut objective_traces = Vec::with_capacity(data.industries());
    for fit in final_fits {
        let fit = fit?;
        all_converged &= fit.converged;
        final_betas.push(fit.beta);
        objective_traces.push(fit.objective_trace);
    }

    let pooled = global_covariance(data, &final_betas)?;
    let shared = extract_factors(&pooled, global_count)?;
    let projected = specific_covariances(data, &final_betas, &shared)?;
    let mut specific = Vec::with_capacity(data.industries());
    for (sigma, &count) in projected.iter().zip(&selection.specific_counts) {
        specific.push(extract_factors(sigma, count)?);
    }
    let (loadings_global, loadings_specific) =
        extract_loadings(data, &final_betas, &shared, &specific)?;

    Ok(HeterogeneousFit {
        betas: final_betas,
        factors: FactorStructure {
            global: shared,
            specific,
            loadings_global,
            loadings_specific,
        },
        selection,
        stage_one_traces,
        objective_traces,
        converged: all_converged,
    })
}
