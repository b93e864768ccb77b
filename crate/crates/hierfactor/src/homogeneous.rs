//! Pooled-slope estimation by alternating least squares.
//!
//! The slope and the per-industry factor blocks are each optimal given the
//! other, so alternation never increases the pooled objective. The full
//! pipeline first fits at a generous factor count, then selects both layer
//! counts, then refits at the selected counts and splits each industry's
//! joint block into a shared part and an industry-specific part.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, solve_spd_vector};
use crate::panel::{objective_q, residuals, FactorStructure, ModelConfig, PanelDataset};
use crate::select::{
    default_threshold, extract_factors, extract_loadings, global_covariance, select_global,
    select_specific, specific_covariances, SelectionResult,
};

/// Caps each requested per-industry factor count at `min(N_i, T - 1)`.
///
/// An industry spans at most `N_i` residual directions, and a count of `T`
/// would annihilate the industry's residuals entirely, leaving nothing to
/// identify the slope from.
pub fn capped_ranks(data: &PanelDataset, requested: &[usize]) -> Vec<usize> {
    let t = data.periods();
    requested
        .iter()
        .enumerate()
        .map(|(i, &r)| r.min(data.countries(i)).min(t - 1))
        .collect()
}

/// Pooled slope given per-industry factor blocks: projects each unit's data
/// off its industry's factor span and solves the pooled normal equations.
///
/// Blocks need `T` rows and full column rank; orthonormality is not
/// required because only the span enters.
pub fn beta_given_factors(
    data: &PanelDataset,
    factors: &[DMatrix<f64>],
) -> Result<DVector<f64>> {
    if factors.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} factor blocks for {} industries",
            factors.len(),
            data.industries()
        )));
    }
    let t = data.periods();
    let d = data.regressor_count();
    let parts = crate::par::indexed_map(data.industries(), |i| {
        let f = &factors[i];
        if f.nrows() != t {
            return Err(Error::Dimension(format!(
                "factor block {} has {} rows, expected {}",
                i,
                f.nrows(),
                t
            )));
        }
        let chol = if f.ncols() == 0 {
            None
        } else {
            Some(Cholesky::new(f.tr_mul(f)).ok_or_else(|| {
                Error::RankDeficient(format!("factor block {i} in slope update"))
            })?)
        };
        let mut normal = DMatrix::<f64>::zeros(d, d);
        let mut moment = DVector::<f64>::zeros(d);
        for j in 0..data.countries(i) {
            let x = data.regressor_matrix(i, j);
            let y = data.outcome(i, j);
            let (xp, yp) = match &chol {
                Some(chol) => {
                    let wx = chol.solve(&f.tr_mul(x));
                    let wy = chol.solve(&f.tr_mul(y));
                    (x - f * wx, y - f * wy)
                }
                None => (x.clone(), y.clone()),
            };
            normal += xp.tr_mul(&xp);
            moment += xp.tr_mul(&yp);
        }
        Ok((normal, moment))
    });
    let mut normal = DMatrix::<f64>::zeros(d, d);
    let mut moment = DVector::<f64>::zeros(d);
    for part in parts {
        let (a, b) = part?;
        normal += a;
        moment += b;
    }
    solve_spd_vector(&normal, &moment, "slope normal equations")
}

/// Per-industry factor blocks given a shared slope: the leading
/// eigenvectors of each industry's residual covariance, scaled to
/// `(1/T) F'F = I`, together with the matching eigenvalues.
pub fn factors_given_beta(
    data: &PanelDataset,
    beta: &DVector<f64>,
    counts: &[usize],
) -> Result<(Vec<DMatrix<f64>>, Vec<Vec<f64>>)> {
    if counts.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} factor counts for {} industries",
            counts.len(),
            data.industries()
        )));
    }
    let t = data.periods();
    if let Some((i, &r)) = counts.iter().enumerate().find(|&(_, &r)| r > t) {
        return Err(Error::InvalidArgument(format!(
            "industry {i} requests {r} factors from {t} periods"
        )));
    }
    let resid = residuals(data, std::slice::from_ref(beta))?;
    let blocks = crate::par::indexed_map(data.industries(), |i| {
        let mut sigma = DMatrix::<f64>::zeros(t, t);
        for r in &resid[i] {
            sigma.ger(1.0, r, r, 1.0);
        }
        sigma /= (resid[i].len() * t) as f64;
        let eig = linalg::top_eigenpairs(&sigma, counts[i])?;
        Ok((eig.vectors * (t as f64).sqrt(), eig.values))
    });
    let mut factors = Vec::with_capacity(data.industries());
    let mut eigenvalues = Vec::with_capacity(data.industries());
    for block in blocks {
        let (f, v) = block?;
        factors.push(f);
        eigenvalues.push(v);
    }
    Ok((factors, eigenvalues))
}

/// One converged alternation at fixed per-industry factor counts.
#[derive(Debug, Clone)]
pub struct AlternatingFit {
    pub beta: DVector<f64>,
    /// Per-industry joint factor blocks, `T x counts[i]`, `(1/T) F'F = I`.
    pub factors: Vec<DMatrix<f64>>,
    /// Residual covariance eigenvalues behind each block.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Objective value after each iteration; never increasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates the slope and factor updates at fixed per-industry counts
/// until the slope's sup-norm change falls under `config.tolerance`.
///
/// Starts from the plain pooled least-squares slope unless `beta_init` is
/// given. Runs out of iterations gracefully with `converged = false`.
pub fn fit_alternating(
    data: &PanelDataset,
    counts: &[usize],
    config: &ModelConfig,
    beta_init: Option<&DVector<f64>>,
) -> Result<AlternatingFit> {
    config.validate()?;
    let no_factors: Vec<DMatrix<f64>> =
        (0..data.industries()).map(|_| DMatrix::zeros(data.periods(), 0)).collect();
    let mut beta = match beta_init {
        Some(b) => {
            if b.len() != data.regressor_count() {
                return Err(Error::Dimension(format!(
                    "initial slope has {} entries, expected {}",
                    b.len(),
                    data.regressor_count()
                )));
            }
            b.clone()
        }
        None => beta_given_factors(data, &no_factors)?,
    };
    let mut trace = Vec::new();
    for iteration in 1..=config.max_iterations {
        let (factors, eigenvalues) = factors_given_beta(data, &beta, counts)?;
        let next = beta_given_factors(data, &factors)?;
        trace.push(objective_q(data, std::slice::from_ref(&next), &factors)?);
        let change = (&next - &beta).amax();
        beta = next;
        if change < config.tolerance {
            return Ok(AlternatingFit {
                beta,
                factors,
                eigenvalues,
                objective_trace: trace,
                iterations: iteration,
                converged: true,
            });
        }
    }
    let (factors, eigenvalues) = factors_given_beta(data, &beta, counts)?;
    Ok(AlternatingFit {
        beta,
        factors,
        eigenvalues,
        objective_trace: trace,
        iterations: config.max_iterations,
        converged: false,
    })
}

/// A fitted pooled-slope model with its selected two-layer structure.
#[derive(Debug, Clone)]
pub struct HomogeneousFit {
    pub beta: DVector<f64>,
    /// Shared and industry-specific factors with per-unit loadings.
    pub factors: FactorStructure,
    /// Per-industry joint blocks from the final alternation, before the
    /// split into shared and specific parts.
    pub joint_factors: Vec<DMatrix<f64>>,
    pub selection: SelectionResult,
    /// Objective trace of the saturated first alternation.
    pub stage_one_trace: Vec<f64>,
    /// Objective trace of the final alternation at the selected counts.
    pub objective_trace: Vec<f64>,
    /// Iterations used by the final alternation.
    pub iterations: usize,
    pub converged: bool,
}

/// Full pipeline: saturated alternation, count selection on its residuals,
/// refit at the selected counts, and extraction of the two factor layers
/// with loadings.
pub fn fit_full(data: &PanelDataset, config: &ModelConfig) -> Result<HomogeneousFit> {
    config.validate()?;
    let t = data.periods();
    let saturated = vec![config.max_factors; data.industries()];
    let stage_one = fit_alternating(data, &capped_ranks(data, &saturated), config, None)?;

    let betas = std::slice::from_ref(&stage_one.beta);
    let threshold = config
        .threshold_override
        .unwrap_or_else(|| default_threshold(data.total_units(), t));
    let scan_cap = config.max_factors.min(t - 1);
    let pooled = global_covariance(data, betas)?;
    let (global_count, global_eigenvalues) = select_global(&pooled, scan_cap, threshold)?;
    let shared = extract_factors(&pooled, global_count)?;
    let projected = specific_covariances(data, betas, &shared)?;
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
    let final_fit =
        fit_alternating(data, &capped_ranks(data, &joint), config, Some(&stage_one.beta))?;

    let betas = std::slice::from_ref(&final_fit.beta);
    let pooled = global_covariance(data, betas)?;
    let shared = extract_factors(&pooled, global_count)?;
    let projected = specific_covariances(data, betas, &shared)?;
    let mut specific = Vec::with_capacity(data.industries());
    for (sigma, &count) in projected.iter().zip(&selection.specific_counts) {
        specific.push(extract_factors(sigma, count)?);
    }
    let (loadings_global, loadings_specific) =
        extract_loadings(data, betas, &shared, &specific)?;

    Ok(HomogeneousFit {
        beta: final_fit.beta,
        factors: FactorStructure {
            global: shared,
            specific,
            loadings_global,
            loadings_specific,
        },
        joint_factors: final_fit.factors,
        selection,
        stage_one_trace: stage_one.objective_trace,
        objective_trace: final_fit.objective_trace,
        iterations: final_fit.iterations,
        converged: stage_one.converged && final_fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;

    fn random_panel(seed: u64, sizes: &[usize], t: usize, d: usize) -> PanelDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let outcomes = sizes
            .iter()
            .map(|&n| {
                (0..n).map(|_| DVector::from_fn(t, |_, _| rng.random::<f64>() - 0.5)).collect()
            })
            .collect();
        let regressors = sizes
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| DMatrix::from_fn(t, d, |_, _| rng.random::<f64>() - 0.5))
                    .collect()
            })
            .collect();
        PanelDataset::new(outcomes, regressors, None).unwrap()
    }

    fn orthonormal_factors(seed: u64, t: usize, cols: usize) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(t, cols, |_, _| rng.random::<f64>() - 0.5);
        raw.qr().q().columns(0, cols) * (t as f64).sqrt()
    }

    #[test]
    fn count_caps_respect_industry_size_and_periods() {
        let data = random_panel(1, &[3, 8], 5, 1);
        assert_eq!(capped_ranks(&data, &[10, 10]), vec![3, 4]);
        assert_eq!(capped_ranks(&data, &[2, 2]), vec![2, 2]);
    }

    #[test]
    fn projected_slope_matches_dense_normal_equations() {
        let data = random_panel(2, &[4, 3], 7, 2);
        let factors =
            vec![orthonormal_factors(70, 7, 2), orthonormal_factors(71, 7, 1)];
        let beta = beta_given_factors(&data, &factors).unwrap();

        // Dense oracle: assemble sum X' M X and sum X' M y with explicit
        // annihilators and solve by LU.
        let mut normal = DMatrix::<f64>::zeros(2, 2);
        let mut moment = DVector::<f64>::zeros(2);
        for i in 0..data.industries() {
            let m = crate::linalg::annihilator(&factors[i]).unwrap();
            for j in 0..data.countries(i) {
                let x = data.regressor_matrix(i, j);
                let y = data.outcome(i, j);
                normal += x.tr_mul(&(&m * x));
                moment += x.tr_mul(&(&m * y));
            }
        }
        let expected = normal.lu().solve(&moment).unwrap();
        assert_abs_diff_eq!(beta, expected, epsilon = 1e-10);
    }

    #[test]
    fn zero_count_slope_is_plain_pooled_least_squares() {
        let data = random_panel(3, &[3, 3], 6, 2);
        let empty =
            vec![DMatrix::<f64>::zeros(6, 0), DMatrix::<f64>::zeros(6, 0)];
        let beta = beta_given_factors(&data, &empty).unwrap();
        let mut normal = DMatrix::<f64>::zeros(2, 2);
        let mut moment = DVector::<f64>::zeros(2);
        for i in 0..2 {
            for j in 0..3 {
                let x = data.regressor_matrix(i, j);
                normal += x.tr_mul(x);
                moment += x.tr_mul(data.outcome(i, j));
            }
        }
        let expected = normal.lu().solve(&moment).unwrap();
        assert_abs_diff_eq!(beta, expected, epsilon = 1e-10);
    }

    #[test]
    fn factor_update_recovers_a_planted_span() {
        // Outcomes are pure factor signal, so the top eigenvector of the
        // residual covariance must span the planted factor.
        let t = 8;
        let f = orthonormal_factors(80, t, 1);
        let loadings = [1.0, -0.7, 0.4];
        let outcomes = vec![loadings.iter().map(|&g| &f * DVector::from_vec(vec![g])).collect()];
        let regressors =
            vec![(0..3).map(|_| DMatrix::<f64>::zeros(t, 1).add_scalar(1.0)).collect()];
        let data = PanelDataset::new(outcomes, regressors, None).unwrap();
        let beta = DVector::from_vec(vec![0.0]);
        let (blocks, values) = factors_given_beta(&data, &beta, &[1]).unwrap();
        let planted = crate::linalg::projector(&f).unwrap();
        let estimated = crate::linalg::projector(&blocks[0]).unwrap();
        assert_abs_diff_eq!(planted, estimated, epsilon = 1e-10);
        // Eigenvalue equals signal energy over N T.
        let energy: f64 = loadings.iter().map(|g| g * g * f.norm_squared()).sum();
        assert_abs_diff_eq!(values[0][0], energy / (3.0 * t as f64), epsilon = 1e-10);
    }

    #[test]
    fn alternation_recovers_a_noiseless_model() {
        let t = 16;
        let sizes = [6usize, 5];
        let beta0 = DVector::from_vec(vec![1.0, -2.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90);
        let mut outcomes = Vec::new();
        let mut regressors = Vec::new();
        let factors: Vec<DMatrix<f64>> =
            (0..2).map(|i| orthonormal_factors(91 + i as u64, t, 1)).collect();
        for (i, &n) in sizes.iter().enumerate() {
            let mut ys = Vec::new();
            let mut xs = Vec::new();
            for _ in 0..n {
                let x = DMatrix::from_fn(t, 2, |_, _| rng.random::<f64>() - 0.5);
                let gamma = rng.random::<f64>() + 0.5;
                let y = &x * &beta0 + &factors[i] * DVector::from_vec(vec![gamma]);
                ys.push(y);
                xs.push(x);
            }
            outcomes.push(ys);
            regressors.push(xs);
        }
        let data = PanelDataset::new(outcomes, regressors, None).unwrap();
        let config = ModelConfig::default().with_max_iterations(200);
        let fit = fit_alternating(&data, &[1, 1], &config, None).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.beta, beta0, epsilon = 1e-7);
        let q = fit.objective_trace.last().unwrap();
        assert!(*q < 1e-12, "objective should vanish, got {q}");
    }

    #[test]
    fn objective_trace_never_increases() {
        let data = random_panel(5, &[5, 4, 6], 10, 2);
        let config = ModelConfig::default().with_max_iterations(60);
        let fit = fit_alternating(&data, &[2, 1, 2], &config, None).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10,
                "objective rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn factor_free_noiseless_data_converges_immediately() {
        let t = 6;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let beta0 = DVector::from_vec(vec![2.0]);
        let xs: Vec<DMatrix<f64>> =
            (0..4).map(|_| DMatrix::from_fn(t, 1, |_, _| rng.random::<f64>() - 0.5)).collect();
        let ys: Vec<DVector<f64>> = xs.iter().map(|x| x * &beta0).collect();
        let data = PanelDataset::new(vec![ys], vec![xs], None).unwrap();
        let fit = fit_alternating(&data, &[0], &ModelConfig::default(), None).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2);
        assert_abs_diff_eq!(fit.beta, beta0, epsilon = 1e-10);
    }

    #[test]
    fn iteration_budget_exhaustion_is_reported_not_fatal() {
        let data = random_panel(7, &[5, 5], 9, 2);
        let config = ModelConfig::default().with_max_iterations(1).with_tolerance(1e-15);
        let fit = fit_alternating(&data, &[1, 1], &config, None).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }
}
