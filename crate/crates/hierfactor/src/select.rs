//! Covariance pooling, factor-count selection, and factor extraction.
//!
//! Counts are chosen by scanning eigenvalue ratios of pooled residual
//! covariances: the selected count is where the spectrum drops fastest,
//! with a floor that ignores eigenvalues too small to carry signal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{residuals, PanelDataset};

/// Outcome of the two-layer count selection.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub global_count: usize,
    pub specific_counts: Vec<usize>,
    /// Full descending spectrum of the pooled covariance.
    pub global_eigenvalues: Vec<f64>,
    /// Full descending spectrum of each industry's projected covariance.
    pub specific_eigenvalues: Vec<Vec<f64>>,
    /// Eigenvalue floor used by both layers.
    pub threshold: f64,
}

/// Data-driven eigenvalue floor `1 / ln(max(total units, periods))`.
pub fn default_threshold(total_units: usize, periods: usize) -> f64 {
    1.0 / (total_units.max(periods) as f64).ln()
}

/// Residual covariance pooled over every unit in the panel, `T x T`.
///
/// `betas` is one shared slope or one slope per industry.
pub fn global_covariance(data: &PanelDataset, betas: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let resid = residuals(data, betas)?;
    let t = data.periods();
    let parts = crate::par::indexed_map(data.industries(), |i| {
        let mut acc = DMatrix::<f64>::zeros(t, t);
        for r in &resid[i] {
            acc.ger(1.0, r, r, 1.0);
        }
        acc
    });
    let mut pooled = DMatrix::<f64>::zeros(t, t);
    for part in &parts {
        pooled += part;
    }
    pooled /= (data.total_units() * t) as f64;
    Ok((&pooled + pooled.transpose()) / 2.0)
}

/// Per-industry residual covariances after projecting the shared factors
/// out of every residual, each `T x T`.
///
/// With a zero-column `global_factors` this is the plain per-industry
/// residual covariance.
pub fn specific_covariances(
    data: &PanelDataset,
    betas: &[DVector<f64>],
    global_factors: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let t = data.periods();
    if global_factors.nrows() != t {
        return Err(Error::Dimension(format!(
            "shared factors have {} rows, expected {}",
            global_factors.nrows(),
            t
        )));
    }
    let annihilator = linalg::annihilator(global_factors)?;
    let resid = residuals(data, betas)?;
    let out = crate::par::indexed_map(data.industries(), |i| {
        let mut acc = DMatrix::<f64>::zeros(t, t);
        for r in &resid[i] {
            let projected = &annihilator * r;
            acc.ger(1.0, &projected, &projected, 1.0);
        }
        acc /= (resid[i].len() * t) as f64;
        (&acc + acc.transpose()) / 2.0
    });
    Ok(out)
}

/// Eigenvalue-ratio score at count `l` over a descending spectrum.
///
/// A mock unit eigenvalue sits above the spectrum so `l = 0` is a real
/// candidate; any denominator below the floor scores a flat 1, which keeps
/// pure-noise tails from winning on ratios between negligible eigenvalues.
fn ratio_argmin(values: &[f64], max_count: usize, threshold: f64) -> usize {
    let mut best_count = 0;
    let mut best_score = f64::INFINITY;
    for l in 0..=max_count {
        let denominator = if l == 0 { 1.0 } else { values[l - 1] };
        let score = if denominator >= threshold { values[l] / denominator } else { 1.0 };
        if score < best_score {
            best_score = score;
            best_count = l;
        }
    }
    best_count
}

/// Selects the shared factor count from a pooled covariance spectrum.
///
/// Scans counts `0..=max_count`, so the spectrum must extend one past
/// `max_count`; returns the count together with the full descending
/// spectrum. Ties go to the smallest count.
pub fn select_global(
    sigma: &DMatrix<f64>,
    max_count: usize,
    threshold: f64,
) -> Result<(usize, Vec<f64>)> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue floor must be finite and positive, got {threshold}"
        )));
    }
    if max_count + 1 > sigma.nrows() {
        return Err(Error::InvalidArgument(format!(
            "count scan needs {} eigenvalues but the covariance is {}x{}",
            max_count + 1,
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let values = linalg::eigenvalues_desc(sigma)?;
    let count = ratio_argmin(&values, max_count, threshold);
    Ok((count, values))
}

/// Selects one count per industry from the projected covariances.
///
/// Industries are scanned independently; the minimizer in one industry
/// never depends on another industry's spectrum.
pub fn select_specific(
    sigmas: &[DMatrix<f64>],
    max_count: usize,
    threshold: f64,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let picked = crate::par::indexed_map(sigmas.len(), |i| {
        select_global(&sigmas[i], max_count, threshold)
    });
    let mut counts = Vec::with_capacity(sigmas.len());
    let mut spectra = Vec::with_capacity(sigmas.len());
    for item in picked {
        let (count, values) = item?;
        counts.push(count);
        spectra.push(values);
    }
    Ok((counts, spectra))
}

/// Leading eigenvectors of a covariance scaled to factor normalization:
/// `sqrt(T)` times the top `count` eigenvectors, so `(1/T) F'F = I`.
pub fn extract_factors(sigma: &DMatrix<f64>, count: usize) -> Result<DMatrix<f64>> {
    let eig = linalg::top_eigenpairs(sigma, count)?;
    Ok(eig.vectors * (sigma.nrows() as f64).sqrt())
}

/// Least-squares loadings of every unit on the shared factors and on its
/// industry's own factors.
///
/// The specific loading regresses the residual with the shared span removed,
/// so the two layers never double-count the same direction.
pub fn extract_loadings(
    data: &PanelDataset,
    betas: &[DVector<f64>],
    global_factors: &DMatrix<f64>,
    specific_factors: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let t = data.periods();
    if specific_factors.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} specific factor blocks for {} industries",
            specific_factors.len(),
            data.industries()
        )));
    }
    let annihilator = linalg::annihilator(global_factors)?;
    let resid = residuals(data, betas)?;
    let scale = 1.0 / t as f64;
    let pairs = crate::par::indexed_map(data.industries(), |i| {
        let n = resid[i].len();
        let f_s = &specific_factors[i];
        let mut on_global = DMatrix::<f64>::zeros(n, global_factors.ncols());
        let mut on_specific = DMatrix::<f64>::zeros(n, f_s.ncols());
        for (j, r) in resid[i].iter().enumerate() {
            let g = global_factors.tr_mul(r) * scale;
            on_global.row_mut(j).copy_from(&g.transpose());
            let s = f_s.tr_mul(&(&annihilator * r)) * scale;
            on_specific.row_mut(j).copy_from(&s.transpose());
        }
        (on_global, on_specific)
    });
    Ok(pairs.into_iter().unzip())
}

/// Fraction of pooled residual energy captured by each factor layer.
#[derive(Debug, Clone)]
pub struct VarianceShares {
    pub global: f64,
    pub specific: Vec<f64>,
    pub remainder: f64,
}

/// Splits pooled residual energy into the part explained by the shared
/// factors, the part each industry's own factors explain after the shared
/// span is removed, and the rest.
///
/// The splits are energies of orthogonal projections, so the three pieces
/// sum to one exactly up to rounding.
pub fn variance_shares(
    data: &PanelDataset,
    betas: &[DVector<f64>],
    global_factors: &DMatrix<f64>,
    specific_factors: &[DMatrix<f64>],
) -> Result<VarianceShares> {
    if specific_factors.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} specific factor blocks for {} industries",
            specific_factors.len(),
            data.industries()
        )));
    }
    let resid = residuals(data, betas)?;
    let p_global = linalg::projector(global_factors)?;
    let m_global = linalg::annihilator(global_factors)?;
    let mut total = 0.0;
    let mut global_energy = 0.0;
    let mut specific_energy = vec![0.0; data.industries()];
    for i in 0..data.industries() {
        let p_specific = linalg::projector(&specific_factors[i])?;
        for r in &resid[i] {
            total += r.norm_squared();
            global_energy += (&p_global * r).norm_squared();
            specific_energy[i] += (&p_specific * (&m_global * r)).norm_squared();
        }
    }
    if total == 0.0 {
        return Err(Error::InvalidArgument(
            "residuals have zero total energy; shares are undefined".into(),
        ));
    }
    let global = global_energy / total;
    let specific: Vec<f64> = specific_energy.iter().map(|e| e / total).collect();
    let remainder = 1.0 - global - specific.iter().sum::<f64>();
    Ok(VarianceShares { global, specific, remainder })
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
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
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
    fn ratio_scan_picks_the_sharpest_drop() {
        // Hand-scored: 2.0, 0.75, 0.0533, then flat 1 below the floor.
        let values = [2.0, 1.5, 0.08, 0.02, 0.01];
        assert_eq!(ratio_argmin(&values, 4, 0.1), 2);
    }

    #[test]
    fn ratio_ties_go_to_the_smallest_count() {
        let values = [1.0, 0.5, 0.25, 0.125, 0.0625];
        assert_eq!(ratio_argmin(&values, 4, 1e-3), 1);
    }

    #[test]
    fn all_small_eigenvalues_select_zero() {
        let values = [0.01, 0.009, 0.008, 0.007];
        assert_eq!(ratio_argmin(&values, 3, 0.5), 0);
    }

    #[test]
    fn floor_blocks_noise_tail_ratios() {
        // The 0.0004/0.04 drop wins on raw ratios; the floor disqualifies
        // it because its denominator 0.04 sits under 0.05.
        let values = [3.0, 1.0, 0.04, 0.0004, 0.0003];
        assert_eq!(ratio_argmin(&values, 4, 0.05), 2);
        assert_eq!(ratio_argmin(&values, 4, 1e-9), 3);
    }

    #[test]
    fn default_threshold_uses_the_larger_dimension() {
        let omega = default_threshold(400, 20);
        assert_abs_diff_eq!(omega, 1.0 / 400f64.ln(), epsilon = 1e-15);
        let omega = default_threshold(10, 50);
        assert_abs_diff_eq!(omega, 1.0 / 50f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn scan_past_spectrum_end_is_rejected() {
        let sigma = DMatrix::<f64>::identity(4, 4);
        assert!(select_global(&sigma, 4, 0.1).is_err());
        assert!(select_global(&sigma, 3, 0.1).is_ok());
    }

    #[test]
    fn pooled_covariance_matches_outer_product_loop() {
        let data = random_panel(7, &[3, 2], 5, 2);
        let beta = DVector::from_vec(vec![0.4, -0.2]);
        let pooled = global_covariance(&data, &[beta.clone()]).unwrap();
        let mut expected = DMatrix::<f64>::zeros(5, 5);
        for i in 0..data.industries() {
            for j in 0..data.countries(i) {
                let r = data.outcome(i, j) - data.regressor_matrix(i, j) * &beta;
                expected += &r * r.transpose();
            }
        }
        expected /= (data.total_units() * data.periods()) as f64;
        assert_abs_diff_eq!(pooled, expected, epsilon = 1e-12);
    }

    #[test]
    fn projected_covariance_matches_dense_assembly_and_kills_shared_span() {
        let data = random_panel(8, &[3, 4], 6, 2);
        let beta = DVector::from_vec(vec![0.4, -0.2]);
        let f_g = orthonormal_factors(21, 6, 2);
        let sigmas = specific_covariances(&data, &[beta.clone()], &f_g).unwrap();
        let m = crate::linalg::annihilator(&f_g).unwrap();
        for i in 0..data.industries() {
            let mut expected = DMatrix::<f64>::zeros(6, 6);
            for j in 0..data.countries(i) {
                let r = data.outcome(i, j) - data.regressor_matrix(i, j) * &beta;
                let pr = &m * r;
                expected += &pr * pr.transpose();
            }
            expected /= (data.countries(i) * data.periods()) as f64;
            assert_abs_diff_eq!(sigmas[i], expected, epsilon = 1e-12);
            assert!((&sigmas[i] * &f_g).amax() < 1e-8);
        }
    }

    #[test]
    fn empty_shared_span_reduces_to_plain_covariance() {
        let data = random_panel(9, &[4], 5, 1);
        let beta = DVector::from_vec(vec![0.1]);
        let none = DMatrix::<f64>::zeros(5, 0);
        let sigmas = specific_covariances(&data, &[beta.clone()], &none).unwrap();
        let sub = data.industry(0);
        let plain = global_covariance(&sub, &[beta]).unwrap();
        assert_abs_diff_eq!(sigmas[0], plain, epsilon = 1e-12);
    }

    #[test]
    fn extracted_factors_are_orthonormal_under_period_scaling() {
        let data = random_panel(10, &[5, 5], 8, 2);
        let beta = DVector::from_vec(vec![0.3, 0.3]);
        let sigma = global_covariance(&data, &[beta]).unwrap();
        let f = extract_factors(&sigma, 3).unwrap();
        let gram = f.tr_mul(&f) / 8.0;
        assert_abs_diff_eq!(gram, DMatrix::identity(3, 3), epsilon = 1e-10);
    }

    #[test]
    fn loadings_recover_an_exact_two_layer_construction() {
        // Residual = F_g g + F_s s with mutually orthonormal columns, so the
        // least-squares loadings are the construction's coefficients.
        let t = 12;
        let joint = orthonormal_factors(33, t, 3);
        let f_g = joint.columns(0, 2).into_owned();
        let f_s = joint.columns(2, 1).into_owned();
        let gamma_g = [0.7, -0.4];
        let gamma_s = [1.3];
        let y = &f_g * DVector::from_row_slice(&gamma_g) + &f_s * DVector::from_row_slice(&gamma_s);
        let x = DMatrix::<f64>::zeros(t, 1).add_scalar(1.0);
        let data =
            PanelDataset::new(vec![vec![y]], vec![vec![x]], None).unwrap();
        let beta = DVector::from_vec(vec![0.0]);
        let (on_g, on_s) =
            extract_loadings(&data, &[beta], &f_g, &[f_s]).unwrap();
        assert_abs_diff_eq!(on_g[0][(0, 0)], gamma_g[0], epsilon = 1e-10);
        assert_abs_diff_eq!(on_g[0][(0, 1)], gamma_g[1], epsilon = 1e-10);
        assert_abs_diff_eq!(on_s[0][(0, 0)], gamma_s[0], epsilon = 1e-10);
    }

    #[test]
    fn shares_split_a_pure_shared_signal() {
        let t = 10;
        let f_g = orthonormal_factors(44, t, 1);
        let y: DVector<f64> = &f_g * DVector::from_vec(vec![2.0]);
        let x = DMatrix::<f64>::zeros(t, 1).add_scalar(1.0);
        let data = PanelDataset::new(vec![vec![y]], vec![vec![x]], None).unwrap();
        let beta = DVector::from_vec(vec![0.0]);
        let f_s = vec![DMatrix::<f64>::zeros(t, 0)];
        let shares = variance_shares(&data, &[beta], &f_g, &f_s).unwrap();
        assert_abs_diff_eq!(shares.global, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(shares.remainder, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn shares_sum_to_one_on_random_panels() {
        let data = random_panel(11, &[3, 2, 4], 9, 2);
        let beta = DVector::from_vec(vec![0.2, -0.1]);
        let f_g = orthonormal_factors(55, 9, 2);
        let f_s: Vec<DMatrix<f64>> =
            (0..3).map(|i| orthonormal_factors(60 + i, 9, 1)).collect();
        let shares = variance_shares(&data, &[beta], &f_g, &f_s).unwrap();
        assert!(shares.global >= 0.0 && shares.global <= 1.0);
        assert!(shares.specific.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert!(shares.remainder >= -1e-12);
        let sum = shares.global + shares.specific.iter().sum::<f64>() + shares.remainder;
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_energy_residuals_are_rejected() {
        let t = 4;
        let y = DVector::<f64>::zeros(t);
        let x = DMatrix::<f64>::zeros(t, 1).add_scalar(1.0);
        let data = PanelDataset::new(vec![vec![y]], vec![vec![x]], None).unwrap();
        let beta = DVector::from_vec(vec![0.0]);
        let f_g = DMatrix::<f64>::zeros(t, 0);
        let f_s = vec![DMatrix::<f64>::zeros(t, 0)];
        assert!(variance_shares(&data, &[beta], &f_g, &f_s).is_err());
    }
}
