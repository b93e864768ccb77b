//! Seeded simulation of hierarchical factor panels.
//!
//! Generates balanced panels whose outcome mixes a regression part, a
//! factor layer shared by all units, an industry-specific factor layer, and
//! an AR(1) error that is correlated across the stacked cross-section with
//! geometrically decaying strength. Regressors carry the same kind of
//! cross-sectional dependence plus a level shift tied to both factor
//! layers, so the simulated slope problem is genuinely endogenous to the
//! latent structure.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, PanelLabels};

/// Full parameterization of one simulated panel.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    /// Industry count `L`.
    pub industries: usize,
    /// Period count `T`.
    pub periods: usize,
    /// Shared factor count.
    pub global_count: usize,
    /// Candidate industry-specific counts, drawn uniformly per industry.
    pub specific_choices: Vec<usize>,
    /// True slope; its length sets the regressor count.
    pub beta: Vec<f64>,
    /// AR(1) coefficient of the regressor noise.
    pub ar_regressor: f64,
    /// AR(1) coefficient of the outcome noise.
    pub ar_noise: f64,
    /// Cross-sectional correlation decay base for regressor innovations.
    pub decay_regressor: f64,
    /// Cross-sectional correlation decay base for outcome innovations.
    pub decay_noise: f64,
    /// Industry sizes are uniform on `[L^low, L^high]` (integer floors).
    pub size_exponents: (f64, f64),
    /// Multiplier on the outcome noise; zero gives a noiseless panel.
    pub noise_scale: f64,
    /// AR(1) warm-up steps discarded before the sample window.
    pub burn_in: usize,
    /// Memory guard: reject specs whose drawn unit total exceeds this.
    pub max_units: usize,
    pub seed: u64,
}

impl DgpSpec {
    /// Study defaults for an `L x T` panel: two shared factors, specific
    /// counts uniform on 0..=4, slope (1, 1).
    pub fn study_defaults(industries: usize, periods: usize, seed: u64) -> Self {
        Self {
            industries,
            periods,
            global_count: 2,
            specific_choices: vec![0, 1, 2, 3, 4],
            beta: vec![1.0, 1.0],
            ar_regressor: 0.5,
            ar_noise: 0.3,
            decay_regressor: 0.3,
            decay_noise: 0.2,
            size_exponents: (0.85, 1.15),
            noise_scale: 1.0,
            burn_in: 50,
            max_units: 50_000,
            seed,
        }
    }

    pub fn with_noise_scale(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.industries == 0 {
            problems.push("industries must be at least 1".to_string());
        }
        if self.periods < 2 {
            problems.push(format!("periods must be at least 2, got {}", self.periods));
        }
        if self.specific_choices.is_empty() {
            problems.push("specific_choices must not be empty".to_string());
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            problems.push("beta must be non-empty and finite".to_string());
        }
        for (name, rho) in [("ar_regressor", self.ar_regressor), ("ar_noise", self.ar_noise)] {
            if !(rho.is_finite() && rho.abs() < 1.0) {
                problems.push(format!("{name} must satisfy |rho| < 1, got {rho}"));
            }
        }
        for (name, a) in [("decay_regressor", self.decay_regressor), ("decay_noise", self.decay_noise)]
        {
            if !(a.is_finite() && a > 0.0 && a < 1.0) {
                problems.push(format!("{name} must lie in (0, 1), got {a}"));
            }
        }
        let (low, high) = self.size_exponents;
        if !(low.is_finite() && high.is_finite() && low > 0.0 && low <= high) {
            problems.push(format!("size_exponents must satisfy 0 < low <= high, got ({low}, {high})"));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            problems.push(format!("noise_scale must be finite and non-negative, got {}", self.noise_scale));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Simulation(problems.join("; ")))
        }
    }

    fn size_bounds(&self) -> (usize, usize) {
        let l = self.industries as f64;
        let lo = l.powf(self.size_exponents.0).floor() as usize;
        let hi = l.powf(self.size_exponents.1).floor() as usize;
        (lo.max(1), hi.max(1))
    }
}

/// Ground truth behind one generated panel.
///
/// Factor matrices hold the raw simulated paths; they are not rescaled to
/// the `(1/T) F'F = I` convention the estimators impose, so comparisons
/// against estimates must go through spans (projectors), not entries.
#[derive(Debug, Clone)]
pub struct DgpTruth {
    pub beta: DVector<f64>,
    pub global_count: usize,
    pub specific_counts: Vec<usize>,
    /// `T x global_count` simulated shared factor path.
    pub global_factors: DMatrix<f64>,
    /// Per-industry `T x specific_counts[i]` simulated factor paths.
    pub specific_factors: Vec<DMatrix<f64>>,
    /// Per-industry `N_i x global_count` loadings.
    pub loadings_global: Vec<DMatrix<f64>>,
    /// Per-industry `N_i x specific_counts[i]` loadings.
    pub loadings_specific: Vec<DMatrix<f64>>,
}

impl DgpTruth {
    /// The simulated latent component of one unit's outcome.
    pub fn common_component(&self, industry: usize, country: usize) -> DVector<f64> {
        let g = self.loadings_global[industry].row(country).transpose();
        let s = self.loadings_specific[industry].row(country).transpose();
        &self.global_factors * g + &self.specific_factors[industry] * s
    }
}

/// Turns iid standard normals into draws whose correlation between
/// positions `m` and `n` is `decay^{|m - n|}`.
///
/// The recursion `z_m = decay z_{m-1} + sqrt(1 - decay^2) g_m` (with
/// `z_0 = g_0`) applies the lower-triangular Cholesky factor of that
/// Toeplitz correlation matrix in O(n), so no dense matrix is ever built.
pub(crate) fn correlate_in_place(decay: f64, values: &mut [f64]) {
    let scale = (1.0 - decay * decay).sqrt();
    for m in 1..values.len() {
        values[m] = decay * values[m - 1] + scale * values[m];
    }
}

fn correlated_draw(rng: &mut ChaCha8Rng, decay: f64, n: usize) -> Vec<f64> {
    let mut values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    correlate_in_place(decay, &mut values);
    values
}

/// One stationary AR(1) path of cross-sectionally correlated vectors,
/// returned as an `n x T` matrix (positions by periods).
///
/// The initial state is a stationary-variance draw and `burn_in` extra
/// steps are discarded, so the sample window carries no transient.
fn ar_path(
    rng: &mut ChaCha8Rng,
    n: usize,
    periods: usize,
    rho: f64,
    decay: f64,
    burn_in: usize,
) -> DMatrix<f64> {
    let stationary_scale = 1.0 / (1.0 - rho * rho).sqrt();
    let mut state: Vec<f64> =
        correlated_draw(rng, decay, n).into_iter().map(|v| v * stationary_scale).collect();
    for _ in 0..burn_in {
        let innovation = correlated_draw(rng, decay, n);
        for (s, e) in state.iter_mut().zip(&innovation) {
            *s = rho * *s + e;
        }
    }
    let mut path = DMatrix::<f64>::zeros(n, periods);
    for t in 0..periods {
        let innovation = correlated_draw(rng, decay, n);
        for (s, e) in state.iter_mut().zip(&innovation) {
            *s = rho * *s + e;
        }
        path.column_mut(t).copy_from_slice(&state);
    }
    path
}

/// Per-industry unit counts, uniform integers on [`DgpSpec::size_bounds`].
pub fn draw_sizes(spec: &DgpSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(draw_sizes_with(spec, &mut rng))
}

fn draw_sizes_with(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (lo, hi) = spec.size_bounds();
    (0..spec.industries).map(|_| rng.random_range(lo..=hi)).collect()
}

fn label_width(count: usize) -> usize {
    count.max(1).to_string().len()
}

/// Generates one panel and its ground truth.
///
/// Identical specs produce bitwise-identical output. Draw order: sizes,
/// specific counts, shared factors, specific factors, loadings, regressor
/// noise paths (one per regressor), outcome noise path.
pub fn generate(spec: &DgpSpec) -> Result<(PanelDataset, DgpTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = draw_sizes_with(spec, &mut rng);
    let total: usize = sizes.iter().sum();
    if total > spec.max_units {
        return Err(Error::Simulation(format!(
            "drawn panel has {total} units, over the {} unit guard",
            spec.max_units
        )));
    }
    let t = spec.periods;
    let d = spec.beta.len();
    let specific_counts: Vec<usize> = (0..spec.industries)
        .map(|_| spec.specific_choices[rng.random_range(0..spec.specific_choices.len())])
        .collect();

    let mut normal = |shift: f64| -> f64 { shift + rng.sample::<f64, _>(StandardNormal) };
    let global_factors = {
        let mut f = DMatrix::<f64>::zeros(t, spec.global_count);
        for c in 0..spec.global_count {
            for r in 0..t {
                f[(r, c)] = normal(0.5);
            }
        }
        f
    };
    let specific_factors: Vec<DMatrix<f64>> = specific_counts
        .iter()
        .map(|&count| {
            let mut f = DMatrix::<f64>::zeros(t, count);
            for c in 0..count {
                for r in 0..t {
                    f[(r, c)] = normal(0.0);
                }
            }
            f
        })
        .collect();
    let loadings_global: Vec<DMatrix<f64>> = sizes
        .iter()
        .map(|&n| {
            let mut g = DMatrix::<f64>::zeros(n, spec.global_count);
            for r in 0..n {
                for c in 0..spec.global_count {
                    g[(r, c)] = normal(0.0);
                }
            }
            g
        })
        .collect();
    let loadings_specific: Vec<DMatrix<f64>> = sizes
        .iter()
        .zip(&specific_counts)
        .map(|(&n, &count)| {
            let mut g = DMatrix::<f64>::zeros(n, count);
            for r in 0..n {
                for c in 0..count {
                    g[(r, c)] = normal(0.3);
                }
            }
            g
        })
        .collect();

    let regressor_noise: Vec<DMatrix<f64>> = (0..d)
        .map(|_| ar_path(&mut rng, total, t, spec.ar_regressor, spec.decay_regressor, spec.burn_in))
        .collect();
    let outcome_noise = ar_path(&mut rng, total, t, spec.ar_noise, spec.decay_noise, spec.burn_in);

    let beta = DVector::from_column_slice(&spec.beta);
    let truth = DgpTruth {
        beta: beta.clone(),
        global_count: spec.global_count,
        specific_counts,
        global_factors,
        specific_factors,
        loadings_global,
        loadings_specific,
    };

    let mut outcomes = Vec::with_capacity(spec.industries);
    let mut regressors = Vec::with_capacity(spec.industries);
    let mut position = 0;
    for (i, &n) in sizes.iter().enumerate() {
        let mut ys = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        for j in 0..n {
            let common = truth.common_component(i, j);
            let global_mix = &truth.global_factors
                * truth.loadings_global[i].row(j).transpose();
            let specific_mix = &truth.specific_factors[i]
                * truth.loadings_specific[i].row(j).transpose();
            let x = DMatrix::from_fn(t, d, |r, c| {
                let base = regressor_noise[c][(position, r)];
                if c == 0 {
                    base + global_mix[r].abs() + specific_mix[r].abs()
                } else {
                    base
                }
            });
            let y = &x * &beta
                + &common
                + DVector::from_fn(t, |r, _| spec.noise_scale * outcome_noise[(position, r)]);
            ys.push(y);
            xs.push(x);
            position += 1;
        }
        outcomes.push(ys);
        regressors.push(xs);
    }

    let iw = label_width(spec.industries);
    let nw = label_width(sizes.iter().copied().max().unwrap_or(1));
    let labels = PanelLabels {
        industries: (0..spec.industries).map(|i| format!("industry{:0iw$}", i + 1)).collect(),
        countries: sizes
            .iter()
            .map(|&n| (0..n).map(|j| format!("country{:0nw$}", j + 1)).collect())
            .collect(),
        variables: (0..d).map(|k| format!("x{}", k + 1)).collect(),
        periods: (1..=t as i64).collect(),
    };
    let data = PanelDataset::new(outcomes, regressors, Some(labels))?;
    Ok((data, truth))
}
