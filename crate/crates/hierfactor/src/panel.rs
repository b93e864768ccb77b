//! Panel containers, estimation settings, and the least-squares objective.
//!
//! Data are balanced three-dimensional panels: `L` industries, `N_i`
//! countries inside industry `i`, `T` periods per unit. Units stack
//! industry-major, countries in order inside each industry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, ValidationReport, Violation};

/// Maximum allowed departure of `(1/T) F'F` from the identity before a
/// factor candidate is rejected as non-orthonormal.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-6;

/// Settings shared by the estimation routines.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Upper bound on the factor count tried during estimation and selection.
    pub max_factors: usize,
    /// Sup-norm change in the slope below which alternation stops.
    pub tolerance: f64,
    /// Hard cap on alternating iterations.
    pub max_iterations: usize,
    /// Replaces the data-driven eigenvalue floor when set.
    pub threshold_override: Option<f64>,
    /// Seed for any randomized routine (resampling draws).
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            max_factors: 20,
            tolerance: 1e-8,
            max_iterations: 1000,
            threshold_override: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_max_factors(mut self, max_factors: usize) -> Self {
        self.max_factors = max_factors;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_threshold_override(mut self, threshold: f64) -> Self {
        self.threshold_override = Some(threshold);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be finite and positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let Some(omega) = self.threshold_override {
            if !(omega.is_finite() && omega > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "threshold override must be finite and positive, got {omega}"
                )));
            }
        }
        Ok(())
    }
}

/// Human-readable names for panel coordinates, carried through I/O.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelLabels {
    pub industries: Vec<String>,
    /// Country names per industry, same ragged shape as the data.
    pub countries: Vec<Vec<String>>,
    pub variables: Vec<String>,
    /// Period keys in ascending order.
    pub periods: Vec<i64>,
}

/// A balanced hierarchical panel.
///
/// Construction validates the data once; fields stay private so every
/// dataset handed to the estimators is structurally sound.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    outcomes: Vec<Vec<DVector<f64>>>,
    regressors: Vec<Vec<DMatrix<f64>>>,
    labels: Option<PanelLabels>,
    periods: usize,
    regressor_count: usize,
}

impl PanelDataset {
    /// Builds a dataset from per-unit outcome vectors (length `T`) and
    /// regressor matrices (`T x d`). Reports every violation found, not
    /// just the first.
    pub fn new(
        outcomes: Vec<Vec<DVector<f64>>>,
        regressors: Vec<Vec<DMatrix<f64>>>,
        labels: Option<PanelLabels>,
    ) -> Result<Self> {
        let periods = outcomes.first().and_then(|c| c.first()).map_or(0, |y| y.len());
        let regressor_count =
            regressors.first().and_then(|c| c.first()).map_or(0, |x| x.ncols());
        let dataset = Self { outcomes, regressors, labels, periods, regressor_count };
        dataset.check().into_result()?;
        Ok(dataset)
    }

    fn check(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.outcomes.is_empty() {
            report.push(Violation::dataset("panel has no industries"));
            return report;
        }
        if self.outcomes.len() != self.regressors.len() {
            report.push(Violation::dataset(format!(
                "outcome and regressor nesting disagree: {} vs {} industries",
                self.outcomes.len(),
                self.regressors.len()
            )));
            return report;
        }
        if self.periods < 2 {
            report.push(Violation::dataset(format!(
                "need at least 2 periods, found {}",
                self.periods
            )));
        }
        if self.regressor_count == 0 {
            report.push(Violation::dataset("need at least 1 regressor, found 0"));
        }
        for (i, (ys, xs)) in self.outcomes.iter().zip(&self.regressors).enumerate() {
            if ys.is_empty() {
                report.push(Violation::industry(i, "industry has no countries"));
                continue;
            }
            if ys.len() != xs.len() {
                report.push(Violation::industry(
                    i,
                    format!(
                        "outcome and regressor nesting disagree: {} vs {} countries",
                        ys.len(),
                        xs.len()
                    ),
                ));
                continue;
            }
            for (j, (y, x)) in ys.iter().zip(xs).enumerate() {
                if y.len() != self.periods {
                    report.push(Violation::unit(
                        i,
                        j,
                        format!("outcome has {} periods, expected {}", y.len(), self.periods),
                    ));
                }
                if x.nrows() != self.periods || x.ncols() != self.regressor_count {
                    report.push(Violation::unit(
                        i,
                        j,
                        format!(
                            "regressor block is {}x{}, expected {}x{}",
                            x.nrows(),
                            x.ncols(),
                            self.periods,
                            self.regressor_count
                        ),
                    ));
                }
                for (t, value) in y.iter().enumerate() {
                    if !value.is_finite() {
                        report.push(Violation::cell(i, j, t, format!("outcome is {value}")));
                    }
                }
                for t in 0..x.nrows() {
                    for k in 0..x.ncols() {
                        let value = x[(t, k)];
                        if !value.is_finite() {
                            report.push(Violation::cell(
                                i,
                                j,
                                t,
                                format!("regressor {k} is {value}"),
                            ));
                        }
                    }
                }
            }
        }
        if let Some(labels) = &self.labels {
            self.check_labels(labels, &mut report);
        }
        report
    }

    fn check_labels(&self, labels: &PanelLabels, report: &mut ValidationReport) {
        if labels.industries.len() != self.outcomes.len() {
            report.push(Violation::dataset(format!(
                "{} industry labels for {} industries",
                labels.industries.len(),
                self.outcomes.len()
            )));
        }
        if labels.countries.len() != self.outcomes.len() {
            report.push(Violation::dataset(format!(
                "{} country label groups for {} industries",
                labels.countries.len(),
                self.outcomes.len()
            )));
        } else {
            for (i, (names, ys)) in labels.countries.iter().zip(&self.outcomes).enumerate() {
                if names.len() != ys.len() {
                    report.push(Violation::industry(
                        i,
                        format!("{} country labels for {} countries", names.len(), ys.len()),
                    ));
                }
            }
        }
        if labels.variables.len() != self.regressor_count {
            report.push(Violation::dataset(format!(
                "{} variable labels for {} regressors",
                labels.variables.len(),
                self.regressor_count
            )));
        }
        if labels.periods.len() != self.periods {
            report.push(Violation::dataset(format!(
                "{} period labels for {} periods",
                labels.periods.len(),
                self.periods
            )));
        }
        if labels.periods.windows(2).any(|w| w[0] >= w[1]) {
            report.push(Violation::dataset("period labels are not strictly increasing"));
        }
    }

    /// Number of industries `L`.
    pub fn industries(&self) -> usize {
        self.outcomes.len()
    }

    /// Number of countries in industry `i`.
    pub fn countries(&self, industry: usize) -> usize {
        self.outcomes[industry].len()
    }

    /// Per-industry country counts.
    pub fn sizes(&self) -> Vec<usize> {
        self.outcomes.iter().map(Vec::len).collect()
    }

    /// Total unit count across all industries.
    pub fn total_units(&self) -> usize {
        self.outcomes.iter().map(Vec::len).sum()
    }

    /// Number of periods `T`.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Number of observed regressors `d`.
    pub fn regressor_count(&self) -> usize {
        self.regressor_count
    }

    pub fn outcome(&self, industry: usize, country: usize) -> &DVector<f64> {
        &self.outcomes[industry][country]
    }

    pub fn regressor_matrix(&self, industry: usize, country: usize) -> &DMatrix<f64> {
        &self.regressors[industry][country]
    }

    pub fn labels(&self) -> Option<&PanelLabels> {
        self.labels.as_ref()
    }

    /// Copies one industry out as a standalone single-industry panel.
    pub fn industry(&self, industry: usize) -> Self {
        let labels = self.labels.as_ref().map(|l| PanelLabels {
            industries: vec![l.industries[industry].clone()],
            countries: vec![l.countries[industry].clone()],
            variables: l.variables.clone(),
            periods: l.periods.clone(),
        });
        Self {
            outcomes: vec![self.outcomes[industry].clone()],
            regressors: vec![self.regressors[industry].clone()],
            labels,
            periods: self.periods,
            regressor_count: self.regressor_count,
        }
    }
}

/// Estimated latent structure: one factor set shared by every unit plus one
/// per industry, with the unit-level loadings on each.
///
/// Factor matrices are `T x count` and satisfy `(1/T) F'F = I`; loading
/// matrices hold one row per country.
#[derive(Debug, Clone)]
pub struct FactorStructure {
    pub global: DMatrix<f64>,
    pub specific: Vec<DMatrix<f64>>,
    pub loadings_global: Vec<DMatrix<f64>>,
    pub loadings_specific: Vec<DMatrix<f64>>,
}

impl FactorStructure {
    pub fn global_count(&self) -> usize {
        self.global.ncols()
    }

    pub fn specific_counts(&self) -> Vec<usize> {
        self.specific.iter().map(DMatrix::ncols).collect()
    }

    /// Fitted latent component for one unit: global part plus the
    /// industry-specific part.
    pub fn common_component(&self, industry: usize, country: usize) -> DVector<f64> {
        let gamma_g = self.loadings_global[industry].row(country).transpose();
        let gamma_s = self.loadings_specific[industry].row(country).transpose();
        &self.global * gamma_g + &self.specific[industry] * gamma_s
    }
}

/// Checks that `betas` is either one shared slope or one slope per industry,
/// returning a closure-friendly index map.
fn slope_index(data: &PanelDataset, betas: &[DVector<f64>]) -> Result<fn(usize) -> usize> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("no slope vectors given".into()));
    }
    if betas.len() != 1 && betas.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} slope vectors for {} industries; pass 1 shared slope or one per industry",
            betas.len(),
            data.industries()
        )));
    }
    for (i, beta) in betas.iter().enumerate() {
        if beta.len() != data.regressor_count() {
            return Err(Error::Dimension(format!(
                "slope {} has {} entries, expected {}",
                i,
                beta.len(),
                data.regressor_count()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("slope {i} has non-finite entries")));
        }
    }
    if betas.len() == 1 {
        Ok(|_| 0)
    } else {
        Ok(|i| i)
    }
}

/// Per-unit regression residuals `y - X b`, with either one shared slope or
/// one slope per industry.
pub fn residuals(
    data: &PanelDataset,
    betas: &[DVector<f64>],
) -> Result<Vec<Vec<DVector<f64>>>> {
    let index = slope_index(data, betas)?;
    let out = (0..data.industries())
        .map(|i| {
            let beta = &betas[index(i)];
            (0..data.countries(i))
                .map(|j| data.outcome(i, j) - data.regressor_matrix(i, j) * beta)
                .collect()
        })
        .collect();
    Ok(out)
}

fn check_factor_candidates(data: &PanelDataset, factors: &[DMatrix<f64>]) -> Result<()> {
    if factors.len() != data.industries() {
        return Err(Error::Dimension(format!(
            "{} factor candidates for {} industries",
            factors.len(),
            data.industries()
        )));
    }
    let t = data.periods();
    for (i, f) in factors.iter().enumerate() {
        if f.nrows() != t {
            return Err(Error::Dimension(format!(
                "factor candidate {} has {} rows, expected {}",
                i,
                f.nrows(),
                t
            )));
        }
        if f.ncols() > t {
            return Err(Error::Dimension(format!(
                "factor candidate {} has {} columns, more than {} periods",
                i,
                f.ncols(),
                t
            )));
        }
        let r = f.ncols();
        if r == 0 {
            continue;
        }
        let gram = f.tr_mul(f) / t as f64;
        let drift = (gram - DMatrix::<f64>::identity(r, r)).amax();
        if drift > ORTHONORMALITY_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "factor candidate {i} is not orthonormal: max |(1/T)F'F - I| = {drift:.3e}"
            )));
        }
    }
    Ok(())
}

/// Pooled sum of squared residuals after projecting each unit's residual off
/// its industry's factor candidate.
///
/// `factors[i]` must have `T` rows and orthonormal columns under the
/// `(1/T) F'F = I` scaling; a zero-column candidate means no projection.
/// The value is invariant under right-rotation of any candidate because only
/// the column span enters.
pub fn objective_q(
    data: &PanelDataset,
    betas: &[DVector<f64>],
    factors: &[DMatrix<f64>],
) -> Result<f64> {
    check_factor_candidates(data, factors)?;
    let resid = residuals(data, betas)?;
    let per_industry = crate::par::indexed_map(data.industries(), |i| {
        let f = &factors[i];
        if f.ncols() == 0 {
            return Ok(resid[i].iter().map(|r| r.norm_squared()).sum::<f64>());
        }
        let gram = f.tr_mul(f);
        let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
            Error::RankDeficient(format!("factor candidate {i} in objective evaluation"))
        })?;
        let mut total = 0.0;
        for r in &resid[i] {
            let w = f.tr_mul(r);
            let solved = chol.solve(&w);
            total += r.norm_squared() - w.dot(&solved);
        }
        Ok(total)
    });
    let mut q = 0.0;
    for part in per_industry {
        q += part?;
    }
    Ok(q)
}
