//! Dense symmetric eigen decomposition, projectors, and SPD solves.
//!
//! Everything operates on `f64` matrices small enough to keep dense: the
//! largest inputs are `T x T` covariances and `T x r` factor blocks.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Leading eigenvalues (descending) with their eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn check_square_finite(s: &DMatrix<f64>, what: &str) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Flips each column so its largest-magnitude entry is positive, making the
/// sign of an eigenvector deterministic. The first entry attaining the
/// maximum decides when several tie.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for c in 0..m.ncols() {
        let mut lead = 0;
        let mut best = f64::NEG_INFINITY;
        for r in 0..m.nrows() {
            let a = m[(r, c)].abs();
            if a > best {
                best = a;
                lead = r;
            }
        }
        if m[(lead, c)] < 0.0 {
            for r in 0..m.nrows() {
                m[(r, c)] = -m[(r, c)];
            }
        }
    }
}

/// Top `k` eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// The input is symmetrized as `(S + S')/2` before decomposition, so tiny
/// asymmetries from accumulation order are harmless. Ties keep a stable
/// order and column signs follow [`fix_column_signs`], making repeated calls
/// on equal inputs byte-identical.
pub fn top_eigenpairs(s: &DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    check_square_finite(s, "eigen input")?;
    let n = s.nrows();
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs from a {n}x{n} matrix"
        )));
    }
    let sym = (s + s.transpose()) / 2.0;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    fix_column_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Full spectrum of a symmetric matrix in descending order.
pub fn eigenvalues_desc(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(top_eigenpairs(s, s.nrows())?.values)
}

/// `(F'F)^{-1} F'` with a rank gate on the Gram matrix.
fn gram_pseudo_inverse(f: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let gram = f.tr_mul(f);
    let spectrum = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::RankDeficient(what.to_string()));
    }
    let chol = Cholesky::new(gram).ok_or_else(|| Error::RankDeficient(what.to_string()))?;
    Ok(chol.solve(&f.transpose()))
}

/// Orthogonal projector onto the column span of `f`; zero columns give the
/// zero matrix.
pub fn projector(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if f.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if f.ncols() > n {
        return Err(Error::Dimension(format!(
            "cannot project onto {} columns in {n} dimensions",
            f.ncols()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("projector input has non-finite entries".into()));
    }
    Ok(f * gram_pseudo_inverse(f, "projector basis")?)
}

/// Annihilator `I - F (F'F)^{-1} F'`; zero columns give the identity.
pub fn annihilator(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if f.ncols() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(DMatrix::identity(n, n) - projector(f)?)
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
///
/// A failed factorization reports the eigenvalue range of `A` so the caller
/// can see how far from positive definite it was.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    check_square_finite(a, context)?;
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "{context}: right-hand side has {} rows for a {}x{} matrix",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    match Cholesky::new(a.clone()) {
        Some(chol) => Ok(chol.solve(b)),
        None => {
            let spectrum = SymmetricEigen::new((a + a.transpose()) / 2.0).eigenvalues;
            Err(Error::NotPositiveDefinite {
                context: context.to_string(),
                min_eigenvalue: spectrum.iter().cloned().fold(f64::INFINITY, f64::min),
                max_eigenvalue: spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        }
    }
}

/// Vector right-hand-side convenience wrapper for [`solve_spd`].
pub fn solve_spd_vector(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let x = solve_spd(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), context)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}
