//! Ordinary least squares for the predictive regressions.
//!
//! The residual covariance of a fit is always computed from the explicit
//! residuals; [`residual_cov_formula`] is the closed-form partial covariance
//! kept separate so the two can be compared.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{partial_covariance, CrossCovariance, SpdMatrix};
use crate::series::joint_sample_cov;

#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// `(regressor dim) × (target dim)`.
    pub coefficients: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub residual_cov: SpdMatrix,
    /// `trace(residual_cov)`, the mean squared error.
    pub total_variance: f64,
    pub num_obs: usize,
}

impl RegressionFit {
    /// `target − 1·αᵀ − regressors·A`.
    pub fn residuals(&self, regressors: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
        let mut res = target - regressors * &self.coefficients;
        for mut row in res.row_iter_mut() {
            row -= self.intercepts.transpose();
        }
        res
    }
}

fn collinear(column: usize) -> Error {
    Error::CollinearRegressors {
        column,
        label: format!("regressor {column}"),
    }
}

/// Fits `target = α + regressors·A + ε` by least squares.
///
/// Target and regressors are mean-centred, `A = Σ(R)⁻¹ Σ(X,R)ᵀ` is obtained
/// by Cholesky solve, and `α` is recovered from the means.
pub fn ols_fit(regressors: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<RegressionFit> {
    if regressors.nrows() != target.nrows() {
        return Err(Error::Shape(format!(
            "{} regressor rows vs {} target rows",
            regressors.nrows(),
            target.nrows()
        )));
    }
    let (k, n) = (regressors.ncols(), target.ncols());
    if k == 0 || n == 0 {
        return Err(Error::Shape("regression needs at least one regressor and one target".into()));
    }
    let (means, cov) = joint_sample_cov(&[regressors, target])?;
    let syy = cov.view((0, 0), (k, k)).into_owned();
    let sxy_t = cov.view((0, k), (k, n)).into_owned();
    let syy = match SpdMatrix::semidefinite(syy) {
        Ok(s) => s,
        Err(Error::NotPositiveDefinite { pivot, .. }) => return Err(collinear(pivot)),
        Err(e) => return Err(e),
    };
    let chol = syy.cholesky().map_err(|_| collinear(syy.degenerate_pivot().unwrap_or(0)))?;
    let coefficients = chol.solve(&sxy_t);
    let mean_r = means.rows(0, k).into_owned();
    let mean_t = means.rows(k, n).into_owned();
    let intercepts = mean_t - coefficients.tr_mul(&mean_r);
    let fit = RegressionFit {
        coefficients,
        intercepts,
        residual_cov: SpdMatrix::identity(n),
        total_variance: 0.0,
        num_obs: target.nrows(),
    };
    let residuals = fit.residuals(regressors, target);
    let (_, res_cov) = joint_sample_cov(&[&residuals])?;
    let residual_cov = SpdMatrix::semidefinite(res_cov)?;
    Ok(RegressionFit {
        total_variance: residual_cov.trace(),
        residual_cov,
        ..fit
    })
}

/// Residual covariance of the least-squares fit in closed form.
pub fn residual_cov_formula(
    sxx: &SpdMatrix,
    sxy: &CrossCovariance,
    syy: &SpdMatrix,
) -> Result<SpdMatrix> {
    partial_covariance(sxx, sxy, syy)
}

/// Largest absolute sample covariance between a regressor and a residual column.
pub fn orthogonality_check(
    _fit: &RegressionFit,
    regressors: &DMatrix<f64>,
    residuals: &DMatrix<f64>,
) -> f64 {
    let n = regressors.nrows() as f64;
    let rc = regressors.row_mean();
    let ec = residuals.row_mean();
    let mut worst: f64 = 0.0;
    for i in 0..regressors.ncols() {
        for j in 0..residuals.ncols() {
            let s: f64 = regressors
                .column(i)
                .iter()
                .zip(residuals.column(j).iter())
                .map(|(r, e)| (r - rc[i]) * (e - ec[j]))
                .sum();
            worst = worst.max((s / n).abs());
        }
    }
    worst
}

/// `max |Σ(X,R)ᵀ − Σ(R)·A|`: how far a coefficient matrix is from solving the
/// normal equations for the given covariances.
pub fn normal_equation_gap(coefficients: &DMatrix<f64>, sxy: &CrossCovariance, syy: &SpdMatrix) -> f64 {
    (sxy.values().transpose() - syy.values() * coefficients).abs().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::logdet;
    use crate::series::{sample_cross_cov, sample_mean_cov};
    use proptest::prelude::*;
    use crate::rng::{Domain, NormalStream};

    fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut s = NormalStream::new(seed, Domain::Validation, 0);
        DMatrix::from_fn(rows, cols, |_, _| s.next_normal())
    }

    fn random_design(seed: u64, rows: usize, k: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = gaussian(seed, rows, k);
        let mix = gaussian(seed ^ 0xabc, k, n);
        let noise = gaussian(seed ^ 0xdef, rows, n);
        let t = &r * mix + noise * 0.5;
        (r, t)
    }

    #[test]
    fn exact_linear_relation() {
        let r = DMatrix::from_fn(50, 1, |t, _| (t as f64).sin() + t as f64 * 0.01);
        let t = &r * 2.0;
        let fit = ols_fit(&r, &t).unwrap();
        assert!((fit.coefficients[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit.residual_cov.values()[(0, 0)].abs() < 1e-20);
    }

    #[test]
    fn intercepts_are_recovered() {
        let r = gaussian(3, 500, 2);
        let t = DMatrix::from_fn(500, 1, |i, _| 4.0 + r[(i, 0)] - 3.0 * r[(i, 1)]);
        let fit = ols_fit(&r, &t).unwrap();
        assert!((fit.intercepts[0] - 4.0).abs() < 1e-12);
        assert!((fit.coefficients[(1, 0)] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_regressor_is_named() {
        let a = gaussian(1, 100, 2);
        let r = DMatrix::from_fn(100, 3, |i, j| if j < 2 { a[(i, j)] } else { a[(i, 0)] - a[(i, 1)] });
        let t = gaussian(2, 100, 1);
        match ols_fit(&r, &t) {
            Err(Error::CollinearRegressors { column, .. }) => assert_eq!(column, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn formula_agrees_with_residuals() {
        for seed in 0..20 {
            let (r, t) = random_design(seed, 400, 3, 2);
            let fit = ols_fit(&r, &t).unwrap();
            let (_, sxx) = sample_mean_cov(&t).unwrap();
            let (_, syy) = sample_mean_cov(&r).unwrap();
            let (_, _, sxy) = sample_cross_cov(&t, &r).unwrap();
            let formula = residual_cov_formula(&sxx, &sxy, &syy).unwrap();
            assert!((formula.values() - fit.residual_cov.values()).abs().max() <= 1e-10);
            assert!((fit.total_variance - fit.residual_cov.trace()).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_cross_covariance_formula_is_sxx() {
        let sxx = SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let syy = SpdMatrix::identity(3);
        let out = residual_cov_formula(&sxx, &CrossCovariance::zeros(2, 3), &syy).unwrap();
        assert_eq!(out.values(), sxx.values());
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let (r, t) = random_design(11, 1000, 4, 3);
        let fit = ols_fit(&r, &t).unwrap();
        let res = fit.residuals(&r, &t);
        assert!(orthogonality_check(&fit, &r, &res) <= 1e-10);

        let mut bad = fit.clone();
        bad.coefficients.add_scalar_mut(0.1);
        let res_bad = bad.residuals(&r, &t);
        assert!(orthogonality_check(&bad, &r, &res_bad) > 0.0);
    }

    #[test]
    fn yule_walker_identities() {
        let (r, t) = random_design(12, 800, 3, 2);
        let fit = ols_fit(&r, &t).unwrap();
        let (_, sxx) = sample_mean_cov(&t).unwrap();
        let (_, syy) = sample_mean_cov(&r).unwrap();
        let (_, _, sxy) = sample_cross_cov(&t, &r).unwrap();
        assert!(normal_equation_gap(&fit.coefficients, &sxy, &syy) <= 1e-10);
        // Σ(X) = Aᵀ Σ(R) A + Σ_ε
        let rebuilt = fit.coefficients.transpose() * syy.values() * &fit.coefficients + fit.residual_cov.values();
        assert!((rebuilt - sxx.values()).abs().max() <= 1e-9);
    }

    #[test]
    fn regressor_rescaling_leaves_residuals_alone() {
        let (r, t) = random_design(13, 600, 3, 2);
        let fit = ols_fit(&r, &t).unwrap();
        let mut scaled = r.clone();
        scaled.column_mut(1).scale_mut(10.0);
        let fit2 = ols_fit(&scaled, &t).unwrap();
        assert!((fit.residual_cov.values() - fit2.residual_cov.values()).abs().max() <= 1e-10);
        assert!((fit2.coefficients[(1, 0)] * 10.0 - fit.coefficients[(1, 0)]).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn extra_regressor_never_increases_generalized_variance(seed in any::<u64>(), k in 1usize..5) {
            let (r, t) = random_design(seed, 200, k + 1, 2);
            let fewer = r.columns(0, k).into_owned();
            let a = logdet(&ols_fit(&fewer, &t).unwrap().residual_cov).unwrap();
            let b = logdet(&ols_fit(&r, &t).unwrap().residual_cov).unwrap();
            prop_assert!(b <= a + 1e-10);
        }
    }
}
