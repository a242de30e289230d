//! Conditional multivariate Granger causality and Gaussian transfer entropy.
//!
//! Both measures are read off one joint covariance of `X(t)` with the full
//! lagged regressor set `X⁻⌢Y⁻⌢Z⁻`; the restricted regression uses the
//! `X⁻⌢Z⁻` principal sub-block of the same matrix. With
//! `Σr = Σ(X | X⁻⌢Z⁻)` and `Σf = Σ(X | X⁻⌢Y⁻⌢Z⁻)`:
//!
//! ```text
//! F = ln|Σr| − ln|Σf|        T = ½ (ln|Σr| − ln|Σf|)
//! ```
//!
//! All values are in nats.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{chi2_test, SignificanceResult};
use crate::linalg::{logdet, partial_covariance, CrossCovariance, SpdMatrix};
use crate::series::{build_designs, joint_sample_cov, LagSpec, LaggedDesign, TimeSeriesPanel};

/// Negative values this close to zero are floating-point noise and clamp to 0.
pub const CLAMP_SLACK: f64 = 1e-12;
/// Tolerance on `|F − 2T|`.
pub const EQUIVALENCE_TOL: f64 = 1e-12;
/// Tolerance between the entropy-difference route and the log-ratio route for `T`.
pub const ENTROPY_ROUTE_TOL: f64 = 1e-10;

/// "Does `predictor` G-cause `predictee` given `conditioning`?"
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalityQuery {
    pub predictee: Vec<String>,
    pub predictor: Vec<String>,
    pub conditioning: Vec<String>,
    pub lags: LagSpec,
}

impl CausalityQuery {
    pub fn new<S: Into<String>>(
        predictee: impl IntoIterator<Item = S>,
        predictor: impl IntoIterator<Item = S>,
        conditioning: impl IntoIterator<Item = S>,
        lags: LagSpec,
    ) -> Result<Self> {
        let q = CausalityQuery {
            predictee: predictee.into_iter().map(Into::into).collect(),
            predictor: predictor.into_iter().map(Into::into).collect(),
            conditioning: conditioning.into_iter().map(Into::into).collect(),
            lags,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.predictee.is_empty() || self.predictor.is_empty() {
            return Err(Error::InvalidQuery("predictee and predictor must be non-empty".into()));
        }
        let all: Vec<&String> = self
            .predictee
            .iter()
            .chain(&self.predictor)
            .chain(&self.conditioning)
            .collect();
        for (i, name) in all.iter().enumerate() {
            if all[..i].contains(name) {
                return Err(Error::InvalidQuery(format!("column {name:?} appears in more than one role")));
            }
        }
        LagSpec::new(self.lags.p, self.lags.q, self.lags.r).map(|_| ())
    }

    pub fn is_conditional(&self) -> bool {
        !self.conditioning.is_empty()
    }

    pub fn max_lag(&self) -> usize {
        self.lags.max_lag(self.is_conditional())
    }

    /// Number of coefficients set to zero under the null: `dim(X)·dim(Y)·q`.
    pub fn dof(&self) -> usize {
        self.predictee.len() * self.predictor.len() * self.lags.q
    }

    /// The same query with predictee and predictor exchanged (and `p`, `q` with them).
    pub fn reversed(&self) -> CausalityQuery {
        CausalityQuery {
            predictee: self.predictor.clone(),
            predictor: self.predictee.clone(),
            conditioning: self.conditioning.clone(),
            lags: LagSpec {
                p: self.lags.q,
                q: self.lags.p,
                r: self.lags.r,
            },
        }
    }

    pub fn describe(&self) -> String {
        let mut s = format!("{} -> {}", self.predictor.join(","), self.predictee.join(","));
        if self.is_conditional() {
            s.push_str(&format!(" | {}", self.conditioning.join(",")));
        }
        s
    }

    pub(crate) fn blocks(
        &self,
        panel: &TimeSeriesPanel,
    ) -> Result<(TimeSeriesPanel, TimeSeriesPanel, Option<TimeSeriesPanel>)> {
        self.validate()?;
        let x = panel.select(&self.predictee)?;
        let y = panel.select(&self.predictor)?;
        let z = if self.is_conditional() {
            Some(panel.select(&self.conditioning)?)
        } else {
            None
        };
        Ok((x, y, z))
    }

    pub fn designs(&self, panel: &TimeSeriesPanel) -> Result<LaggedDesign> {
        let (x, y, z) = self.blocks(panel)?;
        build_designs(&x, &y, z.as_ref(), self.lags)
    }
}

/// Joint covariance of `X(t)` (first `target_dim` coordinates) and the full
/// regressor set, with the positions of the restricted regressors.
#[derive(Debug, Clone)]
pub struct PredictiveCovariances {
    joint: SpdMatrix,
    target_dim: usize,
    restricted_columns: Vec<usize>,
    labels: Vec<String>,
}

impl PredictiveCovariances {
    /// Single estimation pass over a design. `jitter` is added to the
    /// diagonal of the regressor block only.
    pub fn from_design(design: &LaggedDesign, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter must be a finite non-negative number, got {jitter}")));
        }
        let (_, mut cov) = joint_sample_cov(&[&design.target, &design.full_regressors])?;
        let n = design.target.ncols();
        for i in n..cov.nrows() {
            cov[(i, i)] += jitter;
        }
        let joint = SpdMatrix::semidefinite(cov)?;
        Ok(PredictiveCovariances {
            joint,
            target_dim: n,
            restricted_columns: design.restricted_columns.clone(),
            labels: design.full_labels.clone(),
        })
    }

    /// Wraps a population (or externally estimated) joint covariance.
    pub fn from_joint(
        joint: SpdMatrix,
        target_dim: usize,
        restricted_columns: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let k = joint.dim().checked_sub(target_dim).filter(|&k| k > 0).ok_or_else(|| {
            Error::Shape(format!("joint covariance of dim {} has no regressor block", joint.dim()))
        })?;
        if restricted_columns.iter().any(|&c| c >= k) || labels.len() != k {
            return Err(Error::Shape("restricted columns or labels do not fit the regressor block".into()));
        }
        Ok(PredictiveCovariances {
            joint,
            target_dim,
            restricted_columns,
            labels,
        })
    }

    pub fn joint(&self) -> &SpdMatrix {
        &self.joint
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    fn regressor_count(&self) -> usize {
        self.joint.dim() - self.target_dim
    }

    fn blocks(&self, columns: &[usize]) -> Result<(SpdMatrix, CrossCovariance, SpdMatrix)> {
        let n = self.target_dim;
        let target: Vec<usize> = (0..n).collect();
        let regs: Vec<usize> = columns.iter().map(|c| c + n).collect();
        let m = self.joint.values();
        let sxx = self.joint.principal(&target)?;
        let syy = self.joint.principal(&regs)?;
        let sxy = CrossCovariance::new(nalgebra::DMatrix::from_fn(n, regs.len(), |i, j| m[(i, regs[j])]))?;
        if let Some(pivot) = syy.degenerate_pivot() {
            let column = columns[pivot];
            return Err(Error::CollinearRegressors {
                column,
                label: self.labels[column].clone(),
            });
        }
        Ok((sxx, sxy, syy))
    }

    /// `(Σ(X), Σ(X, X⁻⌢Z⁻), Σ(X⁻⌢Z⁻))`.
    pub fn restricted_blocks(&self) -> Result<(SpdMatrix, CrossCovariance, SpdMatrix)> {
        self.blocks(&self.restricted_columns)
    }

    /// `(Σ(X), Σ(X, X⁻⌢Y⁻⌢Z⁻), Σ(X⁻⌢Y⁻⌢Z⁻))`.
    pub fn full_blocks(&self) -> Result<(SpdMatrix, CrossCovariance, SpdMatrix)> {
        let all: Vec<usize> = (0..self.regressor_count()).collect();
        self.blocks(&all)
    }

    /// Residual covariances `(Σr, Σf)` of the restricted and full regressions.
    pub fn residual_covariances(&self) -> Result<(SpdMatrix, SpdMatrix)> {
        let (sxx, sxy, syy) = self.restricted_blocks()?;
        let restricted = partial_covariance(&sxx, &sxy, &syy)?;
        let (sxx, sxy, syy) = self.full_blocks()?;
        let full = partial_covariance(&sxx, &sxy, &syy)?;
        Ok((restricted, full))
    }

    /// Largest-to-smallest Cholesky pivot ratio of the full regressor block.
    pub fn regressor_pivot_ratio(&self) -> Result<f64> {
        let (_, _, syy) = self.full_blocks()?;
        Ok(syy.cholesky()?.pivot_ratio())
    }
}

fn clamp_nonnegative(value: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CLAMP_SLACK {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!("{what} is negative ({value:e})")))
    }
}

fn residual_logdet(cov: &SpdMatrix) -> Result<f64> {
    if cov.is_degenerate() {
        return Err(Error::DegenerateResiduals);
    }
    logdet(cov)
}

/// `ln(|Σr| / |Σf|)` from the two residual covariances.
pub fn granger_causality(restricted: &SpdMatrix, full: &SpdMatrix) -> Result<f64> {
    if restricted.dim() != full.dim() {
        return Err(Error::Shape("residual covariances differ in dimension".into()));
    }
    let lf = residual_logdet(full)?;
    let lr = residual_logdet(restricted)?;
    clamp_nonnegative(lr - lf, "Granger causality")
}

/// Univariate-predictee form: log-ratio of the two residual variances.
pub fn granger_causality_univariate(restricted_var: f64, full_var: f64) -> Result<f64> {
    if full_var.is_nan() || full_var <= 0.0 {
        return Err(Error::DegenerateResiduals);
    }
    clamp_nonnegative(restricted_var.ln() - full_var.ln(), "Granger causality")
}

/// `½ ln|Σ| + ½ n ln(2πe)` for a Gaussian with covariance `cov`.
pub fn gaussian_entropy(cov: &SpdMatrix) -> Result<f64> {
    Ok(0.5 * logdet(cov)? + 0.5 * cov.dim() as f64 * (2.0 * PI * E).ln())
}

/// `H(X | Y)` for jointly Gaussian `X, Y`, via the partial covariance.
pub fn gaussian_conditional_entropy(
    sxx: &SpdMatrix,
    sxy: &CrossCovariance,
    syy: &SpdMatrix,
) -> Result<f64> {
    let pc = partial_covariance(sxx, sxy, syy)?;
    if pc.is_degenerate() {
        return Err(Error::DegenerateResiduals);
    }
    gaussian_entropy(&pc)
}

/// `½ ln(|Σr| / |Σf|)`.
pub fn transfer_entropy_gaussian(restricted: &SpdMatrix, full: &SpdMatrix) -> Result<f64> {
    if restricted.dim() != full.dim() {
        return Err(Error::Shape("residual covariances differ in dimension".into()));
    }
    let lf = residual_logdet(full)?;
    let lr = residual_logdet(restricted)?;
    clamp_nonnegative(0.5 * (lr - lf), "transfer entropy")
}

/// Transfer entropy as a difference of two conditional entropies,
/// `H(X | X⁻⌢Z⁻) − H(X | X⁻⌢Y⁻⌢Z⁻)`.
pub fn transfer_entropy_from_entropies(covs: &PredictiveCovariances) -> Result<f64> {
    let (sxx, sxy, syy) = covs.restricted_blocks()?;
    let h_restricted = gaussian_conditional_entropy(&sxx, &sxy, &syy)?;
    let (sxx, sxy, syy) = covs.full_blocks()?;
    let h_full = gaussian_conditional_entropy(&sxx, &sxy, &syy)?;
    clamp_nonnegative(h_restricted - h_full, "transfer entropy")
}

/// Everything computed from one [`PredictiveCovariances`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalityMeasures {
    pub gc: f64,
    pub te: f64,
    pub te_entropy_route: f64,
    pub restricted_logdet: f64,
    pub full_logdet: f64,
}

impl CausalityMeasures {
    pub fn equivalence_gap(&self) -> f64 {
        (self.gc - 2.0 * self.te).abs()
    }
}

pub fn causality_measures(covs: &PredictiveCovariances) -> Result<CausalityMeasures> {
    let (restricted, full) = covs.residual_covariances()?;
    let gc = granger_causality(&restricted, &full)?;
    let te = transfer_entropy_gaussian(&restricted, &full)?;
    let te_entropy_route = transfer_entropy_from_entropies(covs)?;
    let m = CausalityMeasures {
        gc,
        te,
        te_entropy_route,
        restricted_logdet: logdet(&restricted)?,
        full_logdet: logdet(&full)?,
    };
    if m.equivalence_gap() > EQUIVALENCE_TOL {
        return Err(Error::InternalConsistency(format!("|F - 2T| = {:e}", m.equivalence_gap())));
    }
    if (m.te - m.te_entropy_route).abs() > ENTROPY_ROUTE_TOL {
        return Err(Error::InternalConsistency(format!(
            "transfer entropy routes disagree: {} vs {}",
            m.te, m.te_entropy_route
        )));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalityResult {
    /// Granger causality `F` (nats).
    pub gc: f64,
    /// Transfer entropy `T` (nats).
    pub te: f64,
    pub restricted_logdet: f64,
    pub full_logdet: f64,
    pub dof: usize,
    /// Asymptotic χ² p-value of `num_obs · F`.
    pub p_value: f64,
    pub num_obs: usize,
}

impl CausalityResult {
    pub fn equivalence_gap(&self) -> f64 {
        (self.gc - 2.0 * self.te).abs()
    }
}

/// Full output of one sample analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub result: CausalityResult,
    pub measures: CausalityMeasures,
    pub significance: SignificanceResult,
    pub regressor_pivot_ratio: f64,
    pub num_steps: usize,
}

pub fn analyze_design(design: &LaggedDesign, jitter: f64) -> Result<Analysis> {
    let covs = PredictiveCovariances::from_design(design, jitter)?;
    let measures = causality_measures(&covs)?;
    let num_obs = design.effective_rows;
    let significance = chi2_test(measures.gc, num_obs, design.dims.x, design.dims.y, design.lags.q)?;
    Ok(Analysis {
        result: CausalityResult {
            gc: measures.gc,
            te: measures.te,
            restricted_logdet: measures.restricted_logdet,
            full_logdet: measures.full_logdet,
            dof: significance.dof,
            p_value: significance.p_value,
            num_obs,
        },
        measures,
        significance,
        regressor_pivot_ratio: covs.regressor_pivot_ratio()?,
        num_steps: design.effective_rows + design.lags.max_lag(design.dims.z > 0),
    })
}

/// Runs `query` against `panel` with an optional regressor jitter.
pub fn analyze(query: &CausalityQuery, panel: &TimeSeriesPanel, jitter: f64) -> Result<Analysis> {
    let run = || -> Result<Analysis> {
        let design = query.designs(panel)?;
        analyze_design(&design, jitter)
    };
    run().map_err(|e| e.context(format!("query {}", query.describe())))
}

/// Granger causality and transfer entropy for `query`, with both
/// equivalence invariants checked.
pub fn equivalence_report(query: &CausalityQuery, panel: &TimeSeriesPanel) -> Result<CausalityResult> {
    analyze(query, panel, 0.0).map(|a| a.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, NormalStream};
    use nalgebra::DMatrix;

    /// X_t = 0.5 X_{t-1} + c Y_{t-1} + e, Y_t = 0.7 Y_{t-1} + n
    fn coupled(c: f64, steps: usize, seed: u64) -> TimeSeriesPanel {
        let mut s = NormalStream::new(seed, Domain::Validation, 7);
        let mut v = DMatrix::zeros(steps, 2);
        let (mut x, mut y) = (0.0, 0.0);
        for t in 0..steps + 200 {
            let nx = 0.5 * x + c * y + s.next_normal();
            let ny = 0.7 * y + s.next_normal();
            x = nx;
            y = ny;
            if t >= 200 {
                v[(t - 200, 0)] = x;
                v[(t - 200, 1)] = y;
            }
        }
        TimeSeriesPanel::new(v, vec!["x".into(), "y".into()]).unwrap()
    }

    fn query(p: usize, q: usize) -> CausalityQuery {
        CausalityQuery::new(["x"], ["y"], Vec::<&str>::new(), LagSpec::new(p, q, 0).unwrap()).unwrap()
    }

    #[test]
    fn identical_residuals_give_zero() {
        let s = SpdMatrix::from_diagonal(&[1.3, 0.4]).unwrap();
        assert_eq!(granger_causality(&s, &s).unwrap(), 0.0);
        assert_eq!(transfer_entropy_gaussian(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn variance_ratio_of_e() {
        let r = SpdMatrix::from_diagonal(&[E]).unwrap();
        let f = SpdMatrix::identity(1);
        assert!((granger_causality(&r, &f).unwrap() - 1.0).abs() < 1e-15);
        assert!((granger_causality_univariate(E, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_negative_clamps_large_negative_fails() {
        let r = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let f = SpdMatrix::from_diagonal(&[1.0 + 1e-13]).unwrap();
        assert_eq!(granger_causality(&r, &f).unwrap(), 0.0);
        let f = SpdMatrix::from_diagonal(&[1.1]).unwrap();
        assert!(matches!(granger_causality(&r, &f), Err(Error::InternalConsistency(_))));
    }

    #[test]
    fn degenerate_full_model_is_an_error() {
        let r = SpdMatrix::identity(1);
        let f = SpdMatrix::semidefinite(DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(granger_causality(&r, &f), Err(Error::DegenerateResiduals)));
    }

    #[test]
    fn entropy_closed_forms() {
        let h1 = gaussian_entropy(&SpdMatrix::identity(1)).unwrap();
        assert!((h1 - 1.418_938_533_204_672_7).abs() < 1e-12);
        let h2 = gaussian_entropy(&SpdMatrix::identity(2)).unwrap();
        assert!((h2 - (2.0 * PI * E).ln()).abs() < 1e-12);
    }

    #[test]
    fn conditional_entropy_examples() {
        let one = SpdMatrix::identity(1);
        let rho = CrossCovariance::new(DMatrix::from_element(1, 1, 0.6)).unwrap();
        let h = gaussian_conditional_entropy(&one, &rho, &one).unwrap();
        assert!((h - 0.5 * (2.0 * PI * E * 0.64).ln()).abs() < 1e-12);

        let sxx = SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap();
        let syy = SpdMatrix::identity(3);
        let h = gaussian_conditional_entropy(&sxx, &CrossCovariance::zeros(2, 3), &syy).unwrap();
        assert!((h - gaussian_entropy(&sxx).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn chain_rule() {
        let joint = SpdMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, -0.4, 0.3, 1.0, 0.2, -0.4, 0.2, 1.5],
        ))
        .unwrap();
        let sxx = joint.principal(&[0]).unwrap();
        let syy = joint.principal(&[1, 2]).unwrap();
        let sxy = CrossCovariance::new(joint.values().view((0, 1), (1, 2)).into_owned()).unwrap();
        let lhs = gaussian_entropy(&joint).unwrap();
        let rhs = gaussian_entropy(&syy).unwrap() + gaussian_conditional_entropy(&sxx, &sxy, &syy).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn report_satisfies_equivalence() {
        let panel = coupled(0.4, 3000, 1);
        let res = equivalence_report(&query(2, 2), &panel).unwrap();
        assert!(res.gc > 0.0);
        assert!(res.equivalence_gap() <= EQUIVALENCE_TOL);
        assert_eq!(res.dof, 2);
        assert_eq!(res.num_obs, 2998);
        assert!(res.p_value < 1e-6);
    }

    #[test]
    fn univariate_routes_agree_bitwise() {
        let panel = coupled(0.4, 2000, 2);
        let design = query(1, 1).designs(&panel).unwrap();
        let covs = PredictiveCovariances::from_design(&design, 0.0).unwrap();
        let (r, f) = covs.residual_covariances().unwrap();
        let via_logdet = granger_causality(&r, &f).unwrap();
        let via_ratio = granger_causality_univariate(r.values()[(0, 0)], f.values()[(0, 0)]).unwrap();
        assert_eq!(via_logdet.to_bits(), via_ratio.to_bits());
    }

    #[test]
    fn reverse_direction_is_weaker() {
        let panel = coupled(0.4, 5000, 3);
        let q = query(1, 1);
        let fwd = equivalence_report(&q, &panel).unwrap();
        let rev = equivalence_report(&q.reversed(), &panel).unwrap();
        assert!(fwd.gc > 10.0 * rev.gc.max(1e-6));
    }

    #[test]
    fn query_validation() {
        let l = LagSpec::new(1, 1, 0).unwrap();
        assert!(CausalityQuery::new(["x"], Vec::<&str>::new(), Vec::<&str>::new(), l).is_err());
        assert!(CausalityQuery::new(["x"], ["x"], Vec::<&str>::new(), l).is_err());
        assert!(CausalityQuery::new(["x"], ["y"], ["x"], l).is_err());
        let err = equivalence_report(
            &CausalityQuery::new(["x"], ["w"], Vec::<&str>::new(), l).unwrap(),
            &coupled(0.0, 50, 1),
        )
        .unwrap_err();
        assert!(matches!(err.root(), Error::InvalidQuery(_)));
    }

    #[test]
    fn collinear_design_names_the_column() {
        let base = coupled(0.4, 300, 4);
        let mut v = base.values().clone().insert_column(2, 0.0);
        for t in 0..v.nrows() {
            v[(t, 2)] = 2.0 * v[(t, 1)];
        }
        let panel = TimeSeriesPanel::new(v, vec!["x".into(), "y".into(), "w".into()]).unwrap();
        let q = CausalityQuery::new(["x"], ["y"], ["w"], LagSpec::new(1, 1, 1).unwrap()).unwrap();
        match equivalence_report(&q, &panel).unwrap_err().root() {
            Error::CollinearRegressors { label, .. } => assert_eq!(label, "w(t-1)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perfectly_predictable_target_is_degenerate() {
        let mut v = DMatrix::zeros(100, 2);
        let mut s = NormalStream::new(5, Domain::Validation, 0);
        for t in 0..100 {
            v[(t, 1)] = s.next_normal();
            if t > 0 {
                v[(t, 0)] = v[(t - 1, 1)];
            }
        }
        let panel = TimeSeriesPanel::new(v, vec!["x".into(), "y".into()]).unwrap();
        let err = equivalence_report(&query(1, 1), &panel).unwrap_err();
        assert!(matches!(err.root(), Error::DegenerateResiduals), "{err}");
    }
}
