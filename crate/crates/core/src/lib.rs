//! Granger causality and Gaussian transfer entropy for multivariate time series.
//!
//! For jointly Gaussian processes the two measures coincide up to a factor of
//! two: `F = 2T`, where
//!
//! ```text
//! F = ln det Σ(X | X⁻ ⊕ Z⁻) − ln det Σ(X | X⁻ ⊕ Y⁻ ⊕ Z⁻)
//! ```
//!
//! is computed from partial covariances and `T` is the corresponding
//! difference of conditional entropies. Both are evaluated from one shared
//! sample covariance, so the identity holds to working precision in every
//! sample and not merely in the limit.
//!
//! ```
//! use gausscause::{analyze, simulate, CausalityQuery, LagSpec, VarModel, SpdMatrix};
//! use gausscause::nalgebra::DMatrix;
//!
//! let model = VarModel::new(
//!     vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 0.7])],
//!     SpdMatrix::identity(2),
//!     vec!["x".into(), "y".into()],
//! )?;
//! let panel = simulate(&model, 2000, model.default_burn_in(), 1)?;
//! let query = CausalityQuery::new(["x"], ["y"], Vec::<&str>::new(), LagSpec::new(1, 1, 0)?)?;
//! let analysis = analyze(&query, &panel, 0.0)?;
//! assert_eq!(analysis.result.gc, 2.0 * analysis.result.te);
//! assert!(analysis.result.p_value < 1e-6);
//! # Ok::<(), gausscause::Error>(())
//! ```

pub mod causality;
pub mod error;
pub mod exec;
pub mod inference;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod series;
pub mod special;
pub mod validation;
pub mod var;

pub use nalgebra;

pub use causality::{
    analyze, analyze_design, causality_measures, equivalence_report, gaussian_conditional_entropy,
    gaussian_entropy, granger_causality, granger_causality_univariate, transfer_entropy_from_entropies,
    transfer_entropy_gaussian, Analysis, CausalityMeasures, CausalityQuery, CausalityResult,
    PredictiveCovariances,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use inference::{chi2_test, chi2_upper_tail, ks_uniformity, permutation_test, SignificanceResult, TestMethod};
pub use linalg::{logdet, partial_covariance, CrossCovariance, SpdMatrix};
pub use regression::{ols_fit, RegressionFit};
pub use series::{build_designs, LagSpec, LaggedDesign, TimeSeriesPanel};
pub use var::{analytic_causality, analytic_granger, simulate, simulate_stream, stationary_autocov, ModelFile, VarModel};
