//! Significance of sample Granger causality.
//!
//! Under the null of no causality, `N·F̂` is asymptotically χ² with one degree
//! of freedom per coefficient the null sets to zero. The permutation test is a
//! distribution-free alternative that rotates the predictor series.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::causality::{analyze_design, causality_measures, CausalityQuery, PredictiveCovariances};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::rng::{substream, Domain};
use crate::series::{build_designs, TimeSeriesPanel};
use crate::special::gamma_q;

pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Chi2Asymptotic,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// `N·F̂` with `N` the effective number of observations.
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Upper tail `P(χ²(dof) > x) = Q(dof/2, x/2)`.
pub fn chi2_upper_tail(x: f64, dof: usize) -> f64 {
    assert!(dof > 0, "chi-squared needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Degrees of freedom of the null: `dim_x·dim_y·q`.
pub fn null_dof(dim_x: usize, dim_y: usize, q: usize) -> usize {
    dim_x * dim_y * q
}

/// Asymptotic χ² test of `F = 0`.
pub fn chi2_test(gc: f64, num_obs: usize, dim_x: usize, dim_y: usize, q: usize) -> Result<SignificanceResult> {
    chi2_test_with_dof(gc, num_obs, null_dof(dim_x, dim_y, q))
}

pub fn chi2_test_with_dof(gc: f64, num_obs: usize, dof: usize) -> Result<SignificanceResult> {
    if gc.is_nan() || gc < 0.0 {
        return Err(Error::InvalidArgument(format!("Granger causality must be non-negative, got {gc}")));
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("test needs at least one degree of freedom".into()));
    }
    if num_obs <= dof {
        return Err(Error::InsufficientData {
            what: "chi-squared test",
            required: dof + 1,
            available: num_obs,
        });
    }
    let statistic = num_obs as f64 * gc;
    Ok(SignificanceResult {
        statistic,
        dof,
        p_value: chi2_upper_tail(statistic, dof),
        method: TestMethod::Chi2Asymptotic,
    })
}

/// Permutation test by cyclic rotation of the predictor panel.
///
/// Each surrogate rotates `Y` by an offset drawn uniformly from
/// `[m, T − m]` (`m` the largest lag), preserving the autocorrelation of `Y`
/// while breaking its alignment with `X` and `Z`. Surrogate `i` draws its
/// offset from substream `i` of `seed`, so the p-value is independent of
/// the execution mode.
pub fn permutation_test(
    query: &CausalityQuery,
    panel: &TimeSeriesPanel,
    num_permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<SignificanceResult> {
    if num_permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {num_permutations}"
        )));
    }
    let (x, y, z) = query.blocks(panel)?;
    let design = build_designs(&x, &y, z.as_ref(), query.lags)?;
    let observed = analyze_design(&design, 0.0)?;
    let t = panel.num_steps();
    let m = query.max_lag();
    let usable = (t + 1).saturating_sub(2 * m);
    if usable < MIN_PERMUTATIONS {
        return Err(Error::InsufficientData {
            what: "rotation surrogates",
            required: MIN_PERMUTATIONS + 2 * m - 1,
            available: t,
        });
    }
    let observed_gc = observed.measures.gc;
    let surrogate_gc = try_map_indexed(num_permutations, exec, |i| -> Result<f64> {
        let offset = m + substream(seed, Domain::Permutation, i as u64).random_range(0..usable);
        let rotated = y.rotated(offset);
        let d = build_designs(&x, &rotated, z.as_ref(), query.lags)?;
        let covs = PredictiveCovariances::from_design(&d, 0.0)?;
        Ok(causality_measures(&covs)?.gc)
    })?;
    let exceed = surrogate_gc.iter().filter(|&&g| g >= observed_gc).count();
    Ok(SignificanceResult {
        statistic: observed.significance.statistic,
        dof: observed.significance.dof,
        p_value: (1 + exceed) as f64 / (1 + num_permutations) as f64,
        method: TestMethod::Permutation,
    })
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_uniformity(samples: &[f64]) -> KsResult {
    let n = samples.len();
    assert!(n > 0, "KS test needs samples");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - u).max(u - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    // Stephens' finite-sample correction to the Kolmogorov limit law
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail(lambda),
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
