//! The analysis report written by `gausscause analyze`.

use gausscause::{LagSpec, TestMethod};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub tool: ToolInfo,
    pub input: InputInfo,
    pub query: QueryEcho,
    pub causality: CausalitySection,
    pub significance: SignificanceSection,
    pub estimation: EstimationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputInfo {
    pub source: String,
    pub columns: Vec<String>,
    pub num_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEcho {
    pub predictee: Vec<String>,
    pub predictor: Vec<String>,
    pub conditioning: Vec<String>,
    pub lags: LagSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalitySection {
    /// Granger causality `F` in nats.
    pub granger_causality: f64,
    /// Transfer entropy `T` in nats.
    pub transfer_entropy: f64,
    /// `T` recomputed as a difference of conditional entropies.
    pub transfer_entropy_entropy_route: f64,
    /// `|F − 2T|`.
    pub equivalence_gap: f64,
    pub equivalence_holds: bool,
    pub restricted_logdet: f64,
    pub full_logdet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceSection {
    pub method: TestMethod,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Asymptotic χ² p-value, reported whichever test was selected.
    pub chi2_p_value: f64,
    pub alpha: f64,
    pub rejected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub num_steps: usize,
    pub effective_obs: usize,
    pub max_lag: usize,
    pub full_regressors: usize,
    pub jitter: f64,
    /// Largest over smallest Cholesky pivot of the full regressor covariance.
    pub regressor_pivot_ratio: f64,
    /// Largest elementwise gap between the residual covariance of an explicit
    /// OLS fit and the partial-covariance formula. Absent when the unjittered
    /// regression is not estimable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ols_formula_gap: Option<f64>,
    /// Largest sample covariance between a regressor and an OLS residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_orthogonality: Option<f64>,
}

impl AnalysisReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are all representable in TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
