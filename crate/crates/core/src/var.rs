//! Vector autoregressions with known ground truth.
//!
//! `X(t) = A₁ X(t-1) + … + A_k X(t-k) + ε(t)`, `ε(t) ~ N(0, Σ)`, with `X` a
//! column vector, so `A_i[r][c]` is the effect of variable `c` at lag `i` on
//! variable `r`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::causality::{
    granger_causality, transfer_entropy_gaussian, CausalityQuery, PredictiveCovariances,
};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::rng::{Domain, NormalStream};
use crate::series::TimeSeriesPanel;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 200_000;
const ALIGNED_TOL: f64 = 1e-4;
const LYAPUNOV_TOL: f64 = 1e-14;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct VarModel {
    coeff_blocks: Vec<DMatrix<f64>>,
    noise_cov: SpdMatrix,
    names: Vec<String>,
    spectral_radius: f64,
}

impl VarModel {
    pub fn new(coeff_blocks: Vec<DMatrix<f64>>, noise_cov: SpdMatrix, names: Vec<String>) -> Result<Self> {
        let radius = stationarity_check(&coeff_blocks)?;
        let n = noise_cov.dim();
        if coeff_blocks[0].nrows() != n {
            return Err(Error::Shape(format!(
                "noise covariance is {n}x{n} but coefficients are {0}x{0}",
                coeff_blocks[0].nrows()
            )));
        }
        if names.len() != n {
            return Err(Error::Shape(format!("{} names for {n} variables", names.len())));
        }
        if radius.is_nan() || radius >= 1.0 {
            return Err(Error::NonStationary { radius });
        }
        Ok(VarModel {
            coeff_blocks,
            noise_cov,
            names,
            spectral_radius: radius,
        })
    }

    /// Model with names `v1, v2, ...`.
    pub fn unnamed(coeff_blocks: Vec<DMatrix<f64>>, noise_cov: SpdMatrix) -> Result<Self> {
        let names = (1..=noise_cov.dim()).map(|i| format!("v{i}")).collect();
        VarModel::new(coeff_blocks, noise_cov, names)
    }

    pub fn dim(&self) -> usize {
        self.noise_cov.dim()
    }

    pub fn order(&self) -> usize {
        self.coeff_blocks.len()
    }

    pub fn coeff_blocks(&self) -> &[DMatrix<f64>] {
        &self.coeff_blocks
    }

    pub fn noise_cov(&self) -> &SpdMatrix {
        &self.noise_cov
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// `ceil(10 / (1 − ρ))`.
    pub fn default_burn_in(&self) -> usize {
        (10.0 / (1.0 - self.spectral_radius)).ceil() as usize
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidQuery(format!("model has no variable {name:?}")))
    }
}

/// `nk × nk` companion matrix of a VAR(k).
pub fn companion_matrix(coeff_blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let k = coeff_blocks.len();
    let n = coeff_blocks[0].nrows();
    let mut c = DMatrix::zeros(n * k, n * k);
    for (i, a) in coeff_blocks.iter().enumerate() {
        c.view_mut((0, i * n), (n, n)).copy_from(a);
    }
    for i in 1..k {
        c.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
    }
    c
}

/// Spectral radius of the companion matrix.
pub fn stationarity_check(coeff_blocks: &[DMatrix<f64>]) -> Result<f64> {
    let Some(first) = coeff_blocks.first() else {
        return Err(Error::Shape("a VAR needs at least one coefficient block".into()));
    };
    let n = first.nrows();
    if n == 0 || coeff_blocks.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(Error::Shape("coefficient blocks must be square and of equal size".into()));
    }
    if coeff_blocks.iter().flat_map(|a| a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coefficients must be finite".into()));
    }
    Ok(spectral_radius(&companion_matrix(coeff_blocks)))
}

/// Spectral radius by power iteration.
///
/// Each step fits the two-term recurrence `A²v ≈ a·Av + b·v` on the current
/// normalised iterate; the larger root modulus of `z² − a z − b` tracks the
/// dominant eigenvalue, whether it is real, a complex-conjugate pair or a
/// `±λ` pair. Once `Av` is parallel to `v` the fit is ill-posed and the
/// Rayleigh quotient is used instead. Iteration stops once that estimate changes by less than
/// `1e-10` relative on several consecutive steps.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    // fixed start vector with no special alignment
    let mut v = DMatrix::from_fn(n, 1, |i, _| 1.0 + 0.618_033_988_749_895 * ((i as f64 + 1.0) * 1.618).sin());
    let norm = v.norm();
    v /= norm;
    let mut estimate = f64::NAN;
    let mut stable = 0;
    for _ in 0..POWER_MAX_ITER {
        let u = m * &v;
        let un = u.norm();
        if un < 1e-280 {
            return 0.0;
        }
        let w = m * &u;
        let rayleigh = u.dot(&v);
        let aligned = (&u - &v * rayleigh).norm() <= ALIGNED_TOL * un;
        // least squares for [u v] [a b]ᵀ = w
        let (uu, uv, vv) = (u.dot(&u), u.dot(&v), v.dot(&v));
        let (uw, vw) = (u.dot(&w), v.dot(&w));
        let det = uu * vv - uv * uv;
        let next = if aligned || det <= 1e-24 * uu * vv {
            // Av ∥ v: a real dominant eigenvector has been reached
            rayleigh.abs()
        } else {
            let a = (uw * vv - vw * uv) / det;
            let b = (vw * uu - uw * uv) / det;
            let disc = a * a + 4.0 * b;
            if disc >= 0.0 {
                let s = disc.sqrt();
                ((a + s) / 2.0).abs().max(((a - s) / 2.0).abs())
            } else {
                (-b).sqrt()
            }
        };
        if (next - estimate).abs() <= POWER_TOL * next.max(f64::MIN_POSITIVE) {
            stable += 1;
            if stable >= 3 {
                return next;
            }
        } else {
            stable = 0;
        }
        estimate = next;
        v = u / un;
    }
    estimate
}

/// Simulates `num_steps` observations after discarding `burn_in`, using
/// innovation stream 0 of `seed`.
pub fn simulate(model: &VarModel, num_steps: usize, burn_in: usize, seed: u64) -> Result<TimeSeriesPanel> {
    simulate_stream(model, num_steps, burn_in, seed, 0)
}

/// As [`simulate`], drawing from innovation substream `stream`.
///
/// The standard-normal draw behind component `i` at (pre-burn-in) step `t`
/// is deviate `t·n + i` of the substream, so trajectories are a pure function
/// of `(seed, stream)`.
pub fn simulate_stream(
    model: &VarModel,
    num_steps: usize,
    burn_in: usize,
    seed: u64,
    stream: u64,
) -> Result<TimeSeriesPanel> {
    if num_steps == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one step".into()));
    }
    let n = model.dim();
    let k = model.order();
    let chol = model.noise_cov.cholesky()?.lower().clone();
    let coeffs = &model.coeff_blocks;
    let mut normals = NormalStream::new(seed, Domain::Innovations, stream);
    // ring of the last k states, most recent at `head`
    let mut history = vec![vec![0.0; n]; k];
    let mut head = 0usize;
    let mut out = DMatrix::zeros(num_steps, n);
    let mut z = vec![0.0; n];
    let mut next = vec![0.0; n];
    for t in 0..burn_in + num_steps {
        for zi in z.iter_mut() {
            *zi = normals.next_normal();
        }
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += chol[(r, c)] * z[c];
            }
            for (lag, a) in coeffs.iter().enumerate() {
                let past = &history[(head + k - lag) % k];
                for c in 0..n {
                    acc += a[(r, c)] * past[c];
                }
            }
            next[r] = acc;
        }
        head = (head + 1) % k;
        history[head].copy_from_slice(&next);
        if t >= burn_in {
            for c in 0..n {
                out[(t - burn_in, c)] = next[c];
            }
        }
    }
    TimeSeriesPanel::new(out, model.names.clone())
}

/// Stationary autocovariances `Γ_j = Cov(X(t), X(t−j))` for `j = 0..=max_lag`.
pub fn stationary_autocov(model: &VarModel, max_lag: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = model.dim();
    let k = model.order();
    let c = companion_matrix(&model.coeff_blocks);
    let mut q = DMatrix::zeros(n * k, n * k);
    q.view_mut((0, 0), (n, n)).copy_from(model.noise_cov.values());
    // S ← C S Cᵀ + Q from S = Q; the increment after step j is CʲQCʲᵀ, so
    // it is propagated directly and the loop stops when it falls below tol.
    let mut s = q.clone();
    let mut increment = q;
    let mut converged = false;
    for _ in 0..LYAPUNOV_MAX_ITER {
        increment = &c * &increment * c.transpose();
        s += &increment;
        if increment.abs().max() <= LYAPUNOV_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: LYAPUNOV_MAX_ITER,
        });
    }
    let s = crate::linalg::symmetrize(&s);
    let mut gammas: Vec<DMatrix<f64>> = Vec::with_capacity(max_lag + 1);
    for j in 0..=max_lag {
        let g = if j < k {
            s.view((0, j * n), (n, n)).into_owned()
        } else {
            let mut g = DMatrix::zeros(n, n);
            for (i, a) in model.coeff_blocks.iter().enumerate() {
                g += a * &gammas[j - i - 1];
            }
            g
        };
        gammas.push(g);
    }
    Ok(gammas)
}

/// Population quantities of a query against a model.
#[derive(Debug, Clone)]
pub struct AnalyticCausality {
    pub gc: f64,
    pub te: f64,
    pub restricted_residual: SpdMatrix,
    pub full_residual: SpdMatrix,
    pub covariances: PredictiveCovariances,
}

/// Population joint covariance of `X(t)` and the full lagged regressor set
/// of `query`, in the same column layout as the sample designs.
pub fn population_covariances(model: &VarModel, query: &CausalityQuery) -> Result<PredictiveCovariances> {
    query.validate()?;
    let resolve = |names: &[String]| names.iter().map(|n| model.index_of(n)).collect::<Result<Vec<_>>>();
    let x = resolve(&query.predictee)?;
    let y = resolve(&query.predictor)?;
    let z = resolve(&query.conditioning)?;
    let lags = query.lags;
    let r = if query.is_conditional() { lags.r } else { 0 };

    // (variable, lag) for every coordinate: target first, then X⁻, Y⁻, Z⁻
    let mut coords: Vec<(usize, usize)> = x.iter().map(|&v| (v, 0)).collect();
    let mut labels = Vec::new();
    let mut push_block = |vars: &[usize], count: usize, coords: &mut Vec<(usize, usize)>| {
        for lag in 1..=count {
            for &v in vars {
                coords.push((v, lag));
                labels.push(format!("{}(t-{lag})", model.names[v]));
            }
        }
    };
    push_block(&x, lags.p, &mut coords);
    push_block(&y, lags.q, &mut coords);
    push_block(&z, r, &mut coords);

    let max_lag = query.max_lag();
    let gammas = stationary_autocov(model, max_lag)?;
    // Cov(V(t−a), W(t−b)) = Γ_{b−a}[V][W] for b ≥ a, Γ_{a−b}[W][V] otherwise
    let joint = DMatrix::from_fn(coords.len(), coords.len(), |i, j| {
        let (vi, ai) = coords[i];
        let (vj, aj) = coords[j];
        if aj >= ai {
            gammas[aj - ai][(vi, vj)]
        } else {
            gammas[ai - aj][(vj, vi)]
        }
    });
    let cx = lags.p * x.len();
    let cy = lags.q * y.len();
    let cz = r * z.len();
    let restricted: Vec<usize> = (0..cx).chain(cx + cy..cx + cy + cz).collect();
    PredictiveCovariances::from_joint(SpdMatrix::semidefinite(joint)?, x.len(), restricted, labels)
}

pub fn analytic_causality(model: &VarModel, query: &CausalityQuery) -> Result<AnalyticCausality> {
    let covariances = population_covariances(model, query)?;
    let (restricted_residual, full_residual) = covariances.residual_covariances()?;
    Ok(AnalyticCausality {
        gc: granger_causality(&restricted_residual, &full_residual)?,
        te: transfer_entropy_gaussian(&restricted_residual, &full_residual)?,
        restricted_residual,
        full_residual,
        covariances,
    })
}

/// Population Granger causality of `query` under `model`.
pub fn analytic_granger(model: &VarModel, query: &CausalityQuery) -> Result<f64> {
    Ok(analytic_causality(model, query)?.gc)
}

/// Contents of a model description file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: VarModel,
    pub seed: Option<u64>,
}

fn parse_reals(line: usize, key: &str, value: &str, expected: usize) -> Result<Vec<f64>> {
    let vals = value
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("{key}: {s:?} is not a finite number"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != expected {
        return Err(Error::Parse {
            line,
            message: format!("{key}: expected {expected} values, found {}", vals.len()),
        });
    }
    Ok(vals)
}

impl ModelFile {
    /// Parses the `key = value` model format.
    ///
    /// ```text
    /// # bivariate VAR(1)
    /// dim = 2
    /// order = 1
    /// names = x y
    /// seed = 7
    /// a1 = 0.5 0.4 0 0.7
    /// noise = 1 0 0 1
    /// ```
    ///
    /// Matrices are row-major; `names` and `seed` are optional.
    pub fn parse(text: &str) -> Result<ModelFile> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key {key:?}"),
                });
            }
            entries.push((i + 1, key, value.trim().to_string()));
        }
        let get = |key: &str| entries.iter().find(|(_, k, _)| k == key);
        let require = |key: &str| {
            get(key).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key {key:?}"),
            })
        };
        let parse_count = |key: &str| -> Result<usize> {
            let (line, _, v) = require(key)?;
            v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| Error::Parse {
                line: *line,
                message: format!("{key} must be a positive integer"),
            })
        };
        let dim = parse_count("dim")?;
        let order = parse_count("order")?;
        let mut known = vec!["dim".to_string(), "order".into(), "names".into(), "seed".into(), "noise".into()];
        let mut blocks = Vec::with_capacity(order);
        for i in 1..=order {
            let key = format!("a{i}");
            let (line, _, v) = require(&key)?;
            let vals = parse_reals(*line, &key, v, dim * dim)?;
            blocks.push(DMatrix::from_row_slice(dim, dim, &vals));
            known.push(key);
        }
        if let Some((line, k, _)) = entries.iter().find(|(_, k, _)| !known.contains(k)) {
            return Err(Error::Parse {
                line: *line,
                message: format!("unknown key {k:?}"),
            });
        }
        let (line, _, v) = require("noise")?;
        let noise_vals = parse_reals(*line, "noise", v, dim * dim)?;
        let noise = SpdMatrix::new(DMatrix::from_row_slice(dim, dim, &noise_vals)).map_err(|e| Error::Parse {
            line: *line,
            message: format!("noise covariance: {e}"),
        })?;
        let names = match get("names") {
            Some((line, _, v)) => {
                let names: Vec<String> = v.split_whitespace().map(str::to_string).collect();
                if names.len() != dim {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("expected {dim} names, found {}", names.len()),
                    });
                }
                names
            }
            None => (1..=dim).map(|i| format!("v{i}")).collect(),
        };
        let seed = match get("seed") {
            Some((line, _, v)) => Some(v.parse::<u64>().map_err(|_| Error::Parse {
                line: *line,
                message: "seed must be an unsigned integer".into(),
            })?),
            None => None,
        };
        Ok(ModelFile {
            model: VarModel::new(blocks, noise, names)?,
            seed,
        })
    }

    /// Writes the model in the format accepted by [`ModelFile::parse`]; values
    /// use the shortest decimal form that round-trips.
    pub fn format(&self) -> String {
        let m = &self.model;
        let row_major = |a: &DMatrix<f64>| {
            (0..a.nrows())
                .flat_map(|r| (0..a.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| a[(r, c)].to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "dim = {}", m.dim());
        let _ = writeln!(out, "order = {}", m.order());
        let _ = writeln!(out, "names = {}", m.names.join(" "));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        for (i, a) in m.coeff_blocks.iter().enumerate() {
            let _ = writeln!(out, "a{} = {}", i + 1, row_major(a));
        }
        let _ = writeln!(out, "noise = {}", row_major(m.noise_cov.values()));
        out
    }
}
