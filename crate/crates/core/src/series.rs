//! Time-series panels, lagged designs and sample covariance estimation.
//!
//! Lag blocks are ordered most recent first: the columns for a block with
//! `k` lags are `V(t-1), V(t-2), ..., V(t-k)`, each spanning all components
//! of `V`. The full design concatenates predictee, predictor and
//! conditioning lags in that order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{CrossCovariance, SpdMatrix};

pub const MAX_LAG: usize = 100;

/// `T × n` panel of complete observations; row `t` is time step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl TimeSeriesPanel {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Shape("panel must have at least one row and one column".into()));
        }
        if names.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidArgument(format!("duplicate column name {name:?}")));
            }
        }
        for col in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(TimeSeriesPanel { values, names })
    }

    /// Panel with generated names `v1, v2, ...`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("v{i}")).collect();
        TimeSeriesPanel::new(values, names)
    }

    pub fn num_steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-panel with the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<TimeSeriesPanel> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::InvalidQuery(format!("no column named {:?}", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeSeriesPanel {
            values: self.values.select_columns(&idx),
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
        })
    }

    /// Cyclic rotation: row `t` of the result is row `(t + offset) mod T`.
    pub fn rotated(&self, offset: usize) -> TimeSeriesPanel {
        let t = self.num_steps();
        let values = DMatrix::from_fn(t, self.num_vars(), |r, c| self.values[((r + offset) % t, c)]);
        TimeSeriesPanel {
            values,
            names: self.names.clone(),
        }
    }

    /// Rows `start .. start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<TimeSeriesPanel> {
        if len == 0 || start + len > self.num_steps() {
            return Err(Error::Shape(format!(
                "window {start}..{} outside panel of {} rows",
                start + len,
                self.num_steps()
            )));
        }
        Ok(TimeSeriesPanel {
            values: self.values.rows(start, len).into_owned(),
            names: self.names.clone(),
        })
    }

    /// Reads a header row of names followed by one row per time step.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(Error::Parse {
                line: 1,
                message: "header must name every column".into(),
            });
        }
        let mut data = Vec::new();
        let mut rows = 0usize;
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 2;
            if record.len() != names.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", names.len(), record.len()),
                });
            }
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {:?}: {:?} is not a number", names[c], field),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("column {:?}: missing or non-finite value", names[c]),
                    });
                }
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::InsufficientData {
                what: "csv panel",
                required: 1,
                available: 0,
            });
        }
        let values = DMatrix::from_row_slice(rows, names.len(), &data);
        TimeSeriesPanel::new(values, names)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        TimeSeriesPanel::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the panel as CSV; values use the shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        let mut row = Vec::with_capacity(self.num_vars());
        for t in 0..self.num_steps() {
            row.clear();
            row.extend((0..self.num_vars()).map(|c| self.values[(t, c)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lag orders for predictee (`p`), predictor (`q`) and conditioning (`r`) blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl LagSpec {
    pub fn new(p: usize, q: usize, r: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidLags(format!("p and q must be at least 1 (p={p}, q={q})")));
        }
        if p > MAX_LAG || q > MAX_LAG || r > MAX_LAG {
            return Err(Error::InvalidLags(format!("lags must not exceed {MAX_LAG}")));
        }
        Ok(LagSpec { p, q, r })
    }

    /// Largest lag in use; `r` is ignored when there is no conditioning block.
    pub fn max_lag(&self, conditioned: bool) -> usize {
        let r = if conditioned { self.r } else { 0 };
        self.p.max(self.q).max(r)
    }
}

/// `X(t) ⌢ X(t-1) ⌢ … ⌢ X(t-lags+1)` for every `t` with a complete history.
pub fn lagged_embedding(panel: &TimeSeriesPanel, lags: usize) -> Result<DMatrix<f64>> {
    if lags == 0 {
        return Err(Error::InvalidLags("embedding needs at least one lag".into()));
    }
    let t = panel.num_steps();
    let required = if lags == 1 { 1 } else { lags + 1 };
    if t < required {
        return Err(Error::InsufficientData {
            what: "lagged embedding",
            required,
            available: t,
        });
    }
    let n = panel.num_vars();
    let rows = t - lags + 1;
    let v = panel.values();
    Ok(DMatrix::from_fn(rows, lags * n, |i, c| {
        let (lag, comp) = (c / n, c % n);
        v[(i + lags - 1 - lag, comp)]
    }))
}

/// Row-aligned target and regressor matrices for the restricted and full
/// predictive regressions.
#[derive(Debug, Clone)]
pub struct LaggedDesign {
    pub target: DMatrix<f64>,
    pub restricted_regressors: DMatrix<f64>,
    pub full_regressors: DMatrix<f64>,
    pub effective_rows: usize,
    /// Positions of the restricted columns inside `full_regressors`.
    pub restricted_columns: Vec<usize>,
    pub full_labels: Vec<String>,
    pub dims: BlockDims,
    pub lags: LagSpec,
}

/// Component counts of the predictee, predictor and conditioning blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

fn fill_lags(
    out: &mut DMatrix<f64>,
    first_col: usize,
    panel: &TimeSeriesPanel,
    lags: usize,
    start: usize,
) {
    let n = panel.num_vars();
    let v = panel.values();
    for lag in 1..=lags {
        for comp in 0..n {
            let col = first_col + (lag - 1) * n + comp;
            for i in 0..out.nrows() {
                out[(i, col)] = v[(start + i - lag, comp)];
            }
        }
    }
}

fn lag_labels(panel: &TimeSeriesPanel, lags: usize) -> Vec<String> {
    (1..=lags)
        .flat_map(|lag| panel.names().iter().map(move |n| format!("{n}(t-{lag})")))
        .collect()
}

/// Builds the designs for regressing `X(t)` on `X⁻⌢Z⁻` and on `X⁻⌢Y⁻⌢Z⁻`.
///
/// Both regressions share the window `t = m .. T-1` (0-based) with
/// `m = max(p, q, r)`.
pub fn build_designs(
    x: &TimeSeriesPanel,
    y: &TimeSeriesPanel,
    z: Option<&TimeSeriesPanel>,
    spec: LagSpec,
) -> Result<LaggedDesign> {
    let t = x.num_steps();
    if y.num_steps() != t || z.is_some_and(|z| z.num_steps() != t) {
        return Err(Error::Shape(format!(
            "panels disagree on length: x={}, y={}, z={:?}",
            t,
            y.num_steps(),
            z.map(|z| z.num_steps())
        )));
    }
    let r = if z.is_some() { spec.r } else { 0 };
    let lags = LagSpec { r, ..spec };
    let dims = BlockDims {
        x: x.num_vars(),
        y: y.num_vars(),
        z: z.map_or(0, |z| z.num_vars()),
    };
    let m = lags.max_lag(z.is_some());
    let required = (dims.x + dims.y + dims.z) * m + 2;
    if t < required {
        return Err(Error::InsufficientData {
            what: "lagged regression",
            required,
            available: t,
        });
    }
    let rows = t - m;
    let (cx, cy, cz) = (lags.p * dims.x, lags.q * dims.y, r * dims.z);

    let target = x.values().rows(m, rows).into_owned();
    let mut full = DMatrix::zeros(rows, cx + cy + cz);
    fill_lags(&mut full, 0, x, lags.p, m);
    fill_lags(&mut full, cx, y, lags.q, m);
    let mut full_labels = lag_labels(x, lags.p);
    full_labels.extend(lag_labels(y, lags.q));
    if let Some(z) = z {
        fill_lags(&mut full, cx + cy, z, r, m);
        full_labels.extend(lag_labels(z, r));
    }
    let restricted_columns: Vec<usize> = (0..cx).chain(cx + cy..cx + cy + cz).collect();
    let restricted = full.select_columns(&restricted_columns);
    Ok(LaggedDesign {
        target,
        restricted_regressors: restricted,
        full_regressors: full,
        effective_rows: rows,
        restricted_columns,
        full_labels,
        dims,
        lags,
    })
}

const CHUNK_ROWS: usize = 4096;
const PARALLEL_MIN_ROWS: usize = 1 << 16;

/// Means and `N`-denominator covariance of the column-concatenation of
/// `blocks` (all with the same number of rows).
///
/// Cross products are accumulated over fixed row chunks and summed in chunk
/// order, so the result does not depend on the execution mode.
pub fn joint_sample_cov(blocks: &[&DMatrix<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != n) {
        return Err(Error::Shape("blocks are not row-aligned".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "sample covariance",
            required: 2,
            available: n,
        });
    }
    let widths: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let k: usize = widths.iter().sum();
    let column = |j: usize| -> (&DMatrix<f64>, usize) {
        let mut j = j;
        for (b, &w) in blocks.iter().zip(&widths) {
            if j < w {
                return (b, j);
            }
            j -= w;
        }
        unreachable!()
    };
    let means = DVector::from_fn(k, |j, _| {
        let (b, c) = column(j);
        b.column(c).iter().sum::<f64>() / n as f64
    });
    let chunks = n.div_ceil(CHUNK_ROWS);
    let exec = if n >= PARALLEL_MIN_ROWS {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let partials = map_indexed(chunks, exec, |ci| {
        let start = ci * CHUNK_ROWS;
        let len = CHUNK_ROWS.min(n - start);
        let mut centered = DMatrix::zeros(len, k);
        for j in 0..k {
            let (b, c) = column(j);
            let src = b.column(c);
            let mu = means[j];
            for i in 0..len {
                centered[(i, j)] = src[start + i] - mu;
            }
        }
        centered.tr_mul(&centered)
    });
    let mut acc = DMatrix::zeros(k, k);
    for p in &partials {
        acc += p;
    }
    acc /= n as f64;
    Ok((means, crate::linalg::symmetrize(&acc)))
}

/// Column means and `N`-denominator covariance of `a`.
pub fn sample_mean_cov(a: &DMatrix<f64>) -> Result<(DVector<f64>, SpdMatrix)> {
    let (means, cov) = joint_sample_cov(&[a])?;
    Ok((means, SpdMatrix::semidefinite(cov)?))
}

/// Column means of `a` and `b` and their `N`-denominator cross-covariance.
pub fn sample_cross_cov(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>, CrossCovariance)> {
    let (means, cov) = joint_sample_cov(&[a, b])?;
    let (na, nb) = (a.ncols(), b.ncols());
    Ok((
        means.rows(0, na).into_owned(),
        means.rows(na, nb).into_owned(),
        CrossCovariance::new(cov.view((0, na), (na, nb)).into_owned())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> TimeSeriesPanel {
        TimeSeriesPanel::unnamed(DMatrix::from_fn(rows, cols, f)).unwrap()
    }

    #[test]
    fn univariate_embedding() {
        let p = panel(4, 1, |t, _| (t + 1) as f64);
        let e = lagged_embedding(&p, 2).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(3, 2, &[2.0, 1.0, 3.0, 2.0, 4.0, 3.0]));
    }

    #[test]
    fn single_lag_embedding_is_identity() {
        let p = panel(5, 2, |t, c| (t * 10 + c) as f64);
        assert_eq!(&lagged_embedding(&p, 1).unwrap(), p.values());
    }

    #[test]
    fn bivariate_embedding_column_order() {
        let p = panel(3, 2, |t, c| (t * 10 + c) as f64);
        let e = lagged_embedding(&p, 2).unwrap();
        // (X_t1, X_t2, X_{t-1}1, X_{t-1}2) at t = 1
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![10.0, 11.0, 0.0, 1.0]);
    }

    #[test]
    fn embedding_needs_rows() {
        let p = panel(2, 1, |t, _| t as f64);
        assert!(matches!(
            lagged_embedding(&p, 2),
            Err(Error::InsufficientData { required: 3, .. })
        ));
    }

    #[test]
    fn unconditional_design_has_only_x_lags_in_restricted() {
        let x = panel(20, 1, |t, _| t as f64);
        let y = panel(20, 2, |t, c| (100 * (c + 1) + t) as f64);
        let d = build_designs(&x, &y, None, LagSpec::new(2, 3, 4).unwrap()).unwrap();
        assert_eq!(d.lags.r, 0);
        assert_eq!(d.effective_rows, 17);
        assert_eq!(d.restricted_regressors.ncols(), 2);
        assert_eq!(d.full_regressors.ncols() - d.restricted_regressors.ncols(), 3 * 2);
    }

    #[test]
    fn rows_are_time_aligned() {
        // every variable carries its own time stamp
        let x = panel(30, 1, |t, _| t as f64);
        let y = panel(30, 1, |t, _| t as f64 + 0.25);
        let z = panel(30, 1, |t, _| t as f64 + 0.5);
        let d = build_designs(&x, &y, Some(&z), LagSpec::new(2, 1, 3).unwrap()).unwrap();
        for i in 0..d.effective_rows {
            let t = d.target[(i, 0)];
            assert_eq!(t, (i + 3) as f64);
            let row: Vec<f64> = d.full_regressors.row(i).iter().copied().collect();
            assert_eq!(row, vec![t - 1.0, t - 2.0, t - 1.0 + 0.25, t - 1.0 + 0.5, t - 2.0 + 0.5, t - 3.0 + 0.5]);
        }
        assert_eq!(d.full_labels[2], "v1(t-1)");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let x = panel(30, 1, |t, _| t as f64);
        let y = panel(29, 1, |t, _| t as f64);
        assert!(matches!(
            build_designs(&x, &y, None, LagSpec::new(1, 1, 0).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn lag_spec_bounds() {
        assert!(LagSpec::new(0, 1, 0).is_err());
        assert!(LagSpec::new(1, 0, 0).is_err());
        assert!(LagSpec::new(1, 1, 101).is_err());
        assert!(LagSpec::new(100, 100, 100).is_ok());
    }

    #[test]
    fn constant_column_has_zero_variance() {
        let a = DMatrix::from_fn(10, 2, |t, c| if c == 0 { 3.0 } else { t as f64 });
        let (means, cov) = sample_mean_cov(&a).unwrap();
        assert_eq!(means[0], 3.0);
        assert_eq!(cov.values()[(0, 0)], 0.0);
        assert!(cov.is_degenerate());
    }

    #[test]
    fn ml_denominator() {
        let a = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let (_, cov) = sample_mean_cov(&a).unwrap();
        assert_eq!(cov.values()[(0, 0)], 1.0);
    }

    #[test]
    fn too_few_rows_for_covariance() {
        let a = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert!(matches!(sample_mean_cov(&a), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn chunked_covariance_matches_naive() {
        let n = 10_000;
        let a = DMatrix::from_fn(n, 3, |t, c| ((t * (c + 3)) % 17) as f64 + (t as f64).sin());
        let (_, cov) = sample_mean_cov(&a).unwrap();
        let mean = a.row_mean();
        let centered = DMatrix::from_fn(n, 3, |i, j| a[(i, j)] - mean[j]);
        let naive = centered.tr_mul(&centered) / n as f64;
        assert!((cov.values() - naive).abs().max() < 1e-10);
    }

    #[test]
    fn csv_round_trip() {
        let text = "a, b\n1.5,2\n-3e-2,4\n";
        let p = TimeSeriesPanel::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(p.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(p.values()[(1, 0)], -0.03);
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        assert_eq!(TimeSeriesPanel::from_csv_reader(out.as_slice()).unwrap(), p);
    }

    #[test]
    fn csv_rejects_missing_values() {
        let err = TimeSeriesPanel::from_csv_reader("a,b\n1,\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = TimeSeriesPanel::from_csv_reader("a,b\n1,nan\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn rotation_wraps() {
        let p = panel(5, 1, |t, _| t as f64);
        let r = p.rotated(2);
        assert_eq!(r.values().column(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn swapping_predictor_into_conditioning_permutes_columns(
            q in 1usize..4, r in 1usize..4, p in 1usize..3, seed in 0u64..1000
        ) {
            let x = panel(60, 1, |t, _| ((t as u64 * 31 + seed) % 97) as f64);
            let y = panel(60, 2, |t, c| ((t as u64 * 17 + c as u64 * 5 + seed) % 89) as f64);
            let z = panel(60, 1, |t, _| ((t as u64 * 13 + seed) % 83) as f64);
            let a = build_designs(&x, &y, Some(&z), LagSpec::new(p, q, r).unwrap()).unwrap();
            let b = build_designs(&x, &z, Some(&y), LagSpec::new(p, r, q).unwrap()).unwrap();
            prop_assert_eq!(a.effective_rows, b.effective_rows);
            let mut ca: Vec<Vec<u64>> = a.full_regressors.column_iter()
                .map(|c| c.iter().map(|v| v.to_bits()).collect()).collect();
            let mut cb: Vec<Vec<u64>> = b.full_regressors.column_iter()
                .map(|c| c.iter().map(|v| v.to_bits()).collect()).collect();
            ca.sort();
            cb.sort();
            prop_assert_eq!(ca, cb);
        }
    }
}
