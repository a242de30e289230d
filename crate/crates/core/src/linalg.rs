//! Dense symmetric positive-definite linear algebra.
//!
//! Everything that needs `Σ⁻¹` goes through a Cholesky factor and triangular
//! substitution; no routine in this module forms an explicit inverse.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Absolute tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A Cholesky pivot at or below this fraction of its diagonal entry is
/// treated as zero (a direction with no residual variance).
pub const DEGENERATE_PIVOT: f64 = 1e-14;

/// Lower-triangular Cholesky factor `M = L Lᵀ`.
///
/// The squared diagonal entries (`pivots`) are kept alongside `L` so that
/// `ln|M| = Σ ln pivotᵢ` can be evaluated without a square root round trip.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: DMatrix<f64>,
    pivots: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PivotFailure {
    /// Pivot is numerically zero relative to its diagonal entry.
    Degenerate { index: usize, value: f64 },
    /// Pivot is clearly negative; the matrix is indefinite.
    Negative { index: usize, value: f64 },
}

impl PivotFailure {
    pub(crate) fn index(&self) -> usize {
        match *self {
            PivotFailure::Degenerate { index, .. } | PivotFailure::Negative { index, .. } => index,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            PivotFailure::Degenerate { value, .. } | PivotFailure::Negative { value, .. } => value,
        }
    }
}

impl Cholesky {
    pub(crate) fn factor(m: &DMatrix<f64>) -> std::result::Result<Self, PivotFailure> {
        let n = m.nrows();
        let mut lower = DMatrix::<f64>::zeros(n, n);
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= lower[(j, k)] * lower[(j, k)];
            }
            let scale = m[(j, j)].abs();
            if !d.is_finite() || d <= DEGENERATE_PIVOT * scale {
                return Err(if d < -DEGENERATE_PIVOT * scale.max(1.0) || d.is_nan() {
                    PivotFailure::Negative { index: j, value: d }
                } else {
                    PivotFailure::Degenerate { index: j, value: d }
                });
            }
            let diag = d.sqrt();
            lower[(j, j)] = diag;
            pivots.push(d);
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= lower[(i, k)] * lower[(j, k)];
                }
                lower[(i, j)] = s / diag;
            }
        }
        Ok(Cholesky { lower, pivots })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Squared diagonal of `L`, i.e. the successive Schur-complement pivots.
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn logdet(&self) -> f64 {
        self.pivots.iter().map(|d| d.ln()).sum()
    }

    /// Solves `L W = B` by forward substitution.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.lower.nrows();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let mut w = b.clone();
        for c in 0..w.ncols() {
            for i in 0..n {
                let mut s = w[(i, c)];
                for k in 0..i {
                    s -= self.lower[(i, k)] * w[(k, c)];
                }
                w[(i, c)] = s / self.lower[(i, i)];
            }
        }
        w
    }

    /// Solves `M X = B` with `M = L Lᵀ`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.lower.nrows();
        let mut x = self.solve_lower(b);
        for c in 0..x.ncols() {
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lower[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lower[(i, i)];
            }
        }
        x
    }

    /// Ratio of the largest to the smallest pivot; a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let max = self.pivots.iter().cloned().fold(0.0, f64::max);
        let min = self.pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Full(Cholesky),
    Degenerate { pivot: usize },
}

/// Symmetric covariance matrix with its Cholesky factor.
///
/// [`SpdMatrix::new`] insists on strict positive definiteness.
/// [`SpdMatrix::semidefinite`] additionally accepts matrices with a zero
/// residual direction (e.g. a partial covariance of an exactly predictable
/// block); those report it through [`SpdMatrix::degenerate_pivot`] and refuse
/// any operation that needs the factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    values: DMatrix<f64>,
    factor: Factor,
}

fn check_symmetric(values: &DMatrix<f64>) -> Result<()> {
    if values.nrows() != values.ncols() {
        return Err(Error::Shape(format!(
            "covariance must be square, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.nrows() == 0 {
        return Err(Error::Shape("covariance must have positive dimension".into()));
    }
    let n = values.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = values[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if j > i {
                let gap = (v - values[(j, i)]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(Error::Asymmetric { row: i, col: j, gap });
                }
            }
        }
    }
    Ok(())
}

/// Returns `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SpdMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values)?;
        let values = symmetrize(&values);
        match Cholesky::factor(&values) {
            Ok(chol) => Ok(SpdMatrix {
                values,
                factor: Factor::Full(chol),
            }),
            Err(f) => Err(Error::NotPositiveDefinite {
                pivot: f.index(),
                value: f.value(),
            }),
        }
    }

    pub fn semidefinite(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values)?;
        let values = symmetrize(&values);
        let factor = match Cholesky::factor(&values) {
            Ok(chol) => Factor::Full(chol),
            Err(PivotFailure::Degenerate { index, .. }) => Factor::Degenerate { pivot: index },
            Err(PivotFailure::Negative { index, value }) => {
                return Err(Error::NotPositiveDefinite { pivot: index, value })
            }
        };
        Ok(SpdMatrix { values, factor })
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        SpdMatrix::new(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn degenerate_pivot(&self) -> Option<usize> {
        match self.factor {
            Factor::Full(_) => None,
            Factor::Degenerate { pivot } => Some(pivot),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_pivot().is_some()
    }

    pub fn cholesky(&self) -> Result<&Cholesky> {
        match &self.factor {
            Factor::Full(chol) => Ok(chol),
            Factor::Degenerate { pivot } => Err(Error::NotPositiveDefinite {
                pivot: *pivot,
                value: 0.0,
            }),
        }
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// Principal submatrix on the given (ordered) indices.
    pub fn principal(&self, indices: &[usize]) -> Result<SpdMatrix> {
        let m = DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
            self.values[(indices[i], indices[j])]
        });
        SpdMatrix::semidefinite(m)
    }
}

/// Rectangular cross-covariance block `Σ(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCovariance {
    values: DMatrix<f64>,
}

impl CrossCovariance {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape("cross-covariance must be non-empty".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k % values.nrows(),
                col: k / values.nrows(),
            });
        }
        Ok(CrossCovariance { values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CrossCovariance {
            values: DMatrix::zeros(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// `ln|m|` from the Cholesky pivots.
pub fn logdet(m: &SpdMatrix) -> Result<f64> {
    Ok(m.cholesky()?.logdet())
}

fn check_blocks(sxx: &SpdMatrix, sxy: &CrossCovariance, syy: &SpdMatrix) -> Result<()> {
    if sxy.rows() != sxx.dim() || sxy.cols() != syy.dim() {
        return Err(Error::Shape(format!(
            "cross-covariance is {}x{}, expected {}x{}",
            sxy.rows(),
            sxy.cols(),
            sxx.dim(),
            syy.dim()
        )));
    }
    Ok(())
}

/// Partial covariance `Σ(X) − Σ(X,Y) Σ(Y)⁻¹ Σ(X,Y)ᵀ`.
///
/// A result with a zero residual direction is returned as a degenerate
/// [`SpdMatrix`] rather than an error.
pub fn partial_covariance(
    sxx: &SpdMatrix,
    sxy: &CrossCovariance,
    syy: &SpdMatrix,
) -> Result<SpdMatrix> {
    check_blocks(sxx, sxy, syy)?;
    let chol = match &syy.factor {
        Factor::Full(chol) => chol,
        Factor::Degenerate { pivot } => return Err(Error::SingularConditioner { pivot: *pivot }),
    };
    // W = L⁻¹ Σ(X,Y)ᵀ, so Σ(X,Y) Σ(Y)⁻¹ Σ(X,Y)ᵀ = Wᵀ W
    let w = chol.solve_lower(&sxy.values.transpose());
    let explained = w.tr_mul(&w);
    let residual = symmetrize(&(&sxx.values - explained));
    SpdMatrix::semidefinite(residual)
}

/// Block matrix `[[Σ(X), Σ(X,Y)], [Σ(X,Y)ᵀ, Σ(Y)]]`.
pub fn joint_covariance(
    sxx: &SpdMatrix,
    sxy: &CrossCovariance,
    syy: &SpdMatrix,
) -> Result<SpdMatrix> {
    check_blocks(sxx, sxy, syy)?;
    let (n, m) = (sxx.dim(), syy.dim());
    let mut joint = DMatrix::zeros(n + m, n + m);
    joint.view_mut((0, 0), (n, n)).copy_from(&sxx.values);
    joint.view_mut((n, n), (m, m)).copy_from(&syy.values);
    joint.view_mut((0, n), (n, m)).copy_from(&sxy.values);
    joint
        .view_mut((n, 0), (m, n))
        .copy_from(&sxy.values.transpose());
    SpdMatrix::new(joint)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalue iteration, used only as an independent oracle.
    pub(crate) fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    pub(crate) fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn random_blocks(rng: &mut impl Rng, n: usize, m: usize) -> (SpdMatrix, CrossCovariance, SpdMatrix) {
        let joint = random_spd(rng, n + m);
        let sxx = SpdMatrix::new(joint.view((0, 0), (n, n)).into_owned()).unwrap();
        let syy = SpdMatrix::new(joint.view((n, n), (m, m)).into_owned()).unwrap();
        let sxy = CrossCovariance::new(joint.view((0, n), (n, m)).into_owned()).unwrap();
        (sxx, sxy, syy)
    }

    #[test]
    fn partial_covariance_of_unit_correlation() {
        let one = SpdMatrix::identity(1);
        let sxy = CrossCovariance::new(DMatrix::from_element(1, 1, 0.6)).unwrap();
        let pc = partial_covariance(&one, &sxy, &one).unwrap();
        assert_relative_eq!(pc.values()[(0, 0)], 0.64, epsilon = 1e-15);
    }

    #[test]
    fn zero_cross_covariance_returns_sxx_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (sxx, _, syy) = random_blocks(&mut rng, 3, 2);
        let pc = partial_covariance(&sxx, &CrossCovariance::zeros(3, 2), &syy).unwrap();
        assert_eq!(pc.values(), sxx.values());
    }

    #[test]
    fn singular_conditioner_reports_pivot() {
        let syy = SpdMatrix::semidefinite(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(syy.degenerate_pivot(), Some(1));
        let sxx = SpdMatrix::identity(1);
        let sxy = CrossCovariance::new(DMatrix::from_row_slice(1, 2, &[0.1, 0.1])).unwrap();
        match partial_covariance(&sxx, &sxy, &syy) {
            Err(Error::SingularConditioner { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perfectly_predictable_block_is_flagged_degenerate() {
        let one = SpdMatrix::identity(1);
        let sxy = CrossCovariance::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let pc = partial_covariance(&one, &sxy, &one).unwrap();
        assert!(pc.is_degenerate());
        assert!(logdet(&pc).is_err());
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet(&SpdMatrix::identity(4)).unwrap(), 0.0);
        let d = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(logdet(&d).unwrap(), 6f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn logdet_matches_jacobi_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [5, 12, 30, 50] {
            let m = random_spd(&mut rng, n);
            let expected: f64 = jacobi_eigenvalues(&m).iter().map(|l| l.ln()).sum();
            let got = logdet(&SpdMatrix::new(m).unwrap()).unwrap();
            assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "n={n}: {got} vs {expected}");
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdMatrix::new(m.clone()), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
        assert!(matches!(SpdMatrix::semidefinite(m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2 + 1e-9, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn joint_of_identity_blocks() {
        let one = SpdMatrix::identity(1);
        let joint = joint_covariance(&one, &CrossCovariance::zeros(1, 1), &one).unwrap();
        assert_eq!(joint.values(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn singular_joint_fails_construction() {
        let one = SpdMatrix::identity(1);
        let sxy = CrossCovariance::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(joint_covariance(&one, &sxy, &one).is_err());
    }

    #[test]
    fn joint_rejects_shape_mismatch() {
        let sxx = SpdMatrix::identity(2);
        let syy = SpdMatrix::identity(1);
        assert!(matches!(
            joint_covariance(&sxx, &CrossCovariance::zeros(1, 1), &syy),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cholesky_solve_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_spd(&mut rng, 6);
        let spd = SpdMatrix::new(m.clone()).unwrap();
        let b = DMatrix::from_fn(6, 2, |i, j| (i + 3 * j) as f64);
        let x = spd.cholesky().unwrap().solve(&b);
        assert!((m * x - b).abs().max() < 1e-10);
    }

    proptest! {
        #[test]
        fn block_determinant_identity(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sxx, sxy, syy) = random_blocks(&mut rng, n, m);
            let joint = joint_covariance(&sxx, &sxy, &syy).unwrap();
            let lhs = logdet(&joint).unwrap();
            let rhs = logdet(&syy).unwrap() + logdet(&partial_covariance(&sxx, &sxy, &syy).unwrap()).unwrap();
            prop_assert!(((lhs - rhs).exp() - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn conditioning_on_more_never_increases_determinant(seed in any::<u64>(), n in 1usize..4, m in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sxx, sxy, syy) = random_blocks(&mut rng, n, m);
            let sub: Vec<usize> = (0..m - 1).collect();
            let syy_sub = syy.principal(&sub).unwrap();
            let sxy_sub = CrossCovariance::new(sxy.values().columns(0, m - 1).into_owned()).unwrap();
            let nested = logdet(&partial_covariance(&sxx, &sxy_sub, &syy_sub).unwrap()).unwrap();
            let full = logdet(&partial_covariance(&sxx, &sxy, &syy).unwrap()).unwrap();
            prop_assert!(full <= nested + 1e-12);
        }
    }
}
