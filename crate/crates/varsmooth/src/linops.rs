//! Linear operators: apply/adjoint pairs with an operator-norm upper bound
//! and, for surjective operators, a least-norm correction through the
//! pseudoinverse `A^+ = A^T (A A^T)^{-1}`.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Dyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type DenseCholesky = nalgebra::linalg::Cholesky<f64, Dyn>;

/// Structural description of the operator.
#[derive(Debug, Clone)]
pub enum OperatorKind {
    Identity { dim: usize },
    Dense { matrix: DMatrix<f64> },
    /// Forward differences on an H x W row-major image, no wraparound.
    /// Output ordering is fixed: all H*(W-1) horizontal differences
    /// (row-major), then all (H-1)*W vertical differences (row-major).
    Grad2D { height: usize, width: usize },
    Scaled { alpha: f64, inner: Box<LinearOperator> },
}

/// A linear map `A: R^d -> R^n`. Immutable after construction; `apply` and
/// `adjoint_apply` are pure and safe to call concurrently.
pub struct LinearOperator {
    kind: OperatorKind,
    norm_est: f64,
    gram_cholesky: OnceLock<Option<DenseCholesky>>,
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearOperator")
            .field("kind", &self.kind)
            .field("norm_est", &self.norm_est)
            .finish()
    }
}

impl Clone for LinearOperator {
    fn clone(&self) -> Self {
        LinearOperator {
            kind: self.kind.clone(),
            norm_est: self.norm_est,
            gram_cholesky: OnceLock::new(),
        }
    }
}

impl LinearOperator {
    pub fn identity(dim: usize) -> Self {
        LinearOperator {
            kind: OperatorKind::Identity { dim },
            norm_est: 1.0,
            gram_cholesky: OnceLock::new(),
        }
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Config("dense operator must be nonempty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("dense operator has non-finite entries".into()));
        }
        // The exact spectral norm, nudged up so the cached value is a true
        // upper bound; step sizes derived from it stay valid.
        let norm = matrix.clone().svd(false, false).singular_values.max();
        Ok(LinearOperator {
            kind: OperatorKind::Dense { matrix },
            norm_est: norm * (1.0 + 1e-10),
            gram_cholesky: OnceLock::new(),
        })
    }

    /// Reads a dense operator from a header-free, row-major CSV file.
    pub fn dense_from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line
                .split(',')
                .map(|cell| cell.trim().parse::<f64>())
                .collect();
            let row = row.map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), lineno + 1))
            })?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Config(format!(
                        "{}: ragged row at line {}",
                        path.display(),
                        lineno + 1
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Config(format!("{}: empty matrix", path.display())));
        }
        let (nr, nc) = (rows.len(), rows[0].len());
        Self::dense(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    /// Discrete gradient of an `height x width` image; maps `d = H*W` to
    /// `n = H*(W-1) + (H-1)*W`.
    pub fn grad2d(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::Config(format!(
                "grad2d needs height, width >= 2, got {height}x{width}"
            )));
        }
        // Largest eigenvalue of A^T A for the forward-difference operator:
        // 4 sin^2((W-1)pi/2W) + 4 sin^2((H-1)pi/2H), strictly below 8.
        let ev = |m: usize| {
            let s = ((m as f64 - 1.0) * std::f64::consts::PI / (2.0 * m as f64)).sin();
            4.0 * s * s
        };
        let norm = (ev(width) + ev(height)).sqrt();
        Ok(LinearOperator {
            kind: OperatorKind::Grad2D { height, width },
            norm_est: norm,
            gram_cholesky: OnceLock::new(),
        })
    }

    pub fn scaled(alpha: f64, inner: LinearOperator) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Config(format!("scale factor must be finite, got {alpha}")));
        }
        let norm = alpha.abs() * inner.norm_est;
        Ok(LinearOperator {
            kind: OperatorKind::Scaled {
                alpha,
                inner: Box::new(inner),
            },
            norm_est: norm,
            gram_cholesky: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// `(n, d)`: output and input dimension.
    pub fn shape(&self) -> (usize, usize) {
        match &self.kind {
            OperatorKind::Identity { dim } => (*dim, *dim),
            OperatorKind::Dense { matrix } => (matrix.nrows(), matrix.ncols()),
            OperatorKind::Grad2D { height, width } => {
                (height * (width - 1) + (height - 1) * width, height * width)
            }
            OperatorKind::Scaled { inner, .. } => inner.shape(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.shape().0
    }

    /// Cached upper estimate of the operator norm `||A||`.
    pub fn norm_est(&self) -> f64 {
        self.norm_est
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, d) = self.shape();
        if x.len() != d {
            return Err(Error::Dimension {
                context: "operator apply",
                expected: d,
                got: x.len(),
            });
        }
        Ok(match &self.kind {
            OperatorKind::Identity { .. } => x.clone(),
            OperatorKind::Dense { matrix } => matrix * x,
            OperatorKind::Grad2D { height, width } => {
                let (h, w) = (*height, *width);
                let mut out = DVector::zeros(n);
                let nh = h * (w - 1);
                for i in 0..h {
                    for j in 0..w - 1 {
                        out[i * (w - 1) + j] = x[i * w + j + 1] - x[i * w + j];
                    }
                }
                for i in 0..h - 1 {
                    for j in 0..w {
                        out[nh + i * w + j] = x[(i + 1) * w + j] - x[i * w + j];
                    }
                }
                out
            }
            OperatorKind::Scaled { alpha, inner } => inner.apply(x)? * *alpha,
        })
    }

    /// `A^T y`; for the discrete gradient this is the negative divergence.
    pub fn adjoint_apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, d) = self.shape();
        if y.len() != n {
            return Err(Error::Dimension {
                context: "operator adjoint",
                expected: n,
                got: y.len(),
            });
        }
        Ok(match &self.kind {
            OperatorKind::Identity { .. } => y.clone(),
            OperatorKind::Dense { matrix } => matrix.transpose() * y,
            OperatorKind::Grad2D { height, width } => {
                let (h, w) = (*height, *width);
                let mut out = DVector::zeros(d);
                let nh = h * (w - 1);
                for i in 0..h {
                    for j in 0..w - 1 {
                        let v = y[i * (w - 1) + j];
                        out[i * w + j] -= v;
                        out[i * w + j + 1] += v;
                    }
                }
                for i in 0..h - 1 {
                    for j in 0..w {
                        let v = y[nh + i * w + j];
                        out[i * w + j] -= v;
                        out[(i + 1) * w + j] += v;
                    }
                }
                out
            }
            OperatorKind::Scaled { alpha, inner } => inner.adjoint_apply(y)? * *alpha,
        })
    }

    /// Smallest singular value, available for operators that can back the
    /// surjective correction.
    pub fn smallest_singular_value(&self) -> Result<f64> {
        match &self.kind {
            OperatorKind::Identity { .. } => Ok(1.0),
            OperatorKind::Dense { matrix } => {
                Ok(matrix.clone().svd(false, false).singular_values.min())
            }
            OperatorKind::Scaled { alpha, inner } => {
                Ok(alpha.abs() * inner.smallest_singular_value()?)
            }
            OperatorKind::Grad2D { .. } => Err(Error::Unsupported(
                "grad2d has a nontrivial null space; no useful smallest singular value".into(),
            )),
        }
    }

    fn gram_cholesky(&self) -> Option<&DenseCholesky> {
        self.gram_cholesky
            .get_or_init(|| match &self.kind {
                OperatorKind::Dense { matrix } => {
                    let gram = matrix * matrix.transpose();
                    let chol = DenseCholesky::new(gram)?;
                    // a rank-deficient gram matrix can slip through with zero
                    // (or NaN) pivots; reject those factorizations
                    let l = chol.l_dirty();
                    let mut min = f64::INFINITY;
                    let mut max: f64 = 0.0;
                    for i in 0..l.nrows() {
                        let v = l[(i, i)];
                        if !v.is_finite() {
                            return None;
                        }
                        min = min.min(v);
                        max = max.max(v);
                    }
                    (min > max * 1e-10 && max > 0.0).then_some(chol)
                }
                _ => None,
            })
            .as_ref()
    }

    /// Least-norm correction: the minimizer of `||x - x'||` subject to
    /// `A x' = z`, computed as `x - A^T (A A^T)^{-1} (A x - z)`.
    ///
    /// Requires a surjective operator; the `A A^T` factorization is computed
    /// once and cached. The result satisfies `A x* = z` up to the
    /// factorization's accuracy and `||x - x*|| <= ||A x - z|| / sigma_min(A)`.
    pub fn least_norm_correct(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, d) = self.shape();
        if x.len() != d {
            return Err(Error::Dimension {
                context: "least-norm correction input",
                expected: d,
                got: x.len(),
            });
        }
        if z.len() != n {
            return Err(Error::Dimension {
                context: "least-norm correction target",
                expected: n,
                got: z.len(),
            });
        }
        match &self.kind {
            OperatorKind::Identity { .. } => Ok(z.clone()),
            OperatorKind::Scaled { alpha, inner } => {
                if *alpha == 0.0 {
                    return Err(Error::Unsupported("zero-scaled operator is not surjective".into()));
                }
                inner.least_norm_correct(x, &(z / *alpha))
            }
            OperatorKind::Dense { matrix } => {
                let chol = self.gram_cholesky().ok_or_else(|| {
                    Error::Unsupported(
                        "A A^T is singular; operator is not surjective".into(),
                    )
                })?;
                let residual = matrix * x - z;
                let t = chol.solve(&residual);
                Ok(x - matrix.transpose() * t)
            }
            OperatorKind::Grad2D { .. } => Err(Error::Unsupported(
                "grad2d is never surjective (constants are in its null space)".into(),
            )),
        }
    }
}

/// Upper estimate of `||A||` by power iteration on `A^T A`: iterates until the
/// relative Rayleigh-quotient change drops below `tol`, then inflates the
/// result by `(1 + 10 tol)` so it upper-bounds the ratios `||Av||/||v||`.
pub fn estimate_norm(op: &LinearOperator, tol: f64) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    let d = op.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0_f64));
    let nv = v.norm();
    if nv == 0.0 {
        return Err(Error::Numeric("degenerate start vector".into()));
    }
    v /= nv;
    let mut rayleigh = 0.0_f64;
    for _ in 0..MAX_ITER {
        let w = op.apply(&v)?;
        let q = op.adjoint_apply(&w)?;
        let new = v.dot(&q); // = ||A v||^2 for unit v
        let qn = q.norm();
        if qn == 0.0 {
            return Ok(0.0); // v landed in the null space of a rank-deficient A
        }
        let change = (new - rayleigh).abs() / new.max(f64::MIN_POSITIVE);
        rayleigh = new;
        if change <= tol {
            return Ok(rayleigh.sqrt() * (1.0 + 10.0 * tol));
        }
        v = q / qn;
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge to tol={tol} within {MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_apply_and_adjoint() {
        let op = LinearOperator::identity(2);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.adjoint_apply(&x).unwrap(), x);
        assert_eq!(op.shape(), (2, 2));
    }

    #[test]
    fn dense_diagonal_apply() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let op = LinearOperator::dense(m).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(op.apply(&x).unwrap(), DVector::from_vec(vec![2.0, 3.0]));
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(
            op.adjoint_apply(&y).unwrap(),
            DVector::from_vec(vec![2.0, 6.0])
        );
    }

    #[test]
    fn grad2d_hand_computed_differences() {
        // image [[1,2],[3,4]]: horizontal diffs then vertical diffs
        let op = LinearOperator::grad2d(2, 2).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(op.shape(), (4, 4));
        assert_eq!(
            op.apply(&x).unwrap(),
            DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0])
        );
    }

    #[test]
    fn grad2d_shape() {
        let op = LinearOperator::grad2d(3, 5).unwrap();
        assert_eq!(op.shape(), (3 * 4 + 2 * 5, 15));
        assert!(LinearOperator::grad2d(1, 5).is_err());
    }

    #[test]
    fn adjoint_identity_holds_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let dense = LinearOperator::dense(DMatrix::from_fn(4, 7, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let ops = vec![
            LinearOperator::identity(6),
            dense,
            LinearOperator::grad2d(5, 4).unwrap(),
            LinearOperator::scaled(-2.5, LinearOperator::grad2d(3, 3).unwrap()).unwrap(),
        ];
        for op in &ops {
            let (n, d) = op.shape();
            for _ in 0..100 {
                let x = random_vec(&mut rng, d);
                let y = random_vec(&mut rng, n);
                let lhs = op.apply(&x).unwrap().dot(&y);
                let rhs = x.dot(&op.adjoint_apply(&y).unwrap());
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                assert!(
                    (lhs - rhs).abs() / scale <= 1e-12,
                    "adjoint identity broken: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn estimate_norm_identity_and_diagonal() {
        let id = LinearOperator::identity(5);
        assert_relative_eq!(estimate_norm(&id, 1e-9).unwrap(), 1.0, epsilon = 1e-6);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let op = LinearOperator::dense(m).unwrap();
        assert_relative_eq!(estimate_norm(&op, 1e-9).unwrap(), 3.0, epsilon = 1e-6);
        assert_relative_eq!(op.norm_est(), 3.0, epsilon = 1e-8);
    }

    #[test]
    fn grad2d_norm_below_classical_bound() {
        let op = LinearOperator::grad2d(32, 32).unwrap();
        let sqrt8 = 8.0_f64.sqrt();
        assert!(op.norm_est() <= sqrt8);
        assert!(op.norm_est() > 0.95 * sqrt8);
        // power-iteration estimate agrees with the closed-form eigenvalue
        let est = estimate_norm(&op, 1e-10).unwrap();
        assert_relative_eq!(est, op.norm_est(), epsilon = 1e-4);
    }

    #[test]
    fn norm_est_upper_bounds_random_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let dense = LinearOperator::dense(DMatrix::from_fn(6, 9, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let ops = vec![
            LinearOperator::identity(4),
            dense,
            LinearOperator::grad2d(6, 6).unwrap(),
            LinearOperator::scaled(0.5, LinearOperator::identity(3)).unwrap(),
        ];
        for op in &ops {
            let est = op.norm_est();
            for _ in 0..100 {
                let v = random_vec(&mut rng, op.input_dim());
                if v.norm() == 0.0 {
                    continue;
                }
                let ratio = op.apply(&v).unwrap().norm() / v.norm();
                assert!(ratio <= est * (1.0 + 1e-12), "ratio {ratio} > est {est}");
            }
        }
    }

    #[test]
    fn least_norm_identity_returns_target() {
        let op = LinearOperator::identity(3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let z = DVector::from_vec(vec![-1.0, 0.5, 2.0]);
        assert_eq!(op.least_norm_correct(&x, &z).unwrap(), z);
    }

    #[test]
    fn least_norm_is_noop_when_already_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let op = LinearOperator::dense(m.clone()).unwrap();
        let x = random_vec(&mut rng, 3);
        let z = &m * &x;
        let corrected = op.least_norm_correct(&x, &z).unwrap();
        assert_relative_eq!((corrected - &x).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn least_norm_matches_kkt_oracle() {
        // oracle: solve [I A^T; A 0] [x*; nu] = [x; z] directly
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let a = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let op = LinearOperator::dense(a.clone()).unwrap();
        let x = random_vec(&mut rng, 3);
        let z = random_vec(&mut rng, 2);

        let mut kkt = DMatrix::zeros(5, 5);
        for i in 0..3 {
            kkt[(i, i)] = 1.0;
        }
        kkt.view_mut((3, 0), (2, 3)).copy_from(&a);
        kkt.view_mut((0, 3), (3, 2)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(5);
        rhs.rows_mut(0, 3).copy_from(&x);
        rhs.rows_mut(3, 2).copy_from(&z);
        let sol = kkt.lu().solve(&rhs).unwrap();
        let oracle = sol.rows(0, 3).into_owned();

        let got = op.least_norm_correct(&x, &z).unwrap();
        assert_relative_eq!((got.clone() - oracle).norm(), 0.0, epsilon = 1e-10);
        assert_relative_eq!((&a * got - z).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn least_norm_output_is_projection_optimal() {
        // (x - x*) must be orthogonal to null(A)
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let op = LinearOperator::dense(a.clone()).unwrap();
        let x = random_vec(&mut rng, 4);
        let z = random_vec(&mut rng, 2);
        let xstar = op.least_norm_correct(&x, &z).unwrap();
        // sample null-space directions: v - A^+ A v
        for _ in 0..20 {
            let v = random_vec(&mut rng, 4);
            let proj = op.least_norm_correct(&v, &DVector::zeros(2)).unwrap();
            assert_relative_eq!((&a * &proj).norm(), 0.0, epsilon = 1e-10);
            let inner = (&x - &xstar).dot(&proj);
            assert!(inner.abs() <= 1e-9, "not orthogonal: {inner}");
        }
    }

    #[test]
    fn least_norm_rejects_non_surjective() {
        let op = LinearOperator::grad2d(3, 3).unwrap();
        let x = DVector::zeros(9);
        let z = DVector::zeros(12);
        assert!(matches!(
            op.least_norm_correct(&x, &z),
            Err(Error::Unsupported(_))
        ));
        // tall dense operator: A A^T singular
        let tall = LinearOperator::dense(DMatrix::from_row_slice(3, 2, &[1.0; 6])).unwrap();
        assert!(tall
            .least_norm_correct(&DVector::zeros(2), &DVector::zeros(3))
            .is_err());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let op = LinearOperator::grad2d(2, 2).unwrap();
        assert!(op.apply(&DVector::zeros(5)).is_err());
        assert!(op.adjoint_apply(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn dense_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "1.5,2.0,-3.25\n0.0,4.0,5.5\n").unwrap();
        let op = LinearOperator::dense_from_csv(&path).unwrap();
        assert_eq!(op.shape(), (2, 3));
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(op.apply(&x).unwrap(), DVector::from_vec(vec![0.25, 9.5]));
        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(LinearOperator::dense_from_csv(&path).is_err());
    }

    #[test]
    fn smallest_singular_value_for_supported_kinds() {
        assert_eq!(
            LinearOperator::identity(4).smallest_singular_value().unwrap(),
            1.0
        );
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        let op = LinearOperator::dense(m).unwrap();
        assert_relative_eq!(op.smallest_singular_value().unwrap(), 0.5, epsilon = 1e-12);
        assert!(LinearOperator::grad2d(2, 2)
            .unwrap()
            .smallest_singular_value()
            .is_err());
    }
}
