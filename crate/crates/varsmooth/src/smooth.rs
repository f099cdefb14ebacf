//! Smooth terms `h` with value, gradient, and a gradient-Lipschitz constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::LinearOperator;

#[derive(Debug, Clone)]
pub enum SmoothKind {
    /// `h = 0` on any dimension.
    Zero,
    /// `(weight / 2) ||x||^2`.
    ScaledNormSq { weight: f64 },
    /// `0.5 ||B x - target||^2`; `B` may be any linear operator (the identity
    /// gives the denoising fidelity `0.5 ||x - b||^2`).
    LeastSquares {
        op: LinearOperator,
        target: DVector<f64>,
    },
    /// `0.5 x^T Q x + c^T x` with symmetric `Q`.
    Quadratic {
        matrix: DMatrix<f64>,
        linear: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct SmoothFunction {
    kind: SmoothKind,
    lip_grad: f64,
}

impl SmoothFunction {
    pub fn zero() -> Self {
        SmoothFunction {
            kind: SmoothKind::Zero,
            lip_grad: 0.0,
        }
    }

    pub fn scaled_norm_sq(weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Config(format!(
                "scaled norm-squared weight must be positive, got {weight}"
            )));
        }
        Ok(SmoothFunction {
            kind: SmoothKind::ScaledNormSq { weight },
            lip_grad: weight,
        })
    }

    /// `0.5 ||B x - target||^2`; the gradient-Lipschitz constant is the
    /// squared (upper-estimated) operator norm of `B`.
    pub fn least_squares(op: LinearOperator, target: DVector<f64>) -> Result<Self> {
        if target.len() != op.output_dim() {
            return Err(Error::Dimension {
                context: "least-squares target",
                expected: op.output_dim(),
                got: target.len(),
            });
        }
        let lip = op.norm_est() * op.norm_est();
        Ok(SmoothFunction {
            kind: SmoothKind::LeastSquares { op, target },
            lip_grad: lip,
        })
    }

    /// `0.5 x^T Q x + c^T x`. `Q` is symmetrized at construction.
    pub fn quadratic(matrix: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Config("quadratic matrix must be square".into()));
        }
        if linear.len() != matrix.nrows() {
            return Err(Error::Dimension {
                context: "quadratic linear term",
                expected: matrix.nrows(),
                got: linear.len(),
            });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let lip = sym.clone().svd(false, false).singular_values.max() * (1.0 + 1e-10);
        Ok(SmoothFunction {
            kind: SmoothKind::Quadratic {
                matrix: sym,
                linear,
            },
            lip_grad: lip,
        })
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    /// Lipschitz constant of the gradient.
    pub fn lip_grad(&self) -> f64 {
        self.lip_grad
    }

    /// The input dimension this term is pinned to, if any; `Zero` and
    /// `ScaledNormSq` accept any dimension.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            SmoothKind::Zero | SmoothKind::ScaledNormSq { .. } => None,
            SmoothKind::LeastSquares { op, .. } => Some(op.input_dim()),
            SmoothKind::Quadratic { matrix, .. } => Some(matrix.nrows()),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != got {
                return Err(Error::Dimension {
                    context: "smooth term",
                    expected: d,
                    got,
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match &self.kind {
            SmoothKind::Zero => 0.0,
            SmoothKind::ScaledNormSq { weight } => 0.5 * weight * x.norm_squared(),
            SmoothKind::LeastSquares { op, target } => {
                0.5 * (op.apply(x)? - target).norm_squared()
            }
            SmoothKind::Quadratic { matrix, linear } => {
                0.5 * x.dot(&(matrix * x)) + linear.dot(x)
            }
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(match &self.kind {
            SmoothKind::Zero => DVector::zeros(x.len()),
            SmoothKind::ScaledNormSq { weight } => x * *weight,
            SmoothKind::LeastSquares { op, target } => {
                op.adjoint_apply(&(op.apply(x)? - target))?
            }
            SmoothKind::Quadratic { matrix, linear } => matrix * x + linear,
        })
    }
}
