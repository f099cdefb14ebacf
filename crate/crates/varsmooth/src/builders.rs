//! Problem builders for the desk-scale experiments: TV denoising with the
//! minimax concave penalty, robust regression with Tukey/Cauchy losses, and a
//! LASSO-style sanity problem; plus seeded synthetic regression data.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::linops::LinearOperator;
use crate::problem::CompositeProblem;
use crate::regularizers::WeaklyConvexFunction;
use crate::smooth::SmoothFunction;

/// Anisotropic-TV denoising with the minimax concave penalty:
/// `min 0.5 ||x - b||^2 + sum mcp(grad x)` over the pixel grid of `img`.
pub fn build_tv_mcp_denoising(
    img: &ImageBuffer,
    lambda: f64,
    theta: f64,
) -> Result<CompositeProblem> {
    if img.height() < 2 || img.width() < 2 {
        return Err(Error::Config(format!(
            "denoising needs an image of at least 2x2 pixels, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let d = img.len();
    let fidelity =
        SmoothFunction::least_squares(LinearOperator::identity(d), img.pixels().clone())?;
    let penalty = WeaklyConvexFunction::mcp(lambda, theta)?;
    let grad = LinearOperator::grad2d(img.height(), img.width())?;
    CompositeProblem::new(fidelity, penalty, grad, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustLoss {
    Tukey,
    Cauchy { xi: f64 },
}

/// Robust regression `min (w/2)||x||^2 + sum phi(A_i. x - b_i)` with a
/// Tukey or Cauchy loss; `ridge_weight = 0` drops the smooth term entirely.
pub fn build_robust_regression(
    design: DMatrix<f64>,
    targets: DVector<f64>,
    loss: RobustLoss,
    ridge_weight: f64,
) -> Result<CompositeProblem> {
    if targets.len() != design.nrows() {
        return Err(Error::Dimension {
            context: "regression targets",
            expected: design.nrows(),
            got: targets.len(),
        });
    }
    let h = if ridge_weight > 0.0 {
        SmoothFunction::scaled_norm_sq(ridge_weight)?
    } else {
        SmoothFunction::zero()
    };
    let g = match loss {
        RobustLoss::Tukey => WeaklyConvexFunction::tukey_biweight(),
        RobustLoss::Cauchy { xi } => WeaklyConvexFunction::cauchy_loss(xi)?,
    }
    .with_shift(targets);
    let a = LinearOperator::dense(design)?;
    CompositeProblem::new(h, g, a, 0.0)
}

/// LASSO-style sanity problem with the bias-reducing penalty:
/// `min 0.5 ||B x - b||^2 + sum mcp(x)`.
pub fn build_mcp_lasso(
    design: DMatrix<f64>,
    targets: DVector<f64>,
    lambda: f64,
    theta: f64,
) -> Result<CompositeProblem> {
    if targets.len() != design.nrows() {
        return Err(Error::Dimension {
            context: "regression targets",
            expected: design.nrows(),
            got: targets.len(),
        });
    }
    let d = design.ncols();
    let h = SmoothFunction::least_squares(LinearOperator::dense(design)?, targets)?;
    let g = WeaklyConvexFunction::mcp(lambda, theta)?;
    CompositeProblem::new(h, g, LinearOperator::identity(d), 0.0)
}

/// Synthetic regression instance with planted coefficients, gaussian noise on
/// clean rows, and a fraction of rows corrupted by gross outliers.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub design: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub coefficients: DVector<f64>,
}

pub fn synthetic_regression(
    rows: usize,
    cols: usize,
    seed: u64,
    outlier_fraction: f64,
    noise_sigma: f64,
) -> Result<RegressionData> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("regression data must be nonempty".into()));
    }
    if !(0.0..=1.0).contains(&outlier_fraction) {
        return Err(Error::Config(format!(
            "outlier fraction must be in [0, 1], got {outlier_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let design = DMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng));
    let coefficients = DVector::from_fn(cols, |_, _| rng.random_range(-1.0..1.0_f64));
    let mut targets = &design * &coefficients;
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::Config(format!("invalid noise sigma: {e}")))?;
        for v in targets.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let n_outliers = (outlier_fraction * rows as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..rows).collect();
    indices.shuffle(&mut rng);
    for &i in indices.iter().take(n_outliers) {
        let magnitude = rng.random_range(3.0..8.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        targets[i] += sign * magnitude;
    }
    Ok(RegressionData {
        design,
        targets,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{generate_synthetic_image, SyntheticKind};
    use crate::solvers::variable_smoothing;
    use approx::assert_relative_eq;

    #[test]
    fn constant_image_is_already_optimal() {
        let img = ImageBuffer::constant(2, 2, 0.4).unwrap();
        let p = build_tv_mcp_denoising(&img, 1.0, 2.0).unwrap();
        assert_eq!(p.objective(img.pixels()).unwrap(), 0.0);
        let grad = p.smoothed_gradient(0.5, img.pixels()).unwrap();
        assert_eq!(grad.norm(), 0.0);
    }

    #[test]
    fn degenerate_image_rejected() {
        let img = ImageBuffer::constant(1, 8, 0.0).unwrap();
        assert!(build_tv_mcp_denoising(&img, 1.0, 2.0).is_err());
    }

    #[test]
    fn checkerboard_objective_equals_penalty_of_gradient_field() {
        let img = generate_synthetic_image(SyntheticKind::Checkerboard, 8, 8, 0).unwrap();
        let (lambda, theta) = (0.7, 3.0);
        let p = build_tv_mcp_denoising(&img, lambda, theta).unwrap();
        let grad = LinearOperator::grad2d(8, 8).unwrap();
        let g = WeaklyConvexFunction::mcp(lambda, theta).unwrap();
        let expect = g.eval(&grad.apply(img.pixels()).unwrap()).unwrap();
        assert_relative_eq!(
            p.objective(img.pixels()).unwrap(),
            expect,
            max_relative = 1e-14
        );
    }

    #[test]
    fn solver_reduces_denoising_objective() {
        let truth =
            generate_synthetic_image(SyntheticKind::PiecewiseConstant, 32, 32, 7).unwrap();
        let noisy = truth.with_gaussian_noise(0.1, 7).unwrap();
        let p = build_tv_mcp_denoising(&noisy, 0.15, 4.0).unwrap();
        let f_start = p.objective(noisy.pixels()).unwrap();
        let out = variable_smoothing(&p, noisy.pixels(), 200).unwrap();
        let f_end = out.trace.records().last().unwrap().f_true;
        assert!(f_end < f_start, "{f_end} !< {f_start}");
    }

    #[test]
    fn zero_design_makes_every_point_optimal() {
        let data = DMatrix::zeros(3, 2);
        let p = build_robust_regression(data, DVector::zeros(3), RobustLoss::Tukey, 0.0);
        // a zero operator cannot back the smoothing schedule, but the problem
        // itself is well formed with objective 0 everywhere
        let p = p.unwrap();
        assert_eq!(p.objective(&DVector::from_vec(vec![4.0, -1.0])).unwrap(), 0.0);
    }

    #[test]
    fn one_dim_tukey_minimizer_is_zero() {
        let design = DMatrix::from_row_slice(1, 1, &[1.0]);
        let p =
            build_robust_regression(design, DVector::zeros(1), RobustLoss::Tukey, 0.0).unwrap();
        let out = variable_smoothing(&p, &DVector::from_vec(vec![0.8]), 4000).unwrap();
        let last = &out.certificate.witness;
        assert!(last[0].abs() < 1e-2, "got {}", last[0]);
    }

    #[test]
    fn tukey_beats_least_squares_under_outliers() {
        let data = synthetic_regression(20, 5, 21, 0.2, 0.05).unwrap();
        let p = build_robust_regression(
            data.design.clone(),
            data.targets.clone(),
            RobustLoss::Tukey,
            0.0,
        )
        .unwrap();
        // closed-form least squares as the comparison oracle
        let gram = data.design.transpose() * &data.design;
        let rhs = data.design.transpose() * &data.targets;
        let ls = gram.lu().solve(&rhs).unwrap();
        // start the robust solve from the LS estimate, as an M-estimator would
        let out = variable_smoothing(&p, &ls, 20_000).unwrap();
        let robust = &out.certificate.witness;
        let err_robust = (robust - &data.coefficients).norm();
        let err_ls = (&ls - &data.coefficients).norm();
        assert!(
            err_robust < err_ls,
            "robust {err_robust} not better than least squares {err_ls}"
        );
    }

    #[test]
    fn lasso_builder_dimension_chain() {
        let data = synthetic_regression(10, 4, 3, 0.0, 0.01).unwrap();
        let p = build_mcp_lasso(data.design, data.targets, 0.1, 3.0).unwrap();
        assert_eq!(p.input_dim(), 4);
        assert_eq!(p.output_dim(), 4);
        assert!(p.objective(&DVector::zeros(4)).unwrap() >= 0.0);
    }

    #[test]
    fn synthetic_regression_is_deterministic() {
        let a = synthetic_regression(8, 3, 5, 0.25, 0.1).unwrap();
        let b = synthetic_regression(8, 3, 5, 0.25, 0.1).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.targets, b.targets);
    }
}
