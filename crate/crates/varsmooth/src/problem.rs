//! Composite problems `F(x) = h(x) + g(Ax)` and their smoothed surrogates
//! `F_mu(x) = h(x) + g_mu(Ax)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linops::LinearOperator;
use crate::moreau::MoreauEnvelope;
use crate::regularizers::WeaklyConvexFunction;
use crate::smooth::SmoothFunction;

#[derive(Debug, Clone)]
pub struct CompositeProblem {
    h: SmoothFunction,
    g: WeaklyConvexFunction,
    a: LinearOperator,
    /// A lower bound on `liminf_k F_k(x_k)`; enters the complexity constants.
    /// 0 is valid for nonnegative objectives.
    fstar_lower: f64,
}

/// One smoothed-objective evaluation: value, true objective, gradient, and
/// the feasibility gap `||Ax - prox_{mu g}(Ax)||`, all from a single prox.
#[derive(Debug, Clone)]
pub struct SmoothedEval {
    pub f_smoothed: f64,
    pub f_true: f64,
    pub gradient: DVector<f64>,
    pub grad_norm: f64,
    pub feasibility: f64,
}

impl CompositeProblem {
    pub fn new(
        h: SmoothFunction,
        g: WeaklyConvexFunction,
        a: LinearOperator,
        fstar_lower: f64,
    ) -> Result<Self> {
        let (n, d) = a.shape();
        if let Some(hd) = h.dim() {
            if hd != d {
                return Err(Error::Dimension {
                    context: "smooth term vs operator input",
                    expected: d,
                    got: hd,
                });
            }
        }
        if let Some(b) = g.shift() {
            if b.len() != n {
                return Err(Error::Dimension {
                    context: "regularizer shift vs operator output",
                    expected: n,
                    got: b.len(),
                });
            }
        }
        if !fstar_lower.is_finite() {
            return Err(Error::Config(format!(
                "fstar_lower must be finite, got {fstar_lower}"
            )));
        }
        Ok(CompositeProblem {
            h,
            g,
            a,
            fstar_lower,
        })
    }

    pub fn smooth_term(&self) -> &SmoothFunction {
        &self.h
    }

    pub fn regularizer(&self) -> &WeaklyConvexFunction {
        &self.g
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.a
    }

    pub fn fstar_lower(&self) -> f64 {
        self.fstar_lower
    }

    pub fn input_dim(&self) -> usize {
        self.a.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.a.output_dim()
    }

    /// Lipschitz constant of `g` as a function on the operator's range space.
    pub fn regularizer_lipschitz(&self) -> f64 {
        self.g.lipschitz(self.output_dim())
    }

    /// `F(x) = h(x) + g(Ax)`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.h.value(x)? + self.g.eval(&self.a.apply(x)?)?)
    }

    /// `F_mu(x) = h(x) + g_mu(Ax)`.
    pub fn smoothed_objective(&self, mu: f64, x: &DVector<f64>) -> Result<f64> {
        let env = MoreauEnvelope::new(&self.g, mu)?;
        Ok(self.h.value(x)? + env.value(&self.a.apply(x)?)?)
    }

    /// `grad F_mu(x) = grad h(x) + A^T (Ax - prox_{mu g}(Ax)) / mu`.
    pub fn smoothed_gradient(&self, mu: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let env = MoreauEnvelope::new(&self.g, mu)?;
        let ax = self.a.apply(x)?;
        Ok(self.h.gradient(x)? + self.a.adjoint_apply(&env.gradient(&ax)?)?)
    }

    /// Everything the solvers need per iteration from one prox evaluation.
    pub fn smoothed_eval(&self, mu: f64, x: &DVector<f64>) -> Result<SmoothedEval> {
        let ax = self.a.apply(x)?;
        let p = self.g.prox(mu, &ax)?;
        let gap = &ax - &p;
        let feasibility = gap.norm();
        let g_at_prox = self.g.eval(&p)?;
        let envelope_value = g_at_prox + feasibility * feasibility / (2.0 * mu);
        let h_value = self.h.value(x)?;
        let gradient = self.h.gradient(x)? + self.a.adjoint_apply(&(gap / mu))?;
        let grad_norm = gradient.norm();
        Ok(SmoothedEval {
            f_smoothed: h_value + envelope_value,
            f_true: h_value + self.g.eval(&ax)?,
            gradient,
            grad_norm,
            feasibility,
        })
    }

    /// Least-norm corrected point `x* = x - A^+(Ax - prox_{mu g}(Ax))`, which
    /// satisfies `A x* = prox_{mu g}(Ax)` when `A` is surjective.
    pub fn surjective_witness(&self, x: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        let ax = self.a.apply(x)?;
        let z = self.g.prox(mu, &ax)?;
        self.a.least_norm_correct(x, &z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimension_chain_validated() {
        let h = SmoothFunction::least_squares(
            LinearOperator::identity(3),
            DVector::zeros(3),
        )
        .unwrap();
        let g = WeaklyConvexFunction::l1(1.0).unwrap();
        let a = LinearOperator::grad2d(2, 2).unwrap(); // input dim 4
        assert!(CompositeProblem::new(h, g, a, 0.0).is_err());
    }

    #[test]
    fn zero_regularizer_gradient_is_smooth_gradient() {
        let h = SmoothFunction::least_squares(
            LinearOperator::identity(2),
            DVector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let p = CompositeProblem::new(
            h.clone(),
            WeaklyConvexFunction::zero(),
            LinearOperator::identity(2),
            0.0,
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.5, 2.0]);
        assert_eq!(
            p.smoothed_gradient(0.3, &x).unwrap(),
            h.gradient(&x).unwrap()
        );
    }

    #[test]
    fn identity_operator_reduces_to_envelope_gradient() {
        let g = WeaklyConvexFunction::mcp(1.0, 2.0).unwrap();
        let p = CompositeProblem::new(
            SmoothFunction::zero(),
            g.clone(),
            LinearOperator::identity(1),
            0.0,
        )
        .unwrap();
        let env = MoreauEnvelope::new(&g, 0.5).unwrap();
        let x = DVector::from_vec(vec![1.2]);
        assert_eq!(
            p.smoothed_gradient(0.5, &x).unwrap(),
            env.gradient(&x).unwrap()
        );
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let b = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let h = SmoothFunction::least_squares(
            LinearOperator::dense(b).unwrap(),
            DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let a =
            LinearOperator::dense(DMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0)))
                .unwrap();
        let g = WeaklyConvexFunction::mcp(0.8, 3.0).unwrap();
        let p = CompositeProblem::new(h, g, a, 0.0).unwrap();
        let mu = 0.4;
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0_f64));
            let grad = p.smoothed_gradient(mu, &x).unwrap();
            for i in 0..4 {
                let step = 1e-6 * (1.0 + x[i].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (p.smoothed_objective(mu, &xp).unwrap()
                    - p.smoothed_objective(mu, &xm).unwrap())
                    / (2.0 * step);
                let denom = grad[i].abs().max(1.0);
                assert!(
                    (fd - grad[i]).abs() / denom <= 1e-5,
                    "fd {fd} vs analytic {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn smoothed_eval_is_consistent_with_piecewise_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let a = LinearOperator::grad2d(3, 3).unwrap();
        let h = SmoothFunction::least_squares(
            LinearOperator::identity(9),
            DVector::from_fn(9, |_, _| rng.random_range(0.0..1.0)),
        )
        .unwrap();
        let g = WeaklyConvexFunction::mcp(0.5, 2.0).unwrap();
        let p = CompositeProblem::new(h, g, a, 0.0).unwrap();
        let x = DVector::from_fn(9, |_, _| rng.random_range(0.0..1.0_f64));
        let mu = 0.7;
        let ev = p.smoothed_eval(mu, &x).unwrap();
        assert_relative_eq!(
            ev.f_smoothed,
            p.smoothed_objective(mu, &x).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(ev.f_true, p.objective(&x).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(
            (ev.gradient.clone() - p.smoothed_gradient(mu, &x).unwrap()).norm(),
            0.0,
            epsilon = 1e-12
        );
    }
}
