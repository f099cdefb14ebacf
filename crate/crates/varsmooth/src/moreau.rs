//! Moreau-envelope calculus.
//!
//! For a rho-weakly convex `g` and `mu in (0, 1/rho)` the envelope
//! `g_mu(y) = min_z { g(z) + ||z - y||^2 / (2 mu) }` is continuously
//! differentiable with `grad g_mu(y) = (y - prox_{mu g}(y)) / mu`, and that
//! gradient is a subgradient of `g` at the prox point. The envelope is a
//! smooth under-approximation of `g`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::regularizers::WeaklyConvexFunction;

/// A smoothing wrapper around a weakly convex function.
#[derive(Debug, Clone, Copy)]
pub struct MoreauEnvelope<'a> {
    f: &'a WeaklyConvexFunction,
    mu: f64,
}

impl<'a> MoreauEnvelope<'a> {
    /// Requires `mu in (0, 1/rho)`, open at both ends.
    pub fn new(f: &'a WeaklyConvexFunction, mu: f64) -> Result<Self> {
        let limit = 1.0 / f.rho();
        if !(mu > 0.0) || !(mu < limit) {
            return Err(Error::InvalidSmoothing {
                mu,
                rho: f.rho(),
                limit,
            });
        }
        Ok(MoreauEnvelope { f, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn function(&self) -> &WeaklyConvexFunction {
        self.f
    }

    /// `g_mu(y)`, evaluated through the prox point: `g(p) + ||p - y||^2/(2 mu)`
    /// with `p = prox_{mu g}(y)`. Never exceeds `g(y)`.
    pub fn value(&self, y: &DVector<f64>) -> Result<f64> {
        let p = self.f.prox(self.mu, y)?;
        Ok(self.f.eval(&p)? + (&p - y).norm_squared() / (2.0 * self.mu))
    }

    /// `grad g_mu(y) = (y - prox_{mu g}(y)) / mu`; the result is a member of
    /// the subdifferential of `g` at the prox point.
    pub fn gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.f.prox(self.mu, y)?;
        Ok((y - p) / self.mu)
    }

    /// Value and gradient from a single prox evaluation.
    pub fn value_and_gradient(&self, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let p = self.f.prox(self.mu, y)?;
        let value = self.f.eval(&p)? + (&p - y).norm_squared() / (2.0 * self.mu);
        Ok((value, (y - p) / self.mu))
    }

    /// Lipschitz constant of the envelope gradient:
    /// `max{ 1/mu, rho / (1 - rho mu) }`. For `rho mu <= 1/2` the maximum is
    /// attained by `1/mu`.
    pub fn gradient_lipschitz(&self) -> f64 {
        let rho = self.f.rho();
        (1.0 / self.mu).max(rho / (1.0 - rho * self.mu))
    }
}

/// Compares two envelopes of the same function with `0 < mu2 <= mu1 < 1/rho`.
///
/// Returns `(g_mu2(y), bound)` where
/// `bound = g_mu1(y) + ((mu1 - mu2) / mu2) * mu1 * ||grad g_mu1(y)||^2 / 2`;
/// the first component never exceeds the second.
pub fn envelope_compare(
    coarse: &MoreauEnvelope<'_>,
    fine: &MoreauEnvelope<'_>,
    y: &DVector<f64>,
) -> Result<(f64, f64)> {
    if coarse.function() != fine.function() {
        return Err(Error::Usage(
            "envelope comparison requires the same underlying function".into(),
        ));
    }
    let (mu1, mu2) = (coarse.mu(), fine.mu());
    if !(mu2 <= mu1) {
        return Err(Error::Usage(format!(
            "envelope comparison requires mu2 <= mu1, got mu1={mu1}, mu2={mu2}"
        )));
    }
    let (v1, grad1) = coarse.value_and_gradient(y)?;
    let bound = v1 + 0.5 * ((mu1 - mu2) / mu2) * mu1 * grad1.norm_squared();
    Ok((fine.value(y)?, bound))
}
