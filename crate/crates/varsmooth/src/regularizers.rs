//! Weakly convex penalties and losses with exact values, proximal operators,
//! and weak-convexity / Lipschitz certificates.
//!
//! Every member of the zoo is a separable function `g(y) = sum_i phi(y_i - b_i)`
//! built from an even scalar penalty `phi` that is nondecreasing on `[0, inf)`,
//! with an optional shift vector `b`. A function is `rho`-weakly convex when
//! `phi + (rho/2) t^2` is convex; proximal subproblems are strongly convex
//! (hence uniquely solvable) whenever the smoothing parameter satisfies
//! `mu * rho < 1`.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Residual tolerance for the scalar proximal root-finder, applied to the
/// optimality residual of `min_z mu*phi(z) + (z - y)^2 / 2`.
const PROX_RESIDUAL_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 100;

/// Scalar penalty family. Parameters live inside the variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    /// The zero function.
    Zero,
    /// `lambda * |t|` — convex, prox is soft thresholding.
    L1 { lambda: f64 },
    /// Minimax concave penalty: `lambda |t| - t^2/(2 theta)` capped at
    /// `theta lambda^2 / 2`. Prox is the firm threshold.
    Mcp { lambda: f64, theta: f64 },
    /// Smoothly clipped absolute deviation, `theta > 2`.
    Scad { lambda: f64, theta: f64 },
    /// `|t| / (1 + a |t| / 2)`.
    Fractional { a: f64 },
    /// Tukey biweight: `t^2 / (1 + t^2)`, asymptotes at 1.
    TukeyBiweight,
    /// Cauchy loss: `(xi^2 / 2) ln(1 + t^2 / xi^2)`.
    CauchyLoss { xi: f64 },
}

impl PenaltyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Zero => "zero",
            PenaltyKind::L1 { .. } => "l1",
            PenaltyKind::Mcp { .. } => "mcp",
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::Fractional { .. } => "fractional",
            PenaltyKind::TukeyBiweight => "tukey",
            PenaltyKind::CauchyLoss { .. } => "cauchy",
        }
    }
}

/// A weakly convex function `g(y) = sum_i phi(y_i - b_i)` with certified
/// weak-convexity modulus `rho` and per-coordinate Lipschitz constant.
///
/// Values are immutable after construction and safe to share across threads;
/// all operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeaklyConvexFunction {
    kind: PenaltyKind,
    rho: f64,
    scalar_lip: f64,
    shift: Option<DVector<f64>>,
}

impl WeaklyConvexFunction {
    fn from_kind(kind: PenaltyKind) -> Result<Self> {
        validate_params(&kind)?;
        Ok(WeaklyConvexFunction {
            rho: intrinsic_rho(&kind),
            scalar_lip: intrinsic_scalar_lip(&kind),
            kind,
            shift: None,
        })
    }

    /// The zero function (identity prox, zero envelope).
    pub fn zero() -> Self {
        Self::from_kind(PenaltyKind::Zero).expect("zero penalty has no parameters")
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::from_kind(PenaltyKind::L1 { lambda })
    }

    pub fn mcp(lambda: f64, theta: f64) -> Result<Self> {
        Self::from_kind(PenaltyKind::Mcp { lambda, theta })
    }

    pub fn scad(lambda: f64, theta: f64) -> Result<Self> {
        Self::from_kind(PenaltyKind::Scad { lambda, theta })
    }

    pub fn fractional(a: f64) -> Result<Self> {
        Self::from_kind(PenaltyKind::Fractional { a })
    }

    pub fn tukey_biweight() -> Self {
        Self::from_kind(PenaltyKind::TukeyBiweight).expect("tukey has no parameters")
    }

    pub fn cauchy_loss(xi: f64) -> Result<Self> {
        Self::from_kind(PenaltyKind::CauchyLoss { xi })
    }

    /// Applies the penalty to residuals `y - b` instead of `y` itself,
    /// covering losses of the form `sum_i phi(A_i. x - b_i)`.
    pub fn with_shift(mut self, b: DVector<f64>) -> Self {
        self.shift = Some(b);
        self
    }

    /// Overrides the stored weak-convexity modulus. Any value at least as
    /// large as the intrinsic modulus of the penalty is valid; smaller values
    /// would break the strong convexity of the prox subproblem.
    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        let intrinsic = intrinsic_rho(&self.kind);
        if !rho.is_finite() || rho < intrinsic {
            return Err(Error::Config(format!(
                "rho override {rho} is below the intrinsic modulus {intrinsic} of `{}`",
                self.kind.name()
            )));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn kind(&self) -> &PenaltyKind {
        &self.kind
    }

    pub fn shift(&self) -> Option<&DVector<f64>> {
        self.shift.as_ref()
    }

    /// Weak-convexity modulus rho.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Lipschitz constant of the scalar penalty `phi`.
    pub fn scalar_lipschitz(&self) -> f64 {
        self.scalar_lip
    }

    /// Lipschitz constant of the vector function on `R^n`. For a separable
    /// function built from an `l`-Lipschitz scalar penalty this is `sqrt(n) l`.
    pub fn lipschitz(&self, n: usize) -> f64 {
        if self.scalar_lip.is_finite() {
            (n as f64).sqrt() * self.scalar_lip
        } else {
            f64::INFINITY
        }
    }

    fn check_shift_dim(&self, len: usize) -> Result<()> {
        if let Some(b) = &self.shift {
            if b.len() != len {
                return Err(Error::Dimension {
                    context: "shift vector",
                    expected: b.len(),
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// `g(y) = sum_i phi(y_i - b_i)`.
    pub fn eval(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_shift_dim(y.len())?;
        let mut total = 0.0;
        for i in 0..y.len() {
            let t = y[i] - self.shift_at(i);
            total += self.phi(t);
        }
        Ok(total)
    }

    /// Scalar penalty value `phi(t)`.
    pub fn phi(&self, t: f64) -> f64 {
        let at = t.abs();
        match self.kind {
            PenaltyKind::Zero => 0.0,
            PenaltyKind::L1 { lambda } => lambda * at,
            PenaltyKind::Mcp { lambda, theta } => {
                if at <= theta * lambda {
                    lambda * at - t * t / (2.0 * theta)
                } else {
                    theta * lambda * lambda / 2.0
                }
            }
            PenaltyKind::Scad { lambda, theta } => {
                if at <= lambda {
                    lambda * at
                } else if at <= theta * lambda {
                    (-t * t + 2.0 * theta * lambda * at - lambda * lambda) / (2.0 * (theta - 1.0))
                } else {
                    (theta + 1.0) * lambda * lambda / 2.0
                }
            }
            PenaltyKind::Fractional { a } => at / (1.0 + a * at / 2.0),
            PenaltyKind::TukeyBiweight => t * t / (1.0 + t * t),
            PenaltyKind::CauchyLoss { xi } => (xi * xi / 2.0) * (t * t / (xi * xi)).ln_1p(),
        }
    }

    /// An almost-everywhere derivative of `phi`, selecting 0 at the origin
    /// kink (the minimal-norm subgradient).
    pub fn phi_prime(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let s = t.signum();
        let at = t.abs();
        match self.kind {
            PenaltyKind::Zero => 0.0,
            PenaltyKind::L1 { lambda } => lambda * s,
            PenaltyKind::Mcp { lambda, theta } => {
                if at <= theta * lambda {
                    lambda * s - t / theta
                } else {
                    0.0
                }
            }
            PenaltyKind::Scad { lambda, theta } => {
                if at <= lambda {
                    lambda * s
                } else if at <= theta * lambda {
                    (theta * lambda * s - t) / (theta - 1.0)
                } else {
                    0.0
                }
            }
            PenaltyKind::Fractional { a } => {
                let d = 1.0 + a * at / 2.0;
                s / (d * d)
            }
            PenaltyKind::TukeyBiweight => {
                let d = 1.0 + t * t;
                2.0 * t / (d * d)
            }
            PenaltyKind::CauchyLoss { xi } => xi * xi * t / (xi * xi + t * t),
        }
    }

    /// Second derivative of `phi` on its smooth pieces (used only to
    /// accelerate the prox root-finder; branch points fall back to bisection).
    fn phi_second(&self, t: f64) -> f64 {
        let at = t.abs();
        match self.kind {
            PenaltyKind::Zero | PenaltyKind::L1 { .. } => 0.0,
            PenaltyKind::Mcp { lambda, theta } => {
                if at <= theta * lambda {
                    -1.0 / theta
                } else {
                    0.0
                }
            }
            PenaltyKind::Scad { lambda, theta } => {
                if at <= lambda || at > theta * lambda {
                    0.0
                } else {
                    -1.0 / (theta - 1.0)
                }
            }
            PenaltyKind::Fractional { a } => {
                let d = 1.0 + a * at / 2.0;
                -a / (d * d * d)
            }
            PenaltyKind::TukeyBiweight => {
                let d = 1.0 + t * t;
                (2.0 - 6.0 * t * t) / (d * d * d)
            }
            PenaltyKind::CauchyLoss { xi } => {
                let x2 = xi * xi;
                let d = x2 + t * t;
                x2 * (x2 - t * t) / (d * d)
            }
        }
    }

    /// Right derivative of `phi` at the origin; the subdifferential at the
    /// origin kink is `[-phi'(0+), phi'(0+)]`.
    pub fn slope_at_origin(&self) -> f64 {
        match self.kind {
            PenaltyKind::Zero | PenaltyKind::TukeyBiweight | PenaltyKind::CauchyLoss { .. } => 0.0,
            PenaltyKind::L1 { lambda }
            | PenaltyKind::Mcp { lambda, .. }
            | PenaltyKind::Scad { lambda, .. } => lambda,
            PenaltyKind::Fractional { .. } => 1.0,
        }
    }

    /// The scalar subdifferential interval of `phi` at `t`.
    pub fn scalar_subdifferential(&self, t: f64) -> (f64, f64) {
        if t == 0.0 {
            let s = self.slope_at_origin();
            (-s, s)
        } else {
            let d = self.phi_prime(t);
            (d, d)
        }
    }

    /// A member of the Frechet subdifferential of `g` at `y`: the a.e.
    /// derivative on smooth branches, 0 at origin kinks.
    pub fn subgradient_selection(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_shift_dim(y.len())?;
        let mut out = DVector::zeros(y.len());
        for i in 0..y.len() {
            out[i] = self.phi_prime(y[i] - self.shift_at(i));
        }
        Ok(out)
    }

    fn shift_at(&self, i: usize) -> f64 {
        self.shift.as_ref().map_or(0.0, |b| b[i])
    }

    fn check_mu(&self, mu: f64) -> Result<()> {
        let limit = 1.0 / self.rho; // +inf for convex penalties
        if !(mu > 0.0) || !(mu < limit) {
            return Err(Error::InvalidSmoothing {
                mu,
                rho: self.rho,
                limit,
            });
        }
        Ok(())
    }

    /// `argmin_z { g(z) + ||z - y||^2 / (2 mu) }`, computed coordinatewise.
    ///
    /// Requires `mu < 1/rho` so the subproblem is strongly convex. L1 and MCP
    /// use their closed forms (soft and firm thresholding); the remaining
    /// kinds solve the scalar optimality equation with safeguarded Newton.
    pub fn prox(&self, mu: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_mu(mu)?;
        self.check_shift_dim(y.len())?;
        let mut out = DVector::zeros(y.len());
        for i in 0..y.len() {
            let b = self.shift_at(i);
            out[i] = b + self.prox_scalar_unchecked(mu, y[i] - b)?;
        }
        Ok(out)
    }

    /// Scalar prox `argmin_z { phi(z) + (z - y)^2 / (2 mu) }`.
    pub fn prox_scalar(&self, mu: f64, y: f64) -> Result<f64> {
        self.check_mu(mu)?;
        self.prox_scalar_unchecked(mu, y)
    }

    fn prox_scalar_unchecked(&self, mu: f64, y: f64) -> Result<f64> {
        match self.kind {
            PenaltyKind::Zero => Ok(y),
            PenaltyKind::L1 { lambda } => Ok(soft_threshold(y, mu * lambda)),
            PenaltyKind::Mcp { lambda, theta } => Ok(firm_threshold(y, lambda, theta, mu)),
            _ => self.prox_scalar_newton(mu, y),
        }
    }

    /// Safeguarded Newton on the optimality residual
    /// `r(z) = mu phi'(z) + z - y`, restricted to the sign-determined
    /// bracket `(0, |y|]`. The bracket invariant `r(lo) < 0 <= r(hi)` is
    /// maintained throughout, so a bisection fallback is always available.
    fn prox_scalar_newton(&self, mu: f64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let s = y.signum();
        let ay = y.abs();
        // z = 0 is optimal iff y/mu lies in the subdifferential at the kink.
        if ay <= mu * self.slope_at_origin() {
            return Ok(0.0);
        }
        let resid = |z: f64| mu * self.phi_prime(z) + z - ay;
        let (mut lo, mut hi) = (0.0_f64, ay);
        let mut z = ay;
        for _ in 0..PROX_MAX_ITER {
            let r = resid(z);
            if r.abs() <= PROX_RESIDUAL_TOL {
                return Ok(s * z);
            }
            if r > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let dr = mu * self.phi_second(z) + 1.0;
            let newton = z - r / dr;
            z = if dr > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::Numeric(format!(
            "prox root-finder for `{}` did not reach residual {PROX_RESIDUAL_TOL:e} \
             within {PROX_MAX_ITER} iterations (mu={mu}, y={y})",
            self.kind.name()
        )))
    }
}

/// Soft thresholding, the prox of `t -> tau |t|` with `tau = mu * lambda`.
pub fn soft_threshold(y: f64, tau: f64) -> f64 {
    y.signum() * (y.abs() - tau).max(0.0)
}

/// Firm thresholding: the closed-form prox of the minimax concave penalty
/// for prox parameter `gamma < theta`. Approaches the identity for large
/// arguments, unlike soft thresholding.
pub fn firm_threshold(y: f64, lambda: f64, theta: f64, gamma: f64) -> f64 {
    let ay = y.abs();
    if ay < gamma * lambda {
        0.0
    } else if ay <= theta * lambda {
        (y - lambda * gamma * y.signum()) / (1.0 - gamma / theta)
    } else {
        y
    }
}

fn validate_params(kind: &PenaltyKind) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(msg));
    match *kind {
        PenaltyKind::Zero | PenaltyKind::TukeyBiweight => Ok(()),
        PenaltyKind::L1 { lambda } => {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return bad(format!("l1 requires lambda > 0, got {lambda}"));
            }
            Ok(())
        }
        PenaltyKind::Mcp { lambda, theta } => {
            if !(lambda > 0.0 && theta > 0.0) || !(lambda * theta).is_finite() {
                return bad(format!(
                    "mcp requires lambda > 0 and theta > 0, got lambda={lambda}, theta={theta}"
                ));
            }
            Ok(())
        }
        PenaltyKind::Scad { lambda, theta } => {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return bad(format!("scad requires lambda > 0, got {lambda}"));
            }
            if !(theta > 2.0) || !theta.is_finite() {
                return bad(format!("scad requires theta > 2, got {theta}"));
            }
            Ok(())
        }
        PenaltyKind::Fractional { a } => {
            if !(a > 0.0) || !a.is_finite() {
                return bad(format!("fractional requires a > 0, got {a}"));
            }
            Ok(())
        }
        PenaltyKind::CauchyLoss { xi } => {
            if !(xi > 0.0) || !xi.is_finite() {
                return bad(format!("cauchy requires xi > 0, got {xi}"));
            }
            Ok(())
        }
    }
}

fn intrinsic_rho(kind: &PenaltyKind) -> f64 {
    match *kind {
        PenaltyKind::Zero | PenaltyKind::L1 { .. } => 0.0,
        PenaltyKind::Mcp { theta, .. } => 1.0 / theta,
        PenaltyKind::Scad { theta, .. } => 1.0 / (theta - 1.0),
        PenaltyKind::Fractional { a } => a,
        // 6 is a (generous) valid modulus for both robust losses; callers may
        // override with anything larger via `with_rho`.
        PenaltyKind::TukeyBiweight | PenaltyKind::CauchyLoss { .. } => 6.0,
    }
}

fn intrinsic_scalar_lip(kind: &PenaltyKind) -> f64 {
    match *kind {
        PenaltyKind::Zero => 0.0,
        // max slope sits at the origin for the thresholding penalties
        PenaltyKind::L1 { lambda }
        | PenaltyKind::Mcp { lambda, .. }
        | PenaltyKind::Scad { lambda, .. } => lambda,
        PenaltyKind::Fractional { .. } => 1.0,
        PenaltyKind::TukeyBiweight => numeric_max_slope(
            |t| {
                let d = 1.0 + t * t;
                2.0 * t / (d * d)
            },
            5.0,
        ),
        PenaltyKind::CauchyLoss { xi } => {
            numeric_max_slope(|t| xi * xi * t / (xi * xi + t * t), 5.0 * xi)
        }
    }
}

/// Maximum of `|slope|` over `[0, hi]` by grid scan plus golden-section
/// refinement. The robust-loss slopes are unimodal on the positive axis, so
/// this pins the maximum to near machine precision.
fn numeric_max_slope(slope: impl Fn(f64) -> f64, hi: f64) -> f64 {
    const GRID: usize = 20_000;
    let step = hi / GRID as f64;
    let mut best_i = 0;
    let mut best = 0.0_f64;
    for i in 0..=GRID {
        let v = slope(i as f64 * step).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = (best_i.saturating_sub(1)) as f64 * step;
    let hi = ((best_i + 1).min(GRID)) as f64 * step;
    let (_, max) = golden_section_max(|t| slope(t).abs(), lo, hi, 200);
    max.max(best)
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, max_iter: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
