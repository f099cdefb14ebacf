//! Solvers: variable smoothing, its epoch-wise variant, proximal gradient for
//! the identity-operator case, and a plain subgradient baseline. Each emits a
//! per-iteration trace; the structured methods also emit a stationarity
//! certificate.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::CompositeProblem;
use crate::regularizers::WeaklyConvexFunction;
use crate::smooth::SmoothFunction;
use crate::trace::{Certificate, IterationRecord, SolveTrace};

/// The smoothing/step-size rule shared by both smoothing algorithms:
/// `mu_k = (2 rho)^{-1} k^{-1/3}`, `L_k = L_grad_h + ||A||^2 / mu_k`,
/// `gamma_k = 1 / L_k`.
///
/// `rho mu_k <= 1/2` holds for every `k >= 1`, so `L_k` built from `1/mu_k`
/// is a valid Lipschitz constant of the smoothed gradient, and
/// `gamma_k >= k^{-1/3} / (L_grad_h + 2 rho ||A||^2)`.
#[derive(Debug, Clone, Copy)]
pub struct StepSchedule {
    rho: f64,
    norm_a_sq: f64,
    lip_grad_h: f64,
}

impl StepSchedule {
    pub fn new(rho: f64, norm_a_sq: f64, lip_grad_h: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!(
                "the smoothing schedule requires rho > 0, got {rho}; for a convex \
                 regularizer substitute a small artificial modulus (e.g. with_rho(1e-3))"
            )));
        }
        if !(norm_a_sq > 0.0) || !norm_a_sq.is_finite() {
            return Err(Error::Config(format!(
                "the smoothing schedule requires a nonzero operator, got ||A||^2 = {norm_a_sq}"
            )));
        }
        if !(lip_grad_h >= 0.0) || !lip_grad_h.is_finite() {
            return Err(Error::Config(format!(
                "invalid gradient Lipschitz constant {lip_grad_h}"
            )));
        }
        Ok(StepSchedule {
            rho,
            norm_a_sq,
            lip_grad_h,
        })
    }

    pub fn for_problem(p: &CompositeProblem) -> Result<Self> {
        let norm = p.operator().norm_est();
        Self::new(p.regularizer().rho(), norm * norm, p.smooth_term().lip_grad())
    }

    pub fn mu(&self, k: usize) -> f64 {
        1.0 / (2.0 * self.rho * (k as f64).cbrt())
    }

    pub fn lipschitz(&self, k: usize) -> f64 {
        self.lip_grad_h + self.norm_a_sq / self.mu(k)
    }

    pub fn gamma(&self, k: usize) -> f64 {
        1.0 / self.lipschitz(k)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trace: SolveTrace,
    pub certificate: Certificate,
    /// The iterate after the last step.
    pub final_point: DVector<f64>,
}

/// Stopping test used by the epoch-wise algorithm next to the criticality
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochStopping {
    /// `||A x - prox_{mu g}(A x)|| <= epsilon` (the default).
    FeasibilityGap,
    /// `||x - x*|| <= epsilon` with the least-norm corrected point `x*`;
    /// requires a surjective operator.
    SurjectiveWitness,
}

#[derive(Debug, Clone)]
pub struct EpochsOutcome {
    pub trace: SolveTrace,
    pub certificate: Certificate,
    /// Whether both thresholds were met before the epoch budget ran out.
    pub reached_tolerance: bool,
    pub epochs_run: usize,
    /// The iterate the run stopped at (the certified point on early
    /// termination, otherwise the last iterate).
    pub final_point: DVector<f64>,
}

/// Trace plus final iterate for the certificate-free baseline.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub trace: SolveTrace,
    pub final_point: DVector<f64>,
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn require_finite_start(x1: &DVector<f64>) -> Result<()> {
    if !all_finite(x1) {
        return Err(Error::Usage("initial point has non-finite entries".into()));
    }
    Ok(())
}

fn require_input_dim(p: &CompositeProblem, x1: &DVector<f64>) -> Result<()> {
    if x1.len() != p.input_dim() {
        return Err(Error::Dimension {
            context: "initial point",
            expected: p.input_dim(),
            got: x1.len(),
        });
    }
    Ok(())
}

/// Gradient descent on the smoothed objectives `F_k = h + g_{mu_k} o A` with
/// the decreasing schedule `mu_k = (2 rho)^{-1} k^{-1/3}`.
///
/// Runs for exactly `max_iter` iterations (the method has no built-in
/// stopping rule; use [`variable_smoothing_epochs`] for epsilon-stopping).
/// The certificate witnesses the first iterate attaining the smallest
/// smoothed-gradient norm.
pub fn variable_smoothing(
    p: &CompositeProblem,
    x1: &DVector<f64>,
    max_iter: usize,
) -> Result<SolveOutcome> {
    require_finite_start(x1)?;
    require_input_dim(p, x1)?;
    if max_iter == 0 {
        return Err(Error::Config("variable smoothing needs max_iter >= 1".into()));
    }
    let sched = StepSchedule::for_problem(p)?;
    let started = Instant::now();
    let mut trace = SolveTrace::new();
    let mut x = x1.clone();
    let mut best: Option<(usize, f64, f64, DVector<f64>)> = None;

    for k in 1..=max_iter {
        let mu = sched.mu(k);
        let gamma = sched.gamma(k);
        let ev = p.smoothed_eval(mu, &x)?;
        let x_next = &x - &ev.gradient * gamma;
        let diverged = !all_finite(&x_next);
        let f_next = if diverged {
            f64::NAN
        } else {
            p.smoothed_objective(mu, &x_next)?
        };
        trace.push(IterationRecord {
            k,
            mu,
            gamma,
            f_smoothed: ev.f_smoothed,
            f_true: ev.f_true,
            grad_norm: ev.grad_norm,
            feasibility: ev.feasibility,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            f_smoothed_next: f_next,
            step_norm: (&x_next - &x).norm(),
        });
        if diverged {
            return Err(Error::Divergence {
                iteration: k,
                trace: Box::new(trace),
            });
        }
        let improved = best
            .as_ref()
            .map_or(true, |(_, crit, _, _)| ev.grad_norm < *crit);
        if improved {
            best = Some((k, ev.grad_norm, ev.feasibility, x.clone()));
        }
        x = x_next;
    }

    let (witness_index, criticality, feasibility, witness) =
        best.expect("max_iter >= 1 guarantees at least one record");
    Ok(SolveOutcome {
        trace,
        certificate: Certificate {
            witness_index,
            criticality,
            feasibility,
            witness,
            surjective_witness: None,
        },
        final_point: x,
    })
}

/// Variable smoothing organized into doubling epochs with a joint stopping
/// test: within each epoch the best post-step smoothed-gradient norm is
/// tracked, and the run stops once that norm and the feasibility measure are
/// both at most `epsilon` at a single iterate.
///
/// The iterate sequence is identical to [`variable_smoothing`]; only the
/// certificate selection differs. At an epoch boundary the check uses the
/// next iteration's smoothing parameter, following the per-index schedule.
pub fn variable_smoothing_epochs(
    p: &CompositeProblem,
    x1: &DVector<f64>,
    epsilon: f64,
    max_epochs: usize,
    stopping: EpochStopping,
) -> Result<EpochsOutcome> {
    require_finite_start(x1)?;
    require_input_dim(p, x1)?;
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_epochs == 0 || max_epochs > 60 {
        return Err(Error::Config(format!(
            "max_epochs must be in 1..=60, got {max_epochs}"
        )));
    }
    let sched = StepSchedule::for_problem(p)?;
    let started = Instant::now();
    let mut trace = SolveTrace::new();
    let mut x = x1.clone();
    let mut ev = p.smoothed_eval(sched.mu(1), &x)?;
    let mut k = 1usize;
    // best checked point across the whole run, for budget-exhausted returns
    let mut global_best: Option<Certificate> = None;
    let mut epochs_run = 0usize;

    for l in 0..max_epochs {
        epochs_run = l + 1;
        let mut epoch_best = f64::INFINITY;
        let epoch_end = (1usize << (l + 1)) - 1;
        while k <= epoch_end {
            let mu = sched.mu(k);
            let gamma = sched.gamma(k);
            let x_next = &x - &ev.gradient * gamma;
            let diverged = !all_finite(&x_next);
            let f_next = if diverged {
                f64::NAN
            } else {
                p.smoothed_objective(mu, &x_next)?
            };
            trace.push(IterationRecord {
                k,
                mu,
                gamma,
                f_smoothed: ev.f_smoothed,
                f_true: ev.f_true,
                grad_norm: ev.grad_norm,
                feasibility: ev.feasibility,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
                f_smoothed_next: f_next,
                step_norm: (&x_next - &x).norm(),
            });
            if diverged {
                return Err(Error::Divergence {
                    iteration: k,
                    trace: Box::new(trace),
                });
            }
            let mu_next = sched.mu(k + 1);
            let ev_next = p.smoothed_eval(mu_next, &x_next)?;

            let better_globally = global_best
                .as_ref()
                .map_or(true, |c| ev_next.grad_norm < c.criticality);
            if better_globally {
                global_best = Some(Certificate {
                    witness_index: k + 1,
                    criticality: ev_next.grad_norm,
                    feasibility: ev_next.feasibility,
                    witness: x_next.clone(),
                    surjective_witness: None,
                });
            }

            if ev_next.grad_norm <= epoch_best {
                epoch_best = ev_next.grad_norm;
                let (stop_metric, corrected) = match stopping {
                    EpochStopping::FeasibilityGap => (ev_next.feasibility, None),
                    EpochStopping::SurjectiveWitness => {
                        let xstar = p.surjective_witness(&x_next, mu_next)?;
                        ((&x_next - &xstar).norm(), Some(xstar))
                    }
                };
                if epoch_best <= epsilon && stop_metric <= epsilon {
                    return Ok(EpochsOutcome {
                        trace,
                        certificate: Certificate {
                            witness_index: k + 1,
                            criticality: ev_next.grad_norm,
                            feasibility: ev_next.feasibility,
                            witness: x_next.clone(),
                            surjective_witness: corrected,
                        },
                        reached_tolerance: true,
                        epochs_run,
                        final_point: x_next,
                    });
                }
            }
            x = x_next;
            ev = ev_next;
            k += 1;
        }
    }

    Ok(EpochsOutcome {
        trace,
        certificate: global_best.expect("at least one iteration ran"),
        reached_tolerance: false,
        epochs_run,
        final_point: x,
    })
}

/// Standard proximal gradient for `min h(x) + g(x)` (the operator is
/// implicitly the identity), with fixed step
/// `lambda in (0, min{ (2 rho)^{-1}, 1/L_grad_h }]`.
///
/// The certificate criticality is the norm of the subgradient witness
/// `w_{k+1} = (x_k - x_{k+1})/lambda + grad h(x_{k+1}) - grad h(x_k)`, an
/// element of the subdifferential of `h + g` at `x_{k+1}`.
pub fn proximal_gradient(
    h: &SmoothFunction,
    g: &WeaklyConvexFunction,
    x1: &DVector<f64>,
    lambda: f64,
    max_iter: usize,
) -> Result<SolveOutcome> {
    require_finite_start(x1)?;
    if max_iter == 0 {
        return Err(Error::Config("proximal gradient needs max_iter >= 1".into()));
    }
    let bound = proximal_gradient_step_bound(h, g);
    if !(lambda > 0.0) || lambda > bound {
        return Err(Error::Config(format!(
            "step size lambda={lambda} outside (0, {bound}]"
        )));
    }
    let started = Instant::now();
    let mut trace = SolveTrace::new();
    let mut x = x1.clone();
    let mut best: Option<(usize, f64, DVector<f64>)> = None;

    for k in 1..=max_iter {
        let grad_x = h.gradient(&x)?;
        let x_next = g.prox(lambda, &(&x - &grad_x * lambda))?;
        let diverged = !all_finite(&x_next);
        if diverged {
            return Err(Error::Divergence {
                iteration: k,
                trace: Box::new(trace),
            });
        }
        let witness_vec = (&x - &x_next) / lambda + h.gradient(&x_next)? - &grad_x;
        let f_x = h.value(&x)? + g.eval(&x)?;
        let f_next = h.value(&x_next)? + g.eval(&x_next)?;
        let witness_norm = witness_vec.norm();
        trace.push(IterationRecord {
            k,
            mu: lambda,
            gamma: lambda,
            f_smoothed: f_x,
            f_true: f_x,
            grad_norm: witness_norm,
            feasibility: 0.0,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            f_smoothed_next: f_next,
            step_norm: (&x_next - &x).norm(),
        });
        let improved = best
            .as_ref()
            .map_or(true, |(_, crit, _)| witness_norm < *crit);
        if improved {
            best = Some((k + 1, witness_norm, x_next.clone()));
        }
        x = x_next;
    }

    let (witness_index, criticality, witness) = best.expect("max_iter >= 1");
    Ok(SolveOutcome {
        trace,
        certificate: Certificate {
            witness_index,
            criticality,
            feasibility: 0.0,
            witness,
            surjective_witness: None,
        },
        final_point: x,
    })
}

/// The largest admissible proximal-gradient step, `min{(2 rho)^{-1}, 1/L}`.
pub fn proximal_gradient_step_bound(h: &SmoothFunction, g: &WeaklyConvexFunction) -> f64 {
    let rho_cap = if g.rho() > 0.0 {
        0.5 / g.rho()
    } else {
        f64::INFINITY
    };
    let lip_cap = if h.lip_grad() > 0.0 {
        1.0 / h.lip_grad()
    } else {
        f64::INFINITY
    };
    rho_cap.min(lip_cap)
}

/// Naive subgradient baseline: `x_{k+1} = x_k - (c/sqrt(k)) (grad h(x_k) +
/// A^T v_k)` with `v_k` a subgradient of `g` at `A x_k`. The trace's
/// grad_norm column records the norm of the step direction, i.e. the
/// difference of consecutive iterates scaled by the inverse step size.
pub fn subgradient_method(
    p: &CompositeProblem,
    x1: &DVector<f64>,
    c: f64,
    max_iter: usize,
) -> Result<BaselineOutcome> {
    require_finite_start(x1)?;
    require_input_dim(p, x1)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Config(format!("step constant c must be positive, got {c}")));
    }
    let started = Instant::now();
    let mut trace = SolveTrace::new();
    let mut x = x1.clone();

    for k in 1..=max_iter {
        let ax = p.operator().apply(&x)?;
        let v = p.regularizer().subgradient_selection(&ax)?;
        let direction = p.smooth_term().gradient(&x)? + p.operator().adjoint_apply(&v)?;
        let gamma = c / (k as f64).sqrt();
        let f = p.smooth_term().value(&x)? + p.regularizer().eval(&ax)?;
        let x_next = &x - &direction * gamma;
        let diverged = !all_finite(&x_next);
        trace.push(IterationRecord {
            k,
            mu: 0.0,
            gamma,
            f_smoothed: f,
            f_true: f,
            grad_norm: direction.norm(),
            feasibility: 0.0,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            f_smoothed_next: f64::NAN,
            step_norm: (&x_next - &x).norm(),
        });
        if diverged {
            return Err(Error::Divergence {
                iteration: k,
                trace: Box::new(trace),
            });
        }
        x = x_next;
    }
    Ok(BaselineOutcome {
        trace,
        final_point: x,
    })
}

/// Least-norm corrected point `x* = x - A^+(Ax - prox_{mu g}(Ax))` for a
/// surjective operator; satisfies `||x - x*|| <= mu L_g / sigma_min(A)`.
pub fn surjective_witness(
    p: &CompositeProblem,
    x: &DVector<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    p.surjective_witness(x, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::LinearOperator;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// h = (x-2)^2/2, g = MCP(1, 2), A = identity on R^1.
    fn one_dim_mcp_problem() -> CompositeProblem {
        let h = SmoothFunction::least_squares(
            LinearOperator::identity(1),
            DVector::from_vec(vec![2.0]),
        )
        .unwrap();
        let g = WeaklyConvexFunction::mcp(1.0, 2.0).unwrap();
        CompositeProblem::new(h, g, LinearOperator::identity(1), 0.0).unwrap()
    }

    #[test]
    fn schedule_identity_and_gamma_lower_bound() {
        let sched = StepSchedule::new(0.5, 4.0, 1.0).unwrap();
        for k in [1usize, 2, 7, 100, 99_999] {
            let mu = sched.mu(k);
            assert!((mu * 2.0 * 0.5 * (k as f64).cbrt() - 1.0).abs() <= 4.0 * f64::EPSILON);
            assert!(sched.rho() * mu <= 0.5 + 1e-15);
            let lower = 1.0 / ((k as f64).cbrt() * (1.0 + 2.0 * 0.5 * 4.0));
            assert!(sched.gamma(k) >= lower - 1e-15);
        }
    }

    #[test]
    fn schedule_requires_positive_rho() {
        assert!(StepSchedule::new(0.0, 1.0, 1.0).is_err());
        let g = WeaklyConvexFunction::l1(1.0).unwrap();
        let p = CompositeProblem::new(
            SmoothFunction::zero(),
            g,
            LinearOperator::identity(2),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            variable_smoothing(&p, &DVector::zeros(2), 10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn smooth_specialization_converges_to_minimizer() {
        // g = 0 (with an artificial modulus), h strongly convex quadratic
        let target = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let h = SmoothFunction::least_squares(LinearOperator::identity(3), target.clone())
            .unwrap();
        let g = WeaklyConvexFunction::zero().with_rho(1e-3).unwrap();
        let p = CompositeProblem::new(h, g, LinearOperator::identity(3), 0.0).unwrap();
        let out = variable_smoothing(&p, &DVector::zeros(3), 2000).unwrap();
        assert!(out.certificate.criticality < 1e-6);
        let grads: Vec<f64> = out.trace.records().iter().map(|r| r.grad_norm).collect();
        assert!(grads.last().unwrap() < &1e-6);
        // the unconstrained minimizer is the target itself
        assert!((out.certificate.witness.clone() - target).norm() < 1e-5);
        assert_relative_eq!(
            (out.trace.records().last().unwrap().f_true).abs(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn theorem_rate_and_feasibility_on_one_dim_instance() {
        let p = one_dim_mcp_problem();
        let x1 = DVector::from_vec(vec![0.0]);
        let max_iter = 3000;
        let out = variable_smoothing(&p, &x1, max_iter).unwrap();
        let rho = p.regularizer().rho();
        let lg = p.regularizer_lipschitz();
        let norm_a = p.operator().norm_est();
        let lh = p.smooth_term().lip_grad();
        let f1 = out.trace.records()[0].f_smoothed;
        let c = 2.0 * (lh + 2.0 * rho * norm_a * norm_a).sqrt()
            * (f1 - 0.0 + lg * lg / (2.0 * rho)).sqrt();
        let mut best = f64::INFINITY;
        for r in out.trace.records() {
            best = best.min(r.grad_norm);
            assert!(
                best <= c / (r.k as f64).cbrt() + 1e-12,
                "rate violated at k={}",
                r.k
            );
            let feas_bound = lg / (2.0 * rho * (r.k as f64).cbrt());
            assert!(
                r.feasibility <= feas_bound + 1e-12,
                "feasibility bound violated at k={}",
                r.k
            );
        }
    }

    #[test]
    fn per_iteration_descent_and_envelope_switch() {
        let p = one_dim_mcp_problem();
        let out = variable_smoothing(&p, &DVector::from_vec(vec![0.0]), 2000).unwrap();
        let lg = p.regularizer_lipschitz();
        let records = out.trace.records();
        for r in records {
            let slack = 1e-9 * r.f_smoothed.abs() + 1e-12;
            assert!(
                r.f_smoothed_next <= r.f_smoothed - 0.5 * r.gamma * r.grad_norm * r.grad_norm
                    + slack,
                "descent violated at k={}",
                r.k
            );
        }
        for pair in records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(
                b.f_smoothed <= a.f_smoothed_next + (a.mu - b.mu) * lg * lg + 1e-12,
                "envelope switch violated at k={}",
                a.k
            );
        }
    }

    #[test]
    fn epochs_and_plain_runs_produce_identical_iterates() {
        let p = one_dim_mcp_problem();
        let x1 = DVector::from_vec(vec![0.0]);
        let plain = variable_smoothing(&p, &x1, 127).unwrap();
        // epsilon so small the epochs variant never stops early
        let epochs =
            variable_smoothing_epochs(&p, &x1, 1e-14, 7, EpochStopping::FeasibilityGap).unwrap();
        assert_eq!(plain.trace.len(), epochs.trace.len());
        for (a, b) in plain.trace.records().iter().zip(epochs.trace.records()) {
            assert_eq!(a.k, b.k);
            assert_eq!(a.mu, b.mu);
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.f_smoothed, b.f_smoothed);
            assert_eq!(a.grad_norm, b.grad_norm);
            assert_eq!(a.step_norm, b.step_norm);
        }
    }

    #[test]
    fn epochs_terminates_with_joint_certificate() {
        let p = one_dim_mcp_problem();
        let x1 = DVector::from_vec(vec![0.0]);
        let eps = 0.05;
        let out =
            variable_smoothing_epochs(&p, &x1, eps, 30, EpochStopping::FeasibilityGap).unwrap();
        assert!(out.reached_tolerance);
        assert!(out.certificate.criticality <= eps);
        assert!(out.certificate.feasibility <= eps);
        // a huge epsilon terminates at the first check
        let quick =
            variable_smoothing_epochs(&p, &x1, 1e6, 30, EpochStopping::FeasibilityGap).unwrap();
        assert!(quick.reached_tolerance);
        assert_eq!(quick.certificate.witness_index, 2);
        assert_eq!(quick.trace.len(), 1);
    }

    #[test]
    fn certificate_gradient_decomposes_through_subdifferential() {
        // grad F_j(x_j) = grad h(x_j) + A^T u with u in dg(z_j), coordinatewise
        let p = one_dim_mcp_problem();
        let out = variable_smoothing(&p, &DVector::from_vec(vec![0.0]), 500).unwrap();
        let j = out.certificate.witness_index;
        let sched = StepSchedule::for_problem(&p).unwrap();
        let mu = sched.mu(j);
        let xj = &out.certificate.witness;
        let axj = p.operator().apply(xj).unwrap();
        let z = p.regularizer().prox(mu, &axj).unwrap();
        let u = (&axj - &z) / mu;
        for i in 0..u.len() {
            let (lo, hi) = p.regularizer().scalar_subdifferential(z[i]);
            assert!(u[i] >= lo - 1e-9 && u[i] <= hi + 1e-9);
        }
        // and the recorded criticality matches the recomputed gradient norm
        let grad = p.smoothed_gradient(mu, xj).unwrap();
        assert_relative_eq!(grad.norm(), out.certificate.criticality, epsilon = 1e-12);
    }

    #[test]
    fn prox_grad_with_zero_g_is_gradient_descent() {
        let target = DVector::from_vec(vec![3.0, -1.0]);
        let h = SmoothFunction::least_squares(LinearOperator::identity(2), target).unwrap();
        let g = WeaklyConvexFunction::zero();
        let lambda = 1.0; // = 1/L
        let out = proximal_gradient(&h, &g, &DVector::zeros(2), lambda, 25).unwrap();
        // manual gradient descent
        let mut x = DVector::zeros(2);
        for _ in 0..25 {
            let gr = h.gradient(&x).unwrap();
            x -= gr * lambda;
        }
        let last = out.trace.records().last().unwrap();
        assert_relative_eq!(last.f_smoothed_next, h.value(&x).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn prox_grad_rejects_out_of_range_step() {
        let h = SmoothFunction::least_squares(LinearOperator::identity(1), DVector::zeros(1))
            .unwrap();
        let g = WeaklyConvexFunction::mcp(1.0, 2.0).unwrap(); // rho = 1/2 -> cap 1
        assert!(proximal_gradient(&h, &g, &DVector::zeros(1), 1.5, 10).is_err());
        assert!(proximal_gradient(&h, &g, &DVector::zeros(1), 0.0, 10).is_err());
        assert!(proximal_gradient(&h, &g, &DVector::zeros(1), 1.0, 10).is_ok());
    }

    #[test]
    fn prox_grad_sufficient_decrease_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let b = DMatrix::from_fn(10, 5, |_, _| rng.random_range(-1.0..1.0));
        let t = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let h = SmoothFunction::least_squares(LinearOperator::dense(b).unwrap(), t).unwrap();
        let g = WeaklyConvexFunction::mcp(0.5, 4.0).unwrap();
        let lambda = proximal_gradient_step_bound(&h, &g);
        let out = proximal_gradient(&h, &g, &DVector::zeros(5), lambda, 2000).unwrap();
        let rho = g.rho();
        let records = out.trace.records();
        for r in records {
            let lhs = r.f_smoothed_next + 0.5 * (1.0 / lambda - rho) * r.step_norm * r.step_norm;
            assert!(lhs <= r.f_true + 1e-9 * (1.0 + r.f_true.abs()));
        }
        let f1 = records[0].f_true;
        let factor = (2.0 * f1).sqrt() * (1.0 / lambda + h.lip_grad())
            / (1.0 / lambda - rho).sqrt();
        let mut best = f64::INFINITY;
        for r in records {
            best = best.min(r.grad_norm);
            assert!(best <= factor / (r.k as f64).sqrt() + 1e-9);
        }
    }

    #[test]
    fn subgradient_on_smooth_problem_decreases_tail() {
        let target = DVector::from_vec(vec![1.0, 1.0]);
        let h = SmoothFunction::least_squares(LinearOperator::identity(2), target).unwrap();
        let g = WeaklyConvexFunction::zero();
        let p = CompositeProblem::new(h, g, LinearOperator::identity(2), 0.0).unwrap();
        let out = subgradient_method(&p, &DVector::zeros(2), 0.5, 300).unwrap();
        let f: Vec<f64> = out.trace.records().iter().map(|r| r.f_true).collect();
        // nonincreasing tail once steps are small
        for w in f[100..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(f.last().unwrap() < &1e-3);
    }

    #[test]
    fn subgradient_divergence_carries_partial_trace() {
        let p = one_dim_mcp_problem();
        let err = subgradient_method(&p, &DVector::from_vec(vec![1.0]), 1e304, 50).unwrap_err();
        match err {
            Error::Divergence { iteration, trace } => {
                assert!(iteration >= 1);
                assert_eq!(trace.len(), iteration);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn surjective_witness_identity_is_prox() {
        let p = one_dim_mcp_problem();
        let x = DVector::from_vec(vec![1.0]);
        let mu = 0.5;
        let w = surjective_witness(&p, &x, mu).unwrap();
        let expect = p.regularizer().prox(mu, &x).unwrap();
        assert_eq!(w, expect);
    }

    #[test]
    fn surjective_witness_bound_on_random_invertible_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = DMatrix::from_fn(5, 5, |i, j| {
            rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 }
        });
        let op = LinearOperator::dense(a.clone()).unwrap();
        let g = WeaklyConvexFunction::l1(1.0).unwrap();
        let p = CompositeProblem::new(SmoothFunction::zero(), g, op, 0.0).unwrap();
        // sigma_min from an independent SVD
        let sigma_min = a.svd(false, false).singular_values.min();
        let lg = p.regularizer_lipschitz();
        let mu = 0.3;
        for _ in 0..20 {
            let x = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
            let xstar = surjective_witness(&p, &x, mu).unwrap();
            let ax = p.operator().apply(&xstar).unwrap();
            let z = p
                .regularizer()
                .prox(mu, &p.operator().apply(&x).unwrap())
                .unwrap();
            assert!((ax - &z).norm() <= 1e-10);
            assert!((&x - &xstar).norm() <= mu * lg / sigma_min + 1e-10);
        }
    }

    #[test]
    fn epochs_surjective_stopping_produces_corrected_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(3, 3, |i, j| {
            rng.random_range(-0.3..0.3) + if i == j { 1.5 } else { 0.0 }
        });
        let op = LinearOperator::dense(a).unwrap();
        let h = SmoothFunction::least_squares(
            LinearOperator::identity(3),
            DVector::from_vec(vec![1.0, 0.5, -0.5]),
        )
        .unwrap();
        let g = WeaklyConvexFunction::mcp(0.5, 2.0).unwrap();
        let p = CompositeProblem::new(h, g, op, 0.0).unwrap();
        let out = variable_smoothing_epochs(
            &p,
            &DVector::zeros(3),
            0.05,
            25,
            EpochStopping::SurjectiveWitness,
        )
        .unwrap();
        assert!(out.reached_tolerance);
        let xstar = out.certificate.surjective_witness.as_ref().unwrap();
        assert!((&out.certificate.witness - xstar).norm() <= 0.05);
        // A x* equals the prox point at the witness parameter
        let sched = StepSchedule::for_problem(&p).unwrap();
        let mu = sched.mu(out.certificate.witness_index);
        let ax = p.operator().apply(&out.certificate.witness).unwrap();
        let z = p.regularizer().prox(mu, &ax).unwrap();
        assert!((p.operator().apply(xstar).unwrap() - z).norm() <= 1e-10);
    }
}
