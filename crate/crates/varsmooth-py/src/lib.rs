//! Python bindings for the varsmooth toolkit: the penalty zoo with prox
//! oracles, Moreau envelopes, linear operators, composite problems, and the
//! solvers, exposed with plain lists for vectors.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use varsmooth::image::{generate_synthetic_image, ImageBuffer, SyntheticKind};
use varsmooth::solvers::{self, EpochStopping};
use varsmooth::trace::{Certificate, SolveTrace};
use varsmooth::{
    CompositeProblem, Error, LinearOperator, MoreauEnvelope, SmoothFunction,
    WeaklyConvexFunction,
};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) | Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn vec_to_dvector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn dvector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be nonempty"));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// A weakly convex penalty or loss with eval/prox/subgradient oracles.
#[pyclass(name = "Regularizer", skip_from_py_object)]
#[derive(Clone)]
struct PyRegularizer {
    inner: WeaklyConvexFunction,
}

#[pymethods]
impl PyRegularizer {
    #[staticmethod]
    fn zero() -> Self {
        PyRegularizer {
            inner: WeaklyConvexFunction::zero(),
        }
    }

    #[staticmethod]
    fn l1(lambda: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: WeaklyConvexFunction::l1(lambda).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn mcp(lambda: f64, theta: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: WeaklyConvexFunction::mcp(lambda, theta).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn scad(lambda: f64, theta: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: WeaklyConvexFunction::scad(lambda, theta).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn fractional(a: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: WeaklyConvexFunction::fractional(a).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn tukey() -> Self {
        PyRegularizer {
            inner: WeaklyConvexFunction::tukey_biweight(),
        }
    }

    #[staticmethod]
    fn cauchy(xi: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: WeaklyConvexFunction::cauchy_loss(xi).map_err(to_py_err)?,
        })
    }

    /// Applies the penalty to residuals `y - b`.
    fn with_shift(&self, b: Vec<f64>) -> Self {
        PyRegularizer {
            inner: self.inner.clone().with_shift(vec_to_dvector(b)),
        }
    }

    /// Overrides the weak-convexity modulus (must not shrink it).
    fn with_rho(&self, rho: f64) -> PyResult<Self> {
        Ok(PyRegularizer {
            inner: self.inner.clone().with_rho(rho).map_err(to_py_err)?,
        })
    }

    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    fn scalar_lipschitz(&self) -> f64 {
        self.inner.scalar_lipschitz()
    }

    fn lipschitz(&self, n: usize) -> f64 {
        self.inner.lipschitz(n)
    }

    fn eval(&self, y: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&vec_to_dvector(y)).map_err(to_py_err)
    }

    fn prox(&self, mu: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = self.inner.prox(mu, &vec_to_dvector(y)).map_err(to_py_err)?;
        Ok(dvector_to_vec(&p))
    }

    fn subgradient(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = self
            .inner
            .subgradient_selection(&vec_to_dvector(y))
            .map_err(to_py_err)?;
        Ok(dvector_to_vec(&v))
    }
}

/// Moreau envelope of a regularizer at a fixed smoothing parameter.
#[pyclass(name = "Envelope")]
struct PyEnvelope {
    function: WeaklyConvexFunction,
    mu: f64,
}

#[pymethods]
impl PyEnvelope {
    #[new]
    fn new(f: &PyRegularizer, mu: f64) -> PyResult<Self> {
        MoreauEnvelope::new(&f.inner, mu).map_err(to_py_err)?;
        Ok(PyEnvelope {
            function: f.inner.clone(),
            mu,
        })
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn value(&self, y: Vec<f64>) -> PyResult<f64> {
        let env = MoreauEnvelope::new(&self.function, self.mu).map_err(to_py_err)?;
        env.value(&vec_to_dvector(y)).map_err(to_py_err)
    }

    fn gradient(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let env = MoreauEnvelope::new(&self.function, self.mu).map_err(to_py_err)?;
        Ok(dvector_to_vec(
            &env.gradient(&vec_to_dvector(y)).map_err(to_py_err)?,
        ))
    }

    fn gradient_lipschitz(&self) -> PyResult<f64> {
        let env = MoreauEnvelope::new(&self.function, self.mu).map_err(to_py_err)?;
        Ok(env.gradient_lipschitz())
    }
}

/// A linear operator with apply/adjoint and a certified norm upper bound.
#[pyclass(name = "Operator", skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: LinearOperator,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn identity(dim: usize) -> Self {
        PyOperator {
            inner: LinearOperator::identity(dim),
        }
    }

    #[staticmethod]
    fn dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyOperator {
            inner: LinearOperator::dense(matrix_from_rows(rows)?).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn grad2d(height: usize, width: usize) -> PyResult<Self> {
        Ok(PyOperator {
            inner: LinearOperator::grad2d(height, width).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn scaled(alpha: f64, inner: &PyOperator) -> PyResult<Self> {
        Ok(PyOperator {
            inner: LinearOperator::scaled(alpha, inner.inner.clone()).map_err(to_py_err)?,
        })
    }

    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn norm_est(&self) -> f64 {
        self.inner.norm_est()
    }

    fn estimate_norm(&self, tol: f64) -> PyResult<f64> {
        solvers_estimate_norm(&self.inner, tol)
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self.inner.apply(&vec_to_dvector(x)).map_err(to_py_err)?,
        ))
    }

    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self
                .inner
                .adjoint_apply(&vec_to_dvector(y))
                .map_err(to_py_err)?,
        ))
    }

    fn least_norm_correct(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self
                .inner
                .least_norm_correct(&vec_to_dvector(x), &vec_to_dvector(z))
                .map_err(to_py_err)?,
        ))
    }

    fn smallest_singular_value(&self) -> PyResult<f64> {
        self.inner.smallest_singular_value().map_err(to_py_err)
    }
}

fn solvers_estimate_norm(op: &LinearOperator, tol: f64) -> PyResult<f64> {
    varsmooth::linops::estimate_norm(op, tol).map_err(to_py_err)
}

/// A smooth term with value, gradient, and gradient-Lipschitz constant.
#[pyclass(name = "SmoothTerm", skip_from_py_object)]
#[derive(Clone)]
struct PySmoothTerm {
    inner: SmoothFunction,
}

#[pymethods]
impl PySmoothTerm {
    #[staticmethod]
    fn zero() -> Self {
        PySmoothTerm {
            inner: SmoothFunction::zero(),
        }
    }

    #[staticmethod]
    fn scaled_norm_sq(weight: f64) -> PyResult<Self> {
        Ok(PySmoothTerm {
            inner: SmoothFunction::scaled_norm_sq(weight).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn least_squares(op: &PyOperator, target: Vec<f64>) -> PyResult<Self> {
        Ok(PySmoothTerm {
            inner: SmoothFunction::least_squares(op.inner.clone(), vec_to_dvector(target))
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn quadratic(matrix: Vec<Vec<f64>>, linear: Vec<f64>) -> PyResult<Self> {
        Ok(PySmoothTerm {
            inner: SmoothFunction::quadratic(matrix_from_rows(matrix)?, vec_to_dvector(linear))
                .map_err(to_py_err)?,
        })
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&vec_to_dvector(x)).map_err(to_py_err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self.inner.gradient(&vec_to_dvector(x)).map_err(to_py_err)?,
        ))
    }

    fn lip_grad(&self) -> f64 {
        self.inner.lip_grad()
    }
}

/// A composite problem `F(x) = h(x) + g(Ax)`.
#[pyclass(name = "Problem")]
struct PyProblem {
    inner: CompositeProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (smooth, regularizer, operator, fstar_lower = 0.0))]
    fn new(
        smooth: &PySmoothTerm,
        regularizer: &PyRegularizer,
        operator: &PyOperator,
        fstar_lower: f64,
    ) -> PyResult<Self> {
        Ok(PyProblem {
            inner: CompositeProblem::new(
                smooth.inner.clone(),
                regularizer.inner.clone(),
                operator.inner.clone(),
                fstar_lower,
            )
            .map_err(to_py_err)?,
        })
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&vec_to_dvector(x)).map_err(to_py_err)
    }

    fn smoothed_objective(&self, mu: f64, x: Vec<f64>) -> PyResult<f64> {
        self.inner
            .smoothed_objective(mu, &vec_to_dvector(x))
            .map_err(to_py_err)
    }

    fn smoothed_gradient(&self, mu: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self
                .inner
                .smoothed_gradient(mu, &vec_to_dvector(x))
                .map_err(to_py_err)?,
        ))
    }

    fn surjective_witness(&self, x: Vec<f64>, mu: f64) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self
                .inner
                .surjective_witness(&vec_to_dvector(x), mu)
                .map_err(to_py_err)?,
        ))
    }
}

fn trace_to_py<'py>(py: Python<'py>, trace: &SolveTrace) -> PyResult<Bound<'py, PyList>> {
    let out = PyList::empty(py);
    for r in trace.records() {
        let d = PyDict::new(py);
        d.set_item("k", r.k)?;
        d.set_item("mu", r.mu)?;
        d.set_item("gamma", r.gamma)?;
        d.set_item("f_smoothed", r.f_smoothed)?;
        d.set_item("f_true", r.f_true)?;
        d.set_item("grad_norm", r.grad_norm)?;
        d.set_item("feasibility", r.feasibility)?;
        d.set_item("step_norm", r.step_norm)?;
        out.append(d)?;
    }
    Ok(out)
}

fn certificate_to_py<'py>(py: Python<'py>, c: &Certificate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("witness_index", c.witness_index)?;
    d.set_item("criticality", c.criticality)?;
    d.set_item("feasibility", c.feasibility)?;
    d.set_item("witness", dvector_to_vec(&c.witness))?;
    d.set_item(
        "surjective_witness",
        c.surjective_witness.as_ref().map(dvector_to_vec),
    )?;
    Ok(d)
}

/// Runs variable smoothing; returns a dict with trace, certificate, and the
/// final iterate.
#[pyfunction]
fn variable_smoothing<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    x1: Vec<f64>,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let out = solvers::variable_smoothing(&problem.inner, &vec_to_dvector(x1), max_iter)
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("trace", trace_to_py(py, &out.trace)?)?;
    d.set_item("certificate", certificate_to_py(py, &out.certificate)?)?;
    d.set_item("final_point", dvector_to_vec(&out.final_point))?;
    Ok(d)
}

/// Epoch-wise variable smoothing with the joint criticality/feasibility
/// stopping test.
#[pyfunction]
#[pyo3(signature = (problem, x1, epsilon, max_epochs, surjective_stopping = false))]
fn variable_smoothing_epochs<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    x1: Vec<f64>,
    epsilon: f64,
    max_epochs: usize,
    surjective_stopping: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let stopping = if surjective_stopping {
        EpochStopping::SurjectiveWitness
    } else {
        EpochStopping::FeasibilityGap
    };
    let out = solvers::variable_smoothing_epochs(
        &problem.inner,
        &vec_to_dvector(x1),
        epsilon,
        max_epochs,
        stopping,
    )
    .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("trace", trace_to_py(py, &out.trace)?)?;
    d.set_item("certificate", certificate_to_py(py, &out.certificate)?)?;
    d.set_item("reached_tolerance", out.reached_tolerance)?;
    d.set_item("epochs_run", out.epochs_run)?;
    d.set_item("final_point", dvector_to_vec(&out.final_point))?;
    Ok(d)
}

/// Proximal gradient for the identity-operator problem `min h(x) + g(x)`.
#[pyfunction]
fn proximal_gradient<'py>(
    py: Python<'py>,
    smooth: &PySmoothTerm,
    regularizer: &PyRegularizer,
    x1: Vec<f64>,
    lambda: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let out = solvers::proximal_gradient(
        &smooth.inner,
        &regularizer.inner,
        &vec_to_dvector(x1),
        lambda,
        max_iter,
    )
    .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("trace", trace_to_py(py, &out.trace)?)?;
    d.set_item("certificate", certificate_to_py(py, &out.certificate)?)?;
    d.set_item("final_point", dvector_to_vec(&out.final_point))?;
    Ok(d)
}

/// Largest admissible proximal-gradient step for the pair (h, g).
#[pyfunction]
fn proximal_gradient_step_bound(smooth: &PySmoothTerm, regularizer: &PyRegularizer) -> f64 {
    solvers::proximal_gradient_step_bound(&smooth.inner, &regularizer.inner)
}

/// Naive subgradient baseline with steps `c / sqrt(k)`.
#[pyfunction]
fn subgradient_method<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    x1: Vec<f64>,
    c: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let out = solvers::subgradient_method(&problem.inner, &vec_to_dvector(x1), c, max_iter)
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("trace", trace_to_py(py, &out.trace)?)?;
    d.set_item("final_point", dvector_to_vec(&out.final_point))?;
    Ok(d)
}

/// Mean local SSIM with a uniform window over row-major pixel buffers.
#[pyfunction]
#[pyo3(signature = (a, b, height, width, window = 7))]
fn ssim(a: Vec<f64>, b: Vec<f64>, height: usize, width: usize, window: usize) -> PyResult<f64> {
    let ia = ImageBuffer::new(height, width, a).map_err(to_py_err)?;
    let ib = ImageBuffer::new(height, width, b).map_err(to_py_err)?;
    varsmooth::ssim::ssim(&ia, &ib, window).map_err(to_py_err)
}

/// Deterministic synthetic test image; returns row-major pixels.
#[pyfunction]
fn synthetic_image(pattern: &str, height: usize, width: usize, seed: u64) -> PyResult<Vec<f64>> {
    let kind = match pattern {
        "piecewise_constant" => SyntheticKind::PiecewiseConstant,
        "checkerboard" => SyntheticKind::Checkerboard,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown pattern `{other}`; valid patterns: piecewise_constant, checkerboard"
            )))
        }
    };
    let img = generate_synthetic_image(kind, height, width, seed).map_err(to_py_err)?;
    Ok(dvector_to_vec(img.pixels()))
}

/// Adds seeded gaussian noise to a row-major pixel buffer.
#[pyfunction]
fn add_gaussian_noise(
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    sigma: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let img = ImageBuffer::new(height, width, pixels).map_err(to_py_err)?;
    let noisy = img.with_gaussian_noise(sigma, seed).map_err(to_py_err)?;
    Ok(dvector_to_vec(noisy.pixels()))
}

/// Builds the TV denoising problem `min 0.5||x-b||^2 + sum mcp(grad x)`.
#[pyfunction]
fn build_tv_mcp_denoising(
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    lambda: f64,
    theta: f64,
) -> PyResult<PyProblem> {
    let img = ImageBuffer::new(height, width, pixels).map_err(to_py_err)?;
    Ok(PyProblem {
        inner: varsmooth::builders::build_tv_mcp_denoising(&img, lambda, theta)
            .map_err(to_py_err)?,
    })
}

#[pymodule]
fn varsmooth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegularizer>()?;
    m.add_class::<PyEnvelope>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PySmoothTerm>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(variable_smoothing, m)?)?;
    m.add_function(wrap_pyfunction!(variable_smoothing_epochs, m)?)?;
    m.add_function(wrap_pyfunction!(proximal_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(proximal_gradient_step_bound, m)?)?;
    m.add_function(wrap_pyfunction!(subgradient_method, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_image, m)?)?;
    m.add_function(wrap_pyfunction!(add_gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(build_tv_mcp_denoising, m)?)?;
    Ok(())
}
