//! Experiment configuration: the JSON schema consumed by the CLI, plus the
//! translation from a parsed spec into a ready-to-solve problem.
//!
//! A config file fully determines a run:
//!
//! ```json
//! {
//!   "problem": {"kind": "denoise_tv_mcp",
//!               "image": {"source": "synthetic", "pattern": "piecewise_constant",
//!                         "height": 64, "width": 64},
//!               "noise": {"sigma": 0.1, "seed": 7}},
//!   "regularizer": {"kind": "mcp", "lambda": 0.15, "theta": 4.0},
//!   "operator": {"kind": "grad2d"},
//!   "algorithms": [{"name": "variable_smoothing", "max_iter": 2000}],
//!   "seed": 7,
//!   "output_dir": "out"
//! }
//! ```
//!
//! Unknown keys are rejected everywhere; unknown kind/name strings produce an
//! error listing the valid names.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::image::{generate_synthetic_image, ImageBuffer, SyntheticKind};
use crate::linops::LinearOperator;
use crate::problem::CompositeProblem;
use crate::regularizers::WeaklyConvexFunction;
use crate::smooth::SmoothFunction;

/// Artificial weak-convexity modulus substituted for convex regularizers so
/// the smoothing schedule is defined. The method does not specialize to the
/// convex case; this keeps it usable there at the cost of a conservative
/// schedule.
pub const DEFAULT_ARTIFICIAL_RHO: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub regularizer: RegularizerSpec,
    pub operator: OperatorSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub seed: u64,
    pub output_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// `min 0.5||x - b||^2 + g(grad x)` on an image `b`.
    DenoiseTvMcp {
        image: ImageSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<NoiseSpec>,
        /// Optional path to a ground-truth image for quality metrics.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ground_truth: Option<String>,
    },
    /// `min (w/2)||x||^2 + sum phi(A_i. x - b_i)` with a robust loss.
    RobustRegression {
        data: RegressionSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ridge_weight: Option<f64>,
    },
    /// `min 0.5||B x - b||^2 + g(x)`.
    LassoMcp { data: RegressionSource },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ImageSource {
    Synthetic {
        pattern: ImagePattern,
        height: usize,
        width: usize,
        /// Defaults to the top-level seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    File { path: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ImagePattern {
    PiecewiseConstant,
    Checkerboard,
}

/// Additive gaussian noise; the seed is mandatory so runs are reproducible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RegressionSource {
    Synthetic {
        rows: usize,
        cols: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outlier_fraction: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_sigma: Option<f64>,
    },
    Files {
        design_csv: String,
        targets_csv: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    Zero,
    L1 { lambda: f64 },
    Mcp { lambda: f64, theta: f64 },
    Scad { lambda: f64, theta: f64 },
    Fractional { a: f64 },
    Tukey,
    Cauchy { xi: f64 },
}

impl RegularizerSpec {
    pub fn build(&self) -> Result<WeaklyConvexFunction> {
        match *self {
            RegularizerSpec::Zero => Ok(WeaklyConvexFunction::zero()),
            RegularizerSpec::L1 { lambda } => WeaklyConvexFunction::l1(lambda),
            RegularizerSpec::Mcp { lambda, theta } => WeaklyConvexFunction::mcp(lambda, theta),
            RegularizerSpec::Scad { lambda, theta } => WeaklyConvexFunction::scad(lambda, theta),
            RegularizerSpec::Fractional { a } => WeaklyConvexFunction::fractional(a),
            RegularizerSpec::Tukey => Ok(WeaklyConvexFunction::tukey_biweight()),
            RegularizerSpec::Cauchy { xi } => WeaklyConvexFunction::cauchy_loss(xi),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// The 2D discrete gradient of the problem's image (denoising).
    Grad2d,
    /// The identity on the coefficient space (additive problems).
    Identity,
    /// The design matrix of the problem's regression data.
    Design,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    VariableSmoothing,
    Epochs,
    ProxGrad,
    Subgradient,
}

impl AlgorithmName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmName::VariableSmoothing => "variable_smoothing",
            AlgorithmName::Epochs => "epochs",
            AlgorithmName::ProxGrad => "prox_grad",
            AlgorithmName::Subgradient => "subgradient",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Stopping tolerance (epochs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Step size (prox_grad only); defaults to the largest admissible step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Step constant (subgradient only); defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Parses and validates a config file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_spec(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid json: {e}")))?;
    check_known_fields(&value)?;
    let spec: ExperimentSpec =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    validate_spec(&spec)?;
    Ok(spec)
}

type JsonMap = serde_json::Map<String, Value>;

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a JsonMap> {
    v.as_object()
        .ok_or_else(|| Error::Config(format!("{what} must be a json object")))
}

fn check_keys(map: &JsonMap, what: &str, allowed: &[&str]) -> Result<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown field `{key}` in {what}; valid fields: {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// Internally tagged enums do not support serde's `deny_unknown_fields`, so
/// unknown keys are rejected by an explicit schema walk before typed
/// deserialization. Unknown kind/name strings are left for serde, which
/// reports them together with the list of valid names.
fn check_known_fields(value: &Value) -> Result<()> {
    let top = as_object(value, "config")?;
    check_keys(
        top,
        "config",
        &["problem", "regularizer", "operator", "algorithms", "seed", "output_dir"],
    )?;

    if let Some(problem) = top.get("problem") {
        let p = as_object(problem, "problem")?;
        match p.get("kind").and_then(Value::as_str) {
            Some("denoise_tv_mcp") => {
                check_keys(p, "problem", &["kind", "image", "noise", "ground_truth"])?;
                if let Some(image) = p.get("image") {
                    let img = as_object(image, "problem.image")?;
                    match img.get("source").and_then(Value::as_str) {
                        Some("synthetic") => check_keys(
                            img,
                            "problem.image",
                            &["source", "pattern", "height", "width", "seed"],
                        )?,
                        Some("file") => check_keys(img, "problem.image", &["source", "path"])?,
                        _ => {}
                    }
                }
                if let Some(noise) = p.get("noise") {
                    if !noise.is_null() {
                        check_keys(
                            as_object(noise, "problem.noise")?,
                            "problem.noise",
                            &["sigma", "seed"],
                        )?;
                    }
                }
            }
            Some("robust_regression") => {
                check_keys(p, "problem", &["kind", "data", "ridge_weight"])?;
                check_regression_source(p.get("data"))?;
            }
            Some("lasso_mcp") => {
                check_keys(p, "problem", &["kind", "data"])?;
                check_regression_source(p.get("data"))?;
            }
            _ => {} // unknown kinds fall through to serde's variant error
        }
    }

    if let Some(reg) = top.get("regularizer") {
        let r = as_object(reg, "regularizer")?;
        let allowed: Option<&[&str]> = match r.get("kind").and_then(Value::as_str) {
            Some("zero") | Some("tukey") => Some(&["kind"]),
            Some("l1") => Some(&["kind", "lambda"]),
            Some("mcp") | Some("scad") => Some(&["kind", "lambda", "theta"]),
            Some("fractional") => Some(&["kind", "a"]),
            Some("cauchy") => Some(&["kind", "xi"]),
            _ => None,
        };
        if let Some(allowed) = allowed {
            check_keys(r, "regularizer", allowed)?;
        }
    }

    if let Some(op) = top.get("operator") {
        check_keys(as_object(op, "operator")?, "operator", &["kind"])?;
    }

    // algorithm entries are plain structs; serde's deny_unknown_fields covers them
    Ok(())
}

fn check_regression_source(data: Option<&Value>) -> Result<()> {
    if let Some(data) = data {
        let d = as_object(data, "problem.data")?;
        match d.get("source").and_then(Value::as_str) {
            Some("synthetic") => check_keys(
                d,
                "problem.data",
                &["source", "rows", "cols", "seed", "outlier_fraction", "noise_sigma"],
            )?,
            Some("files") => {
                check_keys(d, "problem.data", &["source", "design_csv", "targets_csv"])?
            }
            _ => {}
        }
    }
    Ok(())
}

fn validate_spec(spec: &ExperimentSpec) -> Result<()> {
    if spec.algorithms.is_empty() {
        return Err(Error::Config("at least one algorithm must be listed".into()));
    }
    if spec.output_dir.is_empty() {
        return Err(Error::Config("output_dir must not be empty".into()));
    }
    let required_operator = match spec.problem {
        ProblemSpec::DenoiseTvMcp { .. } => OperatorSpec::Grad2d,
        ProblemSpec::RobustRegression { .. } => OperatorSpec::Design,
        ProblemSpec::LassoMcp { .. } => OperatorSpec::Identity,
    };
    if spec.operator != required_operator {
        return Err(Error::Config(format!(
            "this problem kind requires operator kind `{}`",
            match required_operator {
                OperatorSpec::Grad2d => "grad2d",
                OperatorSpec::Identity => "identity",
                OperatorSpec::Design => "design",
            }
        )));
    }
    if matches!(spec.problem, ProblemSpec::RobustRegression { .. })
        && !matches!(
            spec.regularizer,
            RegularizerSpec::Tukey | RegularizerSpec::Cauchy { .. }
        )
    {
        return Err(Error::Config(
            "robust regression requires a `tukey` or `cauchy` regularizer".into(),
        ));
    }
    for algo in &spec.algorithms {
        if algo.max_iter.is_none() {
            return Err(Error::Config(format!(
                "algorithm `{}` needs max_iter",
                algo.name.as_str()
            )));
        }
        match algo.name {
            AlgorithmName::Epochs => {
                let eps = algo.epsilon.ok_or_else(|| {
                    Error::Config("algorithm `epochs` needs a positive epsilon".into())
                })?;
                if !(eps > 0.0) {
                    return Err(Error::Config(format!(
                        "algorithm `epochs` needs a positive epsilon, got {eps}"
                    )));
                }
            }
            AlgorithmName::ProxGrad => {
                if spec.operator != OperatorSpec::Identity {
                    return Err(Error::Config(
                        "algorithm `prox_grad` applies only to identity-operator problems".into(),
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// A spec translated into solver inputs.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: CompositeProblem,
    pub x1: DVector<f64>,
    /// Present for image problems: (height, width).
    pub image_shape: Option<(usize, usize)>,
    /// Clean reference image, when one is known.
    pub ground_truth: Option<ImageBuffer>,
    /// The observed (possibly noisy) image the solve starts from.
    pub observed: Option<ImageBuffer>,
}

/// Loads an image by extension: `.pgm` binary or `.csv` of reals. File pixels
/// are clamped into `[0, 1]` on load; the optimization itself is
/// unconstrained.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ImageBuffer::read_pgm(path),
        Some("csv") => Ok(ImageBuffer::read_csv(path)?.clamped_unit()),
        _ => Err(Error::Config(format!(
            "{}: image files must end in .pgm or .csv",
            path.display()
        ))),
    }
}

fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), lineno + 1))
            })?;
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Config(format!("{}: empty vector", path.display())));
    }
    Ok(DVector::from_vec(values))
}

/// Builds the composite problem a spec describes. `image_override` replaces
/// the configured image source (used by `varsmooth denoise <image>`).
pub fn build_problem(spec: &ExperimentSpec, image_override: Option<&Path>) -> Result<BuiltProblem> {
    let mut g = spec.regularizer.build()?;

    match &spec.problem {
        ProblemSpec::DenoiseTvMcp {
            image,
            noise,
            ground_truth,
        } => {
            let clean = match image_override {
                Some(path) => load_image(path)?,
                None => match image {
                    ImageSource::Synthetic {
                        pattern,
                        height,
                        width,
                        seed,
                    } => {
                        let kind = match pattern {
                            ImagePattern::PiecewiseConstant => SyntheticKind::PiecewiseConstant,
                            ImagePattern::Checkerboard => SyntheticKind::Checkerboard,
                        };
                        generate_synthetic_image(kind, *height, *width, seed.unwrap_or(spec.seed))?
                    }
                    ImageSource::File { path } => load_image(Path::new(path))?,
                },
            };
            let observed = match noise {
                Some(n) => clean.with_gaussian_noise(n.sigma, n.seed)?,
                None => clean.clone(),
            };
            // ground truth: an explicit path wins; otherwise the pre-noise
            // image when noise was generated here
            let truth = match ground_truth {
                Some(path) => Some(load_image(Path::new(path))?),
                None if noise.is_some() => Some(clean),
                None => None,
            };
            let (h, w) = (observed.height(), observed.width());
            if h < 2 || w < 2 {
                return Err(Error::Config(format!(
                    "denoising needs an image of at least 2x2 pixels, got {h}x{w}"
                )));
            }
            let fidelity = SmoothFunction::least_squares(
                LinearOperator::identity(h * w),
                observed.pixels().clone(),
            )?;
            let a = LinearOperator::grad2d(h, w)?;
            g = substitute_rho_if_convex(g)?;
            let problem = CompositeProblem::new(fidelity, g, a, 0.0)?;
            Ok(BuiltProblem {
                x1: observed.pixels().clone(),
                image_shape: Some((h, w)),
                ground_truth: truth,
                observed: Some(observed),
                problem,
            })
        }
        ProblemSpec::RobustRegression { data, ridge_weight } => {
            let (design, targets) = load_regression(data, spec.seed)?;
            let d = design.ncols();
            let h = match ridge_weight {
                Some(w) if *w > 0.0 => SmoothFunction::scaled_norm_sq(*w)?,
                Some(w) if *w < 0.0 => {
                    return Err(Error::Config(format!("ridge_weight must be >= 0, got {w}")))
                }
                _ => SmoothFunction::zero(),
            };
            if targets.len() != design.nrows() {
                return Err(Error::Dimension {
                    context: "regression targets",
                    expected: design.nrows(),
                    got: targets.len(),
                });
            }
            g = substitute_rho_if_convex(g.with_shift(targets))?;
            let a = LinearOperator::dense(design)?;
            let problem = CompositeProblem::new(h, g, a, 0.0)?;
            Ok(BuiltProblem {
                problem,
                x1: DVector::zeros(d),
                image_shape: None,
                ground_truth: None,
                observed: None,
            })
        }
        ProblemSpec::LassoMcp { data } => {
            let (design, targets) = load_regression(data, spec.seed)?;
            let d = design.ncols();
            let h = SmoothFunction::least_squares(LinearOperator::dense(design)?, targets)?;
            g = substitute_rho_if_convex(g)?;
            let problem = CompositeProblem::new(h, g, LinearOperator::identity(d), 0.0)?;
            Ok(BuiltProblem {
                problem,
                x1: DVector::zeros(d),
                image_shape: None,
                ground_truth: None,
                observed: None,
            })
        }
    }
}

fn substitute_rho_if_convex(g: WeaklyConvexFunction) -> Result<WeaklyConvexFunction> {
    if g.rho() == 0.0 {
        g.with_rho(DEFAULT_ARTIFICIAL_RHO)
    } else {
        Ok(g)
    }
}

fn load_regression(
    source: &RegressionSource,
    default_seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    match source {
        RegressionSource::Synthetic {
            rows,
            cols,
            seed,
            outlier_fraction,
            noise_sigma,
        } => {
            let data = crate::builders::synthetic_regression(
                *rows,
                *cols,
                seed.unwrap_or(default_seed),
                outlier_fraction.unwrap_or(0.0),
                noise_sigma.unwrap_or(0.05),
            )?;
            Ok((data.design, data.targets))
        }
        RegressionSource::Files {
            design_csv,
            targets_csv,
        } => {
            let op = LinearOperator::dense_from_csv(Path::new(design_csv))?;
            let design = match op.kind() {
                crate::linops::OperatorKind::Dense { matrix } => matrix.clone(),
                _ => unreachable!("dense_from_csv builds dense operators"),
            };
            let targets = read_vector_csv(Path::new(targets_csv))?;
            Ok((design, targets))
        }
    }
}
