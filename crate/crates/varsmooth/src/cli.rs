//! Implementations of the `varsmooth solve|denoise|compare` subcommands.
//!
//! Each command loads a JSON spec, runs the configured algorithms, and writes
//! one trace CSV per algorithm plus a `report.json` into the output
//! directory. Validation happens before anything is written; a malformed
//! config produces no output files. Exit codes: 0 success, 2 validation
//! error, 3 numeric divergence.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;

use crate::config::{build_problem, load_spec, AlgorithmName, AlgorithmSpec, BuiltProblem,
    ExperimentSpec, ProblemSpec};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::report::{AlgorithmReport, RunReport};
use crate::solvers::{self, EpochStopping};
use crate::ssim::ssim;
use crate::trace::{Certificate, SolveTrace};

pub const OUTPUT_DIR_ENV: &str = "VARSMOOTH_OUTPUT_DIR";
pub const DEFAULT_SSIM_WINDOW: usize = 7;

/// Maps errors to the process exit code: validation problems exit 2, numeric
/// failures and divergence exit 3.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) | Error::Divergence { .. } => 3,
        _ => 2,
    }
}

pub fn run_solve(config_path: &Path) -> Result<RunReport> {
    run_command("solve", config_path, None)
}

pub fn run_denoise(image_path: &Path, config_path: &Path) -> Result<RunReport> {
    run_command("denoise", config_path, Some(image_path))
}

pub fn run_compare(config_path: &Path) -> Result<RunReport> {
    run_command("compare", config_path, None)
}

fn run_command(
    command: &'static str,
    config_path: &Path,
    image_override: Option<&Path>,
) -> Result<RunReport> {
    let started = Instant::now();
    let spec = load_spec(config_path)?;
    if command == "denoise" && !matches!(spec.problem, ProblemSpec::DenoiseTvMcp { .. }) {
        return Err(Error::Config(
            "`varsmooth denoise` needs a config with problem kind `denoise_tv_mcp`".into(),
        ));
    }
    if command == "compare" {
        validate_compare(&spec)?;
    }
    let built = build_problem(&spec, image_override)?;
    preflight(&spec, &built)?;

    // validation is done; only now touch the filesystem
    let out_dir = resolve_output_dir(&spec);
    std::fs::create_dir_all(&out_dir)?;

    let mut algo_reports = Vec::new();
    let mut first_divergence: Option<(String, usize)> = None;

    for (idx, algo) in spec.algorithms.iter().enumerate() {
        let run = execute_algorithm(algo, &built)?;
        let trace_name = format!("trace_{idx:02}_{}.csv", run.name);
        run.trace.write_csv_file(&out_dir.join(&trace_name))?;

        let final_f_true = match &run.final_point {
            Some(x) => Some(built.problem.objective(x)?),
            None => None,
        };
        let (ssim_denoised, ssim_noisy) = quality_metrics(&built, run.final_point.as_ref())?;
        let denoised_path = if command == "denoise" {
            write_denoised(&built, run.final_point.as_ref(), &out_dir, idx, run.name)?
        } else {
            None
        };

        if run.diverged_at.is_some() && first_divergence.is_none() {
            first_divergence = Some((run.name.to_string(), run.diverged_at.unwrap()));
        }
        algo_reports.push(AlgorithmReport {
            name: run.name.to_string(),
            trace_path: trace_name,
            iterations: run.trace.len(),
            termination: run.termination.to_string(),
            certificate: run.certificate.as_ref().map(Certificate::summary),
            final_f_true,
            ssim_denoised,
            ssim_noisy,
            denoised_path,
        });
    }

    let report = RunReport {
        command: command.to_string(),
        spec,
        algorithms: algo_reports,
        total_wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    report.write_json(&out_dir.join("report.json"))?;
    print_summary(&report, &out_dir);

    if let Some((name, iteration)) = first_divergence {
        return Err(Error::Numeric(format!(
            "algorithm `{name}` diverged at iteration {iteration}; partial trace written to {}",
            out_dir.display()
        )));
    }
    Ok(report)
}

fn resolve_output_dir(spec: &ExperimentSpec) -> PathBuf {
    match std::env::var(OUTPUT_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&spec.output_dir),
    }
}

fn validate_compare(spec: &ExperimentSpec) -> Result<()> {
    if spec.algorithms.len() < 2 {
        return Err(Error::Config(format!(
            "`varsmooth compare` needs at least two algorithms, got {}",
            spec.algorithms.len()
        )));
    }
    let budgets: Vec<Option<usize>> = spec.algorithms.iter().map(|a| a.max_iter).collect();
    if budgets.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Config(
            "`varsmooth compare` needs a shared max_iter across all algorithms".into(),
        ));
    }
    if spec
        .algorithms
        .iter()
        .any(|a| a.name == AlgorithmName::Epochs)
    {
        return Err(Error::Config(
            "`varsmooth compare` aligns traces by iteration; use variable_smoothing, \
             prox_grad, or subgradient"
                .into(),
        ));
    }
    Ok(())
}

/// Parameter checks that need the built problem, run before any file output.
fn preflight(spec: &ExperimentSpec, built: &BuiltProblem) -> Result<()> {
    for algo in &spec.algorithms {
        match algo.name {
            AlgorithmName::ProxGrad => {
                let bound = solvers::proximal_gradient_step_bound(
                    built.problem.smooth_term(),
                    built.problem.regularizer(),
                );
                if let Some(lambda) = algo.lambda {
                    if !(lambda > 0.0) || lambda > bound {
                        return Err(Error::Config(format!(
                            "prox_grad step lambda={lambda} outside (0, {bound}]"
                        )));
                    }
                }
            }
            AlgorithmName::Subgradient => {
                if let Some(c) = algo.c {
                    if !(c > 0.0) || !c.is_finite() {
                        return Err(Error::Config(format!(
                            "subgradient step constant must be positive, got {c}"
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

struct AlgorithmRun {
    name: &'static str,
    trace: SolveTrace,
    certificate: Option<Certificate>,
    termination: &'static str,
    final_point: Option<DVector<f64>>,
    diverged_at: Option<usize>,
}

/// Number of whole doubling epochs needed to cover `max_iter` iterations.
fn epochs_covering(max_iter: usize) -> usize {
    (usize::BITS - max_iter.leading_zeros()).clamp(1, 60) as usize
}

fn execute_algorithm(algo: &AlgorithmSpec, built: &BuiltProblem) -> Result<AlgorithmRun> {
    let name = algo.name.as_str();
    let max_iter = algo.max_iter.expect("validated earlier");
    if max_iter == 0 {
        // nothing ran: the result is the initial point, flagged as budget-exhausted
        return Ok(AlgorithmRun {
            name,
            trace: SolveTrace::new(),
            certificate: None,
            termination: "budget_exhausted",
            final_point: Some(built.x1.clone()),
            diverged_at: None,
        });
    }
    let divergence = |trace: Box<SolveTrace>, iteration: usize| AlgorithmRun {
        name,
        trace: *trace,
        certificate: None,
        termination: "diverged",
        final_point: None,
        diverged_at: Some(iteration),
    };
    match algo.name {
        AlgorithmName::VariableSmoothing => {
            match solvers::variable_smoothing(&built.problem, &built.x1, max_iter) {
                Ok(out) => Ok(AlgorithmRun {
                    name,
                    trace: out.trace,
                    certificate: Some(out.certificate),
                    termination: "completed",
                    final_point: Some(out.final_point),
                    diverged_at: None,
                }),
                Err(Error::Divergence { iteration, trace }) => Ok(divergence(trace, iteration)),
                Err(e) => Err(e),
            }
        }
        AlgorithmName::Epochs => {
            let epsilon = algo.epsilon.expect("validated earlier");
            let max_epochs = epochs_covering(max_iter);
            match solvers::variable_smoothing_epochs(
                &built.problem,
                &built.x1,
                epsilon,
                max_epochs,
                EpochStopping::FeasibilityGap,
            ) {
                Ok(out) => Ok(AlgorithmRun {
                    name,
                    trace: out.trace,
                    certificate: Some(out.certificate),
                    termination: if out.reached_tolerance {
                        "tolerance_reached"
                    } else {
                        "budget_exhausted"
                    },
                    final_point: Some(out.final_point),
                    diverged_at: None,
                }),
                Err(Error::Divergence { iteration, trace }) => Ok(divergence(trace, iteration)),
                Err(e) => Err(e),
            }
        }
        AlgorithmName::ProxGrad => {
            let bound = solvers::proximal_gradient_step_bound(
                built.problem.smooth_term(),
                built.problem.regularizer(),
            );
            let lambda = algo.lambda.unwrap_or(bound);
            match solvers::proximal_gradient(
                built.problem.smooth_term(),
                built.problem.regularizer(),
                &built.x1,
                lambda,
                max_iter,
            ) {
                Ok(out) => Ok(AlgorithmRun {
                    name,
                    trace: out.trace,
                    certificate: Some(out.certificate),
                    termination: "completed",
                    final_point: Some(out.final_point),
                    diverged_at: None,
                }),
                Err(Error::Divergence { iteration, trace }) => Ok(divergence(trace, iteration)),
                Err(e) => Err(e),
            }
        }
        AlgorithmName::Subgradient => {
            let c = algo.c.unwrap_or(1.0);
            match solvers::subgradient_method(&built.problem, &built.x1, c, max_iter) {
                Ok(out) => Ok(AlgorithmRun {
                    name,
                    trace: out.trace,
                    certificate: None,
                    termination: "completed",
                    final_point: Some(out.final_point),
                    diverged_at: None,
                }),
                Err(Error::Divergence { iteration, trace }) => Ok(divergence(trace, iteration)),
                Err(e) => Err(e),
            }
        }
    }
}

/// SSIM of the final iterate and of the observed image against ground truth,
/// when a truth image is available and large enough for the window.
fn quality_metrics(
    built: &BuiltProblem,
    final_point: Option<&DVector<f64>>,
) -> Result<(Option<f64>, Option<f64>)> {
    let (Some(truth), Some((h, w))) = (&built.ground_truth, built.image_shape) else {
        return Ok((None, None));
    };
    if truth.height() != h || truth.width() != w || h < DEFAULT_SSIM_WINDOW || w < DEFAULT_SSIM_WINDOW
    {
        return Ok((None, None));
    }
    let denoised = match final_point {
        Some(x) => {
            let img = ImageBuffer::from_vector(h, w, x.clone())?;
            Some(ssim(truth, &img, DEFAULT_SSIM_WINDOW)?)
        }
        None => None,
    };
    let noisy = match &built.observed {
        Some(obs) => Some(ssim(truth, obs, DEFAULT_SSIM_WINDOW)?),
        None => None,
    };
    Ok((denoised, noisy))
}

fn write_denoised(
    built: &BuiltProblem,
    final_point: Option<&DVector<f64>>,
    out_dir: &Path,
    idx: usize,
    name: &str,
) -> Result<Option<String>> {
    let (Some(x), Some((h, w))) = (final_point, built.image_shape) else {
        return Ok(None);
    };
    let img = ImageBuffer::from_vector(h, w, x.clone())?;
    let csv_name = format!("denoised_{idx:02}_{name}.csv");
    img.write_csv(&out_dir.join(&csv_name))?;
    img.write_pgm(&out_dir.join(format!("denoised_{idx:02}_{name}.pgm")))?;
    Ok(Some(csv_name))
}

fn print_summary(report: &RunReport, out_dir: &Path) {
    println!(
        "{}: {} algorithm(s), outputs in {}",
        report.command,
        report.algorithms.len(),
        out_dir.display()
    );
    println!(
        "{:<20} {:>9} {:>20} {:>12} {:>12} {:>9}",
        "algorithm", "iters", "termination", "criticality", "F_true", "ssim"
    );
    for a in &report.algorithms {
        let crit = a
            .certificate
            .as_ref()
            .map_or("-".to_string(), |c| format!("{:.3e}", c.criticality));
        let f = a
            .final_f_true
            .map_or("-".to_string(), |v| format!("{v:.6}"));
        let s = a
            .ssim_denoised
            .map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<20} {:>9} {:>20} {:>12} {:>12} {:>9}",
            a.name, a.iterations, a.termination, crit, f, s
        );
    }
}
