//! Parametric registration: minimize the objective over the transform
//! parameters with L-BFGS.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::{objective_and_gradient, ObjectiveConfig};
use crate::optimize::{minimize, OptimizationTrace, OptimizerOptions, Termination};
use crate::spline::InterpolantCoefficients;
use crate::transform::Transform;

#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    pub transform: Transform,
    pub trace: OptimizationTrace,
}

/// Registers the moving image `ci` to the reference `cr` starting from
/// `init`. Both images must already be prepared (normalized, smoothed at the
/// measurement scale, prefiltered).
pub fn register(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    init: &Transform,
    opts: &OptimizerOptions,
) -> Result<Registration> {
    cfg.validate()?;
    init.validate(&ci.shape())?;
    let f = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let t = init.with_params(p)?;
        let e = objective_and_gradient(cfg, ci, cr, &t)?;
        Ok((e.value.objective, e.gradient))
    };
    let (params, trace) = minimize(f, &init.params, opts)?;
    Ok(Registration {
        transform: init.with_params(&params)?,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
}

/// Contents of the registration result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub transform: Transform,
    pub config: ObjectiveConfig,
    pub optimizer: OptimizerOptions,
    pub trace: TraceSummary,
}

impl RegistrationReport {
    pub fn new(reg: &Registration, cfg: &ObjectiveConfig, opts: &OptimizerOptions) -> Self {
        let first = reg.trace.records.first();
        let last = reg.trace.records.last();
        RegistrationReport {
            transform: reg.transform.clone(),
            config: cfg.clone(),
            optimizer: opts.clone(),
            trace: TraceSummary {
                iterations: reg.trace.iterations(),
                evaluations: reg.trace.evaluations,
                termination: reg.trace.termination,
                initial_objective: first.map_or(f64::NAN, |r| r.value),
                final_objective: last.map_or(f64::NAN, |r| r.value),
                final_grad_norm: last.map_or(f64::NAN, |r| r.grad_norm),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::joint::EstimatorConfig;
    use crate::histogram::{Estimator, SamplePolicy};
    use crate::kernels::ScaleTriple;
    use crate::measures::{MeasureKind, MeasureSpec};
    use crate::objective::prepare;
    use crate::synth::SmoothField;

    #[test]
    fn recovers_small_translation() {
        let f = SmoothField::new(&[32, 32], 10, 3.5, 5).unwrap();
        let r = prepare(&f.render(&[0.0, 0.0]).unwrap(), 0.0).unwrap();
        // I(x + t) = R(x) for t = (-1.3, 0.8)
        let i = prepare(&f.render(&[1.3, -0.8]).unwrap(), 0.0).unwrap();
        let density = EstimatorConfig::new(32, ScaleTriple::new(0.0, 1.0 / 32.0, f64::INFINITY).unwrap())
            .with_sampling(SamplePolicy::Interior { margin: 3 });
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Pw, density);
        let reg = register(
            &cfg,
            &i,
            &r,
            &Transform::translation(&[0.0, 0.0]),
            &OptimizerOptions::default(),
        )
        .unwrap();
        let t = &reg.transform.params;
        assert!(
            (t[0] + 1.3).abs() < 0.05 && (t[1] - 0.8).abs() < 0.05,
            "{t:?} {:?}",
            reg.trace.termination
        );
        let report = RegistrationReport::new(&reg, &cfg, &OptimizerOptions::default());
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"kind\":\"translation\""));
    }
}
