//! The registration objective `F = M(I o phi, R)` (no regularizer) and its
//! analytic gradient with respect to the transform parameters.
//!
//! The PW gradient follows `dM = sum D(m, n) dh(m, n)` with
//! `dh / dphi(x) = 1/N P'(I(phi(x)) - i_m) P(R(x) - j_n) grad I(phi(x))`.
//! The GPV gradient moves the window instead:
//! `dh / dphi(x) = 1/N [R(x) in n] sum_psi [I(psi) in m] grad W(phi(x) - psi)`.
//! SSD is evaluated directly on the voxels.

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::histogram::joint::{
    collect_samples, for_each_gpv_neighbor, gpv_accumulate, node_classes, pw_accumulate, EstimatorConfig, PairSample,
};
use crate::histogram::{is_unit_spline, parzen_weights, unit_spline_taps, Estimator, JointHistogram};
use crate::image::{ImageGrid, SamplePoint};
use crate::kernels::smooth;
use crate::measures::{evaluate, gradient_wrt_histogram, MeasureKind, MeasureSpec, MeasureValue};
use crate::parallel::reduce_chunks;
use crate::spline::{prefilter, InterpolantCoefficients};
use crate::transform::{Jacobian, PreparedTransform, Transform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub measure: MeasureSpec,
    pub estimator: Estimator,
    #[serde(flatten)]
    pub density: EstimatorConfig,
}

impl ObjectiveConfig {
    pub fn new(measure: MeasureSpec, estimator: Estimator, density: EstimatorConfig) -> Self {
        ObjectiveConfig {
            measure,
            estimator,
            density,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        self.density.scales.validate()?;
        self.density.bin_geometry()?;
        match self.estimator {
            Estimator::Pw => {
                self.density.parzen_i()?;
                self.density.parzen_r()?;
            }
            Estimator::Gpv => {
                self.density.gpv_window()?;
            }
            Estimator::LoiFull => {
                return Err(LorError::InvalidParameter(
                    "the registration objective uses the PW or GPV estimator".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Normalizes intensities to `[0, 1]`, smooths at the measurement scale and
/// computes the spline coefficients.
pub fn prepare(image: &ImageGrid, sigma: f64) -> Result<InterpolantCoefficients> {
    prefilter(&smooth(&image.normalized(), sigma)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: MeasureValue,
    /// Gradient of `value.objective`.
    pub gradient: Vec<f64>,
    pub samples: usize,
}

/// Joint histogram the objective is computed from.
pub fn objective_joint(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
) -> Result<JointHistogram> {
    match cfg.estimator {
        Estimator::Gpv => crate::histogram::gpv_joint(ci, cr, transform, &cfg.density),
        _ => crate::histogram::pw_joint(ci, cr, transform, &cfg.density),
    }
}

/// Objective value only.
pub fn objective(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
) -> Result<MeasureValue> {
    Ok(run(cfg, ci, cr, transform, false)?.value)
}

pub fn objective_and_gradient(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
) -> Result<Evaluation> {
    run(cfg, ci, cr, transform, true)
}

fn run(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    want_gradient: bool,
) -> Result<Evaluation> {
    cfg.validate()?;
    transform.validate(&ci.shape())?;
    let points = cfg.density.sampling.points(&cr.shape())?;
    if cfg.measure.kind == MeasureKind::Ssd {
        return spatial_ssd(ci, cr, transform, &points, want_gradient);
    }
    match cfg.estimator {
        Estimator::Gpv => gpv(cfg, ci, cr, transform, &points, want_gradient),
        _ => pw(cfg, ci, cr, transform, &points, want_gradient),
    }
}

/// Adds `coef * v . J` into `acc` for the Jacobian of `transform` at `x`.
#[inline]
fn scatter(transform: &PreparedTransform, x: SamplePoint, v: [f64; 3], coef: f64, jac: &mut Jacobian, acc: &mut [f64]) {
    transform.apply_with_jacobian(x, jac);
    for (k, d) in jac.iter() {
        acc[*k] += coef * (v[0] * d[0] + v[1] * d[1] + v[2] * d[2]);
    }
}

fn spatial_ssd(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    points: &[SamplePoint],
    want_gradient: bool,
) -> Result<Evaluation> {
    let samples = collect_samples(ci, cr, transform, points, true, want_gradient);
    if samples.is_empty() {
        return Err(LorError::NoOverlap);
    }
    let n = samples.len() as f64;
    let np = transform.param_count();
    let prepared = transform.prepared();
    // slot 0 holds the sum of squares, the rest the gradient
    let acc = reduce_chunks(&samples, 1 + np, |chunk, acc| {
        let mut jac = Vec::new();
        for s in chunk {
            let d = s.vi - s.vr;
            acc[0] += d * d;
            if want_gradient {
                scatter(&prepared, points[s.point], s.grad_i, 2.0 * d, &mut jac, &mut acc[1..]);
            }
        }
    });
    let value = acc[0] / n;
    Ok(Evaluation {
        value: MeasureValue {
            kind: MeasureKind::Ssd,
            value,
            objective: value,
            entropies: None,
            moments: None,
            cr: None,
        },
        gradient: acc[1..].iter().map(|g| g / n).collect(),
        samples: samples.len(),
    })
}

fn finish_histogram(raw: Vec<f64>, cfg: &ObjectiveConfig, samples: usize, est: Estimator) -> Result<JointHistogram> {
    if samples == 0 {
        return Err(LorError::NoOverlap);
    }
    let inv = 1.0 / samples as f64;
    JointHistogram::from_values(cfg.density.bins, raw.into_iter().map(|v| v * inv).collect(), est)?.normalize()
}

fn pw(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    points: &[SamplePoint],
    want_gradient: bool,
) -> Result<Evaluation> {
    let bins = cfg.density.bin_geometry()?;
    let (pi, pr) = (cfg.density.parzen_i()?, cfg.density.parzen_r()?);
    let samples = collect_samples(ci, cr, transform, points, true, want_gradient);
    let raw = pw_accumulate(&samples, &bins, &pi, &pr);
    let h = finish_histogram(raw, cfg, samples.len(), Estimator::Pw)?;
    let value = evaluate(&cfg.measure, &h)?;
    let np = transform.param_count();
    let prepared = transform.prepared();
    if !want_gradient {
        return Ok(Evaluation {
            value,
            gradient: vec![0.0; np],
            samples: samples.len(),
        });
    }
    let m = bins.count();
    let d = gradient_wrt_histogram(&cfg.measure, &h)?;
    let cell = bins.width() * bins.width();
    let coef = cfg.measure.kind.sign() * cell / samples.len() as f64;
    let dj = &d.d_joint;
    if is_unit_spline(&bins, &pi) && is_unit_spline(&bins, &pr) {
        let gradient = reduce_chunks(&samples, np, |chunk: &[PairSample], acc| {
            let mut jac = Vec::new();
            for s in chunk {
                let ti = unit_spline_taps(&bins, s.vi);
                let tr = unit_spline_taps(&bins, s.vr);
                let mut sx = 0.0;
                for a in 0..ti.len {
                    let base = (ti.first + a) * m + tr.first;
                    let t: f64 = dj[base..base + tr.len].iter().zip(&tr.w).map(|(g, w)| g * w).sum();
                    sx += ti.d[a] * t;
                }
                if sx != 0.0 {
                    scatter(&prepared, points[s.point], s.grad_i, sx * coef, &mut jac, acc);
                }
            }
        });
        return Ok(Evaluation {
            value,
            gradient,
            samples: samples.len(),
        });
    }
    let gradient = reduce_chunks(&samples, np, |chunk: &[PairSample], acc| {
        let (mut wi, mut di, mut wr) = (Vec::new(), Vec::new(), Vec::new());
        let mut jac = Vec::new();
        for s in chunk {
            let fi = parzen_weights(&bins, &pi, s.vi, &mut wi, Some(&mut di));
            if wi.is_empty() {
                continue;
            }
            let fr = parzen_weights(&bins, &pr, s.vr, &mut wr, None);
            let mut sx = 0.0;
            for (a, &dpa) in di.iter().enumerate() {
                if dpa == 0.0 {
                    continue;
                }
                let row = &dj[(fi + a) * m + fr..(fi + a) * m + fr + wr.len()];
                let t: f64 = row.iter().zip(&wr).map(|(g, w)| g * w).sum();
                sx += dpa * t;
            }
            if sx != 0.0 {
                scatter(&prepared, points[s.point], s.grad_i, sx * coef, &mut jac, acc);
            }
        }
    });
    Ok(Evaluation {
        value,
        gradient,
        samples: samples.len(),
    })
}

fn gpv(
    cfg: &ObjectiveConfig,
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    points: &[SamplePoint],
    want_gradient: bool,
) -> Result<Evaluation> {
    let bins = cfg.density.bin_geometry()?;
    let window = cfg.density.gpv_window()?;
    let shape_i = ci.shape();
    let samples = collect_samples(ci, cr, transform, points, false, false);
    let classes = node_classes(ci, &bins);
    let raw = gpv_accumulate(&samples, &classes, &shape_i, &bins, &window);
    let h = finish_histogram(raw, cfg, samples.len(), Estimator::Gpv)?;
    let value = evaluate(&cfg.measure, &h)?;
    let np = transform.param_count();
    let prepared = transform.prepared();
    if !want_gradient {
        return Ok(Evaluation {
            value,
            gradient: vec![0.0; np],
            samples: samples.len(),
        });
    }
    let m = bins.count();
    let d = gradient_wrt_histogram(&cfg.measure, &h)?;
    let cell = bins.width() * bins.width();
    let coef = cfg.measure.kind.sign() * cell / samples.len() as f64;
    let dj = &d.d_joint;
    let gradient = reduce_chunks(&samples, np, |chunk: &[PairSample], acc| {
        let mut jac = Vec::new();
        for s in chunk {
            let Some(n) = bins.hard_bin(s.vr) else {
                continue;
            };
            let mut g = [0.0; 3];
            for_each_gpv_neighbor(&shape_i, &window, s.mapped, true, |idx, _, dw| {
                let c = classes[idx];
                if c != u32::MAX {
                    let w = dj[c as usize * m + n];
                    g[0] += w * dw[0];
                    g[1] += w * dw[1];
                    g[2] += w * dw[2];
                }
            });
            scatter(&prepared, points[s.point], g, coef, &mut jac, acc);
        }
    });
    Ok(Evaluation {
        value,
        gradient,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::SamplePolicy;
    use crate::kernels::{KernelFamily, ScaleTriple};
    use crate::synth::SmoothField;

    fn pair(dims: &[usize]) -> (InterpolantCoefficients, InterpolantCoefficients) {
        let f = SmoothField::new(dims, 12, 3.0, 11).unwrap();
        let a = f.render(&[0.0; 3]).unwrap();
        let b = f.render(&[0.6, -0.4, 0.3]).unwrap();
        (prepare(&a, 0.0).unwrap(), prepare(&b, 0.0).unwrap())
    }

    fn fd_check(
        cfg: &ObjectiveConfig,
        t: &Transform,
        ci: &InterpolantCoefficients,
        cr: &InterpolantCoefficients,
        tol: f64,
    ) {
        let e = objective_and_gradient(cfg, ci, cr, t).unwrap();
        let h = 1e-4;
        for k in 0..t.param_count() {
            let mut p = t.params.clone();
            p[k] += h;
            let up = objective(cfg, ci, cr, &t.with_params(&p).unwrap()).unwrap().objective;
            p[k] -= 2.0 * h;
            let dn = objective(cfg, ci, cr, &t.with_params(&p).unwrap()).unwrap().objective;
            let fd = (up - dn) / (2.0 * h);
            let scale = e.gradient.iter().map(|g| g.abs()).fold(0.0, f64::max);
            assert!(
                (fd - e.gradient[k]).abs() <= tol * scale,
                "{:?}/{:?} param {k}: fd {fd} analytic {}",
                cfg.estimator,
                cfg.measure.kind,
                e.gradient[k]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_2d() {
        let (ci, cr) = pair(&[24, 20]);
        let t = Transform::translation(&[0.3, -0.2]);
        let scales = ScaleTriple::new(0.0, 1.0 / 16.0, 1.0).unwrap();
        let density = EstimatorConfig::new(16, scales).with_sampling(SamplePolicy::Interior { margin: 5 });
        for kind in [
            MeasureKind::Ssd,
            MeasureKind::Lq,
            MeasureKind::Nmi,
            MeasureKind::Mi,
            MeasureKind::Cc,
        ] {
            for est in [Estimator::Pw, Estimator::Gpv] {
                let cfg = ObjectiveConfig::new(MeasureSpec::new(kind), est, density.clone());
                fd_check(&cfg, &t, &ci, &cr, 1e-4);
            }
        }
        let gauss = density
            .clone()
            .with_parzen(KernelFamily::Gaussian)
            .with_window(KernelFamily::CubicBSpline);
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Gpv, gauss.clone());
        fd_check(&cfg, &t, &ci, &cr, 1e-4);
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Pw, gauss);
        fd_check(&cfg, &t, &ci, &cr, 1e-4);
    }

    #[test]
    fn identical_images_ssd_optimum() {
        let (ci, _) = pair(&[16, 16]);
        let density = EstimatorConfig::new(16, ScaleTriple::new(0.0, 0.0625, f64::INFINITY).unwrap());
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Ssd), Estimator::Pw, density);
        let e = objective_and_gradient(&cfg, &ci, &ci, &Transform::translation(&[0.0, 0.0])).unwrap();
        assert!(e.value.value.abs() < 1e-20);
        assert!(e.gradient.iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn config_validation() {
        let density = EstimatorConfig::new(16, ScaleTriple::new(0.0, 0.0625, f64::INFINITY).unwrap());
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Gpv, density);
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ObjectiveConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
