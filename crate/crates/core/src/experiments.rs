//! Experiment drivers on synthetic pairs: the GPV asymmetry sweep, the NMI
//! scale sweep, the joint density report and the evaluation-time bench.
//!
//! Each driver returns plain rows; file output lives in the command-line
//! front end. Results depend only on the config and the worker count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::histogram::joint::EstimatorConfig;
use crate::histogram::{gpv_joint, gpv_joint_swapped, pw_joint, Estimator, JointHistogram, SamplePolicy};
use crate::image::{ImageGrid, Shape};
use crate::kernels::{smooth, KernelFamily, ScaleTriple};
use crate::measures::{evaluate, jensen_shannon, MeasureKind, MeasureSpec};
use crate::objective::{objective_and_gradient, prepare, ObjectiveConfig};
use crate::spline::InterpolantCoefficients;
use crate::synth::{gen_gaussian_blob, gen_linear_gradient, gen_uniform_noise, SmoothField};
use crate::transform::Transform;

/// Synthetic image pair `(A, B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairSpec {
    /// Centered Gaussian blobs of two widths.
    Blobs { dims: Vec<usize>, std_a: f64, std_b: f64 },
    /// Linear ramps with equal gradient magnitude.
    Gradient {
        dims: Vec<usize>,
        direction_a: Vec<f64>,
        direction_b: Vec<f64>,
        magnitude: f64,
    },
    /// `A = F`, `B = (1 - mix) F^2 + mix G` for independent smooth random
    /// fields `F` and `G`. With `mix = 0` the pair is aligned at the identity.
    Smooth {
        dims: Vec<usize>,
        bumps: usize,
        width: f64,
        mix: f64,
    },
    /// Uniform noise smoothed with a Gaussian of std `smooth`; `B` is the
    /// intensity-inverted square of `A`.
    Noise { dims: Vec<usize>, smooth: f64 },
}

impl PairSpec {
    pub fn dims(&self) -> &[usize] {
        match self {
            PairSpec::Blobs { dims, .. }
            | PairSpec::Gradient { dims, .. }
            | PairSpec::Smooth { dims, .. }
            | PairSpec::Noise { dims, .. } => dims,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<(ImageGrid, ImageGrid)> {
        match self {
            PairSpec::Blobs { dims, std_a, std_b } => {
                let c = Shape::new(dims)?.center();
                Ok((gen_gaussian_blob(dims, c, *std_a)?, gen_gaussian_blob(dims, c, *std_b)?))
            }
            PairSpec::Gradient {
                dims,
                direction_a,
                direction_b,
                magnitude,
            } => Ok((
                gen_linear_gradient(dims, direction_a, *magnitude)?,
                gen_linear_gradient(dims, direction_b, *magnitude)?,
            )),
            PairSpec::Smooth {
                dims,
                bumps,
                width,
                mix,
            } => {
                if !(0.0..=1.0).contains(mix) {
                    return Err(LorError::InvalidParameter(format!("mix must lie in [0, 1], got {mix}")));
                }
                let f = SmoothField::new(dims, *bumps, *width, seed)?.render(&[0.0; 3])?;
                let g = SmoothField::new(dims, *bumps, *width, seed.wrapping_add(1))?.render(&[0.0; 3])?;
                let b = f
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&x, &y)| (1.0 - mix) * x * x + mix * y)
                    .collect();
                let b = ImageGrid::new(dims, b)?;
                Ok((f, b))
            }
            PairSpec::Noise { dims, smooth: s } => {
                let a = smooth(&gen_uniform_noise(dims, seed)?, *s)?.normalized();
                let b = a.values().iter().map(|&v| 1.0 - v * v).collect();
                let b = ImageGrid::new(dims, b)?;
                Ok((a, b))
            }
        }
    }
}

/// Translation sweep `-range, -range + step, ..., range` along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    #[serde(default)]
    pub axis: usize,
    pub range: f64,
    pub step: f64,
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.range >= 0.0) || !self.range.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "sweep needs step > 0 and a finite range >= 0, got step {} range {}",
                self.step, self.range
            )));
        }
        Ok(())
    }

    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.range / self.step + 1e-9).floor() as i64;
        (-n..=n)
            .map(|k| ((k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }

    pub fn transform(&self, ndim: usize, offset: f64) -> Transform {
        let mut t = vec![0.0; ndim];
        t[self.axis] = offset;
        Transform::translation(&t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub pair: PairSpec,
    pub estimators: Vec<Estimator>,
    pub measure: MeasureSpec,
    pub bins: usize,
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub sweep: Sweep,
    /// Offset along the sweep axis at which the joint density report is taken.
    pub offset: f64,
    pub parzen: KernelFamily,
    pub window: KernelFamily,
    pub sampling: SamplePolicy,
    /// Bench: number of random sample positions.
    pub samples: usize,
    /// Bench: evaluations averaged per measure.
    pub evaluations: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "asymmetry".into(),
            pair: PairSpec::Gradient {
                dims: vec![64, 64],
                direction_a: vec![1.0, 0.0],
                direction_b: vec![std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
                magnitude: 1.0,
            },
            estimators: vec![Estimator::Gpv, Estimator::Pw],
            measure: MeasureSpec::new(MeasureKind::Nmi),
            bins: 64,
            sigmas: vec![0.5, 1.0, 2.0, 4.0],
            betas: vec![1.0 / 64.0],
            alphas: vec![0.2, 0.5, 1.0, 1.5, 2.0],
            sweep: Sweep {
                axis: 0,
                range: 1.5,
                step: 0.1,
            },
            offset: 0.0,
            parzen: KernelFamily::CubicBSpline,
            window: KernelFamily::Gaussian,
            sampling: SamplePolicy::Interior { margin: 4 },
            samples: 1_000_000,
            evaluations: 100,
            seed: 1,
            threads: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults of a named experiment.
    pub fn preset(id: &str) -> Result<Self> {
        let base = ExperimentConfig {
            experiment: id.to_string(),
            ..Default::default()
        };
        let smooth = |mix: f64| PairSpec::Smooth {
            dims: vec![64, 64],
            bumps: 20,
            width: 4.0,
            mix,
        };
        Ok(match id {
            "asymmetry" => base,
            "blobs" => ExperimentConfig {
                pair: PairSpec::Blobs {
                    dims: vec![64, 64, 32],
                    std_a: 5.0,
                    std_b: 11.0,
                },
                sigmas: vec![1.0],
                alphas: vec![0.5, 1.0],
                ..base
            },
            "smooth_asymmetry" => ExperimentConfig {
                pair: smooth(0.2),
                sweep: Sweep {
                    axis: 0,
                    range: 1.5,
                    step: 0.05,
                },
                ..base
            },
            "scales" => ExperimentConfig {
                pair: smooth(0.0),
                estimators: vec![Estimator::Pw, Estimator::Gpv],
                sigmas: vec![0.0, 1.0, 2.0],
                betas: vec![1.0 / 64.0, 2.0 / 64.0, 4.0 / 64.0, 8.0 / 64.0],
                alphas: vec![0.5, 1.0, 2.0, 4.0],
                ..base
            },
            "jointreport" => ExperimentConfig {
                pair: smooth(0.2),
                estimators: vec![Estimator::Gpv, Estimator::Pw],
                sigmas: vec![1.0, 4.0],
                alphas: vec![2.0, 1.0, 0.5, 0.2, 0.1],
                ..base
            },
            "bench" => ExperimentConfig {
                pair: PairSpec::Noise {
                    dims: vec![128, 128, 64],
                    smooth: 2.0,
                },
                bins: 256,
                betas: vec![1.0 / 256.0],
                alphas: vec![1.0],
                sigmas: vec![0.0],
                window: KernelFamily::CubicBSpline,
                ..base
            },
            other => return Err(LorError::InvalidParameter(format!("unknown experiment {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        if self.bins < 2 {
            return Err(LorError::InvalidParameter(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if self.estimators.is_empty() || self.sigmas.is_empty() || self.betas.is_empty() || self.alphas.is_empty() {
            return Err(LorError::InvalidParameter(
                "estimator and scale grids must be non-empty".into(),
            ));
        }
        if self.estimators.contains(&Estimator::LoiFull) {
            return Err(LorError::InvalidParameter(
                "experiments run the PW and GPV estimators".into(),
            ));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(LorError::InvalidParameter("sigma grid must be finite and >= 0".into()));
        }
        if self.betas.iter().chain(&self.alphas).any(|s| !(*s > 0.0)) {
            return Err(LorError::InvalidParameter("beta and alpha grids must be > 0".into()));
        }
        let ndim = Shape::new(self.pair.dims())?.ndim();
        if self.sweep.axis >= ndim {
            return Err(LorError::InvalidParameter(format!(
                "sweep axis {} on a {ndim}D pair",
                self.sweep.axis
            )));
        }
        self.measure.validate()
    }

    pub fn density(&self, sigma: f64, beta: f64, alpha: f64) -> Result<EstimatorConfig> {
        Ok(EstimatorConfig::new(self.bins, ScaleTriple::new(sigma, beta, alpha)?)
            .with_parzen(self.parzen)
            .with_window(self.window)
            .with_sampling(self.sampling.clone()))
    }

    /// The config as one JSON line, for self-describing outputs.
    pub fn header_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    fn prepared(&self) -> Result<(ImageGrid, ImageGrid, usize)> {
        self.validate()?;
        let (a, b) = self.pair.generate(self.seed)?;
        let ndim = a.ndim();
        Ok((a, b, ndim))
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LorError::InvalidParameter(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Joint of `M(A o phi, B)`: rows `A`, columns `B`.
fn forward_joint(
    est: Estimator,
    ca: &InterpolantCoefficients,
    cb: &InterpolantCoefficients,
    t: &Transform,
    d: &EstimatorConfig,
) -> Result<JointHistogram> {
    match est {
        Estimator::Gpv => gpv_joint(ca, cb, t, d),
        _ => pw_joint(ca, cb, t, d),
    }
}

/// Joint of `M(B, A o phi)`: rows `B`, columns `A`.
fn swapped_joint(
    est: Estimator,
    ca: &InterpolantCoefficients,
    cb: &InterpolantCoefficients,
    t: &Transform,
    d: &EstimatorConfig,
) -> Result<JointHistogram> {
    match est {
        Estimator::Gpv => gpv_joint_swapped(ca, cb, t, d),
        _ => Ok(pw_joint(ca, cb, t, d)?.transpose()),
    }
}

/// Offset of the best objective on a uniform grid, refined by the vertex of
/// the parabola through the best node and its neighbours. Non-finite values
/// are skipped.
pub fn refined_optimum(offsets: &[f64], objective: &[f64]) -> Option<f64> {
    let k = (0..objective.len())
        .filter(|&k| objective[k].is_finite())
        .min_by(|&a, &b| objective[a].total_cmp(&objective[b]))?;
    if k == 0 || k + 1 == objective.len() {
        return Some(offsets[k]);
    }
    let (l, c, r) = (objective[k - 1], objective[k], objective[k + 1]);
    let curv = l - 2.0 * c + r;
    if !(curv > 0.0) || !l.is_finite() || !r.is_finite() {
        return Some(offsets[k]);
    }
    let h = offsets[k + 1] - offsets[k];
    let shift = (0.5 * (l - r) / curv).clamp(-0.5, 0.5);
    Some(offsets[k] + shift * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `1 - SS_res / SS_tot`; NaN when the responses are constant.
    pub r_squared: f64,
}

/// Ordinary least squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LorError::InvalidParameter(
            "linear fit needs two or more paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(LorError::InvalidParameter("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub estimator: Estimator,
    pub sigma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub offset: f64,
    /// Measure value of `M(A o phi, B)`.
    pub forward: f64,
    /// Measure value of `M(B, A o phi)`; NaN where not computed.
    pub swapped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryRow {
    pub estimator: Estimator,
    pub sigma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub optimum_forward: f64,
    pub optimum_swapped: f64,
    /// `optimum_forward - optimum_swapped`.
    pub asymmetry: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub rows: Vec<AsymmetryRow>,
    pub curves: Vec<CurvePoint>,
}

impl AsymmetryReport {
    fn gpv_rows(&self) -> impl Iterator<Item = &AsymmetryRow> {
        self.rows.iter().filter(|r| r.estimator == Estimator::Gpv)
    }

    /// GPV asymmetry regressed on alpha at measurement scale `sigma`.
    pub fn alpha_law(&self, sigma: f64) -> Result<LinearFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .gpv_rows()
            .filter(|r| r.sigma == sigma)
            .map(|r| (r.alpha, r.asymmetry))
            .unzip();
        linear_fit(&x, &y)
    }

    /// GPV asymmetry regressed on sigma at integration scale `alpha`.
    pub fn sigma_law(&self, alpha: f64) -> Result<LinearFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .gpv_rows()
            .filter(|r| r.alpha == alpha)
            .map(|r| (r.sigma, r.asymmetry))
            .unzip();
        linear_fit(&x, &y)
    }
}

fn scales_for(cfg: &ExperimentConfig, est: Estimator) -> Vec<(f64, f64)> {
    match est {
        Estimator::Gpv => cfg.alphas.iter().map(|&a| (1.0 / cfg.bins as f64, a)).collect(),
        _ => cfg.betas.iter().map(|&b| (b, f64::INFINITY)).collect(),
    }
}

/// Optimum of `M(A o phi, B)` and of `M(B, A o phi)` along the sweep for
/// every estimator and scale combination. GPV is run over the alpha grid with
/// bin-width classes, PW over the beta grid.
pub fn run_asymmetry_sweep(cfg: &ExperimentConfig) -> Result<AsymmetryReport> {
    let (a, b, ndim) = cfg.prepared()?;
    let offsets = cfg.sweep.offsets();
    let mut report = AsymmetryReport {
        rows: Vec::new(),
        curves: Vec::new(),
    };
    for &sigma in &cfg.sigmas {
        let (ca, cb) = (prepare(&a, sigma)?, prepare(&b, sigma)?);
        for &est in &cfg.estimators {
            for (beta, alpha) in scales_for(cfg, est) {
                let d = cfg.density(sigma, beta, alpha)?;
                let value = |h: Result<JointHistogram>| -> Result<f64> {
                    match h.and_then(|h| evaluate(&cfg.measure, &h)) {
                        Ok(v) => Ok(v.value),
                        Err(LorError::NoOverlap | LorError::EmptyHistogram | LorError::DegenerateHistogram(_)) => {
                            Ok(f64::NAN)
                        }
                        Err(e) => Err(e),
                    }
                };
                let mut fwd = Vec::with_capacity(offsets.len());
                let mut swp = Vec::with_capacity(offsets.len());
                for &t in &offsets {
                    let tr = cfg.sweep.transform(ndim, t);
                    let f = value(forward_joint(est, &ca, &cb, &tr, &d))?;
                    let s = value(swapped_joint(est, &ca, &cb, &tr, &d))?;
                    report.curves.push(CurvePoint {
                        estimator: est,
                        sigma,
                        beta,
                        alpha,
                        offset: t,
                        forward: f,
                        swapped: s,
                    });
                    fwd.push(cfg.measure.kind.sign() * f);
                    swp.push(cfg.measure.kind.sign() * s);
                }
                let of = refined_optimum(&offsets, &fwd).unwrap_or(f64::NAN);
                let os = refined_optimum(&offsets, &swp).unwrap_or(f64::NAN);
                report.rows.push(AsymmetryRow {
                    estimator: est,
                    sigma,
                    beta,
                    alpha,
                    optimum_forward: of,
                    optimum_swapped: os,
                    asymmetry: of - os,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub estimator: Estimator,
    pub sigma: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Measure value at offset 0.
    pub peak: f64,
    /// `(2 f(0) - f(-h) - f(h)) / h^2` of the measure value.
    pub sharpness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub rows: Vec<ScaleRow>,
    pub curves: Vec<CurvePoint>,
}

/// Measure-vs-offset curves of `M(A o phi, B)` over the scale grids.
pub fn run_scale_sweep(cfg: &ExperimentConfig) -> Result<ScaleReport> {
    let (a, b, ndim) = cfg.prepared()?;
    let offsets = cfg.sweep.offsets();
    let zero = offsets
        .iter()
        .position(|t| t.abs() < 0.5 * cfg.sweep.step)
        .ok_or_else(|| LorError::InvalidParameter("sweep does not contain offset 0".into()))?;
    if zero == 0 || zero + 1 == offsets.len() {
        return Err(LorError::InvalidParameter(
            "sweep needs offsets on both sides of 0".into(),
        ));
    }
    let h = cfg.sweep.step;
    let mut report = ScaleReport {
        rows: Vec::new(),
        curves: Vec::new(),
    };
    for &sigma in &cfg.sigmas {
        let (ca, cb) = (prepare(&a, sigma)?, prepare(&b, sigma)?);
        for &est in &cfg.estimators {
            for (beta, alpha) in scales_for(cfg, est) {
                let d = cfg.density(sigma, beta, alpha)?;
                let mut values = Vec::with_capacity(offsets.len());
                for &t in &offsets {
                    let joint = forward_joint(est, &ca, &cb, &cfg.sweep.transform(ndim, t), &d)?;
                    let v = evaluate(&cfg.measure, &joint)?.value;
                    report.curves.push(CurvePoint {
                        estimator: est,
                        sigma,
                        beta,
                        alpha,
                        offset: t,
                        forward: v,
                        swapped: f64::NAN,
                    });
                    values.push(v);
                }
                report.rows.push(ScaleRow {
                    estimator: est,
                    sigma,
                    beta,
                    alpha,
                    peak: values[zero],
                    sharpness: (2.0 * values[zero] - values[zero - 1] - values[zero + 1]) / (h * h),
                });
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointPanel {
    pub estimator: Estimator,
    pub sigma: f64,
    pub alpha: f64,
    /// Joint of `M(A o phi, B)`, rows `A`.
    pub forward: JointHistogram,
    /// Joint of `M(B, A o phi)` transposed to the same layout.
    pub swapped: JointHistogram,
    pub jensen_shannon: f64,
}

impl JointPanel {
    /// `forward - swapped` of the normalized densities.
    pub fn difference(&self) -> Vec<f64> {
        self.forward
            .joint()
            .iter()
            .zip(self.swapped.joint())
            .map(|(a, b)| a - b)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRow {
    pub estimator: Estimator,
    pub sigma: f64,
    pub alpha: f64,
    pub jensen_shannon: f64,
}

/// Reference values quoted for real brain data at alpha = 0.2; not
/// reproduced by the synthetic pairs.
pub const REFERENCE_JSD: [(f64, f64); 2] = [(1.0, 0.10005), (4.0, 0.27105)];

/// Joint densities of both argument orders at the configured offset and
/// their Jensen-Shannon divergence, per sigma and alpha (GPV) or per sigma
/// (PW).
pub fn run_joint_density_report(cfg: &ExperimentConfig) -> Result<Vec<JointPanel>> {
    let (a, b, ndim) = cfg.prepared()?;
    let tr = cfg.sweep.transform(ndim, cfg.offset);
    let mut panels = Vec::new();
    for &sigma in &cfg.sigmas {
        let (ca, cb) = (prepare(&a, sigma)?, prepare(&b, sigma)?);
        for &est in &cfg.estimators {
            let grid = match est {
                Estimator::Gpv => cfg.alphas.iter().map(|&a| (1.0 / cfg.bins as f64, a)).collect(),
                _ => vec![(cfg.betas[0], f64::INFINITY)],
            };
            for (beta, alpha) in grid {
                let d = cfg.density(sigma, beta, alpha)?;
                let forward = forward_joint(est, &ca, &cb, &tr, &d)?;
                let swapped = swapped_joint(est, &ca, &cb, &tr, &d)?.transpose();
                let jensen_shannon = jensen_shannon(&forward, &swapped)?;
                panels.push(JointPanel {
                    estimator: est,
                    sigma,
                    alpha,
                    forward,
                    swapped,
                    jensen_shannon,
                });
            }
        }
    }
    Ok(panels)
}

impl From<&JointPanel> for JointRow {
    fn from(p: &JointPanel) -> Self {
        JointRow {
            estimator: p.estimator,
            sigma: p.sigma,
            alpha: p.alpha,
            jensen_shannon: p.jensen_shannon,
        }
    }
}

/// Measures timed by the bench.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMeasure {
    Ssd,
    PNorm,
    PwNmi,
    GpvNmi,
}

impl BenchMeasure {
    pub const ALL: [BenchMeasure; 4] = [
        BenchMeasure::Ssd,
        BenchMeasure::PNorm,
        BenchMeasure::PwNmi,
        BenchMeasure::GpvNmi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchMeasure::Ssd => "SSD",
            BenchMeasure::PNorm => "PNorm",
            BenchMeasure::PwNmi => "PW-NMI",
            BenchMeasure::GpvNmi => "GPV-NMI",
        }
    }

    fn objective(&self, density: &EstimatorConfig, gpv_density: &EstimatorConfig) -> ObjectiveConfig {
        match self {
            BenchMeasure::Ssd => {
                ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Ssd), Estimator::Pw, density.clone())
            }
            BenchMeasure::PNorm => {
                ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Lq), Estimator::Pw, density.clone())
            }
            BenchMeasure::PwNmi => {
                ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Pw, density.clone())
            }
            BenchMeasure::GpvNmi => {
                ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Gpv, gpv_density.clone())
            }
        }
    }
}

/// Closed-form flop totals per objective-and-gradient evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopModel {
    pub samples: f64,
    pub bins: f64,
}

impl FlopModel {
    pub fn new(samples: usize, bins: usize) -> Self {
        FlopModel {
            samples: samples as f64,
            bins: bins as f64,
        }
    }

    pub fn flops(&self, m: BenchMeasure) -> f64 {
        let (n, b) = (self.samples, self.bins);
        match m {
            BenchMeasure::Ssd => 1134.0 * n,
            BenchMeasure::PNorm => 1379.0 * n,
            BenchMeasure::PwNmi => 1331.0 * n + 9.0 * b * b + 6.0 * b,
            BenchMeasure::GpvNmi => 1383.0 * n + 9.0 * b * b + 6.0 * b,
        }
    }

    pub fn ratio_to_ssd(&self, m: BenchMeasure) -> f64 {
        self.flops(m) / self.flops(BenchMeasure::Ssd)
    }

    /// Working set of the PW evaluation in bytes.
    pub fn pw_memory(&self) -> f64 {
        8.0 * self.samples * 8.0
    }

    /// Working set of the GPV evaluation in bytes.
    pub fn gpv_memory(&self) -> f64 {
        192.0 * self.samples * 8.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub measure: BenchMeasure,
    pub mean_seconds: f64,
    pub ratio_to_ssd: f64,
    pub theoretical_ratio: f64,
    /// Measured over theoretical ratio.
    pub overhead: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples: usize,
    pub bins: usize,
    pub evaluations: usize,
    pub threads: usize,
    pub model: FlopModel,
    pub rows: Vec<BenchRow>,
    pub pw_memory_bytes: f64,
    pub gpv_memory_bytes: f64,
}

/// Mean wall time of one objective-and-gradient evaluation (rigid transform,
/// `cfg.samples` random positions, `cfg.bins` bins) for each bench measure,
/// after one untimed warm-up evaluation each. The measures are evaluated in
/// turn.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let (a, b, ndim) = cfg.prepared()?;
    if cfg.evaluations == 0 || cfg.samples == 0 {
        return Err(LorError::InvalidParameter(
            "bench needs samples > 0 and evaluations > 0".into(),
        ));
    }
    let sigma = cfg.sigmas[0];
    let (ca, cb) = (prepare(&a, sigma)?, prepare(&b, sigma)?);
    let sampling = SamplePolicy::Random {
        count: cfg.samples,
        seed: cfg.seed,
        margin: 2.0,
    };
    let density = cfg
        .density(sigma, cfg.betas[0], f64::INFINITY)?
        .with_sampling(sampling.clone());
    let gpv_density = cfg
        .density(sigma, 1.0 / cfg.bins as f64, cfg.alphas[0])?
        .with_sampling(sampling);
    let shape = ca.shape();
    let params: Vec<f64> = match ndim {
        2 => vec![0.01, 0.3, -0.2],
        _ => vec![0.01, -0.005, 0.008, 0.3, -0.2, 0.1],
    };
    let t = Transform::rigid(&shape, &params);
    with_threads(cfg.threads, || {
        let threads = rayon::current_num_threads();
        let configs: Vec<ObjectiveConfig> = BenchMeasure::ALL
            .iter()
            .map(|m| m.objective(&density, &gpv_density))
            .collect();
        for oc in &configs {
            objective_and_gradient(oc, &ca, &cb, &t)?;
        }
        // measures take turns so that drift in machine load hits all of them
        let mut seconds = vec![0.0; configs.len()];
        for _ in 0..cfg.evaluations {
            for (oc, s) in configs.iter().zip(seconds.iter_mut()) {
                let start = Instant::now();
                std::hint::black_box(objective_and_gradient(oc, &ca, &cb, &t)?);
                *s += start.elapsed().as_secs_f64();
            }
        }
        for s in seconds.iter_mut() {
            *s /= cfg.evaluations as f64;
        }
        let model = FlopModel::new(cfg.samples, cfg.bins);
        let rows = BenchMeasure::ALL
            .iter()
            .zip(&seconds)
            .map(|(&m, &s)| {
                let ratio = s / seconds[0];
                let theory = model.ratio_to_ssd(m);
                BenchRow {
                    measure: m,
                    mean_seconds: s,
                    ratio_to_ssd: ratio,
                    theoretical_ratio: theory,
                    overhead: ratio / theory,
                }
            })
            .collect();
        Ok(BenchReport {
            samples: cfg.samples,
            bins: cfg.bins,
            evaluations: cfg.evaluations,
            threads,
            model,
            rows,
            pw_memory_bytes: model.pw_memory(),
            gpv_memory_bytes: model.gpv_memory(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(id: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(id).unwrap();
        c.pair = PairSpec::Smooth {
            dims: vec![24, 24],
            bumps: 8,
            width: 3.0,
            mix: 0.2,
        };
        c.bins = 16;
        c.betas = vec![1.0 / 16.0];
        c.sigmas = vec![1.0];
        c.alphas = vec![0.5, 1.0];
        c.sweep = Sweep {
            axis: 0,
            range: 0.6,
            step: 0.2,
        };
        c.sampling = SamplePolicy::Interior { margin: 2 };
        c
    }

    #[test]
    fn sweep_offsets() {
        let s = Sweep {
            axis: 0,
            range: 1.5,
            step: 0.1,
        };
        let o = s.offsets();
        assert_eq!(o.len(), 31);
        assert_eq!(o[15], 0.0);
        assert!((o[0] + 1.5).abs() < 1e-12 && (o[30] - 1.5).abs() < 1e-12);
        assert!(Sweep {
            axis: 0,
            range: 1.0,
            step: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn parabolic_refinement() {
        let t: Vec<f64> = (-5..=5).map(|k| k as f64 * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|x| (x - 0.137).powi(2)).collect();
        assert!((refined_optimum(&t, &f).unwrap() - 0.137).abs() < 1e-12);
        let mut g = f.clone();
        g[3] = f64::NAN;
        assert!(refined_optimum(&t, &g).is_some());
        assert_eq!(refined_optimum(&t, &[f64::NAN; 11]), None);
    }

    #[test]
    fn fit_of_exact_line() {
        let x = [0.2, 0.5, 1.0, 1.5, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v - 0.1).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 0.3).abs() < 1e-12 && (f.intercept + 0.1).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&x, &[1.0; 5]).unwrap().r_squared.is_nan());
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn pw_rows_are_symmetric() {
        let r = run_asymmetry_sweep(&small("asymmetry")).unwrap();
        assert_eq!(r.rows.len(), 3);
        let pw = r.rows.iter().find(|r| r.estimator == Estimator::Pw).unwrap();
        assert_eq!(pw.asymmetry, 0.0);
        for c in r.curves.iter().filter(|c| c.estimator == Estimator::Pw) {
            assert_eq!(c.forward, c.swapped);
        }
        assert_eq!(r.curves.len(), 3 * 7);
    }

    #[test]
    fn joint_report_pw_zero() {
        let mut c = small("jointreport");
        c.offset = 0.3;
        let panels = run_joint_density_report(&c).unwrap();
        assert_eq!(panels.len(), 3);
        let pw = panels.iter().find(|p| p.estimator == Estimator::Pw).unwrap();
        assert!(pw.jensen_shannon < 1e-12);
        assert!(pw.difference().iter().all(|d| d.abs() < 1e-12));
        assert!(panels
            .iter()
            .filter(|p| p.estimator == Estimator::Gpv)
            .all(|p| p.jensen_shannon > 0.0));
    }

    #[test]
    fn scale_rows() {
        let r = run_scale_sweep(&small("scales")).unwrap();
        assert_eq!(r.rows.len(), 1 + 2);
        for row in &r.rows {
            assert!(row.peak > 1.0 && row.sharpness > 0.0, "{row:?}");
        }
    }

    #[test]
    fn flop_model_arithmetic() {
        let m = FlopModel::new(1_000_000, 256);
        assert_eq!(m.flops(BenchMeasure::PwNmi), 1331.0e6 + 9.0 * 65536.0 + 1536.0);
        assert!((m.ratio_to_ssd(BenchMeasure::PwNmi) - 1.174).abs() < 1e-3);
        assert_eq!(m.gpv_memory() / m.pw_memory(), 24.0);
    }

    #[test]
    fn bench_runs_small() {
        let mut c = ExperimentConfig::preset("bench").unwrap();
        c.pair = PairSpec::Noise {
            dims: vec![16, 16, 8],
            smooth: 1.5,
        };
        c.samples = 500;
        c.bins = 16;
        c.betas = vec![1.0 / 16.0];
        c.evaluations = 2;
        c.threads = Some(2);
        let r = run_bench(&c).unwrap();
        assert_eq!(r.threads, 2);
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.rows[0].ratio_to_ssd, 1.0);
        assert!(r.rows.iter().all(|row| row.mean_seconds > 0.0));
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for id in [
            "asymmetry",
            "blobs",
            "smooth_asymmetry",
            "scales",
            "jointreport",
            "bench",
        ] {
            let c = ExperimentConfig::preset(id).unwrap();
            c.validate().unwrap();
            let back: ExperimentConfig = serde_json::from_str(&c.header_json()).unwrap();
            assert_eq!(back, c);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"experiment":"scales","bins":32}"#).unwrap();
        assert_eq!(partial.bins, 32);
        assert_eq!(partial.seed, 1);
    }
}
