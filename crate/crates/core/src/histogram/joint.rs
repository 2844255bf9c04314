//! Joint intensity densities of a moving image `I` (sampled at `phi(x)`) and
//! a reference image `R` (sampled at `x`).
//!
//! The Parzen-window estimator (PW) is the global limit of the locally
//! orderless joint histogram and is symmetric in its arguments. The
//! generalized partial volume estimator (GPV) bins `R` into hard classes and
//! spreads hard isophotes of `I` with the spatial window `W`; it is not
//! symmetric for `alpha > 0`.
//!
//! For GPV the window is centered at `phi(x)` in the grid of `I`, so that
//! `h(m, n) = 1/N sum_x [R(x) in n] sum_psi [I(psi) in m] W(phi(x) - psi)`
//! over nodes `psi` of `I`. Nodes outside the grid of `I` contribute nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    for_each_window_voxel, is_unit_spline, parzen_weights, unit_spline_taps, Bins, LocalHistogram, SamplePolicy,
};
use crate::error::{LorError, Result};
use crate::image::{SamplePoint, Shape};
use crate::kernels::{KernelFamily, KernelSpec, ScaleTriple};
use crate::parallel::reduce_chunks;
use crate::spline::{bspline3, bspline3_deriv, InterpolantCoefficients};
use crate::transform::Transform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Parzen window: global joint histogram, `alpha = inf`.
    Pw,
    /// Generalized partial volume.
    Gpv,
    /// Local joint histogram at one location with finite `alpha`.
    LoiFull,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Pw => "PW",
            Estimator::Gpv => "GPV",
            Estimator::LoiFull => "LOI",
        }
    }
}

fn default_parzen() -> KernelFamily {
    KernelFamily::CubicBSpline
}

fn default_window() -> KernelFamily {
    KernelFamily::Gaussian
}

/// Kernel choices shared by the joint estimators and the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub bins: usize,
    pub scales: ScaleTriple,
    /// Family of the intensity window `P` for PW.
    #[serde(default = "default_parzen")]
    pub parzen: KernelFamily,
    /// Intensity scale of `R` when it differs from `scales.beta`.
    #[serde(default)]
    pub beta_r: Option<f64>,
    /// Family of the spatial window `W` for GPV.
    #[serde(default = "default_window")]
    pub window: KernelFamily,
    #[serde(default)]
    pub sampling: SamplePolicy,
}

impl EstimatorConfig {
    pub fn new(bins: usize, scales: ScaleTriple) -> Self {
        EstimatorConfig {
            bins,
            scales,
            parzen: default_parzen(),
            beta_r: None,
            window: default_window(),
            sampling: SamplePolicy::AllVoxels,
        }
    }

    pub fn with_parzen(mut self, family: KernelFamily) -> Self {
        self.parzen = family;
        self
    }

    pub fn with_window(mut self, family: KernelFamily) -> Self {
        self.window = family;
        self
    }

    pub fn with_sampling(mut self, sampling: SamplePolicy) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_beta_r(mut self, beta_r: f64) -> Self {
        self.beta_r = Some(beta_r);
        self
    }

    pub fn bin_geometry(&self) -> Result<Bins> {
        Bins::new(self.bins)
    }

    pub fn parzen_i(&self) -> Result<KernelSpec> {
        parzen_spec(self.parzen, self.scales.beta)
    }

    pub fn parzen_r(&self) -> Result<KernelSpec> {
        parzen_spec(self.parzen, self.beta_r.unwrap_or(self.scales.beta))
    }

    pub(crate) fn gpv_window(&self) -> Result<GpvWindow> {
        GpvWindow::new(self.window, self.scales.alpha)
    }
}

fn parzen_spec(family: KernelFamily, beta: f64) -> Result<KernelSpec> {
    match family {
        KernelFamily::Gaussian => KernelSpec::parzen_gaussian(beta),
        _ => KernelSpec::new(family, beta),
    }
}

/// Separable GPV window. The Gaussian is truncated at `4 alpha` and shifted
/// down so that it reaches zero continuously at the cut; the B-spline is
/// `B3(t / alpha)`. Neither is normalized, since the joint is normalized
/// afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct GpvWindow {
    family: KernelFamily,
    alpha: f64,
    radius: f64,
    floor: f64,
}

pub(crate) const GPV_GAUSSIAN_TRUNCATION: f64 = 4.0;

impl GpvWindow {
    pub(crate) fn new(family: KernelFamily, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "GPV needs a finite integration scale alpha > 0, got {alpha}"
            )));
        }
        match family {
            KernelFamily::Gaussian => {
                let radius = GPV_GAUSSIAN_TRUNCATION * alpha;
                Ok(GpvWindow {
                    family,
                    alpha,
                    radius,
                    floor: (-0.5 * GPV_GAUSSIAN_TRUNCATION * GPV_GAUSSIAN_TRUNCATION).exp(),
                })
            }
            KernelFamily::CubicBSpline => Ok(GpvWindow {
                family,
                alpha,
                radius: 2.0 * alpha,
                floor: 0.0,
            }),
            KernelFamily::Boxcar => Err(LorError::UnsupportedKernel(
                "GPV window must be Gaussian or cubic B-spline".into(),
            )),
        }
    }

    pub(crate) fn radius(&self) -> f64 {
        self.radius
    }

    /// 1D window value and derivative.
    #[inline]
    pub(crate) fn eval(&self, t: f64) -> (f64, f64) {
        if t.abs() >= self.radius {
            return (0.0, 0.0);
        }
        let a = self.alpha;
        match self.family {
            KernelFamily::Gaussian => {
                let g = (-t * t / (2.0 * a * a)).exp();
                (g - self.floor, -t / (a * a) * g)
            }
            _ => (bspline3(t / a), bspline3_deriv(t / a) / a),
        }
    }
}

/// Joint histogram over `M x M` bins, indexed `[i * M + j]` with `i` the
/// moving-image bin and `j` the reference-image bin.
#[derive(Clone, Debug, PartialEq)]
pub struct JointHistogram {
    bins: Bins,
    joint: Vec<f64>,
    marginal_i: Vec<f64>,
    marginal_j: Vec<f64>,
    direct_i: Option<Vec<f64>>,
    direct_j: Option<Vec<f64>>,
    estimator: Estimator,
    scales: Option<ScaleTriple>,
    sample_count: usize,
    mass: f64,
    normalized: bool,
}

impl JointHistogram {
    /// Unnormalized joint from raw values.
    pub fn from_values(m: usize, values: Vec<f64>, estimator: Estimator) -> Result<Self> {
        let bins = Bins::new(m)?;
        if values.len() != m * m {
            return Err(LorError::InvalidParameter(format!(
                "joint histogram of {m} bins needs {} values, got {}",
                m * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LorError::InvalidParameter(
                "joint histogram values must be finite and >= 0".into(),
            ));
        }
        let mut h = JointHistogram {
            bins,
            joint: values,
            marginal_i: Vec::new(),
            marginal_j: Vec::new(),
            direct_i: None,
            direct_j: None,
            estimator,
            scales: None,
            sample_count: 0,
            mass: 0.0,
            normalized: false,
        };
        h.mass = h.symmetric_sum() * bins.width() * bins.width();
        h.refresh_marginals();
        Ok(h)
    }

    /// Sum of all entries in an order that is invariant under transposition,
    /// so that swapped PW histograms normalize bit-for-bit alike.
    fn symmetric_sum(&self) -> f64 {
        let m = self.bins.count();
        let mut total = 0.0;
        for i in 0..m {
            total += self.joint[i * m + i];
            for j in i + 1..m {
                total += self.joint[i * m + j] + self.joint[j * m + i];
            }
        }
        total
    }

    fn refresh_marginals(&mut self) {
        let m = self.bins.count();
        let d = self.bins.width();
        self.marginal_i = (0..m)
            .map(|i| self.joint[i * m..(i + 1) * m].iter().sum::<f64>() * d)
            .collect();
        self.marginal_j = (0..m)
            .map(|j| (0..m).map(|i| self.joint[i * m + j]).sum::<f64>() * d)
            .collect();
    }

    pub fn bins(&self) -> Bins {
        self.bins
    }

    pub fn count(&self) -> usize {
        self.bins.count()
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.bins.count() + j]
    }

    /// Row sums times the bin width (density of `I` when normalized).
    pub fn marginal_i(&self) -> &[f64] {
        &self.marginal_i
    }

    /// Column sums times the bin width (density of `R` when normalized).
    pub fn marginal_j(&self) -> &[f64] {
        &self.marginal_j
    }

    /// Hard-binned density of `I(phi(x))` over the samples (GPV only).
    pub fn direct_i(&self) -> Option<&[f64]> {
        self.direct_i.as_deref()
    }

    /// Hard-binned density of `R(x)` over the samples (GPV only).
    pub fn direct_j(&self) -> Option<&[f64]> {
        self.direct_j.as_deref()
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn scales(&self) -> Option<ScaleTriple> {
        self.scales
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Integral over `Gamma^2` before normalization.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Unit-integral density; the prior integral is kept in
    /// [`Self::mass`]. Normalizing twice is a no-op.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let d = self.bins.width();
        let total = self.symmetric_sum() * d * d;
        if !(total > 0.0) {
            return Err(LorError::EmptyHistogram);
        }
        let mut out = self.clone();
        for v in out.joint.iter_mut() {
            *v /= total;
        }
        out.refresh_marginals();
        out.mass = total;
        out.normalized = true;
        Ok(out)
    }

    /// Same histogram with the roles of the two images exchanged.
    pub fn transpose(&self) -> Self {
        let m = self.bins.count();
        let mut out = self.clone();
        for i in 0..m {
            for j in 0..m {
                out.joint[j * m + i] = self.joint[i * m + j];
            }
        }
        std::mem::swap(&mut out.marginal_i, &mut out.marginal_j);
        std::mem::swap(&mut out.direct_i, &mut out.direct_j);
        out
    }

    /// `sum |p - q| Delta^2` between densities of equal bin count.
    pub fn l1_distance(&self, other: &JointHistogram) -> Result<f64> {
        if self.count() != other.count() {
            return Err(LorError::InvalidParameter("bin counts differ".into()));
        }
        let d = self.bins.width();
        Ok(self
            .joint
            .iter()
            .zip(&other.joint)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * d
            * d)
    }

    pub fn marginal_i_histogram(&self) -> Result<LocalHistogram> {
        LocalHistogram::from_values(self.marginal_i.clone())
    }

    pub fn marginal_j_histogram(&self) -> Result<LocalHistogram> {
        LocalHistogram::from_values(self.marginal_j.clone())
    }
}

/// One retained sample: reference position index, its image under the
/// transform, and the image values there.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairSample {
    pub point: usize,
    pub mapped: SamplePoint,
    pub vi: f64,
    pub vr: f64,
    pub grad_i: [f64; 3],
}

/// Samples both images at the given reference positions, dropping those whose
/// image under `transform` leaves the grid of `I`.
pub(crate) fn collect_samples(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    points: &[SamplePoint],
    want_moving: bool,
    want_gradient: bool,
) -> Vec<PairSample> {
    let shape_i = ci.shape();
    let transform = transform.prepared();
    points
        .par_iter()
        .enumerate()
        .filter_map(|(k, &x)| {
            let mapped = transform.apply(x);
            if !shape_i.contains(&mapped, 0.0) {
                return None;
            }
            let vr = cr.value(x);
            let (vi, grad_i) = if want_gradient {
                ci.value_and_gradient(mapped)
            } else if want_moving {
                (ci.value(mapped), [0.0; 3])
            } else {
                (0.0, [0.0; 3])
            };
            Some(PairSample {
                point: k,
                mapped,
                vi,
                vr,
                grad_i,
            })
        })
        .collect()
}

/// Raw PW sums `sum_x P(vi - i_m) P(vr - j_n)` (not divided by N).
pub(crate) fn pw_accumulate(samples: &[PairSample], bins: &Bins, pi: &KernelSpec, pr: &KernelSpec) -> Vec<f64> {
    let m = bins.count();
    if is_unit_spline(bins, pi) && is_unit_spline(bins, pr) {
        return reduce_chunks(samples, m * m, |chunk, acc| {
            for s in chunk {
                let ti = unit_spline_taps(bins, s.vi);
                let tr = unit_spline_taps(bins, s.vr);
                for a in 0..ti.len {
                    let base = (ti.first + a) * m + tr.first;
                    let row = &mut acc[base..base + tr.len];
                    for (slot, &vb) in row.iter_mut().zip(&tr.w[..tr.len]) {
                        *slot += ti.w[a] * vb;
                    }
                }
            }
        });
    }
    reduce_chunks(samples, m * m, |chunk, acc| {
        let mut wi = Vec::with_capacity(16);
        let mut wr = Vec::with_capacity(16);
        for s in chunk {
            let fi = parzen_weights(bins, pi, s.vi, &mut wi, None);
            if wi.is_empty() {
                continue;
            }
            let fr = parzen_weights(bins, pr, s.vr, &mut wr, None);
            for (a, &va) in wi.iter().enumerate() {
                let row = &mut acc[(fi + a) * m + fr..(fi + a) * m + fr + wr.len()];
                for (slot, &vb) in row.iter_mut().zip(&wr) {
                    *slot += va * vb;
                }
            }
        }
    })
}

/// Hard classes of the nodes of `I`; `u32::MAX` marks values outside `[0, 1]`.
pub(crate) fn node_classes(ci: &InterpolantCoefficients, bins: &Bins) -> Vec<u32> {
    ci.image()
        .values()
        .iter()
        .map(|&v| bins.hard_bin(v).map_or(u32::MAX, |b| b as u32))
        .collect()
}

/// Visits the nodes of `shape` within the GPV window around `p` with the
/// window weight and its spatial gradient with respect to `p`.
#[inline]
pub(crate) fn for_each_gpv_neighbor(
    shape: &Shape,
    window: &GpvWindow,
    p: SamplePoint,
    want_gradient: bool,
    mut f: impl FnMut(usize, f64, [f64; 3]),
) {
    let nd = shape.ndim();
    let dims = shape.dims();
    let r = window.radius();
    let mut lo = [0isize; 3];
    let mut len = [1usize; 3];
    // at most ceil(2 r) + 1 taps per axis
    let cap = (2.0 * r).ceil() as usize + 2;
    let mut w = [[0.0; 64]; 3];
    let mut dw = [[0.0; 64]; 3];
    let mut heap_w: Vec<Vec<f64>> = Vec::new();
    let mut heap_dw: Vec<Vec<f64>> = Vec::new();
    let use_heap = cap > 64;
    if use_heap {
        heap_w = vec![vec![0.0; cap]; 3];
        heap_dw = vec![vec![0.0; cap]; 3];
    }
    for a in 0..3 {
        if a >= nd {
            if use_heap {
                heap_w[a][0] = 1.0;
            } else {
                w[a][0] = 1.0;
            }
            continue;
        }
        let first = ((p.0[a] - r).floor() as isize + 1).max(0);
        let last = ((p.0[a] + r).ceil() as isize - 1).min(dims[a] as isize - 1);
        if last < first {
            return;
        }
        lo[a] = first;
        len[a] = (last - first + 1) as usize;
        for k in 0..len[a] {
            let (v, d) = window.eval(p.0[a] - (first + k as isize) as f64);
            if use_heap {
                heap_w[a][k] = v;
                heap_dw[a][k] = d;
            } else {
                w[a][k] = v;
                dw[a][k] = d;
            }
        }
    }
    let (wx, wy, wz, dx, dy, dz): (&[f64], &[f64], &[f64], &[f64], &[f64], &[f64]) = if use_heap {
        (
            &heap_w[0],
            &heap_w[1],
            &heap_w[2],
            &heap_dw[0],
            &heap_dw[1],
            &heap_dw[2],
        )
    } else {
        (&w[0], &w[1], &w[2], &dw[0], &dw[1], &dw[2])
    };
    for kz in 0..len[2] {
        let z = (lo[2] + kz as isize) as usize;
        let vz = wz[kz];
        let gz = if nd == 3 { dz[kz] } else { 0.0 };
        if vz == 0.0 && (gz == 0.0 || !want_gradient) {
            continue;
        }
        for ky in 0..len[1] {
            let y = (lo[1] + ky as isize) as usize;
            let vy = wy[ky];
            let gy = dy[ky];
            let vyz = vy * vz;
            for kx in 0..len[0] {
                let x = (lo[0] + kx as isize) as usize;
                let vx = wx[kx];
                let weight = vx * vyz;
                let grad = if want_gradient {
                    [dx[kx] * vyz, vx * gy * vz, vx * vy * gz]
                } else {
                    [0.0; 3]
                };
                if weight == 0.0 && grad == [0.0; 3] {
                    continue;
                }
                f(shape.index(x, y, z), weight, grad);
            }
        }
    }
}

/// Raw GPV sums (not divided by N).
pub(crate) fn gpv_accumulate(
    samples: &[PairSample],
    classes: &[u32],
    shape_i: &Shape,
    bins: &Bins,
    window: &GpvWindow,
) -> Vec<f64> {
    let m = bins.count();
    reduce_chunks(samples, m * m, |chunk, acc| {
        for s in chunk {
            let Some(n) = bins.hard_bin(s.vr) else {
                continue;
            };
            for_each_gpv_neighbor(shape_i, window, s.mapped, false, |idx, weight, _| {
                let c = classes[idx];
                if c != u32::MAX {
                    acc[c as usize * m + n] += weight;
                }
            });
        }
    })
}

fn reference_points(cr: &InterpolantCoefficients, cfg: &EstimatorConfig) -> Result<Vec<SamplePoint>> {
    cfg.sampling.points(&cr.shape())
}

fn finish(
    raw: Vec<f64>,
    samples: usize,
    bins: Bins,
    estimator: Estimator,
    scales: ScaleTriple,
) -> Result<JointHistogram> {
    if samples == 0 {
        return Err(LorError::NoOverlap);
    }
    let inv = 1.0 / samples as f64;
    let mut h = JointHistogram::from_values(bins.count(), raw.into_iter().map(|v| v * inv).collect(), estimator)?;
    h.scales = Some(scales);
    h.sample_count = samples;
    h.normalize()
}

/// Parzen-window joint density of `I o phi` and `R`:
/// `h(i, j) = 1/N sum_x P(I(phi(x)) - i) P(R(x) - j)`, normalized.
pub fn pw_joint(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    cfg: &EstimatorConfig,
) -> Result<JointHistogram> {
    transform.validate(&ci.shape())?;
    let bins = cfg.bin_geometry()?;
    let points = reference_points(cr, cfg)?;
    let samples = collect_samples(ci, cr, transform, &points, true, false);
    let raw = pw_accumulate(&samples, &bins, &cfg.parzen_i()?, &cfg.parzen_r()?);
    let mut scales = cfg.scales;
    scales.alpha = f64::INFINITY;
    finish(raw, samples.len(), bins, Estimator::Pw, scales)
}

/// Generalized partial volume joint density with hard classes of `R` and
/// `W`-spread hard isophotes of `I`, normalized. The direct hard-binned
/// marginals of both images over the same samples are stored alongside.
pub fn gpv_joint(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    cfg: &EstimatorConfig,
) -> Result<JointHistogram> {
    transform.validate(&ci.shape())?;
    let bins = cfg.bin_geometry()?;
    let window = cfg.gpv_window()?;
    let points = reference_points(cr, cfg)?;
    let samples = collect_samples(ci, cr, transform, &points, true, false);
    let classes = node_classes(ci, &bins);
    let raw = gpv_accumulate(&samples, &classes, &ci.shape(), &bins, &window);
    let mut h = finish(raw, samples.len(), bins, Estimator::Gpv, cfg.scales)?;
    let m = bins.count();
    let mut di = vec![0.0; m];
    let mut dj = vec![0.0; m];
    for s in &samples {
        if let Some(b) = bins.hard_bin(s.vi) {
            di[b] += 1.0;
        }
        if let Some(b) = bins.hard_bin(s.vr) {
            dj[b] += 1.0;
        }
    }
    h.direct_i = Some(unit_density(di, &bins));
    h.direct_j = Some(unit_density(dj, &bins));
    Ok(h)
}

/// GPV with the roles exchanged on the same warped pair: `R` supplies the
/// `W`-spread isophotes around `x` and `I o phi` the hard classes, i.e. the
/// estimate behind `M(R, I o phi)`. Rows index `R`, columns `I`.
pub fn gpv_joint_swapped(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    transform: &Transform,
    cfg: &EstimatorConfig,
) -> Result<JointHistogram> {
    transform.validate(&ci.shape())?;
    let bins = cfg.bin_geometry()?;
    let window = cfg.gpv_window()?;
    let points = reference_points(cr, cfg)?;
    let samples: Vec<PairSample> = collect_samples(ci, cr, transform, &points, true, false)
        .into_iter()
        .map(|s| PairSample {
            mapped: points[s.point],
            vi: s.vr,
            vr: s.vi,
            ..s
        })
        .collect();
    let classes = node_classes(cr, &bins);
    let raw = gpv_accumulate(&samples, &classes, &cr.shape(), &bins, &window);
    finish(raw, samples.len(), bins, Estimator::Gpv, cfg.scales)
}

fn unit_density(mut v: Vec<f64>, bins: &Bins) -> Vec<f64> {
    let total = v.iter().sum::<f64>() * bins.width();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
    v
}

/// The three GPV estimates of the density of `R` under the identity map:
/// direct hard binning of `R`, the column marginal of `gpv(I, R)`, and the
/// row marginal of `gpv(R, I)`. All three are normalized.
pub fn gpv_marginal_variants(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    cfg: &EstimatorConfig,
) -> Result<[LocalHistogram; 3]> {
    let id = Transform::identity(crate::transform::TransformKind::Translation, &ci.shape())?;
    let forward = gpv_joint(ci, cr, &id, cfg)?;
    let backward = gpv_joint(cr, ci, &id, cfg)?;
    let direct = forward
        .direct_j()
        .map(|d| d.to_vec())
        .ok_or_else(|| LorError::DegenerateHistogram("missing direct marginal".into()))?;
    Ok([
        LocalHistogram::from_values(direct)?.normalize()?,
        forward.marginal_j_histogram()?.normalize()?,
        backward.marginal_i_histogram()?.normalize()?,
    ])
}

/// Local joint histogram at `x` on a common grid:
/// `sum_psi P(I(psi) - i) P(R(psi) - j) W(x - psi)`, unnormalized.
pub fn local_joint_histogram(
    ci: &InterpolantCoefficients,
    cr: &InterpolantCoefficients,
    x: SamplePoint,
    parzen_i: &KernelSpec,
    parzen_r: &KernelSpec,
    window: &KernelSpec,
    m: usize,
) -> Result<JointHistogram> {
    let shape = ci.shape();
    if shape != cr.shape() {
        return Err(LorError::InvalidImage(
            "local joint histogram needs images on one grid".into(),
        ));
    }
    let bins = Bins::new(m)?;
    let vi = ci.image().values();
    let vr = cr.image().values();
    let mut h = vec![0.0; m * m];
    let (mut wi, mut wr) = (Vec::new(), Vec::new());
    for_each_window_voxel(&shape, x, window, |idx, weight| {
        let fi = parzen_weights(&bins, parzen_i, vi[idx], &mut wi, None);
        let fr = parzen_weights(&bins, parzen_r, vr[idx], &mut wr, None);
        for (a, &va) in wi.iter().enumerate() {
            for (b, &vb) in wr.iter().enumerate() {
                h[(fi + a) * m + fr + b] += va * vb * weight;
            }
        }
    });
    let mut out = JointHistogram::from_values(m, h, Estimator::LoiFull)?;
    out.scales = Some(ScaleTriple {
        sigma: 0.0,
        beta: parzen_i.scale,
        alpha: window.scale,
    });
    Ok(out)
}
