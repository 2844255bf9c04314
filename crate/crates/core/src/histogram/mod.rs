//! Locally orderless histograms.
//!
//! Histograms live on `M` bins over normalized intensities `[0, 1]` with
//! centers `(n + 0.5) / M`. Single-image histograms are [`LocalHistogram`]s;
//! the joint estimators are in [`joint`].

pub mod csv;
pub mod joint;
pub mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::image::{ImageGrid, SamplePoint};
use crate::kernels::{KernelFamily, KernelSpec, ScaleTriple};
use crate::spline::{tap_weights, InterpolantCoefficients};

pub use csv::{read_joint_csv, write_joint_csv, JointDump};
pub use joint::{
    gpv_joint, gpv_joint_swapped, gpv_marginal_variants, local_joint_histogram, pw_joint, Estimator, JointHistogram,
};
pub use sampling::SamplePolicy;

/// Bin geometry over normalized intensities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bins {
    m: usize,
}

impl Bins {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(LorError::InvalidParameter(format!("need at least 2 bins, got {m}")));
        }
        Ok(Bins { m })
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn width(&self) -> f64 {
        1.0 / self.m as f64
    }

    #[inline]
    pub fn center(&self, n: usize) -> f64 {
        (n as f64 + 0.5) / self.m as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.m).map(|n| self.center(n)).collect()
    }

    /// Half-open counting bin of `v`; the top edge 1.0 belongs to the last
    /// bin. `None` outside `[0, 1]`, up to a rounding tolerance at either end.
    #[inline]
    pub fn hard_bin(&self, v: f64) -> Option<usize> {
        const TOL: f64 = 1e-9;
        if !(-TOL..=1.0 + TOL).contains(&v) {
            return None;
        }
        Some(((v.max(0.0) * self.m as f64) as usize).min(self.m - 1))
    }

    /// Inclusive range of bins whose centers may lie within `support` of `v`.
    #[inline]
    pub fn span(&self, v: f64, support: f64) -> Option<(usize, usize)> {
        let mf = self.m as f64;
        let lo = ((v - support) * mf - 0.5).floor();
        let hi = ((v + support) * mf - 0.5).ceil();
        if hi < 0.0 || lo > mf - 1.0 {
            return None;
        }
        Some((lo.max(0.0) as usize, (hi.min(mf - 1.0)) as usize))
    }
}

/// Parzen weights of value `v` against every bin center. A Boxcar of exactly
/// one bin width takes the counting path so that bin edges agree with
/// [`Bins::hard_bin`]. Returns the first bin index; `weights` receives
/// the window values and `derivs` (if given) their derivatives with respect
/// to `v`.
#[inline]
pub(crate) fn parzen_weights(
    bins: &Bins,
    parzen: &KernelSpec,
    v: f64,
    weights: &mut Vec<f64>,
    mut derivs: Option<&mut Vec<f64>>,
) -> usize {
    weights.clear();
    if let Some(d) = derivs.as_deref_mut() {
        d.clear();
    }
    if is_bin_boxcar(bins, parzen) {
        if let Some(b) = bins.hard_bin(v) {
            weights.push(1.0);
            if let Some(d) = derivs {
                d.push(0.0);
            }
            return b;
        }
        return 0;
    }
    if is_unit_spline(bins, parzen) {
        let t = unit_spline_taps(bins, v);
        weights.extend_from_slice(&t.w[..t.len]);
        if let Some(d) = derivs {
            d.extend_from_slice(&t.d[..t.len]);
        }
        return t.first;
    }
    let Some((lo, hi)) = bins.span(v, parzen.support()) else {
        return 0;
    };
    for n in lo..=hi {
        let t = v - bins.center(n);
        weights.push(parzen.parzen(t));
        if let Some(d) = derivs.as_deref_mut() {
            d.push(parzen.parzen_deriv(t));
        }
    }
    lo
}

/// Cubic B-spline Parzen window of exactly one bin width.
#[inline]
pub(crate) fn is_unit_spline(bins: &Bins, parzen: &KernelSpec) -> bool {
    parzen.family == KernelFamily::CubicBSpline && parzen.scale * bins.count() as f64 == 1.0
}

/// Nonzero Parzen weights of a unit B-spline window: bins `first..first + len`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Taps {
    pub first: usize,
    pub len: usize,
    pub w: [f64; 4],
    /// Derivatives with respect to the value.
    pub d: [f64; 4],
}

/// The four spline taps around `v`, clipped to the bin range.
#[inline]
pub(crate) fn unit_spline_taps(bins: &Bins, v: f64) -> Taps {
    let m = bins.count();
    let mf = m as f64;
    let u = v * mf - 0.5;
    let mut t = Taps {
        first: 0,
        len: 0,
        w: [0.0; 4],
        d: [0.0; 4],
    };
    if !(u > -2.0 && u < mf + 1.0) {
        return t;
    }
    let fl = (u + 2.0) as usize as f64 - 2.0;
    let (w, d) = tap_weights(u - fl);
    let first = fl as i64 - 1;
    let lo = first.max(0);
    let hi = (first + 3).min(m as i64 - 1);
    if lo > hi {
        return t;
    }
    let skip = (lo - first) as usize;
    t.first = lo as usize;
    t.len = (hi - lo + 1) as usize;
    for k in 0..t.len {
        t.w[k] = w[skip + k];
        t.d[k] = d[skip + k] * mf;
    }
    t
}

#[inline]
pub(crate) fn is_bin_boxcar(bins: &Bins, parzen: &KernelSpec) -> bool {
    parzen.family == KernelFamily::Boxcar && (parzen.scale * bins.count() as f64 - 1.0).abs() < 1e-9
}

/// Histogram of one image, global or at a location.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalHistogram {
    bins: Bins,
    values: Vec<f64>,
    location: Option<SamplePoint>,
    scales: Option<ScaleTriple>,
    parzen: Option<KernelSpec>,
    mass: f64,
    normalized: bool,
}

impl LocalHistogram {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let bins = Bins::new(values.len())?;
        let mass = values.iter().sum::<f64>() * bins.width();
        Ok(LocalHistogram {
            bins,
            values,
            location: None,
            scales: None,
            parzen: None,
            mass,
            normalized: false,
        })
    }

    pub fn bins(&self) -> Bins {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn location(&self) -> Option<SamplePoint> {
        self.location
    }

    pub fn scales(&self) -> Option<ScaleTriple> {
        self.scales
    }

    pub fn parzen(&self) -> Option<KernelSpec> {
        self.parzen
    }

    /// Integral of the unnormalized histogram over intensity (`k`).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Density with unit integral; the original integral is kept in
    /// [`Self::mass`]. Normalizing twice is a no-op.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let total = self.values.iter().sum::<f64>() * self.bins.width();
        if !(total > 0.0) {
            return Err(LorError::EmptyHistogram);
        }
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v /= total;
        }
        out.mass = total;
        out.normalized = true;
        Ok(out)
    }

    /// Raw, central and Parzen-central moments up to order 5 by quadrature
    /// over bin centers.
    pub fn moments(&self, up_to: usize) -> Result<MomentSet> {
        if up_to > 5 {
            return Err(LorError::InvalidParameter(format!(
                "moments are tabulated up to order 5, got {up_to}"
            )));
        }
        if !self.normalized {
            return Err(LorError::NotNormalized { mass: self.mass });
        }
        let dw = self.bins.width();
        let raw: Vec<f64> = (0..=up_to)
            .map(|n| {
                self.values
                    .iter()
                    .enumerate()
                    .map(|(b, p)| self.bins.center(b).powi(n as i32) * p * dw)
                    .sum()
            })
            .collect();
        let mean = if up_to >= 1 { raw[1] } else { 0.0 };
        let central: Vec<f64> = (0..=up_to)
            .map(|n| {
                self.values
                    .iter()
                    .enumerate()
                    .map(|(b, p)| (self.bins.center(b) - mean).powi(n as i32) * p * dw)
                    .sum()
            })
            .collect();
        let parzen_central = match self.parzen {
            Some(p) => (0..=up_to).map(|n| parzen_central_moment(&p, n)).collect(),
            None => Vec::new(),
        };
        Ok(MomentSet {
            raw,
            central,
            parzen_central,
        })
    }
}

/// Raw moments `mu'_n`, central moments `mu_n`, and the central moments
/// `eta_n` of the normalized Parzen window.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub raw: Vec<f64>,
    pub central: Vec<f64>,
    pub parzen_central: Vec<f64>,
}

impl MomentSet {
    /// Central moments rebuilt from raw moments,
    /// `mu_n = sum_j C(n,j) (-1)^(n-j) mu'_j mu^(n-j)`.
    pub fn central_from_raw(&self) -> Vec<f64> {
        let mean = self.raw.get(1).copied().unwrap_or(0.0);
        (0..self.raw.len())
            .map(|n| {
                (0..=n)
                    .map(|j| {
                        let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
                        binomial(n, j) * sign * self.raw[j] * mean.powi((n - j) as i32)
                    })
                    .sum()
            })
            .collect()
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central moment of order `n` of the window normalized to unit mass.
pub fn parzen_central_moment(p: &KernelSpec, n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let s = p.scale;
    match p.family {
        KernelFamily::Gaussian => {
            let dfact: f64 = (1..n).step_by(2).map(|k| k as f64).product();
            dfact * s.powi(n as i32)
        }
        KernelFamily::Boxcar => s.powi(n as i32) / (2f64.powi(n as i32) * (n as f64 + 1.0)),
        KernelFamily::CubicBSpline => {
            // midpoint quadrature; the integrand is a polynomial per piece
            let steps = 20_000;
            let h = 4.0 / steps as f64;
            let m: f64 = (0..steps)
                .map(|k| {
                    let t = -2.0 + (k as f64 + 0.5) * h;
                    t.powi(n as i32) * crate::spline::bspline3(t) * h
                })
                .sum();
            m * s.powi(n as i32)
        }
    }
}

/// Classic hard-binned histogram of the normalized intensities; each bin
/// holds a voxel count.
pub fn counting_histogram(image: &ImageGrid, m: usize) -> Result<LocalHistogram> {
    let bins = Bins::new(m)?;
    let mut counts = vec![0.0; m];
    for &v in image.values() {
        if let Some(b) = bins.hard_bin(image.unit_value(v)) {
            counts[b] += 1.0;
        }
    }
    LocalHistogram::from_values(counts)
}

/// Sums adjacent bin pairs (Boxcar filtering of width two, decimated).
pub fn merge_bin_pairs(h: &LocalHistogram) -> Result<LocalHistogram> {
    if h.values.len() % 2 != 0 {
        return Err(LorError::InvalidParameter(
            "bin count must be even to merge pairs".into(),
        ));
    }
    LocalHistogram::from_values(h.values.chunks_exact(2).map(|c| c[0] + c[1]).collect())
}

/// Global Parzen-window histogram `(1/N) sum_x P(I(x) - i_n)` over the voxel
/// values (the integration scale is infinite).
pub fn pw_histogram(image: &ImageGrid, parzen: &KernelSpec, m: usize) -> Result<LocalHistogram> {
    let bins = Bins::new(m)?;
    let mut h = vec![0.0; m];
    let mut w = Vec::new();
    for &v in image.values() {
        let first = parzen_weights(&bins, parzen, v, &mut w, None);
        for (k, wk) in w.iter().enumerate() {
            h[first + k] += wk;
        }
    }
    let n = image.values().len() as f64;
    for v in h.iter_mut() {
        *v /= n;
    }
    let mut out = LocalHistogram::from_values(h)?;
    out.parzen = Some(*parzen);
    out.scales = Some(ScaleTriple {
        sigma: 0.0,
        beta: parzen.scale,
        alpha: f64::INFINITY,
    });
    Ok(out)
}

/// Local histogram at `x`: `sum_psi P(I(psi) - i_n) W(x - psi)` over voxel
/// centers `psi`, with the image already smoothed at the measurement scale.
pub fn local_histogram(
    coeffs: &InterpolantCoefficients,
    x: SamplePoint,
    scales: ScaleTriple,
    parzen: &KernelSpec,
    window: &KernelSpec,
    m: usize,
) -> Result<LocalHistogram> {
    if scales.is_global() {
        return Err(LorError::InvalidParameter(
            "infinite integration scale: use pw_histogram for global histograms".into(),
        ));
    }
    let bins = Bins::new(m)?;
    let image = coeffs.image();
    let shape = image.shape();
    let mut h = vec![0.0; m];
    let mut w = Vec::new();
    for_each_window_voxel(&shape, x, window, |idx, weight| {
        let v = image.values()[idx];
        let first = parzen_weights(&bins, parzen, v, &mut w, None);
        for (k, wk) in w.iter().enumerate() {
            h[first + k] += wk * weight;
        }
    });
    let mut out = LocalHistogram::from_values(h)?;
    out.location = Some(x);
    out.scales = Some(scales);
    out.parzen = Some(*parzen);
    Ok(out)
}

/// Visits voxels inside the support of the separable spatial window centered
/// at `x`, with the product weight `prod_a W(x_a - psi_a)`.
pub(crate) fn for_each_window_voxel(
    shape: &crate::image::Shape,
    x: SamplePoint,
    window: &KernelSpec,
    mut f: impl FnMut(usize, f64),
) {
    let nd = shape.ndim();
    let dims = shape.dims();
    let r = window.support();
    let mut ranges = [(0isize, 0isize); 3];
    for a in 0..3 {
        if a < nd {
            let lo = ((x.0[a] - r).floor() as isize).max(0);
            let hi = ((x.0[a] + r).ceil() as isize).min(dims[a] as isize - 1);
            ranges[a] = (lo, hi);
        }
    }
    let axis_weights: Vec<Vec<f64>> = (0..nd)
        .map(|a| {
            (ranges[a].0..=ranges[a].1)
                .map(|p| {
                    let t = x.0[a] - p as f64;
                    if t.abs() <= r {
                        window.eval(t)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    for z in ranges[2].0..=ranges[2].1 {
        let wz = if nd == 3 {
            axis_weights[2][(z - ranges[2].0) as usize]
        } else {
            1.0
        };
        if wz == 0.0 {
            continue;
        }
        for y in ranges[1].0..=ranges[1].1 {
            let wy = wz * axis_weights[1][(y - ranges[1].0) as usize];
            if wy == 0.0 {
                continue;
            }
            for xx in ranges[0].0..=ranges[0].1 {
                let wx = wy * axis_weights[0][(xx - ranges[0].0) as usize];
                if wx != 0.0 {
                    f(shape.index(xx as usize, y as usize, z as usize), wx);
                }
            }
        }
    }
}

/// Soft isophote image `P(I(x) - i0, beta)` with a Gaussian window.
pub fn soft_isophote(coeffs: &InterpolantCoefficients, i0: f64, beta: f64) -> Result<ImageGrid> {
    if !(0.0..=1.0).contains(&i0) {
        return Err(LorError::InvalidParameter(format!(
            "isophote level {i0} outside [0, 1]"
        )));
    }
    let p = KernelSpec::gaussian(beta)?.with_truncation(f64::INFINITY);
    let image = coeffs.image();
    let values = image.values().iter().map(|&v| p.parzen(v - i0)).collect();
    ImageGrid::with_range(image.shape(), values, (0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::prefilter;
    use crate::synth::gen_uniform_noise;

    #[test]
    fn unit_spline_taps_match_kernel() {
        let bins = Bins::new(16).unwrap();
        let k = KernelSpec::new(KernelFamily::CubicBSpline, 1.0 / 16.0).unwrap();
        let (mut w, mut d) = (Vec::new(), Vec::new());
        for i in 0..=400 {
            let v = -0.2 + 1.4 * i as f64 / 400.0;
            let lo = parzen_weights(&bins, &k, v, &mut w, Some(&mut d));
            for n in 0..16 {
                let t = v - bins.center(n);
                let (ew, ed) = match n.checked_sub(lo).filter(|&a| a < w.len()) {
                    Some(a) => (w[a], d[a]),
                    None => (0.0, 0.0),
                };
                assert!((ew - k.parzen(t)).abs() < 1e-12, "v {v} bin {n}");
                assert!((ed - k.parzen_deriv(t)).abs() < 1e-9, "v {v} bin {n}");
            }
        }
    }

    #[test]
    fn bins_geometry() {
        let b = Bins::new(4).unwrap();
        assert_eq!(b.centers(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(b.hard_bin(0.0), Some(0));
        assert_eq!(b.hard_bin(0.25), Some(1));
        assert_eq!(b.hard_bin(1.0), Some(3));
        assert_eq!(b.hard_bin(1.01), None);
        assert!(Bins::new(1).is_err());
    }

    #[test]
    fn constant_image_fills_one_bin() {
        let img = ImageGrid::from_fn(&[6, 6], |_| 0.3).unwrap();
        // a constant image has a degenerate range; normalized value 0
        let h = counting_histogram(&img, 8).unwrap();
        assert_eq!(h.values()[0], 36.0);
        assert_eq!(h.values().iter().sum::<f64>(), 36.0);
    }

    #[test]
    fn uniform_ramp_fills_bins_evenly() {
        // counting oracle: a ramp with one voxel per level
        let img = ImageGrid::from_fn(&[64, 4], |p| p.0[0] / 63.0).unwrap();
        let h = counting_histogram(&img, 4).unwrap();
        for &c in h.values() {
            assert!((c - 64.0).abs() <= 4.0, "{c}");
        }
    }

    #[test]
    fn merge_pairs_of_eight_equals_four() {
        let img = gen_uniform_noise(&[16, 16], 11).unwrap();
        let h8 = counting_histogram(&img, 8).unwrap();
        let h4 = counting_histogram(&img, 4).unwrap();
        assert_eq!(merge_bin_pairs(&h8).unwrap().values(), h4.values());
    }

    #[test]
    fn normalize_is_idempotent_and_keeps_mass() {
        let h = LocalHistogram::from_values(vec![1.0, 3.0, 0.0, 4.0]).unwrap();
        let n = h.normalize().unwrap();
        assert!((n.values().iter().sum::<f64>() * 0.25 - 1.0).abs() < 1e-12);
        assert_eq!(n.mass(), 2.0);
        assert_eq!(n.normalize().unwrap(), n);
        let empty = LocalHistogram::from_values(vec![0.0; 4]).unwrap();
        assert!(matches!(empty.normalize(), Err(LorError::EmptyHistogram)));
    }

    #[test]
    fn gaussian_parzen_mass_is_beta_sqrt_2pi() {
        let img = ImageGrid::from_fn(&[16, 16], |p| 0.3 + 0.4 * p.0[0] / 15.0).unwrap();
        let img = ImageGrid::with_range(img.shape(), img.values().to_vec(), (0.0, 1.0)).unwrap();
        let beta = 0.03;
        let h = pw_histogram(&img, &KernelSpec::parzen_gaussian(beta).unwrap(), 256)
            .unwrap()
            .normalize()
            .unwrap();
        let k = beta * (2.0 * std::f64::consts::PI).sqrt();
        assert!((h.mass() - k).abs() < 1e-6, "{} vs {k}", h.mass());
    }

    #[test]
    fn constant_local_histogram_is_sampled_window() {
        let img =
            ImageGrid::with_range(crate::image::Shape::new(&[12, 12]).unwrap(), vec![0.4; 144], (0.0, 1.0)).unwrap();
        let c = prefilter(&img).unwrap();
        let p = KernelSpec::parzen_gaussian(0.05).unwrap();
        let w = KernelSpec::gaussian(1.5).unwrap();
        let s = ScaleTriple::new(0.0, 0.05, 1.5).unwrap();
        let h = local_histogram(&c, SamplePoint::new2(5.0, 6.0), s, &p, &w, 32)
            .unwrap()
            .normalize()
            .unwrap();
        let bins = Bins::new(32).unwrap();
        let expect: Vec<f64> = (0..32).map(|n| p.parzen(0.4 - bins.center(n))).collect();
        let k: f64 = expect.iter().sum::<f64>() / 32.0;
        for (a, e) in h.values().iter().zip(&expect) {
            assert!((a - e / k).abs() < 1e-12);
        }
        let inf = ScaleTriple::new(0.0, 0.05, f64::INFINITY).unwrap();
        assert!(local_histogram(&c, SamplePoint::new2(5.0, 6.0), inf, &p, &w, 32).is_err());
    }

    #[test]
    fn moments_reject_high_order_and_unnormalized() {
        let h = LocalHistogram::from_values(vec![1.0; 8]).unwrap();
        assert!(matches!(h.moments(3), Err(LorError::NotNormalized { .. })));
        assert!(h.normalize().unwrap().moments(6).is_err());
    }

    #[test]
    fn central_moments_rebuild_from_raw() {
        let h = LocalHistogram::from_values(vec![0.5, 2.0, 3.0, 1.0, 0.0, 4.0, 0.2, 0.1])
            .unwrap()
            .normalize()
            .unwrap();
        let m = h.moments(5).unwrap();
        assert!((m.central[0] - 1.0).abs() < 1e-12);
        assert!(m.central[1].abs() < 1e-12);
        for (a, b) in m.central_from_raw().iter().zip(&m.central) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_parzen_eta() {
        let p = KernelSpec::gaussian(0.1).unwrap();
        assert!((parzen_central_moment(&p, 4) - 3.0 * 0.1f64.powi(4)).abs() < 1e-18);
        assert!((parzen_central_moment(&p, 2) - 0.01).abs() < 1e-15);
        assert_eq!(parzen_central_moment(&p, 3), 0.0);
        let b = KernelSpec::bspline(1.0).unwrap();
        assert!((parzen_central_moment(&b, 2) - 1.0 / 3.0).abs() < 1e-8);
        let bx = KernelSpec::boxcar(1.0).unwrap();
        assert!((parzen_central_moment(&bx, 2) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn soft_isophote_of_constant_is_ones() {
        let img = ImageGrid::with_range(crate::image::Shape::new(&[8, 8]).unwrap(), vec![0.5; 64], (0.0, 1.0)).unwrap();
        let c = prefilter(&img).unwrap();
        let iso = soft_isophote(&c, 0.5, 0.005).unwrap();
        assert!(iso.values().iter().all(|&v| v == 1.0));
        assert!(soft_isophote(&c, 1.5, 0.005).is_err());
    }
}
