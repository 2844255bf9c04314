//! The three kernel families used for measurement (K), intensity (P) and
//! integration (W), and separable spatial convolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::image::{mirror_index, ImageGrid};
use crate::spline::{bspline3, bspline3_deriv};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    CubicBSpline,
    Boxcar,
}

/// A kernel of a given family and scale.
///
/// `scale` is the standard deviation of a Gaussian, the width of a Boxcar, or
/// the dilation of the cubic B-spline. Gaussians are truncated at
/// `truncation_radius * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub scale: f64,
    #[serde(default = "default_truncation")]
    pub truncation_radius: f64,
}

fn default_truncation() -> f64 {
    4.0
}

/// Truncation used for Gaussian Parzen windows in intensity.
pub const PARZEN_GAUSSIAN_TRUNCATION: f64 = 6.0;

impl KernelSpec {
    pub fn new(family: KernelFamily, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "kernel scale must be positive, got {scale}"
            )));
        }
        Ok(KernelSpec {
            family,
            scale,
            truncation_radius: default_truncation(),
        })
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, scale)
    }

    pub fn bspline(scale: f64) -> Result<Self> {
        Self::new(KernelFamily::CubicBSpline, scale)
    }

    pub fn boxcar(width: f64) -> Result<Self> {
        Self::new(KernelFamily::Boxcar, width)
    }

    /// Gaussian Parzen window with the wider intensity truncation.
    pub fn parzen_gaussian(beta: f64) -> Result<Self> {
        Ok(Self::gaussian(beta)?.with_truncation(PARZEN_GAUSSIAN_TRUNCATION))
    }

    pub fn with_truncation(mut self, radius: f64) -> Self {
        self.truncation_radius = radius;
        self
    }

    /// Normalized 1D spatial kernel value.
    pub fn eval(&self, t: f64) -> f64 {
        let s = self.scale;
        match self.family {
            KernelFamily::Gaussian => (-t * t / (2.0 * s * s)).exp() / (s * SQRT_2PI),
            KernelFamily::CubicBSpline => bspline3(t / s) / s,
            KernelFamily::Boxcar => self.parzen(t),
        }
    }

    /// Unnormalized intensity window: `exp(-t^2/(2 beta^2))`, `B3(t/beta)`, or
    /// the indicator of `[-beta/2, beta/2)`. Zero outside [`Self::support`].
    #[inline]
    pub fn parzen(&self, t: f64) -> f64 {
        let s = self.scale;
        match self.family {
            KernelFamily::Gaussian => {
                if t.abs() < self.truncation_radius * s {
                    (-t * t / (2.0 * s * s)).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::CubicBSpline => bspline3(t / s),
            KernelFamily::Boxcar => {
                if t >= -0.5 * s && t < 0.5 * s {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative of [`Self::parzen`] (zero for the Boxcar).
    #[inline]
    pub fn parzen_deriv(&self, t: f64) -> f64 {
        let s = self.scale;
        match self.family {
            KernelFamily::Gaussian => {
                if t.abs() < self.truncation_radius * s {
                    -t / (s * s) * (-t * t / (2.0 * s * s)).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::CubicBSpline => bspline3_deriv(t / s) / s,
            KernelFamily::Boxcar => 0.0,
        }
    }

    /// Half-width outside which the kernel vanishes.
    pub fn support(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.truncation_radius * self.scale,
            KernelFamily::CubicBSpline => 2.0 * self.scale,
            KernelFamily::Boxcar => 0.5 * self.scale,
        }
    }

    /// Integral of the unnormalized window over the real line.
    pub fn parzen_mass(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.scale * SQRT_2PI,
            KernelFamily::CubicBSpline | KernelFamily::Boxcar => self.scale,
        }
    }

    /// Standard deviation of the normalized kernel.
    pub fn std(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.scale,
            KernelFamily::CubicBSpline => self.scale * bspline_exact_std(),
            KernelFamily::Boxcar => self.scale / 12f64.sqrt(),
        }
    }

    /// Integer-offset taps for discrete convolution, summing to one. Index
    /// `k` of the returned vector corresponds to offset `k - origin`.
    pub fn discrete_taps(&self) -> Result<(Vec<f64>, isize)> {
        let (mut taps, origin) = match self.family {
            KernelFamily::Gaussian | KernelFamily::CubicBSpline => {
                let r = match self.family {
                    KernelFamily::Gaussian => (self.truncation_radius * self.scale).ceil() as isize,
                    _ => (2.0 * self.scale).ceil() as isize - 1,
                }
                .max(0);
                let taps: Vec<f64> = (-r..=r).map(|k| self.eval(k as f64)).collect();
                (taps, r)
            }
            KernelFamily::Boxcar => {
                let w = self.scale.round();
                if (self.scale - w).abs() > 1e-12 || w < 1.0 {
                    return Err(LorError::UnsupportedKernel(format!(
                        "boxcar convolution needs an integer width in voxels, got {}",
                        self.scale
                    )));
                }
                let w = w as isize;
                (vec![1.0; w as usize], w / 2)
            }
        };
        let sum: f64 = taps.iter().sum();
        for t in taps.iter_mut() {
            *t /= sum;
        }
        Ok((taps, origin))
    }
}

/// The measurement, intensity and integration scales of a local histogram.
/// `alpha` may be `f64::INFINITY` (global histogram).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTriple {
    pub sigma: f64,
    pub beta: f64,
    #[serde(with = "infinite_as_null")]
    pub alpha: f64,
}

impl ScaleTriple {
    pub fn new(sigma: f64, beta: f64, alpha: f64) -> Result<Self> {
        let s = ScaleTriple { sigma, beta, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(LorError::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn is_global(&self) -> bool {
        self.alpha.is_infinite()
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Separable convolution with whole-sample mirror boundaries along every
/// active axis. The intensity range of the input is kept.
pub fn convolve(image: &ImageGrid, spec: &KernelSpec) -> Result<ImageGrid> {
    let (taps, origin) = spec.discrete_taps()?;
    let shape = image.shape();
    let dims = shape.dims();
    let mut data = image.values().to_vec();
    for axis in 0..shape.ndim() {
        let n = dims[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let src = data;
        let mut out = vec![0.0; src.len()];
        out.par_chunks_mut(dims[0]).enumerate().for_each(|(row, chunk)| {
            let base = row * dims[0];
            for (x, o) in chunk.iter_mut().enumerate() {
                let idx = base + x;
                let c = shape.coords(idx)[axis] as isize;
                let line0 = idx - c as usize * stride;
                let mut acc = 0.0;
                for (k, w) in taps.iter().enumerate() {
                    let j = c + k as isize - origin;
                    let j = if j >= 0 && (j as usize) < n {
                        j as usize
                    } else {
                        mirror_index(j, n)
                    };
                    acc += w * src[line0 + j * stride];
                }
                *o = acc;
            }
        });
        data = out;
    }
    let (lo, hi) = image.intensity_range();
    let values = data.into_iter().map(|v| v.clamp(lo, hi)).collect();
    Ok(ImageGrid::with_range(shape, values, (lo, hi))?.with_spacing(image.spacing())?)
}

/// Measurement-scale smoothing with a Gaussian `K`; `sigma == 0` is the
/// identity.
pub fn smooth(image: &ImageGrid, sigma: f64) -> Result<ImageGrid> {
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    convolve(image, &KernelSpec::gaussian(sigma)?)
}

/// Operational standard deviation used when matching cubic B-spline and
/// Gaussian kernels in experiments.
pub fn bspline_equivalent_std() -> f64 {
    0.6
}

/// Exact standard deviation of the centered cubic B-spline, `sqrt(1/3)`.
pub fn bspline_exact_std() -> f64 {
    (1.0f64 / 3.0).sqrt()
}
