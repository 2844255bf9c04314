//! Cubic B-spline interpolation: recursive prefiltering and sampling with
//! analytic spatial derivatives.

use crate::error::{LorError, Result};
use crate::image::{mirror_index, ImageGrid, SamplePoint, Shape};

/// Pole of the cubic B-spline interpolation filter.
const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// Centered cubic B-spline.
#[inline]
pub fn bspline3(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Derivative of [`bspline3`].
#[inline]
pub fn bspline3_deriv(t: f64) -> f64 {
    let a = t.abs();
    let s = if t < 0.0 { -1.0 } else { 1.0 };
    if a < 1.0 {
        s * (-2.0 * a + 1.5 * a * a)
    } else if a < 2.0 {
        let b = 2.0 - a;
        -s * 0.5 * b * b
    } else {
        0.0
    }
}

/// Weights of the four taps `floor(p) - 1 ..= floor(p) + 2` at fractional
/// offset `u = p - floor(p)`, and their derivatives.
#[inline]
pub fn tap_weights(u: f64) -> ([f64; 4], [f64; 4]) {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    let w = [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ];
    let d = [-0.5 * v * v, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2];
    (w, d)
}

/// How samples outside the grid are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Coefficients are reflected about the first and last voxel.
    #[default]
    Mirror,
    /// Points outside `[0, n - 1]` on any axis are rejected.
    Strict,
}

/// Cubic B-spline coefficients of an image, together with the voxel values
/// they interpolate.
#[derive(Clone, Debug)]
pub struct InterpolantCoefficients {
    shape: Shape,
    coeffs: Vec<f64>,
    image: ImageGrid,
    boundary: Boundary,
}

/// Computes interpolating cubic B-spline coefficients with mirror boundaries.
pub fn prefilter(image: &ImageGrid) -> Result<InterpolantCoefficients> {
    let shape = image.shape();
    for (axis, &len) in shape.active_dims().iter().enumerate() {
        if len < 4 {
            return Err(LorError::DimensionTooSmall { axis, len });
        }
    }
    let mut coeffs = image.values().to_vec();
    let dims = shape.dims();
    let mut line = Vec::new();
    for axis in 0..shape.ndim() {
        let n = dims[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        line.resize(n, 0.0);
        for start in line_starts(&shape, axis) {
            for (k, l) in line.iter_mut().enumerate() {
                *l = coeffs[start + k * stride];
            }
            filter_line(&mut line);
            for (k, l) in line.iter().enumerate() {
                coeffs[start + k * stride] = *l;
            }
        }
    }
    Ok(InterpolantCoefficients {
        shape,
        coeffs,
        image: image.clone(),
        boundary: Boundary::Mirror,
    })
}

/// Linear offsets of the first voxel of every line along `axis`.
fn line_starts(shape: &Shape, axis: usize) -> Vec<usize> {
    let [nx, ny, nz] = shape.dims();
    let mut out = Vec::new();
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    out.push(shape.index(0, y, z));
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    out.push(shape.index(x, 0, z));
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    out.push(shape.index(x, y, 0));
                }
            }
        }
    }
    out
}

/// In-place causal/anti-causal recursive filter with exact whole-sample
/// mirror initialization.
fn filter_line(c: &mut [f64]) {
    let n = c.len();
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in c.iter_mut() {
        *v *= gain;
    }
    // causal initialization: sum over the mirrored signal of period 2n - 2
    let mut zk = z;
    let zn = z.powi(n as i32 - 1);
    let z2n = zn * zn;
    let mut zr = z2n / z;
    let mut sum = c[0] + zn * c[n - 1];
    for &ck in &c[1..n - 1] {
        sum += (zk + zr) * ck;
        zk *= z;
        zr /= z;
    }
    c[0] = sum / (1.0 - z2n);
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = (z / (z * z - 1.0)) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

impl InterpolantCoefficients {
    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The interpolated image.
    #[inline]
    pub fn image(&self) -> &ImageGrid {
        &self.image
    }

    /// Spline value and, on request, its spatial gradient in voxel units.
    pub fn sample(&self, p: SamplePoint, want_gradient: bool) -> Result<(f64, Option<[f64; 3]>)> {
        if self.boundary == Boundary::Strict && !self.shape.contains(&p, 0.0) {
            return Err(LorError::OutOfDomain { point: p.0 });
        }
        if want_gradient {
            let (v, g) = self.value_and_gradient(p);
            Ok((v, Some(g)))
        } else {
            Ok((self.value(p), None))
        }
    }

    /// Spline value with mirror extension; no domain check.
    #[inline]
    pub fn value(&self, p: SamplePoint) -> f64 {
        let (idx, w, _) = self.stencil(p);
        let [nx, ny, _] = self.shape.dims();
        let mut acc = 0.0;
        if self.shape.ndim() == 2 {
            for j in 0..4 {
                let row = idx[1][j] * nx;
                let mut s = 0.0;
                for i in 0..4 {
                    s += w[0][i] * self.coeffs[row + idx[0][i]];
                }
                acc += w[1][j] * s;
            }
        } else {
            for k in 0..4 {
                let plane = idx[2][k] * ny;
                let mut sk = 0.0;
                for j in 0..4 {
                    let row = (plane + idx[1][j]) * nx;
                    let mut s = 0.0;
                    for i in 0..4 {
                        s += w[0][i] * self.coeffs[row + idx[0][i]];
                    }
                    sk += w[1][j] * s;
                }
                acc += w[2][k] * sk;
            }
        }
        acc
    }

    /// Spline value and gradient with mirror extension; no domain check.
    #[inline]
    pub fn value_and_gradient(&self, p: SamplePoint) -> (f64, [f64; 3]) {
        let (idx, w, d) = self.stencil(p);
        let [nx, ny, _] = self.shape.dims();
        let mut v = 0.0;
        let mut g = [0.0; 3];
        if self.shape.ndim() == 2 {
            for j in 0..4 {
                let row = idx[1][j] * nx;
                let mut s = 0.0;
                let mut sd = 0.0;
                for i in 0..4 {
                    let c = self.coeffs[row + idx[0][i]];
                    s += w[0][i] * c;
                    sd += d[0][i] * c;
                }
                v += w[1][j] * s;
                g[0] += w[1][j] * sd;
                g[1] += d[1][j] * s;
            }
        } else {
            for k in 0..4 {
                let plane = idx[2][k] * ny;
                let (mut sk, mut sxk, mut syk) = (0.0, 0.0, 0.0);
                for j in 0..4 {
                    let row = (plane + idx[1][j]) * nx;
                    let mut s = 0.0;
                    let mut sd = 0.0;
                    for i in 0..4 {
                        let c = self.coeffs[row + idx[0][i]];
                        s += w[0][i] * c;
                        sd += d[0][i] * c;
                    }
                    sk += w[1][j] * s;
                    sxk += w[1][j] * sd;
                    syk += d[1][j] * s;
                }
                v += w[2][k] * sk;
                g[0] += w[2][k] * sxk;
                g[1] += w[2][k] * syk;
                g[2] += d[2][k] * sk;
            }
        }
        (v, g)
    }

    #[inline]
    #[allow(clippy::type_complexity)]
    fn stencil(&self, p: SamplePoint) -> ([[usize; 4]; 3], [[f64; 4]; 3], [[f64; 4]; 3]) {
        let dims = self.shape.dims();
        let mut idx = [[0usize; 4]; 3];
        let mut w = [[0.0; 4]; 3];
        let mut d = [[0.0; 4]; 3];
        for a in 0..self.shape.ndim() {
            let fl = p.0[a].floor();
            let base = fl as isize - 1;
            let (wa, da) = tap_weights(p.0[a] - fl);
            w[a] = wa;
            d[a] = da;
            let n = dims[a];
            if base >= 0 && base + 3 < n as isize {
                for t in 0..4 {
                    idx[a][t] = base as usize + t;
                }
            } else {
                for t in 0..4 {
                    idx[a][t] = mirror_index(base + t as isize, n);
                }
            }
        }
        (idx, w, d)
    }
}
