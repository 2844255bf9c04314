//! Deterministic synthetic images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LorError, Result};
use crate::image::{ImageGrid, SamplePoint, Shape};

/// `exp(-|x - center|^2 / (2 std^2))`, peak 1 at `center`.
pub fn gen_gaussian_blob(dims: &[usize], center: SamplePoint, std: f64) -> Result<ImageGrid> {
    if !(std > 0.0) {
        return Err(LorError::InvalidParameter(format!(
            "blob std must be positive, got {std}"
        )));
    }
    let shape = Shape::new(dims)?;
    let nd = shape.ndim();
    let inv = 1.0 / (2.0 * std * std);
    let values = (0..shape.len())
        .map(|idx| {
            let c = shape.coords(idx);
            let r2: f64 = (0..nd).map(|a| (c[a] as f64 - center.0[a]).powi(2)).sum();
            (-r2 * inv).exp()
        })
        .collect();
    ImageGrid::with_range(shape, values, (0.0, 1.0))
}

/// Linear ramp along `direction` through the grid center.
///
/// Before rescaling the ramp is `magnitude * (direction . x)`. It is divided
/// by the grid diagonal and offset to 0.5 so that any direction fits inside
/// `[0, 1]` for `magnitude <= 1`; ramps of equal magnitude therefore keep equal
/// gradient magnitude after rescaling. Larger magnitudes saturate at 0 and 1.
pub fn gen_linear_gradient(dims: &[usize], direction: &[f64], magnitude: f64) -> Result<ImageGrid> {
    let shape = Shape::new(dims)?;
    let nd = shape.ndim();
    if direction.len() != nd {
        return Err(LorError::InvalidParameter(format!(
            "direction has {} components for a {nd}D grid",
            direction.len()
        )));
    }
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(LorError::ZeroDirection);
    }
    if !(magnitude > 0.0) {
        return Err(LorError::InvalidParameter(format!(
            "magnitude must be positive, got {magnitude}"
        )));
    }
    let dir: Vec<f64> = direction.iter().map(|d| d / norm).collect();
    let slope = magnitude * linear_gradient_scale(dims);
    let center = shape.center();
    let values = (0..shape.len())
        .map(|idx| {
            let c = shape.coords(idx);
            let proj: f64 = (0..nd).map(|a| dir[a] * (c[a] as f64 - center.0[a])).sum();
            (0.5 + slope * proj).clamp(0.0, 1.0)
        })
        .collect();
    ImageGrid::with_range(shape, values, (0.0, 1.0))
}

/// Factor applied by [`gen_linear_gradient`] to the unscaled ramp.
pub fn linear_gradient_scale(dims: &[usize]) -> f64 {
    let diag = dims.iter().map(|&n| ((n - 1) as f64).powi(2)).sum::<f64>().sqrt();
    1.0 / diag
}

/// I.i.d. uniform noise in `[0, 1]`.
pub fn gen_uniform_noise(dims: &[usize], seed: u64) -> Result<ImageGrid> {
    let shape = Shape::new(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..shape.len()).map(|_| rng.gen::<f64>()).collect();
    ImageGrid::with_range(shape, values, (0.0, 1.0))
}

/// Analytic smooth random field: a seeded sum of Gaussian bumps, affinely
/// mapped so that the field over the grid padded by `pad` voxels spans
/// `[0, 1]`. Shifted copies can be rendered exactly, which gives registration
/// pairs with a known ground-truth translation.
#[derive(Clone, Debug)]
pub struct SmoothField {
    shape: Shape,
    centers: Vec<[f64; 3]>,
    amplitudes: Vec<f64>,
    width: f64,
    offset: f64,
    scale: f64,
}

impl SmoothField {
    pub fn new(dims: &[usize], bumps: usize, width: f64, seed: u64) -> Result<Self> {
        if bumps == 0 || !(width > 0.0) {
            return Err(LorError::InvalidParameter("field needs bumps > 0 and width > 0".into()));
        }
        let shape = Shape::new(dims)?;
        let nd = shape.ndim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pad = 2.0 * width;
        let d = shape.dims();
        let centers = (0..bumps)
            .map(|_| {
                let mut c = [0.0; 3];
                for a in 0..nd {
                    c[a] = rng.gen_range(-pad..(d[a] - 1) as f64 + pad);
                }
                c
            })
            .collect();
        let amplitudes = (0..bumps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut field = SmoothField {
            shape,
            centers,
            amplitudes,
            width,
            offset: 0.0,
            scale: 1.0,
        };
        // span over a padded grid so that shifted renders stay in range
        let margin = 8isize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let ext = |a: usize| -> std::ops::Range<isize> {
            if a < nd {
                -margin..d[a] as isize + margin
            } else {
                0..1
            }
        };
        for z in ext(2) {
            for y in ext(1) {
                for x in ext(0) {
                    let v = field.raw(SamplePoint([x as f64, y as f64, z as f64]));
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        field.offset = lo;
        field.scale = if hi > lo { 1.0 / (hi - lo) } else { 1.0 };
        Ok(field)
    }

    fn raw(&self, p: SamplePoint) -> f64 {
        let nd = self.shape.ndim();
        let inv = 1.0 / (2.0 * self.width * self.width);
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let r2: f64 = (0..nd).map(|k| (p.0[k] - c[k]).powi(2)).sum();
                a * (-r2 * inv).exp()
            })
            .sum()
    }

    /// Field value at a continuous position.
    pub fn eval(&self, p: SamplePoint) -> f64 {
        (self.raw(p) - self.offset) * self.scale
    }

    /// Renders `R(x) = field(x + shift)` on the grid.
    pub fn render(&self, shift: &[f64]) -> Result<ImageGrid> {
        let nd = self.shape.ndim();
        let mut s = [0.0; 3];
        s[..nd.min(shift.len())].copy_from_slice(&shift[..nd.min(shift.len())]);
        let values = (0..self.shape.len())
            .map(|idx| {
                let c = self.shape.coords(idx);
                let p = SamplePoint([c[0] as f64 + s[0], c[1] as f64 + s[1], c[2] as f64 + s[2]]);
                self.eval(p).clamp(0.0, 1.0)
            })
            .collect();
        ImageGrid::with_range(self.shape, values, (0.0, 1.0))
    }
}
