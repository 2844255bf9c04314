//! Scalar images on regular 2D/3D grids.
//!
//! Voxels are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`. 2D images carry a unit third axis internally so
//! that every routine can address voxels with three coordinates.

use crate::error::{LorError, Result};

/// A continuous position in voxel units. 2D positions ignore the third
/// coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SamplePoint(pub [f64; 3]);

impl SamplePoint {
    pub fn new2(x: f64, y: f64) -> Self {
        SamplePoint([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        SamplePoint([x, y, z])
    }
}

impl From<[f64; 3]> for SamplePoint {
    fn from(p: [f64; 3]) -> Self {
        SamplePoint(p)
    }
}

/// Grid geometry shared by images and coefficient volumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    ndim: usize,
    dims: [usize; 3],
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        let ndim = dims.len();
        if !(2..=3).contains(&ndim) {
            return Err(LorError::UnsupportedDimension(ndim));
        }
        let mut d = [1usize; 3];
        for (axis, &len) in dims.iter().enumerate() {
            if len < 4 {
                return Err(LorError::DimensionTooSmall { axis, len });
            }
            d[axis] = len;
        }
        Ok(Shape { ndim, dims: d })
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.ndim
    }

    /// Per-axis voxel counts; the unused third axis of a 2D grid is 1.
    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn active_dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let r = idx / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Whether `p` lies in the closed box `[margin, n - 1 - margin]` on every
    /// active axis.
    #[inline]
    pub fn contains(&self, p: &SamplePoint, margin: f64) -> bool {
        (0..self.ndim).all(|a| p.0[a] >= margin && p.0[a] <= (self.dims[a] - 1) as f64 - margin)
    }

    /// Geometric center in voxel units.
    pub fn center(&self) -> SamplePoint {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate().take(self.ndim) {
            *ca = (self.dims[a] - 1) as f64 / 2.0;
        }
        SamplePoint(c)
    }
}

/// Whole-sample mirror of an integer index into `[0, n)`.
#[inline]
pub fn mirror_index(k: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = k.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// N-dimensional scalar image with spacing and the intensity span used for
/// bin mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    shape: Shape,
    spacing: [f64; 3],
    values: Vec<f64>,
    intensity_range: (f64, f64),
}

impl ImageGrid {
    /// Builds an image whose intensity range is the span of its values.
    pub fn new(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let (lo, hi) = value_span(&values);
        Self::with_range(shape, values, (lo, hi))
    }

    /// Builds an image with an explicit intensity range.
    pub fn with_range(shape: Shape, values: Vec<f64>, range: (f64, f64)) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(LorError::InvalidImage(format!(
                "expected {} voxels, got {}",
                shape.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(LorError::InvalidImage(format!("non-finite voxel value {v}")));
        }
        if !(range.0.is_finite() && range.1.is_finite()) || range.0 > range.1 {
            return Err(LorError::InvalidImage(format!("bad intensity range {range:?}")));
        }
        let (lo, hi) = value_span(&values);
        let tol = 1e-12 * (1.0 + range.0.abs().max(range.1.abs()));
        if lo < range.0 - tol || hi > range.1 + tol {
            return Err(LorError::InvalidImage(format!(
                "values span [{lo}, {hi}] outside intensity range {range:?}"
            )));
        }
        Ok(ImageGrid {
            shape,
            spacing: [1.0; 3],
            values,
            intensity_range: range,
        })
    }

    /// Evaluates `f` at every voxel position.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(SamplePoint) -> f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let mut values = Vec::with_capacity(shape.len());
        for idx in 0..shape.len() {
            let [x, y, z] = shape.coords(idx);
            values.push(f(SamplePoint([x as f64, y as f64, z as f64])));
        }
        let span = value_span(&values);
        Self::with_range(shape, values, span)
    }

    pub fn with_spacing(mut self, spacing: &[f64]) -> Result<Self> {
        if spacing.len() != self.shape.ndim() || spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(LorError::InvalidImage(format!("bad spacing {spacing:?}")));
        }
        self.spacing[..spacing.len()].copy_from_slice(spacing);
        Ok(self)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.ndim()
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.active_dims()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.shape.ndim()]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn intensity_range(&self) -> (f64, f64) {
        self.intensity_range
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.shape.index(x, y, z)]
    }

    /// Replaces the voxel values, keeping geometry. The intensity range
    /// becomes the span of the new values.
    pub fn map_values(&self, values: Vec<f64>) -> Result<Self> {
        let span = value_span(&values);
        let mut out = Self::with_range(self.shape, values, span)?;
        out.spacing = self.spacing;
        Ok(out)
    }

    /// Affinely maps the intensity range onto `[0, 1]`. Histogram estimators
    /// operate on normalized intensities.
    pub fn normalized(&self) -> ImageGrid {
        let (lo, hi) = self.intensity_range;
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        ImageGrid {
            shape: self.shape,
            spacing: self.spacing,
            values,
            intensity_range: (0.0, 1.0),
        }
    }

    /// Intensity of voxel values mapped through the stored range into `[0, 1]`.
    #[inline]
    pub fn unit_value(&self, v: f64) -> f64 {
        let (lo, hi) = self.intensity_range;
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    /// Voxel centers as sample points, in storage order.
    pub fn voxel_points(&self) -> impl Iterator<Item = SamplePoint> + '_ {
        (0..self.shape.len()).map(move |idx| {
            let [x, y, z] = self.shape.coords(idx);
            SamplePoint([x as f64, y as f64, z as f64])
        })
    }
}

fn value_span(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}
