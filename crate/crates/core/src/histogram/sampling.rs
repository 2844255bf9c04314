use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::image::{SamplePoint, Shape};

/// Where histogram samples are taken on the reference grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplePolicy {
    /// Every voxel center.
    AllVoxels,
    /// Voxel centers at least `margin` voxels from every face.
    Interior { margin: usize },
    /// `count` uniformly distributed continuous positions at least `margin`
    /// voxels from every face.
    Random { count: usize, seed: u64, margin: f64 },
}

impl Default for SamplePolicy {
    fn default() -> Self {
        SamplePolicy::AllVoxels
    }
}

impl SamplePolicy {
    pub fn points(&self, shape: &Shape) -> Result<Vec<SamplePoint>> {
        let nd = shape.ndim();
        let dims = shape.dims();
        let pts: Vec<SamplePoint> = match *self {
            SamplePolicy::AllVoxels => (0..shape.len()).map(|i| voxel(shape, i)).collect(),
            SamplePolicy::Interior { margin } => {
                let m = margin as f64;
                (0..shape.len())
                    .map(|i| voxel(shape, i))
                    .filter(|p| shape.contains(p, m))
                    .collect()
            }
            SamplePolicy::Random { count, seed, margin } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pts: Vec<SamplePoint> = (0..count)
                    .map(|_| {
                        let mut c = [0.0; 3];
                        for a in 0..nd {
                            let hi = (dims[a] - 1) as f64 - margin;
                            c[a] = if hi > margin { rng.gen_range(margin..hi) } else { margin };
                        }
                        SamplePoint(c)
                    })
                    .collect();
                // raster order of the containing voxel keeps interpolation cache-friendly
                pts.sort_by_cached_key(|p| {
                    let [x, y, z] = p.0.map(|v| v as usize);
                    shape.index(x.min(dims[0] - 1), y.min(dims[1] - 1), z.min(dims[2] - 1))
                });
                pts
            }
        };
        if pts.is_empty() {
            return Err(LorError::InvalidParameter(format!(
                "sample policy {self:?} yields no points"
            )));
        }
        Ok(pts)
    }
}

fn voxel(shape: &Shape, idx: usize) -> SamplePoint {
    let [x, y, z] = shape.coords(idx);
    SamplePoint([x as f64, y as f64, z as f64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies() {
        let s = Shape::new(&[8, 6]).unwrap();
        assert_eq!(SamplePolicy::AllVoxels.points(&s).unwrap().len(), 48);
        assert_eq!(SamplePolicy::Interior { margin: 2 }.points(&s).unwrap().len(), 4 * 2);
        let r = SamplePolicy::Random {
            count: 100,
            seed: 3,
            margin: 1.0,
        };
        let a = r.points(&s).unwrap();
        assert_eq!(a, r.points(&s).unwrap());
        assert!(a.iter().all(|p| s.contains(p, 1.0)));
        assert!(SamplePolicy::Interior { margin: 4 }.points(&s).is_err());
    }
}
