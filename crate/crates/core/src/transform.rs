//! Parametric coordinate maps: translation, rigid, and cubic B-spline
//! free-form deformation.

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::image::{SamplePoint, Shape};
use crate::spline::tap_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Translation,
    Rigid,
    BsplineFfd,
}

/// Control grid of a free-form deformation. Control point `k` sits at
/// `(k - 1) * spacing` on each axis, so the grid overhangs the image by one
/// cell on every side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfdGrid {
    pub control: [usize; 3],
    pub spacing: [f64; 3],
}

impl FfdGrid {
    fn count(&self, ndim: usize) -> usize {
        self.control[..ndim].iter().product()
    }
}

/// `phi(x; params)`. Translation parameters are voxel offsets; rigid
/// parameters are the rotation (a scalar angle in 2D, a rotation vector in
/// 3D) about `center` followed by the translation; FFD parameters are the
/// control displacements, all x components first, then y, then z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub kind: TransformKind,
    pub ndim: usize,
    pub params: Vec<f64>,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffd: Option<FfdGrid>,
}

/// Sparse Jacobian `d phi / d params` at one point: `(parameter, d phi)`.
pub type Jacobian = Vec<(usize, [f64; 3])>;

impl Transform {
    pub fn identity(kind: TransformKind, shape: &Shape) -> Result<Self> {
        match kind {
            TransformKind::Translation => Ok(Self::translation(&vec![0.0; shape.ndim()])),
            TransformKind::Rigid => Ok(Self::rigid(shape, &vec![0.0; rigid_param_count(shape.ndim())])),
            TransformKind::BsplineFfd => Self::ffd(shape, &[4, 4, 4][..shape.ndim()]),
        }
    }

    pub fn translation(offset: &[f64]) -> Self {
        Transform {
            kind: TransformKind::Translation,
            ndim: offset.len(),
            params: offset.to_vec(),
            center: [0.0; 3],
            ffd: None,
        }
    }

    /// Rigid motion about the grid center.
    pub fn rigid(shape: &Shape, params: &[f64]) -> Self {
        Transform {
            kind: TransformKind::Rigid,
            ndim: shape.ndim(),
            params: params.to_vec(),
            center: shape.center().0,
            ffd: None,
        }
    }

    /// Zero-displacement FFD with `control` points per axis (at least 4).
    pub fn ffd(shape: &Shape, control: &[usize]) -> Result<Self> {
        let nd = shape.ndim();
        if control.len() != nd || control.iter().any(|&c| c < 4) {
            return Err(LorError::InvalidParameter(format!(
                "FFD needs at least 4 control points on each of {nd} axes, got {control:?}"
            )));
        }
        let dims = shape.dims();
        let mut grid = FfdGrid {
            control: [1; 3],
            spacing: [1.0; 3],
        };
        for a in 0..nd {
            grid.control[a] = control[a];
            grid.spacing[a] = (dims[a] - 1) as f64 / (control[a] - 3) as f64;
        }
        Ok(Transform {
            kind: TransformKind::BsplineFfd,
            ndim: nd,
            params: vec![0.0; grid.count(nd) * nd],
            center: [0.0; 3],
            ffd: Some(grid),
        })
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(LorError::InvalidParameter(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let mut t = self.clone();
        t.params = params.to_vec();
        Ok(t)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_identity(&self) -> bool {
        self.params.iter().all(|&p| p == 0.0)
    }

    pub fn validate(&self, shape: &Shape) -> Result<()> {
        if self.ndim != shape.ndim() {
            return Err(LorError::InvalidParameter(format!(
                "{}D transform applied to a {}D grid",
                self.ndim,
                shape.ndim()
            )));
        }
        let expected = match self.kind {
            TransformKind::Translation => self.ndim,
            TransformKind::Rigid => rigid_param_count(self.ndim),
            TransformKind::BsplineFfd => match &self.ffd {
                Some(g) => g.count(self.ndim) * self.ndim,
                None => return Err(LorError::InvalidParameter("FFD without control grid".into())),
            },
        };
        if self.params.len() != expected {
            return Err(LorError::InvalidParameter(format!(
                "{:?} expects {expected} parameters, got {}",
                self.kind,
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: SamplePoint) -> SamplePoint {
        self.prepared().apply(p)
    }

    /// Maps `p` and fills the sparse Jacobian with respect to the
    /// parameters.
    pub fn apply_with_jacobian(&self, p: SamplePoint, jac: &mut Jacobian) -> SamplePoint {
        self.prepared().apply_with_jacobian(p, jac)
    }

    /// The transform with its point-independent terms evaluated, for mapping
    /// many points.
    pub fn prepared(&self) -> PreparedTransform<'_> {
        let rotation = match self.kind {
            TransformKind::Rigid if self.ndim == 2 => {
                let (s, c) = self.params[0].sin_cos();
                Rotation::Planar { s, c }
            }
            TransformKind::Rigid => {
                let v = [self.params[0], self.params[1], self.params[2]];
                let r = rotation_matrix(v);
                Rotation::Spatial {
                    r,
                    dr: rotation_derivatives(v, &r),
                }
            }
            _ => Rotation::None,
        };
        PreparedTransform { t: self, rotation }
    }

    fn map_ffd(&self, p: SamplePoint, mut jac: Option<&mut Jacobian>) -> SamplePoint {
        let nd = self.ndim;
        let g = self.ffd.as_ref().expect("FFD transform carries its control grid");
        let count = g.count(nd);
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            if a < nd {
                let t = p.0[a] / g.spacing[a] + 1.0;
                let fl = t.floor();
                base[a] = fl as isize - 1;
                w[a] = tap_weights(t - fl).0;
            } else {
                w[a] = [1.0, 0.0, 0.0, 0.0];
            }
        }
        let mut q = p.0;
        let kz_range = if nd == 3 { 4 } else { 1 };
        for kz in 0..kz_range {
            let cz = base[2] + kz as isize;
            if nd == 3 && (cz < 0 || cz >= g.control[2] as isize) {
                continue;
            }
            for ky in 0..4 {
                let cy = base[1] + ky as isize;
                if cy < 0 || cy >= g.control[1] as isize {
                    continue;
                }
                for kx in 0..4 {
                    let cx = base[0] + kx as isize;
                    if cx < 0 || cx >= g.control[0] as isize {
                        continue;
                    }
                    let weight = w[0][kx] * w[1][ky] * w[2][kz];
                    if weight == 0.0 {
                        continue;
                    }
                    let cz_ = if nd == 3 { cz as usize } else { 0 };
                    let k = cx as usize + g.control[0] * (cy as usize + g.control[1] * cz_);
                    for a in 0..nd {
                        q[a] += weight * self.params[a * count + k];
                        if let Some(j) = jac.as_deref_mut() {
                            let mut e = [0.0; 3];
                            e[a] = weight;
                            j.push((a * count + k, e));
                        }
                    }
                }
            }
        }
        SamplePoint(q)
    }

    /// Exact inverse for translations; `None` otherwise.
    pub fn inverse(&self) -> Option<Transform> {
        match self.kind {
            TransformKind::Translation => Some(Transform::translation(
                &self.params.iter().map(|v| -v).collect::<Vec<_>>(),
            )),
            _ => None,
        }
    }
}

enum Rotation {
    None,
    Planar { s: f64, c: f64 },
    Spatial { r: Mat3, dr: [Mat3; 3] },
}

pub struct PreparedTransform<'a> {
    t: &'a Transform,
    rotation: Rotation,
}

impl PreparedTransform<'_> {
    pub fn apply(&self, p: SamplePoint) -> SamplePoint {
        self.map(p, None)
    }

    pub fn apply_with_jacobian(&self, p: SamplePoint, jac: &mut Jacobian) -> SamplePoint {
        jac.clear();
        self.map(p, Some(jac))
    }

    fn map(&self, p: SamplePoint, jac: Option<&mut Jacobian>) -> SamplePoint {
        let t = self.t;
        let nd = t.ndim;
        let center = t.center;
        match (&self.rotation, t.kind) {
            (_, TransformKind::Translation) => {
                let mut q = p.0;
                for a in 0..nd {
                    q[a] += t.params[a];
                }
                if let Some(j) = jac {
                    for a in 0..nd {
                        let mut e = [0.0; 3];
                        e[a] = 1.0;
                        j.push((a, e));
                    }
                }
                SamplePoint(q)
            }
            (&Rotation::Planar { s, c }, _) => {
                let dx = p.0[0] - center[0];
                let dy = p.0[1] - center[1];
                let q = [
                    c * dx - s * dy + center[0] + t.params[1],
                    s * dx + c * dy + center[1] + t.params[2],
                    p.0[2],
                ];
                if let Some(j) = jac {
                    j.push((0, [-s * dx - c * dy, c * dx - s * dy, 0.0]));
                    j.push((1, [1.0, 0.0, 0.0]));
                    j.push((2, [0.0, 1.0, 0.0]));
                }
                SamplePoint(q)
            }
            (Rotation::Spatial { r, dr }, _) => {
                let d = [p.0[0] - center[0], p.0[1] - center[1], p.0[2] - center[2]];
                let rd = mat_vec(r, d);
                let q = [
                    rd[0] + center[0] + t.params[3],
                    rd[1] + center[1] + t.params[4],
                    rd[2] + center[2] + t.params[5],
                ];
                if let Some(j) = jac {
                    for (i, m) in dr.iter().enumerate() {
                        j.push((i, mat_vec(m, d)));
                    }
                    j.push((3, [1.0, 0.0, 0.0]));
                    j.push((4, [0.0, 1.0, 0.0]));
                    j.push((5, [0.0, 0.0, 1.0]));
                }
                SamplePoint(q)
            }
            _ => t.map_ffd(p, jac),
        }
    }
}

pub fn rigid_param_count(ndim: usize) -> usize {
    if ndim == 2 {
        3
    } else {
        6
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn skew(v: [f64; 3]) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

/// Rodrigues' formula for a rotation vector.
pub fn rotation_matrix(v: [f64; 3]) -> Mat3 {
    let theta2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let k = skew(v);
    let k2 = mat_mul(&k, &k);
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let t = theta2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / theta2)
    };
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// `dR/dv_i = (v_i [v]x + [v x ((I - R) e_i)]x) R / |v|^2`, which tends to
/// `[e_i]x` at the identity.
fn rotation_derivatives(v: [f64; 3], r: &Mat3) -> [Mat3; 3] {
    let theta2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let mut out = [[[0.0; 3]; 3]; 3];
    for (i, d) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        if theta2 < 1e-16 {
            *d = skew(e);
            continue;
        }
        let ime = [e[0] - r[0][i], e[1] - r[1][i], e[2] - r[2][i]];
        let c = [
            v[1] * ime[2] - v[2] * ime[1],
            v[2] * ime[0] - v[0] * ime[2],
            v[0] * ime[1] - v[1] * ime[0],
        ];
        let sv = skew(v);
        let sc = skew(c);
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = (v[i] * sv[a][b] + sc[a][b]) / theta2;
            }
        }
        *d = mat_mul(&m, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::bspline3;

    #[test]
    fn identity_and_translation() {
        let s = Shape::new(&[10, 10, 10]).unwrap();
        let p = SamplePoint::new3(1.0, 2.0, 3.0);
        for kind in [
            TransformKind::Translation,
            TransformKind::Rigid,
            TransformKind::BsplineFfd,
        ] {
            let t = Transform::identity(kind, &s).unwrap();
            t.validate(&s).unwrap();
            let q = t.apply(p);
            for a in 0..3 {
                assert!((q.0[a] - p.0[a]).abs() < 1e-15, "{kind:?}");
            }
        }
        let t = Transform::translation(&[1.5, 0.0, 0.0]);
        assert_eq!(t.apply(p), SamplePoint::new3(2.5, 2.0, 3.0));
        assert_eq!(t.inverse().unwrap().apply(t.apply(p)), p);
    }

    #[test]
    fn rotation_is_proper() {
        let r = rotation_matrix([0.3, -0.2, 0.5]);
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        assert!((det - 1.0).abs() < 1e-12);
        let rtr = mat_mul(
            &r,
            &[
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        );
        for i in 0..3 {
            for j in 0..3 {
                assert!((rtr[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    fn check_jacobian(t: &Transform, p: SamplePoint) {
        let mut jac = Vec::new();
        t.apply_with_jacobian(p, &mut jac);
        let mut dense = vec![[0.0; 3]; t.param_count()];
        for (k, d) in jac {
            for a in 0..3 {
                dense[k][a] += d[a];
            }
        }
        let h = 1e-6;
        for k in 0..t.param_count() {
            let mut pp = t.params.clone();
            pp[k] += h;
            let plus = t.with_params(&pp).unwrap().apply(p);
            pp[k] -= 2.0 * h;
            let minus = t.with_params(&pp).unwrap().apply(p);
            for a in 0..t.ndim {
                let fd = (plus.0[a] - minus.0[a]) / (2.0 * h);
                assert!(
                    (fd - dense[k][a]).abs() < 1e-7,
                    "{:?} param {k} axis {a}: {fd} vs {}",
                    t.kind,
                    dense[k][a]
                );
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let s3 = Shape::new(&[12, 10, 8]).unwrap();
        let s2 = Shape::new(&[12, 10]).unwrap();
        check_jacobian(
            &Transform::rigid(&s3, &[0.1, -0.2, 0.3, 1.0, 2.0, -1.0]),
            SamplePoint::new3(2.0, 7.0, 1.5),
        );
        check_jacobian(&Transform::rigid(&s3, &[0.0; 6]), SamplePoint::new3(2.0, 7.0, 1.5));
        check_jacobian(&Transform::rigid(&s2, &[0.4, 1.0, -2.0]), SamplePoint::new2(3.0, 8.5));
        let mut f = Transform::ffd(&s3, &[4, 5, 4]).unwrap();
        for (k, v) in f.params.iter_mut().enumerate() {
            *v = ((k * 37) % 11) as f64 * 0.05 - 0.25;
        }
        check_jacobian(&f, SamplePoint::new3(4.3, 2.2, 6.9));
        check_jacobian(&Transform::translation(&[0.5, -0.3]), SamplePoint::new2(1.0, 1.0));
    }

    #[test]
    fn single_control_point_displacement() {
        // direct tensor-product oracle
        let s = Shape::new(&[16, 16]).unwrap();
        let mut f = Transform::ffd(&s, &[5, 5]).unwrap();
        let g = f.ffd.unwrap();
        let (kx, ky) = (2usize, 1usize);
        let k = kx + g.control[0] * ky;
        let count = f.param_count() / 2;
        f.params[k] = 0.7;
        f.params[count + k] = -0.4;
        let p = SamplePoint::new2(6.3, 2.1);
        let w = bspline3(p.0[0] / g.spacing[0] + 1.0 - kx as f64) * bspline3(p.0[1] / g.spacing[1] + 1.0 - ky as f64);
        let q = f.apply(p);
        assert!((q.0[0] - p.0[0] - 0.7 * w).abs() < 1e-14);
        assert!((q.0[1] - p.0[1] + 0.4 * w).abs() < 1e-14);
        assert!(w > 0.0);
    }

    #[test]
    fn validate_catches_mismatch() {
        let s = Shape::new(&[8, 8]).unwrap();
        assert!(Transform::translation(&[0.0, 0.0, 0.0]).validate(&s).is_err());
        assert!(Transform::ffd(&s, &[3, 4]).is_err());
        let t = Transform::rigid(&s, &[0.0; 3]);
        assert!(t.with_params(&[0.0; 2]).is_err());
    }
}
