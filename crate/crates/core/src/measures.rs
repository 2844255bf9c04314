//! Similarity measures over joint densities and their derivatives with
//! respect to the (unnormalized) joint histogram.
//!
//! Entropies are discrete Shannon entropies of bin masses `q = p Delta^2`
//! (natural logarithm), so a uniform density over `M` bins has entropy
//! `ln M` regardless of the bin width.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::histogram::{Bins, JointHistogram};
use crate::image::ImageGrid;

/// Floor applied inside logarithms when differentiating entropies.
pub const P_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Ssd,
    Lq,
    Hinge,
    Huber,
    Trunc,
    Mi,
    Nmi,
    Cc,
    Cr,
}

impl MeasureKind {
    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            MeasureKind::Ssd | MeasureKind::Lq | MeasureKind::Hinge | MeasureKind::Huber | MeasureKind::Trunc
        )
    }

    /// +1 for losses (minimized as is), -1 for similarities (maximized).
    pub fn sign(&self) -> f64 {
        if self.is_linear() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Ssd => "SSD",
            MeasureKind::Lq => "Lq",
            MeasureKind::Hinge => "hinge",
            MeasureKind::Huber => "Huber",
            MeasureKind::Trunc => "trunc",
            MeasureKind::Mi => "MI",
            MeasureKind::Nmi => "NMI",
            MeasureKind::Cc => "CC",
            MeasureKind::Cr => "CR",
        }
    }
}

fn default_q() -> f64 {
    2.0
}

fn default_k() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    /// Exponent of the `|i - j|` losses.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Knot of the hinge, Huber and truncated losses.
    #[serde(default = "default_k")]
    pub k_loss: f64,
}

impl MeasureSpec {
    pub fn new(kind: MeasureKind) -> Self {
        MeasureSpec {
            kind,
            q: default_q(),
            k_loss: default_k(),
        }
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k_loss = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(LorError::InvalidParameter(format!(
                "loss exponent q must be >= 0, got {}",
                self.q
            )));
        }
        if matches!(self.kind, MeasureKind::Hinge | MeasureKind::Huber | MeasureKind::Trunc) && !(self.k_loss > 0.0) {
            return Err(LorError::InvalidParameter(format!(
                "loss threshold must be > 0, got {}",
                self.k_loss
            )));
        }
        Ok(())
    }

    /// Position-independent loss `F(i, j)` of the linear measures.
    pub fn loss(&self, i: f64, j: f64) -> f64 {
        let d = (i - j).abs();
        let (q, k) = (self.q, self.k_loss);
        match self.kind {
            MeasureKind::Ssd => (i - j) * (i - j),
            MeasureKind::Lq => d.powf(q),
            MeasureKind::Hinge => {
                if d > k {
                    (d - k).powf(q)
                } else {
                    0.0
                }
            }
            MeasureKind::Huber => {
                if d < k {
                    d.powf(q)
                } else {
                    q * k.powf(q - 1.0) * d - (q - 1.0) * k.powf(q)
                }
            }
            MeasureKind::Trunc => {
                if d < k {
                    d.powf(q)
                } else {
                    k.powf(q)
                }
            }
            _ => f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    pub h_i: f64,
    pub h_r: f64,
    pub h_ir: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcMoments {
    pub mu_i: f64,
    pub mu_r: f64,
    pub sigma_i: f64,
    pub sigma_r: f64,
}

/// Both forms of the correlation ratio: one minus the weighted within-class
/// variance, and the weighted between-class variance, each over the total
/// variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrTerms {
    pub within_form: f64,
    pub between_form: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub kind: MeasureKind,
    /// In the usual orientation: losses small is good, MI/NMI/CC/CR large is
    /// good.
    pub value: f64,
    /// `value` times the kind's sign; always minimized.
    pub objective: f64,
    pub entropies: Option<Entropies>,
    pub moments: Option<CcMoments>,
    pub cr: Option<CrTerms>,
}

impl MeasureValue {
    fn plain(kind: MeasureKind, value: f64) -> Self {
        MeasureValue {
            kind,
            value,
            objective: kind.sign() * value,
            entropies: None,
            moments: None,
            cr: None,
        }
    }
}

/// `dM = sum d_joint(m, n) dh(m, n) Delta^2` for a perturbation `dh` of the
/// unnormalized joint histogram, including the normalization quotient rule.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramGradient {
    pub m: usize,
    pub d_joint: Vec<f64>,
}

/// Shannon entropy of a density `p` on cells of size `cell`, computed on the
/// masses `p * cell`.
pub fn entropy(p: &[f64], cell: f64) -> Result<f64> {
    let total: f64 = p.iter().sum::<f64>() * cell;
    if (total - 1.0).abs() > 1e-6 {
        return Err(LorError::NotNormalized { mass: total });
    }
    Ok(entropy_of_masses(p.iter().map(|v| v * cell)))
}

fn entropy_of_masses(q: impl Iterator<Item = f64>) -> f64 {
    -q.filter(|&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Bin masses and marginal masses of a normalized joint.
struct Masses {
    m: usize,
    q: Vec<f64>,
    qi: Vec<f64>,
    qj: Vec<f64>,
    centers: Vec<f64>,
}

impl Masses {
    fn new(h: &JointHistogram) -> Self {
        let m = h.count();
        let d = h.bins().width();
        let q: Vec<f64> = h.joint().iter().map(|v| v * d * d).collect();
        let mut qi = vec![0.0; m];
        let mut qj = vec![0.0; m];
        for a in 0..m {
            for b in 0..m {
                qi[a] += q[a * m + b];
                qj[b] += q[a * m + b];
            }
        }
        Masses {
            m,
            q,
            qi,
            qj,
            centers: h.bins().centers(),
        }
    }

    fn entropies(&self) -> Entropies {
        Entropies {
            h_i: entropy_of_masses(self.qi.iter().copied()),
            h_r: entropy_of_masses(self.qj.iter().copied()),
            h_ir: self.joint_entropy(),
        }
    }

    /// Summed in transposition-invariant order.
    fn joint_entropy(&self) -> f64 {
        let f = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
        let m = self.m;
        let mut total = 0.0;
        for a in 0..m {
            total += f(self.q[a * m + a]);
            for b in a + 1..m {
                total += f(self.q[a * m + b]) + f(self.q[b * m + a]);
            }
        }
        -total
    }

    fn moments(&self) -> [f64; 5] {
        // E[i], E[j], E[i^2], E[j^2], E[i j]
        let c = &self.centers;
        let mut e = [0.0; 5];
        for a in 0..self.m {
            for b in 0..self.m {
                let w = self.q[a * self.m + b];
                e[0] += c[a] * w;
                e[1] += c[b] * w;
                e[2] += c[a] * c[a] * w;
                e[3] += c[b] * c[b] * w;
                e[4] += c[a] * c[b] * w;
            }
        }
        e
    }

    /// Class sums `T_n = sum_m i_m q(m, n)` with reference bins as classes.
    fn class_sums(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.m];
        for a in 0..self.m {
            for b in 0..self.m {
                t[b] += self.centers[a] * self.q[a * self.m + b];
            }
        }
        t
    }
}

fn normalized(h: &JointHistogram) -> Result<JointHistogram> {
    if h.is_normalized() {
        Ok(h.clone())
    } else {
        h.normalize()
    }
}

/// Evaluates a measure on a joint histogram (normalizing a copy if needed).
/// CR here treats the reference bins as classes.
pub fn evaluate(spec: &MeasureSpec, h: &JointHistogram) -> Result<MeasureValue> {
    spec.validate()?;
    let h = normalized(h)?;
    let ms = Masses::new(&h);
    let m = ms.m;
    let c = &ms.centers;
    match spec.kind {
        k if k.is_linear() => {
            let mut v = 0.0;
            for a in 0..m {
                for b in 0..m {
                    v += spec.loss(c[a], c[b]) * ms.q[a * m + b];
                }
            }
            Ok(MeasureValue::plain(k, v))
        }
        MeasureKind::Mi | MeasureKind::Nmi => {
            let e = ms.entropies();
            let value = if spec.kind == MeasureKind::Mi {
                e.h_i + e.h_r - e.h_ir
            } else {
                if e.h_ir <= 0.0 {
                    return Err(LorError::DegenerateHistogram("joint entropy is zero".into()));
                }
                (e.h_i + e.h_r) / e.h_ir
            };
            let mut out = MeasureValue::plain(spec.kind, value);
            out.entropies = Some(e);
            Ok(out)
        }
        MeasureKind::Cc => {
            let e = ms.moments();
            let vi = e[2] - e[0] * e[0];
            let vr = e[3] - e[1] * e[1];
            if !(vi > 0.0 && vr > 0.0) {
                return Err(LorError::DegenerateHistogram("zero marginal variance".into()));
            }
            let cc = (e[4] - e[0] * e[1]) / (vi * vr).sqrt();
            let mut out = MeasureValue::plain(MeasureKind::Cc, cc);
            out.moments = Some(CcMoments {
                mu_i: e[0],
                mu_r: e[1],
                sigma_i: vi.sqrt(),
                sigma_r: vr.sqrt(),
            });
            Ok(out)
        }
        MeasureKind::Cr => {
            let e = ms.moments();
            let var = e[2] - e[0] * e[0];
            if !(var > 0.0) {
                return Err(LorError::DegenerateHistogram("zero variance".into()));
            }
            let t = ms.class_sums();
            let mut between = 0.0;
            let mut within = 0.0;
            for n in 0..m {
                if ms.qj[n] <= 0.0 {
                    continue;
                }
                let mu_n = t[n] / ms.qj[n];
                between += ms.qj[n] * (mu_n - e[0]) * (mu_n - e[0]);
                for a in 0..m {
                    within += (c[a] - mu_n) * (c[a] - mu_n) * ms.q[a * m + n];
                }
            }
            let mut out = MeasureValue::plain(MeasureKind::Cr, 1.0 - within / var);
            out.cr = Some(CrTerms {
                within_form: 1.0 - within / var,
                between_form: between / var,
            });
            Ok(out)
        }
        _ => unreachable!(),
    }
}

/// Correlation ratio of `target` explained by the hard segments of
/// `segments` (labels are rounded to integers), computed from per-segment
/// histograms of the target on `m` bins over its normalized intensities.
pub fn evaluate_cr(segments: &ImageGrid, target: &ImageGrid, m: usize) -> Result<MeasureValue> {
    if segments.dims() != target.dims() {
        return Err(LorError::InvalidImage("label and target grids differ".into()));
    }
    let bins = Bins::new(m)?;
    let mut hists: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut total = vec![0.0; m];
    for (&l, &v) in segments.values().iter().zip(target.values()) {
        let b = bins
            .hard_bin(target.unit_value(v))
            .ok_or_else(|| LorError::InvalidImage(format!("target value {v} outside its range")))?;
        hists.entry(l.round() as i64).or_insert_with(|| vec![0.0; m])[b] += 1.0;
        total[b] += 1.0;
    }
    let c = bins.centers();
    let n_all: f64 = total.iter().sum();
    let mean = |h: &[f64], n: f64| h.iter().zip(&c).map(|(w, i)| w * i).sum::<f64>() / n;
    let mu = mean(&total, n_all);
    let var = total.iter().zip(&c).map(|(w, i)| w * (i - mu) * (i - mu)).sum::<f64>() / n_all;
    if !(var > 1e-300) {
        return Err(LorError::DegenerateHistogram("target has zero variance".into()));
    }
    let mut within = 0.0;
    let mut between = 0.0;
    for h in hists.values() {
        let n_j: f64 = h.iter().sum();
        let mu_j = mean(h, n_j);
        let var_j = h.iter().zip(&c).map(|(w, i)| w * (i - mu_j) * (i - mu_j)).sum::<f64>() / n_j;
        within += n_j / n_all * var_j / var;
        between += n_j / n_all * (mu_j - mu) * (mu_j - mu) / var;
    }
    let mut out = MeasureValue::plain(MeasureKind::Cr, 1.0 - within);
    out.cr = Some(CrTerms {
        within_form: 1.0 - within,
        between_form: between,
    });
    Ok(out)
}

/// Derivative of the measure value (usual orientation) with respect to the
/// unnormalized joint histogram whose normalized form is `h`.
pub fn gradient_wrt_histogram(spec: &MeasureSpec, h: &JointHistogram) -> Result<HistogramGradient> {
    spec.validate()?;
    let h = normalized(h)?;
    let mass = h.mass();
    let ms = Masses::new(&h);
    let m = ms.m;
    let c = &ms.centers;
    let ln = |v: f64| v.max(P_MIN).ln();
    // g = d value / d q on bin masses
    let mut g = vec![0.0; m * m];
    match spec.kind {
        k if k.is_linear() => {
            for a in 0..m {
                for b in 0..m {
                    g[a * m + b] = spec.loss(c[a], c[b]);
                }
            }
        }
        MeasureKind::Mi | MeasureKind::Nmi => {
            let e = ms.entropies();
            let lqi: Vec<f64> = ms.qi.iter().map(|&v| ln(v)).collect();
            let lqj: Vec<f64> = ms.qj.iter().map(|&v| ln(v)).collect();
            if spec.kind == MeasureKind::Nmi && e.h_ir <= 0.0 {
                return Err(LorError::DegenerateHistogram("joint entropy is zero".into()));
            }
            for a in 0..m {
                for b in 0..m {
                    let d_hi = -(lqi[a] + 1.0);
                    let d_hr = -(lqj[b] + 1.0);
                    let d_hir = -(ln(ms.q[a * m + b]) + 1.0);
                    g[a * m + b] = if spec.kind == MeasureKind::Mi {
                        d_hi + d_hr - d_hir
                    } else {
                        (d_hi + d_hr) / e.h_ir - (e.h_i + e.h_r) * d_hir / (e.h_ir * e.h_ir)
                    };
                }
            }
        }
        MeasureKind::Cc => {
            let e = ms.moments();
            let vi = e[2] - e[0] * e[0];
            let vr = e[3] - e[1] * e[1];
            if !(vi > 0.0 && vr > 0.0) {
                return Err(LorError::DegenerateHistogram("zero marginal variance".into()));
            }
            let s = (vi * vr).sqrt();
            let cc = (e[4] - e[0] * e[1]) / s;
            for a in 0..m {
                for b in 0..m {
                    let dcov = c[a] * c[b] - c[a] * e[1] - e[0] * c[b];
                    let dvi = c[a] * c[a] - 2.0 * e[0] * c[a];
                    let dvr = c[b] * c[b] - 2.0 * e[1] * c[b];
                    g[a * m + b] = dcov / s - 0.5 * cc * (dvi / vi + dvr / vr);
                }
            }
        }
        MeasureKind::Cr => {
            let e = ms.moments();
            let var = e[2] - e[0] * e[0];
            if !(var > 0.0) {
                return Err(LorError::DegenerateHistogram("zero variance".into()));
            }
            let t = ms.class_sums();
            let between: f64 = (0..m)
                .filter(|&n| ms.qj[n] > 0.0)
                .map(|n| t[n] * t[n] / ms.qj[n])
                .sum::<f64>()
                - e[0] * e[0];
            let cr = between / var;
            for a in 0..m {
                for b in 0..m {
                    let d_class = if ms.qj[b] > P_MIN {
                        2.0 * t[b] * c[a] / ms.qj[b] - t[b] * t[b] / (ms.qj[b] * ms.qj[b])
                    } else {
                        c[a] * c[a]
                    };
                    let d_between = d_class - 2.0 * e[0] * c[a];
                    let d_var = c[a] * c[a] - 2.0 * e[0] * c[a];
                    g[a * m + b] = (d_between - cr * d_var) / var;
                }
            }
        }
        _ => unreachable!(),
    }
    let mean: f64 = g.iter().zip(&ms.q).map(|(a, b)| a * b).sum();
    let d_joint = g.into_iter().map(|v| (v - mean) / mass).collect();
    Ok(HistogramGradient { m, d_joint })
}

/// Jensen-Shannon divergence (natural log) between two normalized joints on
/// the same bins.
pub fn jensen_shannon(p: &JointHistogram, q: &JointHistogram) -> Result<f64> {
    if p.count() != q.count() {
        return Err(LorError::InvalidParameter("bin counts differ".into()));
    }
    let (p, q) = (normalized(p)?, normalized(q)?);
    let d = p.bins().width();
    let cell = d * d;
    let mut js = 0.0;
    for (&a, &b) in p.joint().iter().zip(q.joint()) {
        let (a, b) = (a * cell, b * cell);
        let mid = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / mid).ln();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / mid).ln();
        }
    }
    Ok(js.max(0.0))
}
