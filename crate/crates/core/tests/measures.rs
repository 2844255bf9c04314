use lor::histogram::{Estimator, JointHistogram};
use lor::measures::{entropy, evaluate, evaluate_cr, gradient_wrt_histogram, jensen_shannon, MeasureKind, MeasureSpec};
use lor::ImageGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_joint(m: usize, seed: u64) -> JointHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..m * m).map(|_| rng.gen_range(0.05..1.0)).collect();
    JointHistogram::from_values(m, v, Estimator::Pw).unwrap()
}

fn shannon(masses: &[f64]) -> f64 {
    -masses.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}

#[test]
fn entropy_of_known_distributions() {
    let m = 8;
    let cell = 1.0 / m as f64;
    let uniform = vec![1.0; m];
    assert!((entropy(&uniform, cell).unwrap() - (m as f64).ln()).abs() < 1e-12);
    let mut spike = vec![0.0; m];
    spike[3] = m as f64;
    assert_eq!(entropy(&spike, cell).unwrap(), 0.0);
    let p = [0.5, 1.5, 2.0, 0.0, 1.0, 1.0, 1.5, 0.5];
    let q: Vec<f64> = p.iter().map(|v| v * cell).collect();
    assert!((entropy(&p, cell).unwrap() - shannon(&q)).abs() < 1e-12);
    assert!(entropy(&[1.0; 4], 0.5).is_err());
}

#[test]
fn information_measures_match_direct_sums() {
    let m = 8;
    let h = random_joint(m, 1).normalize().unwrap();
    let total: f64 = h.joint().iter().sum();
    let q: Vec<f64> = h.joint().iter().map(|v| v / total).collect();
    let qi: Vec<f64> = (0..m).map(|i| (0..m).map(|j| q[i * m + j]).sum()).collect();
    let qj: Vec<f64> = (0..m).map(|j| (0..m).map(|i| q[i * m + j]).sum()).collect();
    let (hi, hj, hij) = (shannon(&qi), shannon(&qj), shannon(&q));
    let mi = evaluate(&MeasureSpec::new(MeasureKind::Mi), &h).unwrap().value;
    let nmi = evaluate(&MeasureSpec::new(MeasureKind::Nmi), &h).unwrap().value;
    assert!((mi - (hi + hj - hij)).abs() < 1e-12);
    assert!((nmi - (hi + hj) / hij).abs() < 1e-12);
    let mut direct = 0.0;
    for i in 0..m {
        for j in 0..m {
            direct += q[i * m + j] * (q[i * m + j] / (qi[i] * qj[j])).ln();
        }
    }
    assert!((mi - direct).abs() < 1e-12);
}

#[test]
fn ssd_is_expected_squared_difference() {
    let m = 8;
    let h = random_joint(m, 2).normalize().unwrap();
    let total: f64 = h.joint().iter().sum();
    let c = |n: usize| (n as f64 + 0.5) / m as f64;
    let mut expect = 0.0;
    for i in 0..m {
        for j in 0..m {
            expect += (c(i) - c(j)).powi(2) * h.get(i, j) / total;
        }
    }
    assert!((evaluate(&MeasureSpec::new(MeasureKind::Ssd), &h).unwrap().value - expect).abs() < 1e-12);
}

#[test]
fn histogram_gradients_are_scale_invariant() {
    let m = 8;
    let h = random_joint(m, 3);
    let d2 = (1.0 / m as f64).powi(2);
    for kind in [
        MeasureKind::Mi,
        MeasureKind::Nmi,
        MeasureKind::Cc,
        MeasureKind::Cr,
        MeasureKind::Ssd,
    ] {
        let g = gradient_wrt_histogram(&MeasureSpec::new(kind), &h).unwrap();
        let along: f64 = g.d_joint.iter().zip(h.joint()).map(|(d, v)| d * v * d2).sum();
        assert!(along.abs() < 1e-12, "{kind:?}: {along}");
    }
}

#[test]
fn histogram_gradients_match_differences() {
    let m = 8;
    let h = random_joint(m, 4);
    let d2 = (1.0 / m as f64).powi(2);
    let eps = 1e-6;
    for spec in [
        MeasureSpec::new(MeasureKind::Mi),
        MeasureSpec::new(MeasureKind::Nmi),
        MeasureSpec::new(MeasureKind::Cc),
        MeasureSpec::new(MeasureKind::Cr),
        MeasureSpec::new(MeasureKind::Lq).with_q(1.5),
        MeasureSpec::new(MeasureKind::Huber).with_k(0.2),
    ] {
        let g = gradient_wrt_histogram(&spec, &h).unwrap();
        for k in [0, 9, 27, 63] {
            let bump = |s: f64| {
                let mut v = h.joint().to_vec();
                v[k] += s;
                evaluate(&spec, &JointHistogram::from_values(m, v, Estimator::Pw).unwrap())
                    .unwrap()
                    .value
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let analytic = g.d_joint[k] * d2;
            assert!(
                (fd - analytic).abs() < 1e-7 * (1.0 + fd.abs()),
                "{:?} bin {k}: {analytic} vs {fd}",
                spec.kind
            );
        }
    }
}

#[test]
fn correlation_ratio_from_labels_matches_joint() {
    let (nx, ny, m) = (20, 15, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<f64> = (0..nx * ny).map(|i| ((i % nx) / 5) as f64).collect();
    let target: Vec<f64> = labels
        .iter()
        .map(|l| (0.15 + 0.2 * l + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0))
        .collect();
    let seg = ImageGrid::new(&[nx, ny], labels.clone()).unwrap();
    let img = ImageGrid::with_range(seg.shape(), target.clone(), (0.0, 1.0)).unwrap();
    let v = evaluate_cr(&seg, &img, m).unwrap();
    let cr = v.cr.unwrap();
    assert!((cr.within_form - cr.between_form).abs() < 1e-12);
    // same quantity on a joint whose columns are the label classes
    let mut joint = vec![0.0; m * m];
    let q = |t: f64| ((t * m as f64) as usize).min(m - 1);
    for (l, t) in labels.iter().zip(&target) {
        joint[q(*t) * m + *l as usize] += 1.0;
    }
    let h = JointHistogram::from_values(m, joint, Estimator::Pw).unwrap();
    let via_joint = evaluate(&MeasureSpec::new(MeasureKind::Cr), &h).unwrap().value;
    assert!((v.value - via_joint).abs() < 1e-12, "{} vs {via_joint}", v.value);
    // direct sums over the quantized voxels
    let c = |t: f64| (q(t) as f64 + 0.5) / m as f64;
    let n = target.len() as f64;
    let mu = target.iter().map(|&t| c(t)).sum::<f64>() / n;
    let var = target.iter().map(|&t| (c(t) - mu).powi(2)).sum::<f64>() / n;
    let mut within = 0.0;
    for class in 0..4 {
        let xs: Vec<f64> = labels
            .iter()
            .zip(&target)
            .filter(|(l, _)| **l as usize == class)
            .map(|(_, &t)| c(t))
            .collect();
        let mj = xs.iter().sum::<f64>() / xs.len() as f64;
        within += xs.iter().map(|x| (x - mj).powi(2)).sum::<f64>() / n;
    }
    assert!((v.value - (1.0 - within / var)).abs() < 1e-12);
}

#[test]
fn jensen_shannon_is_symmetric_and_bounded() {
    let (p, q) = (random_joint(8, 5), random_joint(8, 6));
    let a = jensen_shannon(&p, &q).unwrap();
    let b = jensen_shannon(&q, &p).unwrap();
    assert!((a - b).abs() < 1e-15);
    assert!(a > 0.0 && a <= 2f64.ln());
    assert!(jensen_shannon(&p, &p).unwrap().abs() < 1e-15);
}
