use proptest::prelude::*;

use lor::histogram::joint::EstimatorConfig;
use lor::histogram::{
    counting_histogram, merge_bin_pairs, pw_histogram, pw_joint, Estimator, JointHistogram, SamplePolicy,
};
use lor::kernels::smooth;
use lor::measures::{entropy, evaluate, MeasureKind, MeasureSpec};
use lor::objective::{objective, prepare, ObjectiveConfig};
use lor::optimize::OptimizerOptions;
use lor::registration::register;
use lor::synth::{gen_uniform_noise, SmoothField};
use lor::transform::{Transform, TransformKind};
use lor::{ImageGrid, KernelSpec, SamplePoint, ScaleTriple, Shape};

fn image(dims: &[usize], values: Vec<f64>) -> ImageGrid {
    ImageGrid::with_range(Shape::new(dims).unwrap(), values, (0.0, 1.0)).unwrap()
}

fn normalized(h: JointHistogram) -> JointHistogram {
    h.normalize().unwrap()
}

/// Field that vanishes outside `[lo, lo + 16)` on both axes of a 64 x 64
/// canvas.
fn boxed_field(seed: u64, lo: [usize; 2]) -> ImageGrid {
    let f = SmoothField::new(&[16, 16], 6, 3.0, seed).unwrap();
    ImageGrid::from_fn(&[64, 64], |p| {
        let (u, v) = (p.0[0] - lo[0] as f64, p.0[1] - lo[1] as f64);
        if (0.0..16.0).contains(&u) && (0.0..16.0).contains(&v) {
            let w = (std::f64::consts::PI * u / 16.0).sin().powi(2) * (std::f64::consts::PI * v / 16.0).sin().powi(2);
            w * f.eval(SamplePoint::new2(u, v))
        } else {
            0.0
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_spline_histogram_keeps_mass(values in prop::collection::vec(0.1f64..0.9, 32), m in 20usize..48) {
        let img = image(&[8, 4], values);
        let h = pw_histogram(&img, &KernelSpec::bspline(1.0 / m as f64).unwrap(), m).unwrap();
        let total: f64 = h.values().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
    }

    #[test]
    fn pw_joint_swap_is_transpose(seed in 0u64..1000, m in 4usize..40, sigma in prop::sample::select(vec![0.0, 0.5, 1.0, 2.0])) {
        let a = gen_uniform_noise(&[12, 9], seed).unwrap();
        let b = gen_uniform_noise(&[12, 9], seed + 7).unwrap();
        let (ca, cb) = (prepare(&a, sigma).unwrap(), prepare(&b, sigma).unwrap());
        let id = Transform::identity(TransformKind::Translation, &ca.shape()).unwrap();
        let cfg = EstimatorConfig::new(m, ScaleTriple::new(sigma, 1.0 / m as f64, f64::INFINITY).unwrap());
        let ab = pw_joint(&ca, &cb, &id, &cfg).unwrap();
        let ba = pw_joint(&cb, &ca, &id, &cfg).unwrap();
        let back = ba.transpose();
        prop_assert_eq!(ab.joint(), back.joint());
    }

    #[test]
    fn linear_measures_are_linear(s1 in 0u64..500, s2 in 0u64..500, t in 0.0f64..1.0, q in 1.0f64..3.0) {
        let m = 8;
        let h = |seed: u64| {
            let img = gen_uniform_noise(&[m, m], seed).unwrap();
            normalized(JointHistogram::from_values(m, img.values().to_vec(), Estimator::Pw).unwrap())
        };
        let (h1, h2) = (h(s1), h(s2 + 1000));
        let mix: Vec<f64> = h1.joint().iter().zip(h2.joint()).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let mix = JointHistogram::from_values(m, mix, Estimator::Pw).unwrap();
        for spec in [MeasureSpec::new(MeasureKind::Ssd), MeasureSpec::new(MeasureKind::Lq).with_q(q)] {
            let v = |h: &JointHistogram| evaluate(&spec, h).unwrap().value;
            prop_assert!((v(&mix) - (t * v(&h1) + (1.0 - t) * v(&h2))).abs() < 1e-12);
        }
    }

    #[test]
    fn wider_intensity_window_raises_entropy(values in prop::collection::vec(0.3f64..0.7, 32), b1 in 0.005f64..0.03, extra in 0.002f64..0.02) {
        let m = 64;
        let cell = 1.0 / m as f64;
        let img = image(&[8, 4], values);
        let hist = |beta: f64| {
            let h = pw_histogram(&img, &KernelSpec::parzen_gaussian(beta).unwrap(), m).unwrap().normalize().unwrap();
            entropy(h.values(), cell).unwrap()
        };
        prop_assert!(hist(b1 + extra) >= hist(b1) - 1e-12);
    }

    #[test]
    fn objective_is_translation_equivariant(
        seed in 0u64..200,
        dx in -4isize..=4,
        dy in -4isize..=4,
        t in prop::array::uniform2(-1.0f64..1.0),
        sigma in prop::sample::select(vec![0.0, 1.0]),
        kind in prop::sample::select(vec![MeasureKind::Nmi, MeasureKind::Ssd, MeasureKind::Cc]),
    ) {
        let lo = [24usize, 24];
        let moved = [(24 + dx) as usize, (24 + dy) as usize];
        let prep = |img: ImageGrid| prepare(&img, sigma).unwrap();
        let (a, b) = (prep(boxed_field(seed, lo)), prep(boxed_field(seed + 1, lo)));
        let (a2, b2) = (prep(boxed_field(seed, moved)), prep(boxed_field(seed + 1, moved)));
        let density = EstimatorConfig::new(16, ScaleTriple::new(sigma, 1.0 / 16.0, f64::INFINITY).unwrap())
            .with_sampling(SamplePolicy::Interior { margin: 2 });
        let cfg = ObjectiveConfig::new(MeasureSpec::new(kind), Estimator::Pw, density);
        let tr = Transform::translation(&t);
        let v1 = objective(&cfg, &a, &b, &tr).unwrap().value;
        let v2 = objective(&cfg, &a2, &b2, &tr).unwrap().value;
        prop_assert!((v1 - v2).abs() < 1e-9, "{} vs {}", v1, v2);
    }

    #[test]
    fn zero_ffd_is_identity(nx in 4usize..40, ny in 4usize..40, cx in 4usize..9, cy in 4usize..9, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let shape = Shape::new(&[nx, ny]).unwrap();
        let t = Transform::ffd(&shape, &[cx, cy]).unwrap();
        let p = SamplePoint::new2(u * (nx - 1) as f64, v * (ny - 1) as f64);
        prop_assert_eq!(t.apply(p), p);
    }

    #[test]
    fn gaussian_semigroup(s1 in 1.0f64..2.5, s2 in 1.0f64..2.5, seed in 0u64..100) {
        let img = gen_uniform_noise(&[48, 48], seed).unwrap();
        let twice = smooth(&smooth(&img, s1).unwrap(), s2).unwrap();
        let once = smooth(&img, s1.hypot(s2)).unwrap();
        let shape = img.shape();
        let worst = img
            .voxel_points()
            .zip(twice.values().iter().zip(once.values()))
            .filter(|(p, _)| shape.contains(p, 14.0))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(worst < 2e-3, "{}", worst);
    }

    #[test]
    fn merged_bins_equal_coarse_counts(seed in 0u64..1000, m in 2usize..64) {
        let img = gen_uniform_noise(&[17, 13], seed).unwrap();
        let fine = counting_histogram(&img, 2 * m).unwrap();
        let coarse = counting_histogram(&img, m).unwrap();
        let merged = merge_bin_pairs(&fine).unwrap();
        prop_assert_eq!(merged.values(), coarse.values());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn accepted_steps_never_increase_objective(seed in 0u64..100, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let f = SmoothField::new(&[32, 32], 10, 4.0, seed).unwrap();
        let a = prepare(&f.render(&[0.0, 0.0]).unwrap(), 1.0).unwrap();
        let b = prepare(&f.render(&[0.8, -0.5]).unwrap(), 1.0).unwrap();
        let density = EstimatorConfig::new(24, ScaleTriple::new(1.0, 1.0 / 24.0, f64::INFINITY).unwrap())
            .with_sampling(SamplePolicy::Interior { margin: 4 });
        let cfg = ObjectiveConfig::new(MeasureSpec::new(MeasureKind::Nmi), Estimator::Pw, density);
        let reg = register(&cfg, &a, &b, &Transform::translation(&[x, y]), &OptimizerOptions::default()).unwrap();
        for w in reg.trace.records.windows(2) {
            prop_assert!(w[1].value <= w[0].value, "{} -> {}", w[0].value, w[1].value);
        }
    }
}
