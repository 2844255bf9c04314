use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use lor::experiments::{
    run_asymmetry_sweep, run_bench, run_joint_density_report, run_scale_sweep, with_threads, CurvePoint,
    ExperimentConfig, JointRow, REFERENCE_JSD,
};
use lor::histogram::{write_joint_csv, Estimator};
use lor::io::{read_image, read_pgm, write_image, write_pgm};
use lor::objective::prepare;
use lor::registration::{register, RegistrationReport};
use lor::transform::{Transform, TransformKind};
use lor::ImageGrid;

use crate::config::{Common, RegisterConfig};
use crate::plot;
use crate::table::{num, Table};

fn est(e: Estimator) -> String {
    e.name().to_string()
}

fn experiment_table(kind: &str, cfg: &ExperimentConfig, columns: &[&str]) -> Table {
    Table::new(kind, columns)
        .comment("measure", cfg.measure.kind.name())
        .comment("config", cfg.header_json())
}

fn curves_table(kind: &str, cfg: &ExperimentConfig, curves: &[CurvePoint]) -> Table {
    let mut t = experiment_table(
        kind,
        cfg,
        &["estimator", "sigma", "beta", "alpha", "offset", "forward", "swapped"],
    );
    for c in curves {
        t.push(vec![
            est(c.estimator),
            num(c.sigma),
            num(c.beta),
            num(c.alpha),
            num(c.offset),
            num(c.forward),
            num(c.swapped),
        ]);
    }
    t
}

fn save_with_plot(t: &Table, path: PathBuf) -> Result<()> {
    t.write(&path)?;
    let figure = plot::emit(&path, None)?;
    println!("wrote {} and {}", path.display(), figure.display());
    Ok(())
}

pub fn gen(common: &Common) -> Result<()> {
    let (cfg, out) = common.resolve("asymmetry")?;
    let (a, b) = cfg.pair.generate(cfg.seed)?;
    for (name, img) in [("a", &a), ("b", &b)] {
        let p = out.join(format!("{name}.json"));
        write_image(&p, img)?;
        if img.ndim() == 2 {
            write_pgm(&out.join(format!("{name}.pgm")), img)?;
        }
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn load_image(path: &Path) -> Result<ImageGrid> {
    let img = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path)?,
        _ => read_image(path)?,
    };
    Ok(img)
}

pub fn register_images(
    moving: &Path,
    reference: &Path,
    config: Option<&Path>,
    out: &Path,
    threads: Option<usize>,
) -> Result<()> {
    let rc = RegisterConfig::load(config)?;
    let (mi, ri) = (load_image(moving)?, load_image(reference)?);
    if mi.dims() != ri.dims() {
        bail!("moving {:?} and reference {:?} differ in size", mi.dims(), ri.dims());
    }
    let sigma = rc.objective.density.scales.sigma;
    let (ci, cr) = (prepare(&mi, sigma)?, prepare(&ri, sigma)?);
    let shape = ci.shape();
    let mut init = match (rc.transform, &rc.control) {
        (TransformKind::BsplineFfd, Some(control)) => Transform::ffd(&shape, control)?,
        (kind, _) => Transform::identity(kind, &shape)?,
    };
    if let Some(p) = &rc.initial {
        init = init.with_params(p)?;
    }
    let reg = with_threads(threads, || register(&rc.objective, &ci, &cr, &init, &rc.optimizer))?;
    let report = RegistrationReport::new(&reg, &rc.objective, &rc.optimizer);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(
        File::create(out).with_context(|| format!("creating {}", out.display()))?,
        &report,
    )?;
    println!(
        "{} after {} iterations ({:?}); objective {:.6} -> {:.6}; parameters {:?}",
        rc.objective.measure.kind.name(),
        report.trace.iterations,
        report.trace.termination,
        report.trace.initial_objective,
        report.trace.final_objective,
        report.transform.params
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn asymmetry(common: &Common) -> Result<()> {
    let (cfg, out) = common.resolve("asymmetry")?;
    let report = with_threads(cfg.threads, || run_asymmetry_sweep(&cfg))?;
    let mut rows = experiment_table(
        "asymmetry",
        &cfg,
        &[
            "estimator",
            "sigma",
            "beta",
            "alpha",
            "optimum_forward",
            "optimum_swapped",
            "asymmetry",
        ],
    );
    for r in &report.rows {
        rows.push(vec![
            est(r.estimator),
            num(r.sigma),
            num(r.beta),
            num(r.alpha),
            num(r.optimum_forward),
            num(r.optimum_swapped),
            num(r.asymmetry),
        ]);
        println!(
            "{:>4} sigma {:<4} alpha {:<4} optimum {:+.4} vs {:+.4}  asymmetry {:+.4}",
            est(r.estimator),
            r.sigma,
            r.alpha,
            r.optimum_forward,
            r.optimum_swapped,
            r.asymmetry
        );
    }
    if cfg.estimators.contains(&Estimator::Gpv) {
        for &sigma in &cfg.sigmas {
            if let Ok(fit) = report.alpha_law(sigma) {
                println!(
                    "GPV sigma {sigma}: asymmetry ~ {:.4} alpha + {:.4} (R^2 {:.3})",
                    fit.slope, fit.intercept, fit.r_squared
                );
            }
        }
        for &alpha in &cfg.alphas {
            if let Ok(fit) = report.sigma_law(alpha) {
                println!("GPV alpha {alpha}: sigma slope {:.4}", fit.slope);
            }
        }
    }
    save_with_plot(&rows, out.join("asymmetry.csv"))?;
    save_with_plot(
        &curves_table("asymmetry_curves", &cfg, &report.curves),
        out.join("asymmetry_curves.csv"),
    )
}

pub fn scales(common: &Common) -> Result<()> {
    let (cfg, out) = common.resolve("scales")?;
    let report = with_threads(cfg.threads, || run_scale_sweep(&cfg))?;
    let mut rows = experiment_table(
        "scales",
        &cfg,
        &["estimator", "sigma", "beta", "alpha", "scale", "peak", "sharpness"],
    );
    for r in &report.rows {
        let scale = if r.estimator == Estimator::Gpv { r.alpha } else { r.beta };
        rows.push(vec![
            est(r.estimator),
            num(r.sigma),
            num(r.beta),
            num(r.alpha),
            num(scale),
            num(r.peak),
            num(r.sharpness),
        ]);
        println!(
            "{:>4} sigma {:<4} beta {:<8.5} alpha {:<4} peak {:.5} sharpness {:.5}",
            est(r.estimator),
            r.sigma,
            r.beta,
            r.alpha,
            r.peak,
            r.sharpness
        );
    }
    save_with_plot(&rows, out.join("scales.csv"))?;
    save_with_plot(
        &curves_table("scale_curves", &cfg, &report.curves),
        out.join("scale_curves.csv"),
    )
}

pub fn jointreport(common: &Common) -> Result<()> {
    let (cfg, out) = common.resolve("jointreport")?;
    let panels = with_threads(cfg.threads, || run_joint_density_report(&cfg))?;
    let mut rows = experiment_table("jointreport", &cfg, &["estimator", "sigma", "alpha", "jensen_shannon"]);
    for (sigma, jsd) in REFERENCE_JSD {
        rows = rows.comment(
            "reference",
            format!("sigma={sigma} alpha=0.2 jsd={jsd} (brain MRI; not reproduced)"),
        );
    }
    for p in &panels {
        let r = JointRow::from(p);
        rows.push(vec![
            est(r.estimator),
            num(r.sigma),
            num(r.alpha),
            num(r.jensen_shannon),
        ]);
        println!(
            "{:>4} sigma {:<4} alpha {:<5} JSD {:.6e}",
            est(r.estimator),
            r.sigma,
            r.alpha,
            r.jensen_shannon
        );
        let stem = format!("joint_{}_s{}_a{}", est(p.estimator).to_lowercase(), p.sigma, p.alpha);
        for (tag, h) in [("forward", &p.forward), ("swapped", &p.swapped)] {
            let path = out.join(format!("{stem}_{tag}.csv"));
            write_joint_csv(File::create(&path)?, h)?;
            plot::emit(&path, None)?;
        }
        let m = p.forward.count();
        let diff = p.difference();
        let mut t = Table {
            comments: vec![("kind".into(), "difference".into())],
            columns: (0..m).map(|j| format!("b{j}")).collect(),
            rows: Vec::new(),
        };
        t = t.comment("jensen_shannon", num(p.jensen_shannon));
        for i in 0..m {
            t.push(diff[i * m..(i + 1) * m].iter().map(|&v| num(v)).collect());
        }
        let path = out.join(format!("{stem}_difference.csv"));
        t.write(&path)?;
        plot::emit(&path, None)?;
    }
    save_with_plot(&rows, out.join("jointreport.csv"))
}

pub fn bench(common: &Common, samples: Option<usize>, bins: Option<usize>, evaluations: Option<usize>) -> Result<()> {
    let (mut cfg, out) = common.resolve("bench")?;
    if let Some(n) = samples {
        cfg.samples = n;
    }
    if let Some(m) = bins {
        cfg.bins = m;
        cfg.betas = vec![1.0 / m as f64];
    }
    if let Some(e) = evaluations {
        cfg.evaluations = e;
    }
    let report = run_bench(&cfg)?;
    let mut t = experiment_table(
        "bench",
        &cfg,
        &[
            "measure",
            "mean_seconds",
            "ratio_to_ssd",
            "theoretical_ratio",
            "overhead",
        ],
    )
    .comment("samples", report.samples.to_string())
    .comment("bins", report.bins.to_string())
    .comment("threads", report.threads.to_string())
    .comment("pw_memory_bytes", num(report.pw_memory_bytes))
    .comment("gpv_memory_bytes", num(report.gpv_memory_bytes));
    println!(
        "N = {}, M = {}, {} evaluations, {} threads",
        report.samples, report.bins, report.evaluations, report.threads
    );
    for r in &report.rows {
        t.push(vec![
            r.measure.name().into(),
            num(r.mean_seconds),
            num(r.ratio_to_ssd),
            num(r.theoretical_ratio),
            num(r.overhead),
        ]);
        println!(
            "{:>8}: {:.4} s/eval  ratio {:.3}  flop model {:.3}  overhead {:.3}",
            r.measure.name(),
            r.mean_seconds,
            r.ratio_to_ssd,
            r.theoretical_ratio,
            r.overhead
        );
    }
    println!(
        "memory: PW {:.1} MiB, GPV {:.1} MiB",
        report.pw_memory_bytes / 1048576.0,
        report.gpv_memory_bytes / 1048576.0
    );
    serde_json::to_writer_pretty(File::create(out.join("bench.json"))?, &report)?;
    save_with_plot(&t, out.join("bench.csv"))
}

pub fn plot_file(input: &Path, out: Option<&Path>) -> Result<()> {
    let path = plot::emit(input, out)?;
    println!("wrote {}", path.display());
    Ok(())
}
