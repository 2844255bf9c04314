//! SVG line plots and PNG heatmaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{ImageBuffer, Rgb};

use crate::table::Table;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let pts = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter())
                .filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 * y0.abs().max(1.0) {
            let d = 0.5 * y0.abs().max(1e-3);
            y0 -= d;
            y1 += d;
        }
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let dash = if series.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            // non-finite values break the line
            let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &(x, y) in &series.points {
                if x.is_finite() && y.is_finite() {
                    runs.last_mut().unwrap().push((sx(x), sy(y)));
                } else if !runs.last().unwrap().is_empty() {
                    runs.push(Vec::new());
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let path: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                    path.join(" ")
                );
                for (x, y) in run {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.2" fill="{color}"/>"#);
                }
            }
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 14.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 22.0,
                lx + 28.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    if t == 0.0 {
        return "0".into();
    }
    if t.abs() >= 1e4 || t.abs() < 1e-3 {
        return format!("{t:.1e}");
    }
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Square matrix rendered as a heatmap, row 0 at the bottom. Diverging maps
/// are symmetric about zero.
pub fn heatmap(m: usize, values: &[f64], diverging: bool, path: &Path) -> Result<()> {
    if values.len() != m * m || m == 0 {
        bail!("heatmap needs {m}x{m} values, got {}", values.len());
    }
    let scale = (512 / m).max(1) as u32;
    let hi = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let img = ImageBuffer::from_fn(m as u32 * scale, m as u32 * scale, |x, y| {
        let j = (x / scale) as usize;
        let i = m - 1 - (y / scale) as usize;
        let v = values[i * m + j] / hi;
        if diverging {
            diverging_color(v)
        } else {
            sequential_color(v.max(0.0).sqrt())
        }
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> Rgb<u8> {
    let c = |k: usize| ((a[k] * (1.0 - t) + b[k] * t) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([c(0), c(1), c(2)])
}

fn sequential_color(t: f64) -> Rgb<u8> {
    // dark blue -> teal -> yellow
    let stops = [[0.05, 0.03, 0.25], [0.13, 0.57, 0.55], [0.99, 0.91, 0.14]];
    let t = t.clamp(0.0, 1.0);
    if t < 0.5 {
        lerp(stops[0], stops[1], 2.0 * t)
    } else {
        lerp(stops[1], stops[2], 2.0 * t - 1.0)
    }
}

fn diverging_color(v: f64) -> Rgb<u8> {
    let white = [1.0, 1.0, 1.0];
    if v < 0.0 {
        lerp(white, [0.13, 0.35, 0.75], (-v).min(1.0))
    } else {
        lerp(white, [0.8, 0.1, 0.1], v.min(1.0))
    }
}

/// Groups rows by the given label columns, keeping first-seen order.
fn grouped(t: &Table, keys: &[&str], x: &str, y: &str) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let xs = t.numbers(x)?;
    let ys = t.numbers(y)?;
    let cols: Vec<Vec<String>> = keys.iter().map(|k| t.text(k)).collect::<Result<_>>()?;
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in 0..xs.len() {
        let label: Vec<String> = keys.iter().zip(&cols).map(|(k, c)| format!("{k}={}", c[r])).collect();
        let label = label.join(" ");
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push((xs[r], ys[r]));
    }
    Ok(order
        .into_iter()
        .map(|l| {
            let mut p = groups.remove(&l).unwrap_or_default();
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            (l, p)
        })
        .collect())
}

fn solid(groups: Vec<(String, Vec<(f64, f64)>)>) -> Vec<Series> {
    groups
        .into_iter()
        .map(|(label, points)| Series {
            label,
            points,
            dashed: false,
        })
        .collect()
}

/// Renders a table written by one of the experiments, choosing the plot by
/// its `kind` comment. Returns the written file.
pub fn emit(input: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    if text.starts_with("# estimator,") {
        let dump = lor::histogram::read_joint_csv(text.as_bytes())?;
        let path = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| input.with_extension("png"));
        heatmap(dump.m, &dump.values, false, &path)?;
        return Ok(path);
    }
    let t = Table::read(input)?;
    let kind = t
        .kind()
        .with_context(|| format!("{} has no '# kind' header", input.display()))?;
    let svg_path = || {
        out.map(Path::to_path_buf)
            .unwrap_or_else(|| input.with_extension("svg"))
    };
    let plot = match kind {
        "asymmetry" => LinePlot {
            title: "Optimum offset asymmetry".into(),
            x_label: "alpha".into(),
            y_label: "optimum(M(A o phi, B)) - optimum(M(B, A o phi))".into(),
            series: solid(grouped(&t, &["estimator", "sigma"], "alpha", "asymmetry")?),
        },
        "asymmetry_curves" | "scale_curves" => {
            let mut series = Vec::new();
            let keys = ["estimator", "sigma", "beta", "alpha"];
            for (label, pts) in grouped(&t, &keys, "offset", "forward")? {
                series.push(Series {
                    label: short(&label),
                    points: pts,
                    dashed: false,
                });
            }
            if kind == "asymmetry_curves" {
                for (label, pts) in grouped(&t, &keys, "offset", "swapped")? {
                    series.push(Series {
                        label: format!("{} swapped", short(&label)),
                        points: pts,
                        dashed: true,
                    });
                }
            }
            LinePlot {
                title: format!("{} along the sweep", t.field("measure").unwrap_or("measure")),
                x_label: "offset (voxels)".into(),
                y_label: t.field("measure").unwrap_or("value").into(),
                series,
            }
        }
        "scales" => LinePlot {
            title: "Peak value per scale".into(),
            x_label: "beta (PW) / alpha (GPV)".into(),
            y_label: "value at offset 0".into(),
            series: solid(grouped(&t, &["estimator", "sigma"], "scale", "peak")?),
        },
        "jointreport" => LinePlot {
            title: "Jensen-Shannon divergence between argument orders".into(),
            x_label: "alpha".into(),
            y_label: "JSD".into(),
            series: solid(grouped(&t, &["estimator", "sigma"], "alpha", "jensen_shannon")?),
        },
        "bench" => LinePlot {
            title: "Time per evaluation relative to SSD".into(),
            x_label: "measure index".into(),
            y_label: "ratio".into(),
            series: vec![
                Series {
                    label: "measured".into(),
                    points: t
                        .numbers("ratio_to_ssd")?
                        .into_iter()
                        .enumerate()
                        .map(|(k, v)| (k as f64, v))
                        .collect(),
                    dashed: false,
                },
                Series {
                    label: "flop model".into(),
                    points: t
                        .numbers("theoretical_ratio")?
                        .into_iter()
                        .enumerate()
                        .map(|(k, v)| (k as f64, v))
                        .collect(),
                    dashed: true,
                },
            ],
        },
        "difference" => {
            let m = t.rows.len();
            let values: Vec<f64> = t
                .rows
                .iter()
                .flat_map(|r| r.iter().map(|v| v.trim().parse::<f64>()))
                .collect::<std::result::Result<_, _>>()
                .context("difference table holds a non-number")?;
            let path = out
                .map(Path::to_path_buf)
                .unwrap_or_else(|| input.with_extension("png"));
            heatmap(m, &values, true, &path)?;
            return Ok(path);
        }
        other => bail!("no plot for table kind {other:?}"),
    };
    let path = svg_path();
    std::fs::write(&path, plot.to_svg()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Drops the infinite scale from curve labels.
fn short(label: &str) -> String {
    label
        .split(' ')
        .filter(|p| !p.ends_with("=inf"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_positions() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = ticks(-1.5, 1.5);
        assert!(t.contains(&0.0) && t.len() >= 4);
    }

    #[test]
    fn svg_breaks_on_nan() {
        let p = LinePlot {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 1.0), (4.0, 0.0)],
                dashed: true,
            }],
        };
        let svg = p.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg, p.to_svg());
    }

    #[test]
    fn heatmap_colors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.png");
        heatmap(2, &[1.0, 0.0, 0.0, -1.0], true, &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.width(), 512);
        // row 0 is drawn at the bottom
        assert_eq!(*img.get_pixel(0, 511), Rgb([204, 26, 26]));
        assert_eq!(*img.get_pixel(511, 0), Rgb([33, 89, 191]));
        assert_eq!(*img.get_pixel(511, 511), Rgb([255, 255, 255]));
        assert!(heatmap(3, &[0.0; 4], false, &p).is_err());
    }
}
