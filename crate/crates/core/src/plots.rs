//! SVG loss curves and real-versus-generated overlays.
//!
//! Output depends only on the input numbers, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;

use crate::atomic::write_string;
use crate::error::{CoreError, Result};
use crate::trace::{load_csv, MissingPolicy};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
/// Longer series are thinned to this many points per polyline.
const MAX_POINTS: usize = 2000;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let step = points.len().div_ceil(MAX_POINTS);
    points.into_iter().step_by(step).collect()
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for &(px, py) in series.iter().flat_map(|s| &s.points) {
        x = (x.0.min(px), x.1.max(px));
        y = (y.0.min(py), y.1.max(py));
    }
    let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    (widen(x), widen(y))
}

fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ((x0, x1), (y0, y1)) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 4.0, y + 4.0, tick(v));
    }
    for (v, x) in [(x0, left), (x1, right)] {
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, bottom + 16.0, tick(v));
    }
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            pts.join(" "),
            ser.color
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, right - 90.0, right - 70.0, ser.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, right - 65.0, ly + 4.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Discriminator and generator loss per epoch.
pub fn loss_curve_svg(title: &str, rows: &[(f64, f64, f64)]) -> String {
    let d = rows.iter().map(|&(e, d, _)| (e, d)).collect();
    let g = rows.iter().map(|&(e, _, g)| (e, g)).collect();
    render(
        title,
        "epoch",
        "loss",
        &[
            Series { label: "discriminator", color: "#1f77b4", points: thin(d) },
            Series { label: "generator", color: "#d62728", points: thin(g) },
        ],
    )
}

pub fn overlay_svg(title: &str, real: &[f64], generated: &[f64]) -> String {
    let pts = |x: &[f64]| thin(x.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect());
    render(
        title,
        "sample",
        "power (W)",
        &[
            Series { label: "real", color: "#444444", points: pts(real) },
            Series { label: "generated", color: "#ff7f0e", points: pts(generated) },
        ],
    )
}

/// Parses an `epoch,d_loss,g_loss` file; `None` when it has no rows.
pub fn read_loss_csv(path: &Path) -> Result<Option<Vec<(f64, f64, f64)>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c).and_then(|s| s.trim().parse().ok()).ok_or(CoreError::Parse {
                row: i + 2,
                column: c + 1,
                message: "expected a number".into(),
            })
        };
        rows.push((num(0)?, num(1)?, num(2)?));
    }
    Ok((!rows.is_empty()).then_some(rows))
}

fn first_column(path: &Path) -> Result<Vec<f64>> {
    let set = load_csv(path, MissingPolicy::DropTrailing)?;
    set.traces()
        .first()
        .map(|t| t.samples().to_vec())
        .ok_or_else(|| CoreError::NoData(format!("{} has no columns", path.display())))
}

/// Writes `loss_<name>.svg` for every `losses_<name>.csv` in `dir` and
/// `overlay.svg` from `real.csv` and `generated.csv`. Missing or empty
/// inputs are skipped with a warning. Returns the written files, sorted.
pub fn plot_device_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut loss_files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("losses_") && n.ends_with(".csv"))
        })
        .collect();
    loss_files.sort();
    if loss_files.is_empty() {
        warn!("{}: no loss CSVs, skipping loss curves", dir.display());
    }
    for csv_path in loss_files {
        let name = csv_path.file_stem().and_then(|n| n.to_str()).unwrap_or_default();
        let model = name.trim_start_matches("losses_");
        match read_loss_csv(&csv_path)? {
            Some(rows) => {
                let out = dir.join(format!("loss_{model}.svg"));
                write_string(&out, &loss_curve_svg(&format!("{model} losses"), &rows))?;
                written.push(out);
            }
            None => warn!("{}: empty loss CSV, skipped", csv_path.display()),
        }
    }
    let (real, generated) = (dir.join("real.csv"), dir.join("generated.csv"));
    if real.is_file() && generated.is_file() {
        let out = dir.join("overlay.svg");
        let title = dir.file_name().and_then(|n| n.to_str()).unwrap_or("device");
        write_string(&out, &overlay_svg(&format!("{title}: real vs generated"), &first_column(&real)?, &first_column(&generated)?))?;
        written.push(out);
    } else {
        warn!("{}: real.csv or generated.csv missing, overlay skipped", dir.display());
    }
    written.sort();
    Ok(written)
}

/// Plots every device directory under `<run>/devices`.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let devices = run_dir.join("devices");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&devices)
        .map_err(|e| CoreError::io(&devices, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        out.extend(plot_device_dir(&d)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_svg_has_two_polylines_and_is_stable() {
        let rows: Vec<(f64, f64, f64)> = (0..1500).map(|e| (e as f64, 0.7 - e as f64 * 1e-4, 0.69)).collect();
        let a = loss_curve_svg("m", &rows);
        assert_eq!(a.matches("<polyline").count(), 3);
        assert_eq!(a, loss_curve_svg("m", &rows));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn device_dir_skips_empty_inputs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("losses_a.csv"), "epoch,d_loss,g_loss\n").unwrap();
        std::fs::write(dir.path().join("losses_b.csv"), "epoch,d_loss,g_loss\n0,0.5,0.6\n1,0.4,0.7\n").unwrap();
        let out = plot_device_dir(dir.path()).unwrap();
        assert_eq!(out, vec![dir.path().join("loss_b.svg")]);
        std::fs::write(dir.path().join("real.csv"), "d\n1\n2\n").unwrap();
        std::fs::write(dir.path().join("generated.csv"), "d\n2\n1\n").unwrap();
        assert_eq!(plot_device_dir(dir.path()).unwrap().len(), 2);
    }
}
