//! SVG figures.

use std::path::Path;

use plotters::coord::Shift;
use plotters::prelude::*;

use super::HarnessError;

const SIZE: (u32, u32) = (900, 520);

fn err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn bounds<'a>(series: impl Iterator<Item = &'a (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in series.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x = (x.0.min(*a), x.1.max(*a));
        y = (y.0.min(*b), y.1.max(*b));
    }
    let fix = |r: (f64, f64)| {
        if !r.0.is_finite() {
            (0.0, 1.0)
        } else if r.1 <= r.0 {
            (r.0 - 0.5, r.1 + 0.5)
        } else {
            r
        }
    };
    (fix(x), fix(y))
}

fn draw_lines(
    area: &DrawingArea<SVGBackend, Shift>,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    series: &[(&str, Vec<(f64, f64)>)],
    path: &Path,
) -> Result<(), HarnessError> {
    let ((x0, x1), (y0, y1)) = bounds(series.iter().flat_map(|s| s.1.iter()));
    let y0 = y0.min(0.0);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1 * 1.05)
        .map_err(err(path))?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(err(path))?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()), color.stroke_width(2)))
            .map_err(err(path))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(err(path))?;
    }
    Ok(())
}

/// One line per named series.
pub fn lines(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[(&str, Vec<(f64, f64)>)]) -> Result<(), HarnessError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err(path))?;
    draw_lines(&root, title, x_desc, y_desc, series, path)?;
    root.present().map_err(err(path))
}

/// Workload on top, scaleout below, sharing the time axis.
pub fn workload_overlay(path: &Path, workload: &[(f64, f64)], scaleout: &[(f64, f64)]) -> Result<(), HarnessError> {
    let root = SVGBackend::new(path, (SIZE.0, SIZE.1 + 200)).into_drawing_area();
    root.fill(&WHITE).map_err(err(path))?;
    let (top, bottom) = root.split_vertically(SIZE.1 / 2 + 100);
    draw_lines(&top, "offered workload", "time (s)", "msg/s", &[("workload", workload.to_vec())], path)?;
    draw_lines(&bottom, "scaleout", "time (s)", "workers", &[("scaleout", scaleout.to_vec())], path)?;
    root.present().map_err(err(path))
}

/// Measured recovery per failure with the target as a horizontal line.
/// Failures that never recovered (`NaN`) are drawn as hatched full-height bars.
pub fn recovery_bars(path: &Path, bars: &[(String, f64)], target: f64) -> Result<(), HarnessError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err(path))?;
    let top = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(2.0 * target, f64::max) * 1.1;
    let n = bars.len().max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption("recovery time per failure", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..n as f64, 0.0..top)
        .map_err(err(path))?;
    let labels: Vec<String> = bars.iter().map(|b| b.0.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| labels.get(x.floor() as usize).cloned().unwrap_or_default())
        .x_desc("failure injected at (s)")
        .y_desc("recovery (s)")
        .draw()
        .map_err(err(path))?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, (_, v))| {
            let (h, style) = if v.is_finite() { (*v, BLUE.mix(0.6).filled()) } else { (top, RED.mix(0.3).filled()) };
            Rectangle::new([(i as f64 + 0.15, 0.0), (i as f64 + 0.85, h)], style)
        }))
        .map_err(err(path))?;
    chart.draw_series(LineSeries::new(vec![(0.0, target), (n as f64, target)], BLACK.stroke_width(2))).map_err(err(path))?;
    root.present().map_err(err(path))
}
