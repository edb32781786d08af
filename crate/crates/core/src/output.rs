//! CSV and SVG emission.

use std::path::Path;

use plotters::prelude::*;

use crate::harness::MetricsRecord;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "symbol_index",
    "mse",
    "ber",
    "updated",
    "gamma",
    "v_hat",
    "a_hat",
    "channel_mse",
    "users",
];

/// Writes one header row and one row per record. Floats use the shortest
/// representation that reads back bit-exactly.
pub fn write_csv<W: std::io::Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::io("<writer>", e))?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| Error::io("<writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn emit_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), records).map_err(|e| match e {
        Error::Io { reason, .. } => Error::io(path, reason),
        other => other,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::io(path, e))).collect()
}

/// One labelled curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    MseVsSymbols,
    MseVsSnr,
    BerVsSymbols,
    BerVsSnr,
    BerVsUsers,
    BoundTrace,
}

impl PlotKind {
    /// `(title, x label, y label, log y)`.
    pub fn layout(&self) -> (&'static str, &'static str, &'static str, bool) {
        match self {
            PlotKind::MseVsSymbols => ("MSE", "symbols", "MSE", true),
            PlotKind::MseVsSnr => ("Steady-state excess MSE", "Eb/N0 (dB)", "excess MSE", true),
            PlotKind::BerVsSymbols => ("BER", "symbols", "BER", true),
            PlotKind::BerVsSnr => ("BER", "Eb/N0 (dB)", "BER", true),
            PlotKind::BerVsUsers => ("BER", "users", "BER", true),
            PlotKind::BoundTrace => ("Bound", "symbols", "gamma", false),
        }
    }
}

/// Line plot with a legend. On log axes non-positive values are dropped;
/// if none are positive (e.g. an error-free BER curve) the axis is linear.
pub fn emit_plot(path: &Path, kind: PlotKind, series: &[Series]) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::domain(format!("empty series for `{}`", path.display())));
    }
    let (title, x_label, y_label, log_y) = kind.layout();
    let log_y = log_y && series.iter().flat_map(|s| s.points.iter()).any(|p| p.1.is_finite() && p.1 > 0.0);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let keep = |y: f64| y.is_finite() && (!log_y || y > 0.0);
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && keep(p.1));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::domain(format!("nothing to plot in `{}`", path.display())));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = if log_y { y0 * 10.0 } else { y0 + 1.0 };
    }
    let plot_err = |e: &dyn std::fmt::Display| Error::io(path, e);
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let colors = [&BLUE, &RED, &GREEN, &MAGENTA, &BLACK, &CYAN];

    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(x_label)
                .y_desc(y_label)
                .draw()
                .map_err(|e| plot_err(&e))?;
            for (k, s) in series.iter().enumerate() {
                let color = colors[k % colors.len()];
                chart
                    .draw_series(LineSeries::new(s.points.iter().copied().filter(|p| keep(p.1)), color))
                    .map_err(|e| plot_err(&e))?
                    .label(s.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| plot_err(&e))?;
        }};
    }

    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 22)).margin(12).x_label_area_size(40).y_label_area_size(70);
    if log_y {
        draw!(builder
            .build_cartesian_2d(x0..x1, (y0 * 0.8..y1 * 1.25).log_scale())
            .map_err(|e| plot_err(&e))?);
    } else {
        let pad = 0.05 * (y1 - y0);
        draw!(builder
            .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
            .map_err(|e| plot_err(&e))?);
    }
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
