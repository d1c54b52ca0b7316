//! Run outputs: CSV tables, the JSON manifest and SVG plots.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Bumped whenever a CSV column or manifest field changes meaning.
pub const SCHEMA_VERSION: &str = "1.0";

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes `rows` with a header taken from the struct field names.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Collects output files and metadata, then writes `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    dir: PathBuf,
}

impl Manifest {
    pub fn new(dir: &Path, subcommand: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Manifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            config: serde_json::to_value(config).map_err(io_err)?,
            outputs: Vec::new(),
            metadata: BTreeMap::new(),
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let p = self.path(name);
        write_csv(&p, rows)
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.metadata
            .insert(key.to_string(), serde_json::to_value(value).map_err(io_err)?);
        Ok(())
    }

    /// Writes the resolved configuration next to the outputs.
    pub fn snapshot(&mut self, resolved_toml: &str) -> Result<()> {
        let p = self.path("resolved.toml");
        std::fs::write(p, resolved_toml)?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let s = serde_json::to_string_pretty(&self).map_err(io_err)?;
        std::fs::write(self.dir.join("manifest.json"), s + "\n")?;
        Ok(())
    }
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series], log_y: bool) -> (f64, f64, f64, f64) {
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let pts: Vec<(f64, f64)> = pts.filter(|p| !log_y || p.1 > 0.0).cloned().collect();
    if pts.is_empty() {
        return (0.0, 1.0, if log_y { 1e-3 } else { 0.0 }, 1.0);
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + if log_y { y0 } else { 1.0 };
    }
    (x0, x1, y0, y1)
}

/// Line plot of one or more series.
pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> Result<()> {
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(io_err)?;
    let (x0, x1, y0, y1) = bounds(series, log_y);
    let palette = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(x_label)
                .y_desc(y_label)
                .draw()
                .map_err(io_err)?;
            for (i, s) in series.iter().enumerate() {
                let col = *palette[i % palette.len()];
                let pts: Vec<(f64, f64)> = s
                    .points
                    .iter()
                    .filter(|p| p.0.is_finite() && p.1.is_finite() && (!log_y || p.1 > 0.0))
                    .cloned()
                    .collect();
                chart
                    .draw_series(LineSeries::new(pts, col))
                    .map_err(io_err)?
                    .label(s.name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], col));
            }
            if series.len() > 1 {
                chart
                    .configure_series_labels()
                    .border_style(BLACK)
                    .background_style(WHITE.mix(0.8))
                    .draw()
                    .map_err(io_err)?;
            }
        }};
    }
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60);
    if log_y {
        draw!(builder
            .build_cartesian_2d(x0..x1, (y0..y1 * 1.05).log_scale())
            .map_err(io_err)?);
    } else {
        let pad = 0.05 * (y1 - y0);
        draw!(builder
            .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
            .map_err(io_err)?);
    }
    root.present().map_err(io_err)?;
    Ok(())
}

/// Arrows drawn as segments from `start` to `start + delta`, with a dot at the tip.
pub fn quiver(path: &Path, title: &str, arrows: &[((f64, f64), (f64, f64))]) -> Result<()> {
    let lim = arrows
        .iter()
        .map(|((x, y), (dx, dy))| (x.abs() + dx.abs()).max(y.abs() + dy.abs()))
        .fold(1e-12f64, f64::max)
        * 1.05;
    let root = SVGBackend::new(path, (520, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(io_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(-lim..lim, -lim..lim)
        .map_err(io_err)?;
    chart.configure_mesh().x_desc("x").y_desc("y").draw().map_err(io_err)?;
    chart
        .draw_series(
            arrows
                .iter()
                .map(|&((x, y), (dx, dy))| PathElement::new(vec![(x, y), (x + dx, y + dy)], BLUE)),
        )
        .map_err(io_err)?;
    chart
        .draw_series(
            arrows
                .iter()
                .map(|&((x, y), (dx, dy))| Circle::new((x + dx, y + dy), 2, RED.filled())),
        )
        .map_err(io_err)?;
    root.present().map_err(io_err)?;
    Ok(())
}

/// Heat map of `values[i][j]` at `(xs[j], ys[i])`, blue-white-red around zero.
pub fn heatmap(path: &Path, title: &str, xs: &[f64], ys: &[f64], values: &[Vec<f64>]) -> Result<()> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::invalid("grid", "heat map needs at least a 2x2 grid"));
    }
    let root = SVGBackend::new(path, (560, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(io_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(xs[0]..xs[xs.len() - 1], ys[0]..ys[ys.len() - 1])
        .map_err(io_err)?;
    chart.configure_mesh().disable_mesh().draw().map_err(io_err)?;
    let vmax = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let dx = (xs[1] - xs[0]) / 2.0;
    let dy = (ys[1] - ys[0]) / 2.0;
    let cells = ys.iter().enumerate().flat_map(|(i, &y)| {
        xs.iter().enumerate().map(move |(j, &x)| {
            let v = values[i][j] / vmax;
            let col = if v >= 0.0 {
                RGBColor(255, (255.0 * (1.0 - v)) as u8, (255.0 * (1.0 - v)) as u8)
            } else {
                RGBColor((255.0 * (1.0 + v)) as u8, (255.0 * (1.0 + v)) as u8, 255)
            };
            Rectangle::new([(x - dx, y - dy), (x + dx, y + dy)], col.filled())
        })
    });
    chart.draw_series(cells).map_err(io_err)?;
    root.present().map_err(io_err)?;
    Ok(())
}
