//! SVG line plots drawn from sweep tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Mean ω against φ, one line per parameter combination.
    OmegaPhi,
    /// Mean real and estimated AUC against φ.
    AucPhi,
    /// Mean ω⁽¹⁾ against f1, with the diagonal y = x.
    Omega1F1,
}

impl FigureKind {
    pub const ALL: [FigureKind; 3] = [FigureKind::OmegaPhi, FigureKind::AucPhi, FigureKind::Omega1F1];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::OmegaPhi => "omega-phi",
            FigureKind::AucPhi => "auc-phi",
            FigureKind::Omega1F1 => "omega1-f1",
        }
    }

    fn x_column(self) -> &'static str {
        match self {
            FigureKind::Omega1F1 => "f1",
            _ => "phi",
        }
    }

    fn y_columns(self) -> &'static [&'static str] {
        match self {
            FigureKind::OmegaPhi => &["omega"],
            FigureKind::AucPhi => &["auc_real", "auc_est"],
            FigureKind::Omega1F1 => &["omega1"],
        }
    }
}

impl std::str::FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownFigure(s.to_string()))
    }
}

/// Columns that tell grid points apart, used for series labels.
const KEY_COLUMNS: [&str; 6] = ["phi", "G", "k", "f1", "b", "similarity"];

/// One plotted line: label and `(x, mean y)` points sorted by x.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads a sweep table and averages the instance rows of each series at
/// each x. Aggregate rows are ignored and recomputed.
pub fn load_series(csv: &str, kind: FigureKind) -> Result<Vec<Series>> {
    let mut lines = csv
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Csv("empty table".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Csv(format!("missing column `{name}`")))
    };
    let xi = find(kind.x_column())?;
    let inst = find("instance")?;
    let yis: Vec<usize> = kind.y_columns().iter().map(|c| find(c)).collect::<Result<_>>()?;
    let keys: Vec<(usize, &str)> = KEY_COLUMNS
        .iter()
        .filter(|c| **c != kind.x_column())
        .filter_map(|c| cols.iter().position(|h| h == c).map(|i| (i, *c)))
        .collect();

    // label -> x bits -> (sum, n)
    let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    let mut rows = 0usize;
    for (lineno, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < cols.len() {
            return Err(Error::Csv(format!("line {}: too few fields", lineno + 1)));
        }
        if f[inst].parse::<u64>().is_err() || f[xi].is_empty() {
            continue;
        }
        rows += 1;
        let x: f64 = f[xi]
            .parse()
            .map_err(|_| Error::Csv(format!("line {}: bad `{}` value", lineno + 1, kind.x_column())))?;
        let key: Vec<String> = keys
            .iter()
            .filter(|(i, _)| !f[*i].is_empty())
            .map(|(i, name)| match *name {
                "similarity" => f[*i].to_string(),
                _ => format!("{name}={}", f[*i]),
            })
            .collect();
        let key = key.join(" ");
        for (yi, yname) in yis.iter().zip(kind.y_columns()) {
            let Ok(y) = f[*yi].parse::<f64>() else {
                continue;
            };
            let label = if yis.len() > 1 {
                format!("{yname} {key}")
            } else {
                key.clone()
            };
            let e = acc
                .entry(label)
                .or_default()
                .entry(x.to_bits())
                .or_insert((x, 0.0, 0));
            e.1 += y;
            e.2 += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Csv(format!(
            "table has no run rows with a `{}` value",
            kind.x_column()
        )));
    }
    Ok(acc
        .into_iter()
        .map(|(label, pts)| {
            let mut points: Vec<(f64, f64)> =
                pts.into_values().map(|(x, s, n)| (x, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect())
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// Draws `series` into an SVG document.
pub fn render_svg(series: &[Series], kind: FigureKind) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let y_label = match kind {
            FigureKind::OmegaPhi => "omega",
            FigureKind::AucPhi => "AUC",
            FigureKind::Omega1F1 => "omega1",
        };
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..1.0, 0.0..1.0)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(kind.x_column())
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;

        if kind == FigureKind::Omega1F1 {
            chart
                .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.mix(0.5)))
                .map_err(plot_err)?
                .label("y = x")
                .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLACK.mix(0.5)));
        }
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
            chart
                .draw_series(PointSeries::of_element(
                    s.points.iter().copied(),
                    3,
                    color.filled(),
                    &|c, size, style| EmptyElement::at(c) + Circle::new((0, 0), size, style),
                ))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Reads the table at `csv_path` and writes `<out_dir>/<kind>.svg`.
pub fn render_plots(csv_path: &Path, kind: FigureKind, out_dir: &Path) -> Result<PathBuf> {
    let csv = fs::read_to_string(csv_path).map_err(|source| Error::Io {
        path: csv_path.to_path_buf(),
        source,
    })?;
    let series = load_series(&csv, kind)?;
    let svg = render_svg(&series, kind)?;
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let out = out_dir.join(format!("{}.svg", kind.as_str()));
    fs::write(&out, svg).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    Ok(out)
}
