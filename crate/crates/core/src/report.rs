//! CSV tables and SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("figure `{0}` has no data")]
    EmptyFigure(String),
    #[error("figure `{0}` is not rectangular or its labels do not match")]
    Ragged(String),
    #[error("figure `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    /// Comma-separated, LF line endings, quoting only where needed.
    pub fn to_csv(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
    }
}

/// Fixed six-decimal rendering used in every table.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.6}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    /// Columns are bins along x; each row is one series.
    Histogram,
    /// Rows × columns of shaded cells.
    Heatmap,
    /// Rows are groups along x; each column is one bar inside a group.
    GroupedBars,
}

/// Figure-ready matrix: `values[row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureMatrix {
    pub id: String,
    pub title: String,
    pub kind: FigureKind,
    pub x_label: String,
    pub y_label: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Rows drawn with emphasis (weekend days in the wake heatmap).
    #[serde(default)]
    pub highlight_rows: Vec<usize>,
}

impl FigureMatrix {
    fn validate(&self) -> Result<(), ReportError> {
        if self.values.is_empty() || self.values.iter().all(|r| r.is_empty()) {
            return Err(ReportError::EmptyFigure(self.id.clone()));
        }
        let cols = self.col_labels.len();
        if self.row_labels.len() != self.values.len() || self.values.iter().any(|r| r.len() != cols) {
            return Err(ReportError::Ragged(self.id.clone()));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ReportError::NonFinite(self.id.clone()));
        }
        Ok(())
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Renders a standalone SVG. Output depends only on the inputs. `desc` is
/// embedded verbatim (escaped) in a `<desc>` element.
pub fn render_svg(fig: &FigureMatrix, desc: &str) -> Result<String, ReportError> {
    fig.validate()?;
    let rows = fig.values.len();
    let cols = fig.col_labels.len();
    let (left, top, right, bottom) = (90.0, 50.0, 130.0, 70.0);
    let (pw, ph) = match fig.kind {
        FigureKind::Heatmap => (cols as f64 * 28.0, rows as f64 * 28.0),
        _ => (720.0, 320.0),
    };
    let (w, h) = (left + pw + right, top + ph + bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>{}</title>", esc(&fig.title));
    let _ = writeln!(s, "<desc>{}</desc>", esc(desc));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        esc(&fig.title)
    );
    match fig.kind {
        FigureKind::Heatmap => heatmap(&mut s, fig, left, top),
        FigureKind::Histogram => bars(&mut s, fig, left, top, pw, ph, false),
        FigureKind::GroupedBars => bars(&mut s, fig, left, top, pw, ph, true),
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        top + ph + 50.0,
        esc(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        esc(&fig.y_label)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn heatmap(s: &mut String, fig: &FigureMatrix, left: f64, top: f64) {
    let max = fig.values.iter().flatten().fold(0f64, |a, &b| a.max(b));
    let cell = 28.0;
    for (r, row) in fig.values.iter().enumerate() {
        let y = top + r as f64 * cell;
        let weight = if fig.highlight_rows.contains(&r) { "bold" } else { "normal" };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-weight="{weight}">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            esc(&fig.row_labels[r])
        );
        for (c, &v) in row.iter().enumerate() {
            let shade = if max > 0.0 { v / max } else { 0.0 };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="#08306b" fill-opacity="{shade:.4}" stroke="#dddddd"><title>{} {}: {v:.6}</title></rect>"##,
                left + c as f64 * cell,
                y,
                esc(&fig.row_labels[r]),
                esc(&fig.col_labels[c])
            );
        }
    }
    for (c, label) in fig.col_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + c as f64 * cell + cell / 2.0,
            top + fig.values.len() as f64 * cell + 14.0,
            esc(label)
        );
    }
}

fn bars(s: &mut String, fig: &FigureMatrix, left: f64, top: f64, pw: f64, ph: f64, grouped: bool) {
    let max = fig.values.iter().flatten().fold(0f64, |a, &b| a.max(b));
    let scale = if max > 0.0 { ph / max } else { 0.0 };
    let (groups, per_group) = if grouped {
        (fig.values.len(), fig.col_labels.len())
    } else {
        (fig.col_labels.len(), fig.values.len())
    };
    let slot = pw / groups as f64;
    let bar_w = slot * 0.8 / per_group as f64;
    let _ = writeln!(
        s,
        r##"<line x1="{left:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>"##,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r##"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}" stroke="#000000"/>"##, top + ph);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{max:.3}</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#, left - 4.0, top + ph + 4.0);
    for g in 0..groups {
        let x0 = left + g as f64 * slot + slot * 0.1;
        let label = if grouped { &fig.row_labels[g] } else { &fig.col_labels[g] };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + g as f64 * slot + slot / 2.0,
            top + ph + 16.0,
            esc(label)
        );
        for k in 0..per_group {
            let v = if grouped { fig.values[g][k] } else { fig.values[k][g] };
            let bh = v * scale;
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{bar_w:.2}" height="{bh:.2}" fill="{}"><title>{}: {v:.6}</title></rect>"#,
                x0 + k as f64 * bar_w,
                top + ph - bh,
                PALETTE[k % PALETTE.len()],
                esc(label)
            );
        }
    }
    let series: &[String] = if grouped { &fig.col_labels } else { &fig.row_labels };
    if series.len() > 1 {
        for (k, name) in series.iter().enumerate() {
            let y = top + k as f64 * 16.0;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                left + pw + 12.0,
                PALETTE[k % PALETTE.len()],
                left + pw + 26.0,
                y + 9.0,
                esc(name)
            );
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| ReportError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    fs::write(path, bytes).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig(kind: FigureKind, rows: usize, cols: usize) -> FigureMatrix {
        FigureMatrix {
            id: "t".into(),
            title: "T".into(),
            kind,
            x_label: "x".into(),
            y_label: "y".into(),
            row_labels: (0..rows).map(|r| r.to_string()).collect(),
            col_labels: (0..cols).map(|c| c.to_string()).collect(),
            values: (0..rows).map(|r| (0..cols).map(|c| (r * cols + c) as f64).collect()).collect(),
            highlight_rows: vec![5, 6],
        }
    }

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let svg = render_svg(&fig(FigureKind::Heatmap, 7, 24), "cfg").unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 168);
        assert_eq!(svg, render_svg(&fig(FigureKind::Heatmap, 7, 24), "cfg").unwrap());
    }

    #[test]
    fn histogram_bar_heights_scale_with_value() {
        let mut f = fig(FigureKind::Histogram, 1, 24);
        f.values[0] = (0..24).map(|h| h as f64 / 276.0).collect();
        let svg = render_svg(&f, "").unwrap();
        let heights: Vec<f64> = svg
            .lines()
            .filter(|l| l.contains(r#"class="bar""#))
            .map(|l| {
                let i = l.find("height=\"").unwrap() + 8;
                l[i..i + l[i..].find('"').unwrap()].parse().unwrap()
            })
            .collect();
        assert_eq!(heights.len(), 24);
        for (h, v) in heights.iter().zip(&f.values[0]) {
            assert!((h - v * 320.0 / (23.0 / 276.0)).abs() < 0.01);
        }
    }

    #[test]
    fn empty_and_ragged_figures_are_rejected() {
        let mut f = fig(FigureKind::Heatmap, 0, 0);
        assert!(matches!(render_svg(&f, ""), Err(ReportError::EmptyFigure(_))));
        f = fig(FigureKind::GroupedBars, 2, 3);
        f.values[1].pop();
        assert!(matches!(render_svg(&f, ""), Err(ReportError::Ragged(_))));
    }

    #[test]
    fn desc_is_escaped() {
        let svg = render_svg(&fig(FigureKind::GroupedBars, 2, 2), "a<b & c").unwrap();
        assert!(svg.contains("<desc>a&lt;b &amp; c</desc>"));
    }

    #[test]
    fn csv_dialect() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "has,comma".into()]);
        t.push(vec!["say \"hi\"".into(), "".into()]);
        let out = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(out, "a,b\n1,\"has,comma\"\n\"say \"\"hi\"\"\",\n");
    }
}
