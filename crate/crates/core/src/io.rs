//! CSV datasets and embeddings, and SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Which column holds labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
    pub label: Option<LabelColumn>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            header: true,
            label: None,
        }
    }
}

/// Categorical labels as dense ids into a category table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub ids: Vec<usize>,
    pub categories: Vec<String>,
}

impl Labels {
    /// Dense ids for raw label strings. Categories are sorted numerically
    /// when every value parses as a number, lexically otherwise.
    pub fn from_raw(raw: &[String]) -> Self {
        let mut categories: Vec<String> = raw.to_vec();
        categories.sort();
        categories.dedup();
        let numeric: Option<Vec<f64>> = categories
            .iter()
            .map(|c| c.trim().parse::<f64>().ok())
            .collect();
        if let Some(values) = numeric {
            let mut paired: Vec<(f64, String)> = values.into_iter().zip(categories).collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            categories = paired.into_iter().map(|(_, c)| c).collect();
        }
        let index: BTreeMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let ids = raw.iter().map(|r| index[r.as_str()]).collect();
        Labels { ids, categories }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn category_of(&self, row: usize) -> &str {
        &self.categories[self.ids[row]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: DenseMatrix,
    pub labels: Option<Labels>,
    pub feature_names: Option<Vec<String>>,
}

/// I/O error whose message names the file.
pub fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a numeric table, optionally splitting off a label column.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| with_path(e, path))?;
    parse_csv(&text, path, opts)
}

/// `load_csv` on in-memory bytes; `path` is only used in error messages.
pub fn parse_csv(bytes: &[u8], path: &Path, opts: &CsvOptions) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((line, rec));
    }

    let mut rows = records.into_iter();
    let header = if opts.header {
        match rows.next() {
            Some((_, h)) => Some(h.iter().map(str::to_string).collect::<Vec<_>>()),
            None => return Err(parse_err(path, 0, "empty file")),
        }
    } else {
        None
    };
    let rows: Vec<_> = rows.collect();
    let Some((first_line, first)) = rows.first() else {
        return Err(parse_err(path, 0, "no data rows"));
    };
    let width = header.as_ref().map_or(first.len(), Vec::len);
    if header.is_some() && first.len() != width {
        return Err(parse_err(
            path,
            *first_line,
            format!("expected {width} fields, found {}", first.len()),
        ));
    }

    let label_idx = match &opts.label {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::Parameter(format!(
                "label column {i} out of range for {width} columns"
            )))
        }
        Some(LabelColumn::Name(name)) => {
            let h = header
                .as_ref()
                .ok_or_else(|| Error::Parameter("label column by name requires a header".into()))?;
            Some(
                h.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Parameter(format!("no column named '{name}'")))?,
            )
        }
    };

    let cols = width - usize::from(label_idx.is_some());
    if cols == 0 {
        return Err(parse_err(path, *first_line, "no numeric columns"));
    }
    let mut data = Vec::with_capacity(rows.len() * cols);
    let mut raw_labels = Vec::new();
    for (line, rec) in &rows {
        if rec.len() != width {
            return Err(parse_err(
                path,
                *line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        path,
                        *line,
                        format!("column {}: non-numeric value '{cell}'", c + 1),
                    )
                })?;
            data.push(v);
        }
    }

    let x = DenseMatrix::from_vec(rows.len(), cols, data)?;
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, n)| n)
            .collect()
    });
    Ok(LabeledDataset {
        x,
        labels: label_idx.map(|_| Labels::from_raw(&raw_labels)),
        feature_names,
    })
}

/// Shortest scientific form with 17 significant digits; parses back to the
/// same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `z1..zq[,label]` with a header row.
pub fn save_embedding(
    path: impl AsRef<Path>,
    z: &DenseMatrix,
    labels: Option<&Labels>,
) -> Result<()> {
    let path = path.as_ref();
    let text = embedding_csv(z, labels)?;
    fs::write(path, text).map_err(|e| with_path(e, path))?;
    Ok(())
}

pub fn embedding_csv(z: &DenseMatrix, labels: Option<&Labels>) -> Result<String> {
    if let Some(l) = labels {
        if l.len() != z.rows() {
            return Err(Error::Contract(format!(
                "{} labels for {} rows",
                l.len(),
                z.rows()
            )));
        }
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = (1..=z.cols()).map(|j| format!("z{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(io)?;
    for i in 0..z.rows() {
        let mut rec: Vec<String> = z.row(i).iter().map(|&v| format_f64(v)).collect();
        if let Some(l) = labels {
            rec.push(l.category_of(i).to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads an embedding written by [`save_embedding`].
pub fn load_embedding(path: impl AsRef<Path>) -> Result<(DenseMatrix, Option<Labels>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    let has_label = text
        .lines()
        .next()
        .is_some_and(|h| h.split(',').any(|c| c.trim() == "label"));
    let opts = CsvOptions {
        label: has_label.then(|| LabelColumn::Name("label".into())),
        ..CsvOptions::default()
    };
    let ds = parse_csv(text.as_bytes(), path, &opts)?;
    Ok((ds.x, ds.labels))
}

/// Canvas layout for [`render_svg_scatter`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub radius: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            width: 800.0,
            height: 800.0,
            margin: 40.0,
            radius: 2.0,
        }
    }
}

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

/// Pixel positions for each row of `z`: the bounding box is scaled uniformly
/// to fit inside the margins and centered; y points up.
pub fn svg_positions(z: &DenseMatrix, opts: &SvgOptions) -> Result<Vec<(f64, f64)>> {
    if z.cols() != 2 {
        return Err(Error::Parameter(format!(
            "scatter plot needs 2 columns, got {}",
            z.cols()
        )));
    }
    if z.rows() == 0 {
        return Ok(Vec::new());
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..z.rows() {
        for d in 0..2 {
            lo[d] = lo[d].min(z[(i, d)]);
            hi[d] = hi[d].max(z[(i, d)]);
        }
    }
    let span = [hi[0] - lo[0], hi[1] - lo[1]];
    let avail = [
        opts.width - 2.0 * opts.margin,
        opts.height - 2.0 * opts.margin,
    ];
    let scale = [0, 1]
        .iter()
        .filter(|&&d| span[d] > 0.0)
        .map(|&d| avail[d] / span[d])
        .fold(f64::INFINITY, f64::min);
    let scale = if scale.is_finite() { scale } else { 0.0 };
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    Ok((0..z.rows())
        .map(|i| {
            (
                opts.width / 2.0 + (z[(i, 0)] - mid[0]) * scale,
                opts.height / 2.0 - (z[(i, 1)] - mid[1]) * scale,
            )
        })
        .collect())
}

/// SVG 1.1 document with one circle per point and a legend when labelled.
pub fn svg_scatter(z: &DenseMatrix, labels: Option<&Labels>, opts: &SvgOptions) -> Result<String> {
    let pos = svg_positions(z, opts)?;
    if let Some(l) = labels {
        if l.len() != z.rows() {
            return Err(Error::Contract(format!(
                "{} labels for {} rows",
                l.len(),
                z.rows()
            )));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g class="points">"#);
    for (i, (x, y)) in pos.iter().enumerate() {
        let color = labels.map_or(PALETTE[0], |l| PALETTE[l.ids[i] % PALETTE.len()]);
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.3}" cy="{y:.3}" r="{}" fill="{color}"/>"#,
            opts.radius
        );
    }
    let _ = writeln!(s, "</g>");
    if let Some(l) = labels {
        let _ = writeln!(
            s,
            r#"<g class="legend" font-family="sans-serif" font-size="11">"#
        );
        for (k, cat) in l.categories.iter().enumerate() {
            let y = 12.0 + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<circle class="legend-mark" cx="10" cy="{y}" r="4" fill="{}"/><text x="18" y="{}">{}</text>"#,
                PALETTE[k % PALETTE.len()],
                y + 4.0,
                escape_xml(cat)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn render_svg_scatter(
    path: impl AsRef<Path>,
    z: &DenseMatrix,
    labels: Option<&Labels>,
    opts: &SvgOptions,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, svg_scatter(z, labels, opts)?).map_err(|e| with_path(e, path))?;
    Ok(())
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// `dir/name`, creating `dir` if needed.
pub fn artifact_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| with_path(e, dir))?;
    Ok(dir.join(name))
}
