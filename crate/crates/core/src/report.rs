//! Plain-text and CSV rendering of result tables.
//!
//! Tables print numbers with 4 significant digits. CSV prints the shortest
//! representation that round-trips, which is also what JSON output uses, so
//! CSV and JSON from the same run carry identical values.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
    Empty,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

/// Formats `v` with four significant digits, never using exponents.
pub fn sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new digit (9.9996 -> 10.000).
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded != 0.0 && (rounded.abs().log10().floor() as i32) > mag && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

impl Cell {
    fn table(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(v) => sig4(*v),
            Cell::Empty => "-".into(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn is_numeric(&self) -> bool {
        matches!(self, Cell::Int(_) | Cell::Real(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub title: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Section {
    pub fn new(title: Option<&str>, headers: &[&str]) -> Self {
        Section {
            title: title.map(str::to_string),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.headers.len());
        self.rows.push(cells);
        self
    }

    fn render_table(&self, out: &mut String) {
        if let Some(t) = &self.title {
            let _ = writeln!(out, "{t}");
        }
        let rendered: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::table).collect()).collect();
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                rendered
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain(std::iter::once(self.headers[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let numeric: Vec<bool> = (0..self.headers.len())
            .map(|c| !self.rows.is_empty() && self.rows.iter().all(|r| r[c].is_numeric() || r[c] == Cell::Empty))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if numeric[c] {
                        format!("{s:>w$}", w = widths[c])
                    } else {
                        format!("{s:<w$}", w = widths[c])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(&self.headers));
        let _ = writeln!(
            out,
            "{}",
            widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")
        );
        for r in &rendered {
            let _ = writeln!(out, "{}", line(r));
        }
    }

    fn render_csv(&self, out: &mut Vec<u8>) {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
}

/// Renders sections as aligned text separated by blank lines.
pub fn render_table(sections: &[Section]) -> String {
    let mut out = String::new();
    for (i, s) in sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        s.render_table(&mut out);
    }
    out
}

/// Renders sections as CSV blocks separated by blank lines.
pub fn render_csv(sections: &[Section]) -> String {
    let mut out = Vec::new();
    for (i, s) in sections.iter().enumerate() {
        if i > 0 {
            out.push(b'\n');
        }
        s.render_csv(&mut out);
    }
    String::from_utf8(out).expect("utf-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(32.590759), "32.59");
        assert_eq!(sig4(148514.85), "148515");
        assert_eq!(sig4(0.0012346), "0.001235");
        assert_eq!(sig4(-2.5), "-2.500");
        assert_eq!(sig4(9.99996), "10.00");
        assert_eq!(sig4(1.0), "1.000");
    }

    #[test]
    fn table_and_csv() {
        let mut s = Section::new(Some("costs"), &["gpu", "usd"]);
        s.row(vec!["H100".into(), 17.857142857142858.into()]);
        s.row(vec!["A40".into(), Cell::Empty]);
        let t = render_table(std::slice::from_ref(&s));
        assert_eq!(t, "costs\ngpu     usd\n----  -----\nH100  17.86\nA40       -\n");
        let c = render_csv(&[s]);
        assert_eq!(c, "gpu,usd\nH100,17.857142857142858\nA40,\n");
    }
}
