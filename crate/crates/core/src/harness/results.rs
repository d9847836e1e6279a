use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed leading and trailing CSV columns; test columns sit between them.
const HEAD: [&str; 5] = ["block", "rho", "psi", "dim", "train_acc"];
const TAIL: [&str; 2] = ["seed_count", "augment_k"];

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    fn cell(&self) -> String {
        format!("{:.6}±{:.6}", self.mean, self.std)
    }

    fn parse(s: &str) -> Option<Self> {
        let (m, sd) = s.split_once('±')?;
        Some(Self {
            mean: m.trim().parse().ok()?,
            std: sd.trim().parse().ok()?,
        })
    }

    /// Two-decimal display, e.g. `1.00 ± 0.00`.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub block: String,
    pub rho: String,
    pub psi: String,
    pub dim: usize,
    pub train_acc: Stat,
    pub tests: Vec<(String, Stat)>,
    pub seed_count: usize,
    pub augment_k: usize,
}

impl ResultsRow {
    pub fn test(&self, name: &str) -> Option<Stat> {
        self.tests.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

fn test_columns(rows: &[ResultsRow]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        for (n, _) in &r.tests {
            if !cols.contains(n) {
                cols.push(n.clone());
            }
        }
    }
    cols
}

pub fn write_results_csv(rows: &[ResultsRow]) -> Result<String> {
    let cols = test_columns(rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = HEAD
        .iter()
        .copied()
        .chain(cols.iter().map(String::as_str))
        .chain(TAIL)
        .collect();
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![
            r.block.clone(),
            r.rho.clone(),
            r.psi.clone(),
            r.dim.to_string(),
            r.train_acc.cell(),
        ];
        rec.extend(cols.iter().map(|c| r.test(c).map(|s| s.cell()).unwrap_or_default()));
        rec.push(r.seed_count.to_string());
        rec.push(r.augment_k.to_string());
        w.write_record(&rec).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("results.csv", e.to_string())
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultsRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    for (i, h) in HEAD.iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(h) {
            return Err(Error::parse("results.csv header", format!("column {i} must be {h:?}")));
        }
    }
    let nt = header
        .len()
        .checked_sub(HEAD.len() + TAIL.len())
        .ok_or_else(|| Error::parse("results.csv header", "missing seed_count/augment_k columns"))?;
    for (i, t) in TAIL.iter().enumerate() {
        if header[HEAD.len() + nt + i] != *t {
            return Err(Error::parse(
                "results.csv header",
                format!("expected {t:?} after the test columns"),
            ));
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let loc = |col: &str| format!("results.csv row {} column {col}", line + 1);
        let stat = |i: usize| -> Result<Stat> {
            Stat::parse(&rec[i])
                .ok_or_else(|| Error::parse(loc(&header[i]), format!("expected mean±std, got {:?}", &rec[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(loc(&header[i]), format!("expected an integer, got {:?}", &rec[i])))
        };
        let mut tests = Vec::new();
        for c in 0..nt {
            let i = HEAD.len() + c;
            if !rec[i].is_empty() {
                tests.push((header[i].clone(), stat(i)?));
            }
        }
        rows.push(ResultsRow {
            block: rec[0].to_string(),
            rho: rec[1].to_string(),
            psi: rec[2].to_string(),
            dim: int(3)?,
            train_acc: stat(4)?,
            tests,
            seed_count: int(HEAD.len() + nt)?,
            augment_k: int(HEAD.len() + nt + 1)?,
        });
    }
    Ok(rows)
}

/// Fixed-width table with `mean ± std` cells.
pub fn render_table(rows: &[ResultsRow]) -> String {
    let cols = test_columns(rows);
    let mut header = vec![
        "block".to_string(),
        "rho".into(),
        "psi".into(),
        "dim".into(),
        "k".into(),
        "train".into(),
    ];
    header.extend(cols.iter().cloned());
    let mut body: Vec<Vec<String>> = Vec::new();
    for r in rows {
        let mut line = vec![
            r.block.clone(),
            r.rho.clone(),
            r.psi.clone(),
            r.dim.to_string(),
            r.augment_k.to_string(),
            r.train_acc.display(),
        ];
        line.extend(
            cols.iter()
                .map(|c| r.test(c).map(|s| s.display()).unwrap_or_else(|| "-".into())),
        );
        body.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|l| l[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in std::iter::once(&header).chain(&body) {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = w))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub augment_k: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub block: String,
    pub rho: String,
    pub psi: String,
    pub dim: usize,
    pub column: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ResultsRow>,
    /// Test accuracy against augmentation size, one series per
    /// architecture and test column.
    pub series: Vec<Series>,
}

pub fn build_report(rows: &[ResultsRow]) -> Report {
    let mut groups: BTreeMap<(String, String, String, usize, String), Vec<SeriesPoint>> = BTreeMap::new();
    for r in rows {
        for (col, s) in &r.tests {
            groups
                .entry((r.block.clone(), r.rho.clone(), r.psi.clone(), r.dim, col.clone()))
                .or_default()
                .push(SeriesPoint {
                    augment_k: r.augment_k,
                    mean: s.mean,
                    std: s.std,
                });
        }
    }
    let series = groups
        .into_iter()
        .map(|((block, rho, psi, dim, column), mut points)| {
            points.sort_by_key(|p| p.augment_k);
            Series {
                block,
                rho,
                psi,
                dim,
                column,
                points,
            }
        })
        .collect();
    Report {
        rows: rows.to_vec(),
        series,
    }
}
