//! Regime-tagged sample matrices and the regime CSV format.
//!
//! CSV layout (UTF-8, `.` decimal separator, `\n` line endings):
//!
//! ```text
//! regime,level_target,level_value,X1,...,XK,Y
//! obs,,,0.12,...
//! do:X2,X2,1.5,0.33,1.5,...
//! ```
//!
//! One file may hold several regimes; rows are grouped by regime label in order
//! of first appearance.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which data-generating condition a dataset was drawn under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    Observational,
    /// Single-variable intervention on the treatment with this node index.
    Do(usize),
    /// Joint intervention on every treatment.
    Joint,
}

impl RegimeTag {
    pub fn label(&self, names: &[String]) -> String {
        match self {
            RegimeTag::Observational => "obs".to_string(),
            RegimeTag::Do(k) => format!("do:{}", names[*k]),
            RegimeTag::Joint => "joint".to_string(),
        }
    }

    pub fn parse(label: &str, names: &[String]) -> Result<Self> {
        match label {
            "obs" => Ok(RegimeTag::Observational),
            "joint" => Ok(RegimeTag::Joint),
            other => {
                let target = other
                    .strip_prefix("do:")
                    .ok_or_else(|| Error::InvalidRegime(other.to_string()))?;
                let k = names
                    .iter()
                    .position(|n| n == target)
                    .ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
                if k + 1 == names.len() {
                    return Err(Error::InterveneOnOutcome(target.to_string()));
                }
                Ok(RegimeTag::Do(k))
            }
        }
    }

    /// True when node `j` is fixed by the regime.
    pub fn intervenes_on(&self, j: usize, n_nodes: usize) -> bool {
        match self {
            RegimeTag::Observational => false,
            RegimeTag::Do(k) => *k == j,
            RegimeTag::Joint => j + 1 < n_nodes,
        }
    }
}

/// `n_rows × (K+1)` samples, one column per node in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeDataset {
    names: Vec<String>,
    tag: RegimeTag,
    values: DMatrix<f64>,
}

impl RegimeDataset {
    pub fn new(names: Vec<String>, tag: RegimeTag, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != names.len() {
            return Err(Error::ColumnMismatch(format!(
                "{} columns for {} names",
                values.ncols(),
                names.len()
            )));
        }
        if let RegimeTag::Do(k) = tag {
            if k + 1 >= names.len() {
                return Err(Error::InvalidRegime(format!("do() target index {k} is not a treatment")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in dataset".into()));
        }
        Ok(Self { names, tag, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tag(&self) -> &RegimeTag {
        &self.tag
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        Ok(self.column(j))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Rows selected by index, with repetition allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let v = DMatrix::from_fn(rows.len(), self.n_cols(), |i, j| self.values[(rows[i], j)]);
        Self { names: self.names.clone(), tag: self.tag.clone(), values: v }
    }

    /// Row-wise concatenation of datasets sharing the same column set.
    pub fn concat_values(parts: &[RegimeDataset]) -> Result<DMatrix<f64>> {
        let first = parts.first().ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
        let ncols = first.n_cols();
        for p in parts {
            if p.names != first.names {
                return Err(Error::ColumnMismatch("datasets disagree on columns".into()));
            }
        }
        let total: usize = parts.iter().map(|p| p.n_rows()).sum();
        let mut out = DMatrix::zeros(total, ncols);
        let mut r = 0;
        for p in parts {
            out.rows_mut(r, p.n_rows()).copy_from(&p.values);
            r += p.n_rows();
        }
        Ok(out)
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self { names: self.names.clone(), tag: self.tag.clone(), values }
    }
}

fn fmt_num(v: f64) -> String {
    // Rust's shortest round-trip representation: parsing it back is exact.
    format!("{v}")
}

/// Writes datasets (all with the same columns) as one regime CSV.
pub fn write_regime_csv<W: Write>(datasets: &[RegimeDataset], out: W) -> Result<()> {
    let first = datasets.first().ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
    let names = first.names();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["regime".to_string(), "level_target".into(), "level_value".into()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for d in datasets {
        if d.names() != names {
            return Err(Error::ColumnMismatch("datasets disagree on columns".into()));
        }
        let label = d.tag().label(names);
        for i in 0..d.n_rows() {
            let mut rec = vec![label.clone()];
            match d.tag() {
                RegimeTag::Do(k) => {
                    rec.push(names[*k].clone());
                    rec.push(fmt_num(d.values[(i, *k)]));
                }
                _ => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
            rec.extend((0..d.n_cols()).map(|j| fmt_num(d.values[(i, j)])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_regime_csv<R: Read>(input: R) -> Result<Vec<RegimeDataset>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 4
        || &header[0] != "regime"
        || &header[1] != "level_target"
        || &header[2] != "level_value"
    {
        return Err(Error::ColumnMismatch(
            "header must start with regime,level_target,level_value".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut groups: Vec<(RegimeTag, Vec<f64>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() + 3 {
            return Err(Error::ColumnMismatch(format!("row {} has {} fields", line + 2, rec.len())));
        }
        let tag = RegimeTag::parse(&rec[0], &names)?;
        let row: Vec<f64> = (3..rec.len())
            .map(|j| {
                rec[j].trim().parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("row {}: `{}` is not a number", line + 2, &rec[j]))
                })
            })
            .collect::<Result<_>>()?;
        if let RegimeTag::Do(k) = tag {
            if &rec[1] != names[k].as_str() {
                return Err(Error::InvalidRegime(format!("row {}: level_target mismatch", line + 2)));
            }
            let level: f64 = rec[2]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("row {}: bad level_value", line + 2)))?;
            if level != row[k] {
                return Err(Error::InvalidRegime(format!(
                    "row {}: intervened column differs from recorded level",
                    line + 2
                )));
            }
        }
        match groups.iter_mut().find(|g| g.0 == tag) {
            Some(g) => g.1.extend(row),
            None => groups.push((tag, row)),
        }
    }
    groups
        .into_iter()
        .map(|(tag, flat)| {
            let n = flat.len() / names.len();
            RegimeDataset::new(names.clone(), tag, DMatrix::from_row_slice(n, names.len(), &flat))
        })
        .collect()
}

pub fn write_regime_csv_file(datasets: &[RegimeDataset], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_regime_csv(datasets, std::io::BufWriter::new(f))
}

pub fn read_regime_csv_file(path: &Path) -> Result<Vec<RegimeDataset>> {
    read_regime_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}
