//! Text formats for tensors, Kruskal models, regression problems and
//! experiment CSVs.
//!
//! Tensor files:
//!
//! ```text
//! shape I_1 I_2 ... I_N
//! <one value per line in linearization order, first index fastest>
//! ```
//!
//! Kruskal model files (factors numbered from 1, values row-major with one
//! matrix row per line):
//!
//! ```text
//! rank R order N
//! factor 1 rows cols
//! <rows lines of cols values>
//! factor 2 rows cols
//! ...
//! ```
//!
//! Regression problem files (one observation per line: the observed value
//! followed by its design row):
//!
//! ```text
//! problem I J
//! eps <value>
//! mu <value>
//! y_1 m_11 ... m_1J
//! ...
//! ```
//!
//! Numbers are written with shortest round-trip formatting, so files parse
//! back to bit-identical doubles. Parse errors carry 1-based line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::linalg::{Matrix, Vector};
use crate::simulate::{ExperimentRecord, Method};
use crate::tensor::DenseTensor;

/// CSV header of experiment results.
pub const RESULTS_CSV_HEADER: &str = "replicate,eta,gamma,method,fms,seconds,sweeps,converged";

struct LineParser<R> {
    lines: std::io::Lines<BufReader<R>>,
    line: usize,
}

impl<R: Read> LineParser<R> {
    fn new(reader: R) -> Self {
        LineParser {
            lines: BufReader::new(reader).lines(),
            line: 0,
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-empty line, trimmed; `None` at end of input.
    fn try_next_line(&mut self) -> Result<Option<String>> {
        loop {
            self.line += 1;
            match self.lines.next() {
                None => return Ok(None),
                Some(line) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if !trimmed.is_empty() {
                        return Ok(Some(trimmed.to_string()));
                    }
                }
            }
        }
    }

    /// Next non-empty line, trimmed; end of input is an error.
    fn next_line(&mut self) -> Result<String> {
        match self.try_next_line()? {
            Some(line) => Ok(line),
            None => Err(Error::Parse {
                line: self.line,
                message: "unexpected end of file".into(),
            }),
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        loop {
            self.line += 1;
            match self.lines.next() {
                None => return Ok(()),
                Some(line) => {
                    if !line?.trim().is_empty() {
                        return Err(self.fail("trailing content after the expected data"));
                    }
                }
            }
        }
    }

    fn parse_value(&self, token: &str) -> Result<f64> {
        token
            .parse::<f64>()
            .map_err(|_| self.fail(format!("expected a number, got '{token}'")))
    }

    fn parse_count(&self, token: &str) -> Result<usize> {
        token
            .parse::<usize>()
            .map_err(|_| self.fail(format!("expected a nonnegative integer, got '{token}'")))
    }

    /// A line of exactly `count` whitespace-separated numbers.
    fn number_row(&mut self, count: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != count {
            return Err(self.fail(format!(
                "expected {count} values on the line, got {}",
                tokens.len()
            )));
        }
        tokens.iter().map(|t| self.parse_value(t)).collect()
    }

    /// A `name v1 v2 ...` header line with `count` integer fields.
    fn header(&mut self, name: &str, count: usize) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&name) {
            return Err(self.fail(format!("expected a '{name}' header, got '{line}'")));
        }
        if count > 0 && tokens.len() != count + 1 {
            return Err(self.fail(format!(
                "'{name}' header needs {count} fields, got {}",
                tokens.len() - 1
            )));
        }
        tokens[1..].iter().map(|t| self.parse_count(t)).collect()
    }
}

pub fn write_tensor(writer: impl Write, t: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(writer);
    write!(w, "shape")?;
    for d in t.shape() {
        write!(w, " {d}")?;
    }
    writeln!(w)?;
    for v in t.values() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(reader: impl Read) -> Result<DenseTensor> {
    let mut p = LineParser::new(reader);
    let line = p.next_line()?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.first() != Some(&"shape") || tokens.len() < 3 {
        return Err(p.fail("expected a header 'shape I_1 I_2 ...' with at least two dimensions"));
    }
    let shape: Vec<usize> = tokens[1..]
        .iter()
        .map(|t| p.parse_count(t))
        .collect::<Result<_>>()?;
    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        let line = p.next_line()?;
        if line.split_whitespace().count() != 1 {
            return Err(p.fail("expected one value per line"));
        }
        values.push(p.parse_value(&line)?);
    }
    p.expect_eof()?;
    DenseTensor::from_values(shape, values)
}

pub fn write_kruskal(writer: impl Write, k: &KruskalModel) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "rank {} order {}", k.rank(), k.order())?;
    for (n, f) in k.factors().iter().enumerate() {
        writeln!(w, "factor {} {} {}", n + 1, f.nrows(), f.ncols())?;
        for i in 0..f.nrows() {
            let row: Vec<String> = (0..f.ncols()).map(|j| f[(i, j)].to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_kruskal(reader: impl Read) -> Result<KruskalModel> {
    let mut p = LineParser::new(reader);
    let line = p.next_line()?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "rank" || tokens[2] != "order" {
        return Err(p.fail("expected a header 'rank R order N'"));
    }
    let rank = p.parse_count(tokens[1])?;
    let order = p.parse_count(tokens[3])?;
    let mut factors = Vec::with_capacity(order);
    for n in 0..order {
        let header = p.header("factor", 3)?;
        if header[0] != n + 1 {
            return Err(p.fail(format!("expected factor {}, got factor {}", n + 1, header[0])));
        }
        let (rows, cols) = (header[1], header[2]);
        if cols != rank {
            return Err(p.fail(format!(
                "factor {} has {} columns, the header promised rank {}",
                n + 1,
                cols,
                rank
            )));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            values.extend(p.number_row(cols)?);
        }
        factors.push(Matrix::from_row_slice(rows, cols, &values));
    }
    p.expect_eof()?;
    KruskalModel::new(factors)
}

/// A regression problem read from its text form: observations, design
/// matrix and the two constants.
#[derive(Debug, Clone)]
pub struct RegressionInput {
    pub y: Vector,
    pub design: Matrix,
    pub eps: f64,
    pub mu: f64,
}

pub fn read_regression_problem(reader: impl Read) -> Result<RegressionInput> {
    let mut p = LineParser::new(reader);
    let dims = p.header("problem", 2)?;
    let (i_dim, j_dim) = (dims[0], dims[1]);
    if i_dim == 0 || j_dim == 0 {
        return Err(p.fail("problem dimensions must be positive"));
    }
    let scalar = |p: &mut LineParser<_>, name: &str| -> Result<f64> {
        let line = p.next_line()?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 || tokens[0] != name {
            return Err(p.fail(format!("expected '{name} <value>', got '{line}'")));
        }
        p.parse_value(tokens[1])
    };
    let eps = scalar(&mut p, "eps")?;
    let mu = scalar(&mut p, "mu")?;
    let mut y = Vector::zeros(i_dim);
    let mut design = Matrix::zeros(i_dim, j_dim);
    for i in 0..i_dim {
        let row = p.number_row(1 + j_dim)?;
        y[i] = row[0];
        for j in 0..j_dim {
            design[(i, j)] = row[1 + j];
        }
    }
    p.expect_eof()?;
    Ok(RegressionInput { y, design, eps, mu })
}

pub fn write_regression_problem(writer: impl Write, input: &RegressionInput) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "problem {} {}", input.y.len(), input.design.ncols())?;
    writeln!(w, "eps {}", input.eps)?;
    writeln!(w, "mu {}", input.mu)?;
    for i in 0..input.y.len() {
        write!(w, "{}", input.y[i])?;
        for j in 0..input.design.ncols() {
            write!(w, " {}", input.design[(i, j)])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// One experiment record as a CSV row under [`RESULTS_CSV_HEADER`]. None of
/// the fields need quoting: the method name is a bare word and numbers
/// print without separators.
pub fn record_to_csv_row(r: &ExperimentRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.replicate, r.eta, r.gamma, r.method, r.fms, r.seconds, r.sweeps, r.converged
    )
}

pub fn write_results_csv(writer: impl Write, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{RESULTS_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", record_to_csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(reader: impl Read) -> Result<Vec<ExperimentRecord>> {
    let mut p = LineParser::new(reader);
    let header = p.next_line()?;
    if header != RESULTS_CSV_HEADER {
        return Err(p.fail(format!("expected header '{RESULTS_CSV_HEADER}'")));
    }
    let mut records = Vec::new();
    while let Some(line) = p.try_next_line()? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(p.fail(format!("expected 8 CSV fields, got {}", fields.len())));
        }
        records.push(ExperimentRecord {
            replicate: p.parse_count(fields[0])?,
            eta: p.parse_value(fields[1])?,
            gamma: p.parse_value(fields[2])?,
            method: fields[3]
                .parse::<Method>()
                .map_err(|e| p.fail(e.to_string()))?,
            fms: p.parse_value(fields[4])?,
            seconds: p.parse_value(fields[5])?,
            sweeps: p.parse_count(fields[6])?,
            converged: fields[7]
                .parse::<bool>()
                .map_err(|_| p.fail(format!("expected true/false, got '{}'", fields[7])))?,
        });
    }
    Ok(records)
}

/// Convenience file wrappers.
pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_tensor(File::open(path)?)
}

pub fn write_tensor_file(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    write_tensor(File::create(path)?, t)
}

pub fn read_kruskal_file(path: impl AsRef<Path>) -> Result<KruskalModel> {
    read_kruskal(File::open(path)?)
}

pub fn write_kruskal_file(path: impl AsRef<Path>, k: &KruskalModel) -> Result<()> {
    write_kruskal(File::create(path)?, k)
}
