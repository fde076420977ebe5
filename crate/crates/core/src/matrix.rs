//! Dense data matrices, file formats, column standardization and covariance
//! spectra.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic prefix of the binary matrix format.
pub const BIN_MAGIC: &[u8; 8] = b"SRCIMAT1";

/// Dense, row-major matrix of finite `f64` values.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    provenance: Option<String>,
}

impl PartialEq for DataMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows && self.n_cols == other.n_cols && self.values == other.values
    }
}

impl DataMatrix {
    /// Builds a matrix from row-major values. All entries must be finite.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::dim(format!("matrix must be non-empty, got {n_rows}x{n_cols}")));
        }
        if n_rows.checked_mul(n_cols) != Some(values.len()) {
            return Err(Error::dim(format!(
                "{n_rows}x{n_cols} matrix needs {} values, got {}",
                n_rows.saturating_mul(n_cols),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at row {}, column {}", pos / n_cols, pos % n_cols)));
        }
        Ok(Self { n_rows, n_cols, values, provenance: None })
    }

    /// Builds a matrix by evaluating `f(row, col)`; panics on non-finite output.
    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                values.push(f(i, j));
            }
        }
        Self::new(n_rows, n_cols, values).expect("from_fn produced an invalid matrix")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::dim("rows have different lengths"));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Result<Self> {
        let (n, p) = (m.nrows(), m.ncols());
        let mut values = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                values.push(m[(i, j)]);
            }
        }
        Self::new(n, p, values)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// `n_cols / n_rows`.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_cols as f64 / self.n_rows as f64
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                values.push(self.get(i, j));
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, values, provenance: self.provenance.clone() }
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.values, self.n_rows, self.n_cols)
    }
}

/// Descending eigenvalues of `X Xᵀ / n_used`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub n_used: usize,
    pub aspect_ratio: f64,
}

impl EigenSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    /// Guesses the format from a file extension; anything but `.bin` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("bin") => MatrixFormat::Bin,
            _ => MatrixFormat::Csv,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "bin" => Ok(MatrixFormat::Bin),
            other => Err(Error::invalid(format!("unknown matrix format `{other}`"))),
        }
    }
}

/// Reads a matrix. Missing, unparseable or non-finite cells become `0.0`.
pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    let m = match format {
        MatrixFormat::Csv => read_csv(BufReader::new(File::open(path)?))?,
        MatrixFormat::Bin => read_bin(BufReader::new(File::open(path)?))?,
    };
    Ok(m.with_provenance(path.display().to_string()))
}

pub fn write_matrix(m: &DataMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Csv => write_csv(m, &mut w)?,
        MatrixFormat::Bin => write_bin(m, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn read_csv<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);

    let mut values = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        // A first row whose non-empty cells are all non-numeric is a header.
        if line == 0 {
            let mut non_empty = record.iter().filter(|c| !c.is_empty()).peekable();
            if non_empty.peek().is_some() && non_empty.all(|c| c.parse::<f64>().is_err()) {
                continue;
            }
        }
        match n_cols {
            None => n_cols = Some(record.len()),
            Some(k) if k != record.len() => {
                return Err(Error::Parse(format!(
                    "ragged csv: line {} has {} fields, expected {k}",
                    line + 1,
                    record.len()
                )))
            }
            Some(_) => {}
        }
        values.extend(record.iter().map(|c| parse_cell(c).unwrap_or(0.0)));
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::Parse("csv contains no data rows".into()))?;
    DataMatrix::new(n_rows, n_cols, values)
}

fn write_csv<W: Write>(m: &DataMatrix, w: &mut W) -> Result<()> {
    for i in 0..m.n_rows() {
        let line = m.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub(crate) fn read_bin<R: Read>(mut reader: R) -> Result<DataMatrix> {
    let mut header = [0u8; 24];
    reader.read_exact(&mut header).map_err(|_| Error::Parse("bin file shorter than its header".into()))?;
    if &header[..8] != BIN_MAGIC {
        return Err(Error::Parse("bad magic, expected SRCIMAT1".into()));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let p = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let len = usize::try_from(n)
        .ok()
        .zip(usize::try_from(p).ok())
        .and_then(|(n, p)| n.checked_mul(p))
        .ok_or_else(|| Error::Parse(format!("bin dimensions {n}x{p} overflow")))?;

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != len * 8 {
        return Err(Error::Parse(format!("bin payload has {} bytes, header {n}x{p} needs {}", payload.len(), len * 8)));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    DataMatrix::new(n as usize, p as usize, values)
}

fn write_bin<W: Write>(m: &DataMatrix, w: &mut W) -> Result<()> {
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    for v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Centers every column and scales it to unit sample standard deviation
/// (divisor `n - 1`). Constant columns become all zeros.
pub fn standardize_columns(m: &DataMatrix) -> Result<DataMatrix> {
    let (n, p) = (m.n_rows(), m.n_cols());
    if n < 2 {
        return Err(Error::dim(format!("standardization needs at least 2 rows, got {n}")));
    }
    let mut means = vec![0.0; p];
    for i in 0..n {
        for (mu, v) in means.iter_mut().zip(m.row(i)) {
            *mu += v;
        }
    }
    means.iter_mut().for_each(|mu| *mu /= n as f64);

    let mut ss = vec![0.0; p];
    let mut scale = vec![0.0f64; p];
    for i in 0..n {
        for (j, v) in m.row(i).iter().enumerate() {
            let d = v - means[j];
            ss[j] += d * d;
            scale[j] = scale[j].max(v.abs());
        }
    }
    let inv_sd: Vec<f64> = ss
        .iter()
        .zip(&scale)
        .map(|(&s, &c)| {
            let sd = (s / (n - 1) as f64).sqrt();
            if sd <= 64.0 * f64::EPSILON * c || sd == 0.0 {
                0.0
            } else {
                1.0 / sd
            }
        })
        .collect();

    let mut values = Vec::with_capacity(n * p);
    for i in 0..n {
        for (j, v) in m.row(i).iter().enumerate() {
            values.push((v - means[j]) * inv_sd[j]);
        }
    }
    let mut out = DataMatrix::new(n, p, values)?;
    out.provenance = m.provenance.clone();
    Ok(out)
}

/// Descending, non-negative eigenvalues of the symmetric matrix `gram`
/// (only its lower triangle is read), divided by `divisor`.
fn sym_eigenvalues_desc(gram: MatRef<'_, f64>, divisor: f64) -> Result<Vec<f64>> {
    let mut ev = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    ev.reverse();
    for v in ev.iter_mut() {
        *v = (*v / divisor).max(0.0);
    }
    Ok(ev)
}

/// Eigenvalues of `X Xᵀ / n` for an arbitrary faer view, computed through the
/// Gram matrix of the smaller side.
pub(crate) fn spectrum_of(x: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    let k = n.min(p);
    let mut gram = Mat::<f64>::zeros(k, k);
    if p <= n {
        matmul(gram.as_mut(), Accum::Replace, x.transpose(), x, 1.0, Par::Seq);
    } else {
        matmul(gram.as_mut(), Accum::Replace, x, x.transpose(), 1.0, Par::Seq);
    }
    sym_eigenvalues_desc(gram.as_ref(), n as f64)
}

/// Eigenvalues of `X Xᵀ / n_rows`, i.e. squared singular values of `X`
/// over `n_rows`. Returns `min(n_rows, n_cols)` values.
pub fn covariance_spectrum(m: &DataMatrix) -> Result<EigenSpectrum> {
    Ok(EigenSpectrum { eigenvalues: spectrum_of(m.as_faer())?, n_used: m.n_rows(), aspect_ratio: m.aspect_ratio() })
}

fn check_indices(ids: &[usize], bound: usize, what: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::invalid(format!("empty {what} selection")));
    }
    let mut seen = vec![false; bound];
    for &i in ids {
        if i >= bound {
            return Err(Error::invalid(format!("{what} index {i} out of range 0..{bound}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("duplicate {what} index {i}")));
        }
    }
    Ok(())
}

/// Selects rows and columns in the given order.
pub fn submatrix(m: &DataMatrix, row_ids: &[usize], col_ids: &[usize]) -> Result<DataMatrix> {
    check_indices(row_ids, m.n_rows(), "row")?;
    check_indices(col_ids, m.n_cols(), "column")?;
    let mut values = Vec::with_capacity(row_ids.len() * col_ids.len());
    for &i in row_ids {
        let row = m.row(i);
        values.extend(col_ids.iter().map(|&j| row[j]));
    }
    DataMatrix::new(row_ids.len(), col_ids.len(), values)
}

/// Covariance eigenvalues of a row/column selection without materialising a
/// [`DataMatrix`]. Indices are trusted to be valid.
pub(crate) fn block_spectrum(m: &DataMatrix, row_ids: &[usize], col_ids: &[usize]) -> Result<Vec<f64>> {
    let p = m.n_cols();
    let vals = m.values();
    let block = Mat::<f64>::from_fn(row_ids.len(), col_ids.len(), |i, j| vals[row_ids[i] * p + col_ids[j]]);
    spectrum_of(block.as_ref())
}
