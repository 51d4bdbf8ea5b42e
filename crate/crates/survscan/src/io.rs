//! Dataset file formats.
//!
//! * Dense CSV: header row, `time` and `status` columns (names configurable),
//!   every other column a covariate.
//! * Sparse COO: an observation file of `row_id,time,status` lines and a
//!   matrix file of `row_id,col_id,value` triplets, zero-based, `#` comments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use survscan_core::{Observation, SparseColumn, Status, SurvivalDataset};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        source: survscan_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl IoError {
    /// Errors about the content of input files, as opposed to failures to
    /// write output.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, IoError::Write { .. })
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Open {
            path: path.to_path_buf(),
            source,
        },
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T, IoError> {
    if raw.is_empty() {
        return Err(parse_err(path, line, format!("missing value for {name}")));
    }
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {name} from {raw:?}")))
}

fn status_field(path: &Path, line: u64, raw: &str) -> Result<Status, IoError> {
    let code: f64 = field(path, line, "status", raw)?;
    if code.fract() != 0.0 {
        return Err(IoError::Data {
            path: path.to_path_buf(),
            source: survscan_core::Error::Domain(format!("status {code} on line {line}")),
        });
    }
    Status::try_from(code as i64).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a dense CSV; covariates are stored compressed when sparse enough.
pub fn load_dense_csv(path: &Path, time_col: &str, status_col: &str) -> Result<SurvivalDataset, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| IoError::Schema {
            path: path.to_path_buf(),
            message: format!("missing column {name:?}"),
        })
    };
    let (ti, si) = (find(time_col)?, find(status_col)?);
    let covariates: Vec<usize> = (0..headers.len()).filter(|&k| k != ti && k != si).collect();
    let names: Vec<String> = covariates.iter().map(|&k| headers[k].to_string()).collect();

    let mut observations = Vec::new();
    let mut dense: Vec<Vec<f64>> = vec![Vec::new(); covariates.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let time: f64 = field(path, line, time_col, &record[ti])?;
        let status = status_field(path, line, &record[si])?;
        let obs = Observation::new(time, status, observations.len()).map_err(|source| IoError::Data {
            path: path.to_path_buf(),
            source,
        })?;
        observations.push(obs);
        for (col, &k) in dense.iter_mut().zip(&covariates) {
            col.push(field(path, line, &headers[k], &record[k])?);
        }
    }
    let columns = dense.into_iter().map(SparseColumn::compress).collect();
    SurvivalDataset::with_names(observations, columns, names).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

fn coo_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn expect_fields(path: &Path, line: u64, record: &csv::StringRecord, n: usize) -> Result<(), IoError> {
    if record.len() != n {
        return Err(parse_err(path, line, format!("expected {n} fields, found {}", record.len())));
    }
    Ok(())
}

/// Reads the sparse format; the number of columns is one past the largest
/// column id (zero for an empty matrix file).
pub fn load_sparse_coo(obs_path: &Path, matrix_path: &Path) -> Result<SurvivalDataset, IoError> {
    let mut outcomes = Vec::new();
    for record in coo_reader(obs_path)?.records() {
        let record = record.map_err(|e| csv_err(obs_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        expect_fields(obs_path, line, &record, 3)?;
        let row: usize = field(obs_path, line, "row_id", &record[0])?;
        let time: f64 = field(obs_path, line, "time", &record[1])?;
        let status = status_field(obs_path, line, &record[2])?;
        outcomes.push((row, time, status.code() as i64));
    }
    let mut triplets = Vec::new();
    for record in coo_reader(matrix_path)?.records() {
        let record = record.map_err(|e| csv_err(matrix_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        expect_fields(matrix_path, line, &record, 3)?;
        let row: usize = field(matrix_path, line, "row_id", &record[0])?;
        let col: usize = field(matrix_path, line, "col_id", &record[1])?;
        let value: f64 = field(matrix_path, line, "value", &record[2])?;
        triplets.push((row, col, value));
    }
    SurvivalDataset::from_triplets(&outcomes, None, &triplets).map_err(|source| {
        // Blame the observation file if the outcomes alone are invalid.
        let outcomes_ok = SurvivalDataset::from_triplets(&outcomes, Some(0), &[]).is_ok();
        IoError::Data {
            path: if outcomes_ok { matrix_path } else { obs_path }.to_path_buf(),
            source,
        }
    })
}

fn write_file<F>(path: &Path, body: F) -> Result<(), IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    File::create(path)
        .map(BufWriter::new)
        .and_then(|mut w| {
            body(&mut w)?;
            w.flush()
        })
        .map_err(|source| IoError::Write {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes the sparse format in original row order. Reloading the files gives
/// back an identical dataset.
pub fn write_sparse_coo(dataset: &SurvivalDataset, obs_path: &Path, matrix_path: &Path) -> Result<(), IoError> {
    let obs = dataset.observations();
    let mut by_row: Vec<usize> = (0..dataset.n()).collect();
    by_row.sort_by_key(|&k| obs[k].row_id);
    write_file(obs_path, |w| {
        writeln!(w, "# row_id,time,status")?;
        for &k in &by_row {
            let o = obs[k];
            writeln!(w, "{},{},{}", o.row_id, o.time, o.status.code())?;
        }
        Ok(())
    })?;

    let mut triplets = Vec::with_capacity(dataset.nnz());
    for (j, col) in dataset.columns().iter().enumerate() {
        col.for_each_nonzero(|k, v| triplets.push((obs[k].row_id, j, v)));
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));
    write_file(matrix_path, |w| {
        writeln!(w, "# row_id,col_id,value")?;
        for (r, c, v) in triplets {
            writeln!(w, "{r},{c},{v}")?;
        }
        Ok(())
    })
}

/// Size and content hash of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub sha256: String,
}

/// Hashes outcomes and nonzeros keyed by original row id, so the value does
/// not depend on file layout or storage kind.
pub fn fingerprint(dataset: &SurvivalDataset) -> Fingerprint {
    let obs = dataset.observations();
    let mut hasher = Sha256::new();
    let mut rows: Vec<_> = obs.iter().map(|o| (o.row_id, o.time.to_bits(), o.status.code())).collect();
    rows.sort_unstable();
    for (r, t, s) in rows {
        hasher.update((r as u64).to_le_bytes());
        hasher.update(t.to_le_bytes());
        hasher.update([s]);
    }
    for (j, col) in dataset.columns().iter().enumerate() {
        let mut entries = Vec::with_capacity(col.nnz());
        col.for_each_nonzero(|k, v| entries.push((obs[k].row_id, v.to_bits())));
        entries.sort_unstable();
        hasher.update((j as u64).to_le_bytes());
        hasher.update((entries.len() as u64).to_le_bytes());
        for (r, v) in entries {
            hasher.update((r as u64).to_le_bytes());
            hasher.update(v.to_le_bytes());
        }
    }
    Fingerprint {
        rows: dataset.n(),
        cols: dataset.p(),
        nnz: dataset.nnz(),
        sha256: hex::encode(hasher.finalize()),
    }
}
