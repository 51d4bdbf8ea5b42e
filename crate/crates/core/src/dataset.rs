//! Survival outcomes plus a column-major sparse design matrix, stored in
//! decreasing-time order so risk sets become prefixes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scan::TiedBlocks;

/// Columns with fewer nonzeros than this fraction of rows are stored sparse.
pub const SPARSE_DENSITY_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Status {
    Censored = 0,
    Primary = 1,
    Competing = 2,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl TryFrom<i64> for Status {
    type Error = Error;

    fn try_from(code: i64) -> Result<Self> {
        match code {
            0 => Ok(Status::Censored),
            1 => Ok(Status::Primary),
            2 => Ok(Status::Competing),
            other => Err(Error::Domain(format!("status {other} is not one of 0, 1, 2"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub status: Status,
    /// Index of the record in the original input.
    pub row_id: usize,
}

impl Observation {
    pub fn new(time: f64, status: Status, row_id: usize) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Domain(format!(
                "time {time} of row {row_id} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            time,
            status,
            row_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Dense,
    SparseValued,
    SparseIndicator,
}

/// One covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum SparseColumn {
    Dense(Vec<f64>),
    /// Strictly ascending row positions with their nonzero values.
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    /// Strictly ascending row positions whose value is exactly 1.
    Indicator { indices: Vec<u32> },
}

impl SparseColumn {
    pub fn kind(&self) -> ColumnKind {
        match self {
            SparseColumn::Dense(_) => ColumnKind::Dense,
            SparseColumn::Sparse { .. } => ColumnKind::SparseValued,
            SparseColumn::Indicator { .. } => ColumnKind::SparseIndicator,
        }
    }

    /// Picks the compact representation for a dense vector: sparse below
    /// [`SPARSE_DENSITY_THRESHOLD`], indicator if every nonzero is 1.
    pub fn compress(dense: Vec<f64>) -> Self {
        let n = dense.len();
        let nnz = dense.iter().filter(|&&v| v != 0.0).count();
        if n == 0 || (nnz as f64) >= SPARSE_DENSITY_THRESHOLD * n as f64 {
            return SparseColumn::Dense(dense);
        }
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Self::sparse_or_indicator(indices, values)
    }

    /// Builds from `(row, value)` entries with distinct rows below `n`;
    /// explicit zeros are dropped.
    pub fn from_entries(n: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Index(format!("row {} appears twice in a column", w[0].0)));
        }
        if let Some(&(i, _)) = entries.last() {
            if i as usize >= n {
                return Err(Error::Index(format!("row {i} out of range for {n} rows")));
            }
        }
        if n > 0 && entries.len() as f64 >= SPARSE_DENSITY_THRESHOLD * n as f64 {
            let mut dense = vec![0.0; n];
            for (i, v) in entries {
                dense[i as usize] = v;
            }
            return Ok(SparseColumn::Dense(dense));
        }
        let (indices, values) = entries.into_iter().unzip();
        Ok(Self::sparse_or_indicator(indices, values))
    }

    fn sparse_or_indicator(indices: Vec<u32>, values: Vec<f64>) -> Self {
        if values.iter().all(|&v| v == 1.0) {
            SparseColumn::Indicator { indices }
        } else {
            SparseColumn::Sparse { indices, values }
        }
    }

    /// Number of stored nonzeros (all entries for dense columns).
    pub fn nnz(&self) -> usize {
        match self {
            SparseColumn::Dense(v) => v.iter().filter(|&&x| x != 0.0).count(),
            SparseColumn::Sparse { indices, .. } | SparseColumn::Indicator { indices } => {
                indices.len()
            }
        }
    }

    /// Calls `f(row, value)` for every nonzero entry in ascending row order.
    #[inline]
    pub fn for_each_nonzero<F: FnMut(usize, f64)>(&self, mut f: F) {
        match self {
            SparseColumn::Dense(v) => {
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        f(i, x);
                    }
                }
            }
            SparseColumn::Sparse { indices, values } => {
                for (&i, &x) in indices.iter().zip(values) {
                    f(i as usize, x);
                }
            }
            SparseColumn::Indicator { indices } => {
                for &i in indices {
                    f(i as usize, 1.0);
                }
            }
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        match self {
            SparseColumn::Dense(v) => v.iter().zip(other).map(|(a, b)| a * b).sum(),
            SparseColumn::Sparse { indices, values } => indices
                .iter()
                .zip(values)
                .map(|(&i, &x)| x * other[i as usize])
                .sum(),
            SparseColumn::Indicator { indices } => {
                indices.iter().map(|&i| other[i as usize]).sum()
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        match self {
            SparseColumn::Dense(v) => v.clone(),
            _ => {
                let mut out = vec![0.0; n];
                self.for_each_nonzero(|i, x| out[i] = x);
                out
            }
        }
    }

    /// True when every entry is zero.
    pub fn is_null(&self) -> bool {
        self.nnz() == 0
    }

    /// Bytes held by the column's buffers.
    pub fn memory_bytes(&self) -> usize {
        match self {
            SparseColumn::Dense(v) => v.len() * 8,
            SparseColumn::Sparse { indices, values } => indices.len() * 4 + values.len() * 8,
            SparseColumn::Indicator { indices } => indices.len() * 4,
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            SparseColumn::Dense(v) if v.len() != n => Err(Error::LengthMismatch {
                expected: n,
                found: v.len(),
            }),
            SparseColumn::Sparse { indices, values } if indices.len() != values.len() => {
                Err(Error::LengthMismatch {
                    expected: indices.len(),
                    found: values.len(),
                })
            }
            SparseColumn::Sparse { indices, .. } | SparseColumn::Indicator { indices } => {
                if indices.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Index("column indices not strictly ascending".into()));
                }
                match indices.last() {
                    Some(&i) if i as usize >= n => {
                        Err(Error::Index(format!("row {i} out of range for {n} rows")))
                    }
                    _ => Ok(()),
                }
            }
            SparseColumn::Dense(_) => Ok(()),
        }
    }

    /// Gathers rows: entry `k` of the result is entry `rows[k]` of `self`.
    /// `rows` may repeat or omit positions.
    fn gather(&self, rows: &[usize], source_len: usize) -> SparseColumn {
        if let SparseColumn::Dense(v) = self {
            return SparseColumn::Dense(rows.iter().map(|&r| v[r]).collect());
        }
        // Target positions of each source row, in CSR layout.
        let mut offsets = vec![0u32; source_len + 1];
        for &r in rows {
            offsets[r + 1] += 1;
        }
        for i in 0..source_len {
            offsets[i + 1] += offsets[i];
        }
        let mut targets = vec![0u32; rows.len()];
        let mut fill = offsets.clone();
        for (k, &r) in rows.iter().enumerate() {
            targets[fill[r] as usize] = k as u32;
            fill[r] += 1;
        }
        let mut entries = Vec::new();
        self.for_each_nonzero(|i, x| {
            for &t in &targets[offsets[i] as usize..offsets[i + 1] as usize] {
                entries.push((t, x));
            }
        });
        entries.sort_unstable_by_key(|&(i, _)| i);
        match self {
            SparseColumn::Indicator { .. } => SparseColumn::Indicator {
                indices: entries.into_iter().map(|(i, _)| i).collect(),
            },
            _ => {
                let (indices, values) = entries.into_iter().unzip();
                SparseColumn::Sparse { indices, values }
            }
        }
    }
}

/// Observations sorted by decreasing time (ties by ascending `row_id`) with
/// the design matrix permuted to match.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    observations: Vec<Observation>,
    columns: Vec<SparseColumn>,
    column_names: Vec<String>,
    blocks: TiedBlocks,
    n_events: usize,
    n_competing: usize,
}

impl SurvivalDataset {
    /// Validates the inputs and sorts them; `columns` are indexed by the
    /// position of each observation in `observations`.
    pub fn new(observations: Vec<Observation>, columns: Vec<SparseColumn>) -> Result<Self> {
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        Self::with_names(observations, columns, names)
    }

    pub fn with_names(
        observations: Vec<Observation>,
        columns: Vec<SparseColumn>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = observations.len();
        if column_names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: columns.len(),
                found: column_names.len(),
            });
        }
        if n > u32::MAX as usize {
            return Err(Error::Index(format!("{n} rows exceed the supported maximum")));
        }
        for o in &observations {
            Observation::new(o.time, o.status, o.row_id)?;
        }
        for c in &columns {
            c.check_len(n)?;
        }
        let unsorted = Self {
            observations,
            columns,
            column_names,
            blocks: TiedBlocks::default(),
            n_events: 0,
            n_competing: 0,
        };
        Ok(unsorted.sort_and_block())
    }

    /// Builds from per-row `(row_id, time, status)` and `(row_id, col_id,
    /// value)` triplets. Row ids must be exactly `0..n` in any order.
    pub fn from_triplets(
        outcomes: &[(usize, f64, i64)],
        n_cols: Option<usize>,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = outcomes.len();
        let mut observations: Vec<Option<Observation>> = vec![None; n];
        for &(row, time, status) in outcomes {
            if row >= n {
                return Err(Error::Index(format!("row id {row} out of range for {n} rows")));
            }
            if observations[row].is_some() {
                return Err(Error::Index(format!("row id {row} listed twice")));
            }
            observations[row] = Some(Observation::new(time, Status::try_from(status)?, row)?);
        }
        let observations: Vec<Observation> = observations.into_iter().flatten().collect();

        let p = match n_cols {
            Some(p) => p,
            None => triplets.iter().map(|t| t.1 + 1).max().unwrap_or(0),
        };
        let mut per_col: Vec<Vec<(u32, f64)>> = vec![Vec::new(); p];
        for &(row, col, value) in triplets {
            if row >= n {
                return Err(Error::Index(format!("row id {row} out of range for {n} rows")));
            }
            if col >= p {
                return Err(Error::Index(format!("column id {col} out of range for {p} columns")));
            }
            if !value.is_finite() {
                return Err(Error::Domain(format!("non-finite value at ({row}, {col})")));
            }
            per_col[col].push((row as u32, value));
        }
        let mut columns = Vec::with_capacity(p);
        for (col, mut entries) in per_col.into_iter().enumerate() {
            entries.sort_by_key(|&(i, _)| i);
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEntry {
                    row: w[0].0 as usize,
                    col,
                });
            }
            columns.push(SparseColumn::from_entries(n, entries)?);
        }
        Self::new(observations, columns)
    }

    /// Sorts by decreasing time (ascending `row_id` within ties, stable for
    /// repeated ids), permutes the columns and recomputes tied blocks.
    pub fn sort_and_block(self) -> Self {
        let n = self.observations.len();
        let mut order: Vec<usize> = (0..n).collect();
        let obs = &self.observations;
        order.sort_by(|&i, &j| {
            obs[j]
                .time
                .partial_cmp(&obs[i].time)
                .unwrap_or(Ordering::Equal)
                .then(obs[i].row_id.cmp(&obs[j].row_id))
        });
        let identity = order.iter().enumerate().all(|(k, &i)| k == i);
        let (observations, columns) = if identity {
            (self.observations, self.columns)
        } else {
            let observations = order.iter().map(|&i| obs[i]).collect();
            let columns = self.columns.iter().map(|c| c.gather(&order, n)).collect();
            (observations, columns)
        };
        let times: Vec<f64> = observations.iter().map(|o: &Observation| o.time).collect();
        let blocks = TiedBlocks::from_sorted_keys(&times);
        let n_events = observations
            .iter()
            .filter(|o| o.status == Status::Primary)
            .count();
        let n_competing = observations
            .iter()
            .filter(|o| o.status == Status::Competing)
            .count();
        Self {
            observations,
            columns,
            column_names: self.column_names,
            blocks,
            n_events,
            n_competing,
        }
    }

    /// New dataset made of the given sorted positions (repeats allowed, as in
    /// bootstrap resampling). Row ids are kept.
    pub fn select(&self, positions: &[usize]) -> Self {
        let n = self.n();
        let observations: Vec<Observation> =
            positions.iter().map(|&k| self.observations[k]).collect();
        let columns = self.columns.iter().map(|c| c.gather(positions, n)).collect();
        Self {
            observations,
            columns,
            column_names: self.column_names.clone(),
            blocks: TiedBlocks::default(),
            n_events: 0,
            n_competing: 0,
        }
        .sort_and_block()
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Result<&SparseColumn> {
        self.columns.get(j).ok_or(Error::InvalidColumn(j))
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn tied_blocks(&self) -> &TiedBlocks {
        &self.blocks
    }

    /// Number of primary events (status 1).
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Number of competing events (status 2).
    pub fn n_competing(&self) -> usize {
        self.n_competing
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(SparseColumn::nnz).sum()
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time).collect()
    }

    /// 1.0 for primary events, 0.0 otherwise.
    pub fn event_mask(&self) -> Vec<f64> {
        self.observations
            .iter()
            .map(|o| if o.status == Status::Primary { 1.0 } else { 0.0 })
            .collect()
    }

    /// Bytes held by outcomes, columns and block boundaries.
    pub fn memory_bytes(&self) -> usize {
        self.observations.len() * core::mem::size_of::<Observation>()
            + self.columns.iter().map(SparseColumn::memory_bytes).sum::<usize>()
            + self.blocks.len() * core::mem::size_of::<usize>()
    }

    /// Row `k` of the design matrix as a dense vector (test and debugging aid).
    pub fn dense_row(&self, k: usize) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match c {
                SparseColumn::Dense(v) => v[k],
                SparseColumn::Sparse { indices, values } => indices
                    .binary_search(&(k as u32))
                    .map(|pos| values[pos])
                    .unwrap_or(0.0),
                SparseColumn::Indicator { indices } => {
                    if indices.binary_search(&(k as u32)).is_ok() {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(times: &[f64], status: &[i64]) -> Vec<Observation> {
        times
            .iter()
            .zip(status)
            .enumerate()
            .map(|(i, (&t, &s))| Observation::new(t, Status::try_from(s).unwrap(), i).unwrap())
            .collect()
    }

    #[test]
    fn sorts_by_decreasing_time_and_permutes_columns() {
        let ds = SurvivalDataset::new(
            obs(&[1.0, 3.0, 2.0], &[1, 0, 1]),
            vec![SparseColumn::Dense(vec![0.0, 1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(ds.times(), vec![3.0, 2.0, 1.0]);
        assert_eq!(ds.column(0).unwrap().to_dense(3), vec![1.0, 0.0, 0.0]);
        let ids: Vec<usize> = ds.observations().iter().map(|o| o.row_id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    #[test]
    fn tied_times_form_blocks() {
        let ds = SurvivalDataset::new(obs(&[2.0, 2.0, 1.0], &[1, 1, 0]), vec![]).unwrap();
        assert_eq!(ds.tied_blocks().ends(), &[2, 3]);
        assert_eq!(ds.n_events(), 2);
    }

    #[test]
    fn sorted_input_is_left_alone() {
        let ds = SurvivalDataset::new(
            obs(&[5.0, 4.0, 4.0, 1.0], &[1, 1, 0, 1]),
            vec![SparseColumn::compress(vec![1.0, 0.0, 0.0, 0.0])],
        )
        .unwrap();
        let again = ds.clone().sort_and_block();
        assert_eq!(ds, again);
        assert_eq!(ds.observations()[1].row_id, 1);
    }

    #[test]
    fn rejects_bad_outcomes() {
        assert!(matches!(Status::try_from(3), Err(Error::Domain(_))));
        assert!(Observation::new(-1.0, Status::Primary, 0).is_err());
        assert!(Observation::new(f64::NAN, Status::Primary, 0).is_err());
    }

    #[test]
    fn compression_rule() {
        let mut v = vec![0.0; 100];
        v[3] = 1.0;
        v[50] = 1.0;
        assert_eq!(SparseColumn::compress(v.clone()).kind(), ColumnKind::SparseIndicator);
        v[7] = 2.5;
        assert_eq!(SparseColumn::compress(v.clone()).kind(), ColumnKind::SparseValued);
        let dense: Vec<f64> = (0..100).map(|i| (i % 3) as f64).collect();
        assert_eq!(SparseColumn::compress(dense).kind(), ColumnKind::Dense);
        // 25 of 100 is not below the threshold.
        let quarter: Vec<f64> = (0..100).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(SparseColumn::compress(quarter).kind(), ColumnKind::Dense);
    }

    #[test]
    fn triplets_build_and_validate() {
        let outcomes = [(0, 1.0, 1), (1, 2.0, 0), (2, 3.0, 1)];
        let ds = SurvivalDataset::from_triplets(&outcomes, None, &[(0, 1, 2.0)]).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.column(1).unwrap().to_dense(3), vec![0.0, 0.0, 2.0]);
        assert!(ds.column(0).unwrap().is_null());

        let empty = SurvivalDataset::from_triplets(&outcomes, None, &[]).unwrap();
        assert_eq!(empty.p(), 0);

        let dup = SurvivalDataset::from_triplets(&outcomes, None, &[(1, 0, 1.0), (1, 0, 2.0)]);
        assert_eq!(dup.unwrap_err(), Error::DuplicateEntry { row: 1, col: 0 });
        assert!(matches!(
            SurvivalDataset::from_triplets(&outcomes, None, &[(3, 0, 1.0)]),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            SurvivalDataset::from_triplets(&outcomes, Some(1), &[(0, 1, 1.0)]),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            SurvivalDataset::from_triplets(&[(0, 1.0, 3)], None, &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn indicator_dot_equals_dense_dot() {
        let col = SparseColumn::Indicator {
            indices: vec![1, 4, 6],
        };
        let other: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 + 0.3).collect();
        let dense = col.to_dense(8);
        let d: f64 = dense.iter().zip(&other).map(|(a, b)| a * b).sum();
        assert_eq!(col.dot(&other), d);
    }

    #[test]
    fn select_with_repeats() {
        let ds = SurvivalDataset::new(
            obs(&[3.0, 2.0, 1.0], &[1, 0, 1]),
            vec![SparseColumn::Indicator { indices: vec![0, 2] }],
        )
        .unwrap();
        let sub = ds.select(&[2, 2, 0]);
        assert_eq!(sub.times(), vec![3.0, 1.0, 1.0]);
        assert_eq!(sub.column(0).unwrap().to_dense(3), vec![1.0, 1.0, 1.0]);
        assert_eq!(sub.n_events(), 3);
        assert_eq!(sub.tied_blocks().ends(), &[1, 3]);
    }
}
