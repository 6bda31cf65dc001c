//! Ingestion of daily multivariate series, de-truncation jitter and
//! train/test splitting.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// A time-indexed `n x d` matrix of complete observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSeries {
    pub timestamps: Vec<NaiveDate>,
    pub column_names: Vec<String>,
    /// Row-major values, one inner vector per date.
    pub rows: Vec<Vec<f64>>,
}

impl MultivariateSeries {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if column_names.len() < 2 {
            return Err(Error::invalid("a series needs at least 2 data columns"));
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData("series has no complete rows".into()));
        }
        if timestamps.len() != rows.len() {
            return Err(Error::invalid("timestamp count differs from row count"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != column_names.len()) {
            return Err(Error::invalid(format!("row {} has the wrong width", bad + 1)));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at {} -> {}",
                timestamps[i],
                timestamps[i + 1]
            )));
        }
        Ok(Self {
            timestamps,
            column_names,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Subset of rows, in the order given.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            column_names: self.column_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (date, row) in self.timestamps.iter().zip(&self.rows) {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Train/test partition of row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Load a `date,<name1>,...,<named>` CSV, dropping rows with any empty cell.
pub fn load_csv(path: impl AsRef<Path>) -> Result<MultivariateSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

pub fn read_csv<R: Read>(reader: R) -> Result<MultivariateSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::invalid(format!(
            "expected a date column and at least 2 data columns, found {} columns",
            header.len()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut timestamps = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let date_str = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| Error::Parse {
            row: row_no,
            column: header.get(0).unwrap_or("date").to_string(),
            value: date_str.to_string(),
        })?;
        let mut values = Vec::with_capacity(names.len());
        let mut complete = record.len() == header.len();
        for (j, name) in names.iter().enumerate() {
            let cell = record.get(j + 1).unwrap_or("");
            if cell.is_empty() {
                complete = false;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: name.clone(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        if complete {
            timestamps.push(date);
            rows.push(values);
        }
    }
    MultivariateSeries::new(timestamps, names, rows)
}

/// Add independent `Uniform(-half_width, half_width)` noise to every entry.
pub fn jitter(series: &MultivariateSeries, half_width: f64, seed: u64) -> Result<MultivariateSeries> {
    if !(half_width >= 0.0) {
        return Err(Error::invalid("jitter half width must be nonnegative"));
    }
    let mut out = series.clone();
    if half_width == 0.0 {
        return Ok(out);
    }
    let mut rng = stats::substream(seed, 0);
    for row in &mut out.rows {
        for v in row.iter_mut() {
            *v += rng.random_range(-half_width..half_width);
        }
    }
    Ok(out)
}

/// Every `every_kth` row (1-based) goes to the test set, the rest to training.
pub fn split(series: &MultivariateSeries, every_kth: usize) -> Result<SplitIndex> {
    split_rows(series.n_rows(), every_kth)
}

pub fn split_rows(n: usize, every_kth: usize) -> Result<SplitIndex> {
    if every_kth < 2 {
        return Err(Error::Config("every_kth must be at least 2".into()));
    }
    if every_kth > n {
        return Err(Error::Config(format!(
            "every_kth = {every_kth} exceeds the {n} available rows; the test set would be empty"
        )));
    }
    let (test_rows, train_rows) = (0..n).partition(|i| (i + 1) % every_kth == 0);
    Ok(SplitIndex {
        train_rows,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIVE_ROWS: &str = "date,a,b,c\n\
        2002-09-01,1,2,3\n\
        2002-09-02,4,,6\n\
        2002-09-03,7,8,9\n\
        2002-09-04,10,11,12\n\
        2002-09-05,13,14,15\n";

    #[test]
    fn drops_incomplete_rows() {
        let s = read_csv(FIVE_ROWS.as_bytes()).unwrap();
        assert_eq!(s.n_rows(), 4);
        assert_eq!(s.column_names, vec!["a", "b", "c"]);
        assert_eq!(s.rows[1], vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn complete_file_keeps_all_rows() {
        let text = "date,a,b\n2000-01-01,1,2\n2000-01-02,3,4\n";
        assert_eq!(read_csv(text.as_bytes()).unwrap().n_rows(), 2);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let text = "date,a,b\n2000-01-01,1,2\n2000-01-02,3,abc\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_single_data_column_and_empty_files() {
        assert!(read_csv("date,a\n2000-01-01,1\n".as_bytes()).is_err());
        assert!(matches!(
            read_csv("date,a,b\n2000-01-01,1,\n".as_bytes()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rejects_repeated_dates() {
        let text = "date,a,b\n2000-01-01,1,2\n2000-01-01,3,4\n";
        assert!(read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(load_csv("/nonexistent/x.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn zero_jitter_is_identity_and_seed_is_deterministic() {
        let s = read_csv(FIVE_ROWS.as_bytes()).unwrap();
        assert_eq!(jitter(&s, 0.0, 1).unwrap(), s);
        assert_eq!(jitter(&s, 0.5, 9).unwrap(), jitter(&s, 0.5, 9).unwrap());
        assert_ne!(jitter(&s, 0.5, 9).unwrap(), jitter(&s, 0.5, 10).unwrap());
    }

    #[test]
    fn jitter_is_bounded_and_centered() {
        let n = 20_000;
        let dates: Vec<NaiveDate> = (0..n)
            .map(|i| NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Days::new(i as u64))
            .collect();
        let rows = vec![vec![10.0, 20.0]; n];
        let s = MultivariateSeries::new(dates, vec!["a".into(), "b".into()], rows).unwrap();
        let j = jitter(&s, 0.5, 42).unwrap();
        for col in 0..2 {
            let base = if col == 0 { 10.0 } else { 20.0 };
            let shifts: Vec<f64> = j.column(col).iter().map(|v| v - base).collect();
            assert!(shifts.iter().all(|d| d.abs() <= 0.5));
            let bound = 3.0 * 0.5 / (3.0 * n as f64).sqrt();
            assert!(stats::mean(&shifts).abs() < bound);
        }
    }

    #[test]
    fn split_examples() {
        let s = split_rows(4497, 3).unwrap();
        assert_eq!((s.train_rows.len(), s.test_rows.len()), (2998, 1499));
        let s = split_rows(3, 3).unwrap();
        assert_eq!(s.train_rows, vec![0, 1]);
        assert_eq!(s.test_rows, vec![2]);
        let s = split_rows(10, 2).unwrap();
        assert_eq!(s.test_rows, vec![1, 3, 5, 7, 9]);
        assert!(split_rows(2, 3).is_err());
        assert!(split_rows(10, 1).is_err());
    }

    #[test]
    fn round_trip_through_csv_preserves_values() {
        let s = read_csv(FIVE_ROWS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        jitter(&s, 0.0, 0).unwrap().write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let idx = split(&back, 2).unwrap();
        let mut all: Vec<usize> = idx.train_rows.iter().chain(&idx.test_rows).copied().collect();
        all.sort();
        assert_eq!(back.select_rows(&all), s);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..500, k in 2usize..20) {
            prop_assume!(k <= n);
            let s = split_rows(n, k).unwrap();
            prop_assert_eq!(s.train_rows.len() + s.test_rows.len(), n);
            prop_assert!(s.test_rows.iter().all(|i| (i + 1) % k == 0));
            prop_assert!(s.train_rows.iter().all(|i| (i + 1) % k != 0));
        }
    }
}
