//! Streaming readers and writers for the integer CSV inputs.
//!
//! Every file starts with a fixed header. Lines beginning with `#` and blank
//! lines are skipped. Malformed data lines are counted and skipped; the read
//! fails once more than 1% of data lines (and more than one line) are bad.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use crate::error::{RecpError, Result};

use super::{CheckinRecord, LabelRecord, PoiRecord, TripRecord};

pub const TRIPS_HEADER: &[&str] = &["origin", "dest", "hour"];
pub const POIS_HEADER: &[&str] = &["region", "category"];
pub const CHECKINS_HEADER: &[&str] = &["region", "count"];
pub const REGIONS_HEADER: &[&str] = &["region", "district"];
pub const LABELS_HEADER: &[&str] = &["region", "function"];

/// A record type with a fixed CSV layout of unsigned integer fields.
pub trait CsvRecord: Sized {
    const HEADER: &'static [&'static str];
    fn from_fields(fields: &[u64]) -> Option<Self>;
    fn to_fields(&self) -> Vec<u64>;
}

impl CsvRecord for TripRecord {
    const HEADER: &'static [&'static str] = TRIPS_HEADER;
    fn from_fields(f: &[u64]) -> Option<Self> {
        Some(TripRecord {
            origin: usize::try_from(f[0]).ok()?,
            dest: usize::try_from(f[1]).ok()?,
            hour: usize::try_from(f[2]).ok()?,
        })
    }
    fn to_fields(&self) -> Vec<u64> {
        vec![self.origin as u64, self.dest as u64, self.hour as u64]
    }
}

impl CsvRecord for PoiRecord {
    const HEADER: &'static [&'static str] = POIS_HEADER;
    fn from_fields(f: &[u64]) -> Option<Self> {
        Some(PoiRecord {
            region: usize::try_from(f[0]).ok()?,
            category: usize::try_from(f[1]).ok()?,
        })
    }
    fn to_fields(&self) -> Vec<u64> {
        vec![self.region as u64, self.category as u64]
    }
}

impl CsvRecord for CheckinRecord {
    const HEADER: &'static [&'static str] = CHECKINS_HEADER;
    fn from_fields(f: &[u64]) -> Option<Self> {
        Some(CheckinRecord {
            region: usize::try_from(f[0]).ok()?,
            count: f[1],
        })
    }
    fn to_fields(&self) -> Vec<u64> {
        vec![self.region as u64, self.count]
    }
}

/// Streaming reader yielding `(line_number, record)` pairs.
pub struct CsvReader<R: BufRead, T: CsvRecord> {
    path: PathBuf,
    lines: Lines<R>,
    line_no: usize,
    header: Vec<String>,
    data_lines: usize,
    malformed: usize,
    finished: bool,
    _record: PhantomData<T>,
}

impl<T: CsvRecord> CsvReader<BufReader<File>, T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| RecpError::io(path, e))?;
        Self::from_reader(path, BufReader::new(file), T::HEADER)
    }
}

impl<R: BufRead, T: CsvRecord> CsvReader<R, T> {
    /// Reads the header and checks it against one of `accepted` header sets.
    pub fn from_reader(path: impl Into<PathBuf>, reader: R, expected: &[&str]) -> Result<Self> {
        Self::with_headers(path, reader, &[expected])
    }

    pub fn with_headers(path: impl Into<PathBuf>, reader: R, accepted: &[&[&str]]) -> Result<Self> {
        let path = path.into();
        let mut lines = reader.lines();
        let mut line_no = 0;
        let header = loop {
            line_no += 1;
            match lines.next() {
                None => {
                    return Err(RecpError::Ingest {
                        path,
                        line: line_no,
                        msg: format!("missing header, expected `{}`", accepted[0].join(",")),
                    })
                }
                Some(Err(e)) => return Err(RecpError::io(path, e)),
                Some(Ok(l)) => {
                    let t = l.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    break t.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
                }
            }
        };
        if !accepted
            .iter()
            .any(|h| h.len() == header.len() && h.iter().zip(&header).all(|(a, b)| *a == b))
        {
            return Err(RecpError::Ingest {
                path,
                line: line_no,
                msg: format!(
                    "header mismatch: expected `{}`, found `{}`",
                    accepted[0].join(","),
                    header.join(",")
                ),
            });
        }
        Ok(CsvReader {
            path,
            lines,
            line_no,
            header,
            data_lines: 0,
            malformed: 0,
            finished: false,
            _record: PhantomData,
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn malformed(&self) -> usize {
        self.malformed
    }

    pub fn data_lines(&self) -> usize {
        self.data_lines
    }

    fn parse(line: &str) -> Option<T> {
        let mut fields = Vec::with_capacity(T::HEADER.len());
        for f in line.split(',') {
            fields.push(f.trim().parse::<u64>().ok()?);
        }
        if fields.len() != T::HEADER.len() {
            return None;
        }
        T::from_fields(&fields)
    }

    fn finish(&mut self) -> Option<Result<(usize, T)>> {
        self.finished = true;
        if self.malformed == 0 {
            return None;
        }
        let tolerated = 1.max(self.data_lines / 100);
        if self.malformed > tolerated {
            return Some(Err(RecpError::TooManyMalformed {
                path: self.path.clone(),
                malformed: self.malformed,
                total: self.data_lines,
            }));
        }
        log::warn!(
            "{}: skipped {} malformed of {} data lines",
            self.path.display(),
            self.malformed,
            self.data_lines
        );
        None
    }
}

impl<R: BufRead, T: CsvRecord> Iterator for CsvReader<R, T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            self.line_no += 1;
            let line = match self.lines.next() {
                None => return self.finish(),
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(RecpError::io(self.path.clone(), e)));
                }
                Some(Ok(l)) => l,
            };
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.data_lines += 1;
            match Self::parse(t) {
                Some(rec) => return Some(Ok((self.line_no, rec))),
                None => {
                    log::debug!("{}:{}: malformed line `{t}`", self.path.display(), self.line_no);
                    self.malformed += 1;
                }
            }
        }
    }
}

fn collect<T: CsvRecord>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    CsvReader::<_, T>::open(path)?
        .map(|r| r.map(|(_, rec)| rec))
        .collect()
}

pub fn load_csv_trips(path: impl AsRef<Path>) -> Result<Vec<TripRecord>> {
    collect(path)
}

pub fn load_csv_pois(path: impl AsRef<Path>) -> Result<Vec<PoiRecord>> {
    collect(path)
}

pub fn load_csv_checkins(path: impl AsRef<Path>) -> Result<Vec<CheckinRecord>> {
    collect(path)
}

/// Ground-truth labels from a `region,district` or `region,function` file.
pub fn load_csv_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| RecpError::io(path, e))?;
    CsvReader::<_, LabelRecord>::with_headers(
        path,
        BufReader::new(file),
        &[REGIONS_HEADER, LABELS_HEADER],
    )?
    .map(|r| r.map(|(_, rec)| rec))
    .collect()
}

impl CsvRecord for LabelRecord {
    const HEADER: &'static [&'static str] = REGIONS_HEADER;
    fn from_fields(f: &[u64]) -> Option<Self> {
        Some(LabelRecord {
            region: usize::try_from(f[0]).ok()?,
            label: usize::try_from(f[1]).ok()?,
        })
    }
    fn to_fields(&self) -> Vec<u64> {
        vec![self.region as u64, self.label as u64]
    }
}

/// Writes `records` under `header` (which must have the record's arity).
pub fn write_csv<T: CsvRecord>(
    path: impl AsRef<Path>,
    header: &[&str],
    records: &[T],
) -> Result<()> {
    let path = path.as_ref();
    let io = |e| RecpError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in records {
        let fields: Vec<String> = r.to_fields().iter().map(u64::to_string).collect();
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read_trips(text: &str) -> Result<Vec<TripRecord>> {
        CsvReader::<_, TripRecord>::from_reader("mem.csv", Cursor::new(text.to_string()), TRIPS_HEADER)?
            .map(|r| r.map(|(_, t)| t))
            .collect()
    }

    #[test]
    fn header_only_gives_empty() {
        assert!(read_trips("origin,dest,hour\n").unwrap().is_empty());
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let t = read_trips("# generated\norigin,dest,hour\n\n# c\n0,1,2\n").unwrap();
        assert_eq!(
            t,
            vec![TripRecord {
                origin: 0,
                dest: 1,
                hour: 2
            }]
        );
    }

    #[test]
    fn one_bad_line_in_ten_tolerated() {
        let mut s = String::from("origin,dest,hour\n");
        for i in 0..9 {
            s.push_str(&format!("{i},0,1\n"));
        }
        s.push_str("x,0,1\n");
        assert_eq!(read_trips(&s).unwrap().len(), 9);
    }

    #[test]
    fn many_bad_lines_fail() {
        let mut s = String::from("origin,dest,hour\n");
        for i in 0..100 {
            s.push_str(&format!("{i},0,1\n"));
        }
        s.push_str("bad\n1,2\n-1,0,0\n");
        assert!(matches!(
            read_trips(&s),
            Err(RecpError::TooManyMalformed { malformed: 3, .. })
        ));
    }

    #[test]
    fn header_mismatch_reported() {
        let err = read_trips("from,to,hour\n0,1,2\n").unwrap_err();
        assert!(matches!(err, RecpError::Ingest { line: 1, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_missing_header() {
        assert!(matches!(read_trips(""), Err(RecpError::Ingest { .. })));
    }

    #[test]
    fn line_numbers_count_comments() {
        let rows: Vec<_> = CsvReader::<_, TripRecord>::from_reader(
            "mem.csv",
            Cursor::new("origin,dest,hour\n# x\n0,0,0\n".to_string()),
            TRIPS_HEADER,
        )
        .unwrap()
        .collect::<Result<_>>()
        .unwrap();
        assert_eq!(rows[0].0, 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv_trips("/nonexistent/trips.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/trips.csv"));
        assert_eq!(err.exit_code(), 2);
    }
}
