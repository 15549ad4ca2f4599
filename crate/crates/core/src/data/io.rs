//! Delimiter-separated observation files.
//!
//! One row per observation: `identity, emotion_label, θ₁ … θ_p, c₁ … c_d`.
//! A header row is required; the emotion columns are the run of columns after
//! the label whose names start with `theta`. The delimiter is a comma unless
//! the header line contains tabs and no commas.

use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::Path;

use super::{EmotionPoint, Identity, LandmarkVector, Observation, TrajectoryDataset};
use crate::error::{Result, VitlError};

fn data_err(msg: impl Into<String>) -> VitlError {
    VitlError::Data(msg.into())
}

/// Column layout recovered from a header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub p: usize,
    pub d: usize,
    pub delimiter: u8,
}

impl Layout {
    pub fn width(&self) -> usize {
        2 + self.p + self.d
    }
}

/// One parsed row.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub identity: String,
    pub label: String,
    pub theta: Vec<f64>,
    pub landmarks: Vec<f64>,
    /// 1-based line number in the source.
    pub line: u64,
}

impl Record {
    pub fn emotion(&self) -> Result<EmotionPoint> {
        if self.label.is_empty() {
            EmotionPoint::new(self.theta.clone())
        } else {
            EmotionPoint::labeled(self.label.clone(), self.theta.clone())
        }
    }
}

/// Streaming reader over observation or query rows.
pub struct RecordReader<R: Read> {
    inner: csv::Reader<std::io::Chain<Cursor<Vec<u8>>, BufReader<R>>>,
    layout: Layout,
    record: csv::StringRecord,
}

impl<R: Read> RecordReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut buf = BufReader::new(reader);
        let mut first = Vec::new();
        buf.read_until(b'\n', &mut first)?;
        let delimiter = if first.contains(&b'\t') && !first.contains(&b',') { b'\t' } else { b',' };
        let mut inner = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(Cursor::new(first).chain(buf));
        let header = inner.headers().map_err(|e| data_err(format!("line 1: {e}")))?.clone();
        if header.is_empty() || header.iter().all(str::is_empty) {
            return Err(data_err("missing header row"));
        }
        let p = header
            .iter()
            .skip(2)
            .take_while(|name| name.to_ascii_lowercase().starts_with("theta"))
            .count();
        if header.len() < 4 || p == 0 {
            return Err(data_err(
                "header must be: identity, emotion, theta columns (at least one), landmark columns (at least one)",
            ));
        }
        let d = header.len() - 2 - p;
        if d == 0 {
            return Err(data_err("header has no landmark columns"));
        }
        Ok(Self { inner, layout: Layout { p, d, delimiter }, record: csv::StringRecord::new() })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Next row, or `None` at end of input.
    pub fn next_record(&mut self) -> Option<Result<Record>> {
        match self.inner.read_record(&mut self.record) {
            Ok(false) => None,
            Ok(true) => Some(self.parse_current()),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Some(Err(data_err(format!("line {line}: {e}"))))
            }
        }
    }

    fn parse_current(&self) -> Result<Record> {
        let rec = &self.record;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let width = self.layout.width();
        if rec.len() != width {
            return Err(data_err(format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        let identity = rec[0].to_string();
        if identity.is_empty() {
            return Err(data_err(format!("line {line}: empty identity")));
        }
        let mut values = Vec::with_capacity(width - 2);
        for (k, field) in rec.iter().enumerate().skip(2) {
            let v: f64 = field
                .parse()
                .map_err(|_| data_err(format!("line {line}: column {} ('{field}') is not a number", k + 1)))?;
            if !v.is_finite() {
                return Err(data_err(format!("line {line}: column {} is not finite", k + 1)));
            }
            values.push(v);
        }
        let landmarks = values.split_off(self.layout.p);
        Ok(Record { identity, label: rec[1].to_string(), theta: values, landmarks, line })
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record()
    }
}

/// Reads a whole observation file, grouping rows by identity in order of first
/// appearance and keeping each identity's rows in file order.
pub fn read_dataset(reader: impl Read) -> Result<TrajectoryDataset> {
    let mut identities: Vec<Identity> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for rec in RecordReader::new(reader)? {
        let rec = rec?;
        let obs = Observation {
            emotion: rec.emotion().map_err(|e| data_err(format!("line {}: {e}", rec.line)))?,
            landmarks: LandmarkVector::new(rec.landmarks).map_err(|e| data_err(format!("line {}: {e}", rec.line)))?,
        };
        let slot = *index.entry(rec.identity.clone()).or_insert_with(|| {
            identities.push(Identity { id: rec.identity.clone(), observations: Vec::new() });
            identities.len() - 1
        });
        identities[slot].observations.push(obs);
    }
    if identities.is_empty() {
        return Err(data_err("dataset file has no observations"));
    }
    TrajectoryDataset::new(identities)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| data_err(format!("cannot open dataset {}: {e}", path.display())))?;
    read_dataset(file)
}

/// Rows of a bare landmark file: a header line, then `d` numbers per row.
pub fn read_landmarks(reader: impl Read) -> Result<Vec<LandmarkVector>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let d = rdr.headers().map_err(|e| data_err(format!("line 1: {e}")))?.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let values = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| data_err(format!("line {line}: '{f}' is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d {
            return Err(data_err(format!("line {line}: expected {d} fields, found {}", values.len())));
        }
        out.push(LandmarkVector::new(values).map_err(|e| data_err(format!("line {line}: {e}")))?);
    }
    Ok(out)
}

/// Landmark column names: `x1,y1,…` for even `d`, `c1,…` otherwise.
pub fn landmark_columns(d: usize) -> Vec<String> {
    if d % 2 == 0 {
        (1..=d / 2).flat_map(|k| [format!("x{k}"), format!("y{k}")]).collect()
    } else {
        (1..=d).map(|k| format!("c{k}")).collect()
    }
}

pub fn theta_columns(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("theta{k}")).collect()
}

pub fn observation_header(p: usize, d: usize) -> Vec<String> {
    let mut h = vec!["identity".to_string(), "emotion".to_string()];
    h.extend(theta_columns(p));
    h.extend(landmark_columns(d));
    h
}

/// Shortest decimal text that parses back to `v`; scientific notation outside
/// `[1e-4, 1e15)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a dataset in the format read by [`read_dataset`]. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_dataset(data: &TrajectoryDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| VitlError::Io(std::io::Error::other(e));
    w.write_record(observation_header(data.p(), data.d())).map_err(io)?;
    for ident in data.identities() {
        for obs in &ident.observations {
            let mut row = vec![ident.id.clone(), obs.emotion.label().unwrap_or("").to_string()];
            row.extend(obs.emotion.coords().iter().map(|&v| format_float(v)));
            row.extend(obs.landmarks.as_slice().iter().map(|&v| format_float(v)));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;

    #[test]
    fn round_trip_through_text() {
        let data = toy(3, 4, 6);
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-300, 5e-324, 123456.789, 1e15, -2.5e-5, f64::MAX, 1.0 / 3.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            assert!(s.len() < 26, "{s}");
        }
    }

    #[test]
    fn tab_delimited_and_scientific_notation() {
        let text = "id\temo\ttheta_v\ttheta_a\tx1\ty1\na\tneutral\t0\t0\t1e-3\t2.5E1\n";
        let data = read_dataset(text.as_bytes()).unwrap();
        assert_eq!((data.n(), data.m(), data.p(), data.d()), (1, 1, 2, 2));
        assert_eq!(data.identities()[0].observations[0].landmarks.as_slice(), &[1e-3, 25.0]);
    }

    #[test]
    fn field_count_errors_name_the_line() {
        let text = "identity,emotion,theta1,x1\na,neutral,0,1\na,happy,1\n";
        let err = read_dataset(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "",
            "identity,emotion,x1,y1\na,n,1,2\n",
            "identity,emotion,theta1\na,n,1\n",
            "identity,emotion,theta1,x1\n",
            "identity,emotion,theta1,x1\na,n,0,nan\n",
            "identity,emotion,theta1,x1\na,n,0,abc\n",
            "identity,emotion,theta1,x1\n,n,0,1\n",
        ] {
            assert!(read_dataset(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn bare_landmark_rows() {
        let rows = read_landmarks("x1,y1\n1,2\n3,4e-1\n".as_bytes()).unwrap();
        assert_eq!(rows[1].as_slice(), &[3.0, 0.4]);
        assert!(read_landmarks("x1,y1\n1\n".as_bytes()).is_err());
        assert!(read_landmarks("x1,y1\n1,inf\n".as_bytes()).is_err());
        assert!(read_landmarks("x1\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn streaming_reader_reports_layout() {
        let text = "identity,emotion,theta1,theta2,x1,y1,x2,y2\nq,happy,0.5,0.5,1,2,3,4\nq,happy,0.5,0.5,1,2,3,4\n";
        let mut r = RecordReader::new(text.as_bytes()).unwrap();
        assert_eq!(r.layout().p, 2);
        assert_eq!(r.layout().d, 4);
        let a = r.next_record().unwrap().unwrap();
        let b = r.next_record().unwrap().unwrap();
        assert_eq!(a.landmarks, b.landmarks);
        assert_eq!((a.line, b.line), (2, 3));
        assert!(r.next_record().is_none());
    }
}
