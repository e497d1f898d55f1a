use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sosc_core::Frame;

use crate::generate::LabeledStream;
use crate::{BenchError, Result};

/// Affine frame `x ↦ A·x + b` with `A` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDoc {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FrameDoc {
    pub fn from_frame(f: &Frame) -> Self {
        FrameDoc { a: f.rotation().transpose().as_slice().to_vec(), b: f.offset().as_slice().to_vec() }
    }

    pub fn to_frame(&self) -> sosc_core::Result<Frame> {
        let d = self.b.len();
        if self.a.len() != d * d {
            return Err(sosc_core::Error::DimensionMismatch { expected: d * d, got: self.a.len() });
        }
        Frame::new(DMatrix::from_row_slice(d, d, &self.a), DVector::from_column_slice(&self.b))
    }
}

/// One line of a stream file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: usize,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    /// Sequence (demonstration) id; a change closes the running dwell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<FrameDoc>>,
}

impl Record {
    pub fn point(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

impl From<&LabeledStream> for Vec<Record> {
    fn from(s: &LabeledStream) -> Self {
        s.points
            .iter()
            .zip(&s.labels)
            .zip(&s.stages)
            .enumerate()
            .map(|(t, ((x, &label), &stage))| Record {
                t,
                x: x.as_slice().to_vec(),
                label: Some(label),
                stage: Some(stage),
                seq: None,
                frames: None,
            })
            .collect()
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| BenchError::Parse { line: r.t + 1, message: e.to_string() })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses one record per nonblank line; all points must share a dimension
/// and be finite.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    let mut dim = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| BenchError::Parse { line: i + 1, message };
        let rec: Record = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if rec.x.is_empty() {
            return Err(err("empty point".into()));
        }
        if rec.x.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite coordinate".into()));
        }
        match dim {
            None => dim = Some(rec.x.len()),
            Some(d) if d != rec.x.len() => return Err(err(format!("expected {d} coordinates, got {}", rec.x.len()))),
            Some(_) => {}
        }
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorSpec};

    #[test]
    fn roundtrip_is_exact() {
        let s = generate(&GeneratorSpec::stationary(3, 300, 5).unwrap()).unwrap();
        let records: Vec<Record> = (&s).into();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "{\"t\":0,\"x\":[1.0,2.0]}\n\n{\"t\":1,\"x\":[1.0]}\n";
        match read_jsonl(text.as_bytes()) {
            Err(BenchError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_jsonl("{\"t\":0,\"x\":[1.0,".as_bytes()), Err(BenchError::Parse { line: 1, .. })));
    }
}
