//! Verbs of the `sosc` binary.

mod control;
mod eval;
mod fit;
mod generate;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use sosc_bench::{read_jsonl, Record};
use sosc_core::persist::{load_any, AnyModel};
use sosc_core::{DVector, Frame};

pub use control::{
    combine_frames, plan, shared_control, write_plan_csv, write_shared_csv, CombinedDoc, PlanRun, SharedStep,
};
pub use eval::{evaluate, spec_means, truth_means, Metrics};
pub use fit::{fit_records, new_model, write_fit_log};
pub use generate::{generate_preset, Preset, PresetOptions};

use crate::error::{CliError, Result};

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_jsonl(BufReader::new(file))?)
}

pub fn read_model(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(load_any(&text)?)
}

pub fn write_model(path: &Path, model: &AnyModel) -> Result<()> {
    write_text(path, &model.to_json())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Frames attached to a record, checked against the model's frame count.
pub fn record_frames(record: &Record, expected: usize) -> Result<Vec<Frame>> {
    let docs = record.frames.as_ref().ok_or_else(|| CliError::Data(format!("record t={} has no frames", record.t)))?;
    if docs.len() != expected {
        return Err(sosc_core::Error::FrameCount { expected, got: docs.len() }.into());
    }
    Ok(docs.iter().map(|d| d.to_frame()).collect::<sosc_core::Result<_>>()?)
}

/// Frames read from a JSON array of `{a, b}` documents.
pub fn read_frames(path: &Path) -> Result<Vec<Frame>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let docs: Vec<sosc_bench::stream_io::FrameDoc> = serde_json::from_str(&text)?;
    Ok(docs.iter().map(|d| d.to_frame()).collect::<sosc_core::Result<_>>()?)
}

pub(crate) fn check_dim(x: &DVector<f64>, expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(sosc_core::Error::DimensionMismatch { expected, got: x.len() }.into());
    }
    Ok(())
}
