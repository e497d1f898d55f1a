use std::io::Write;

use sosc_bench::Record;
use sosc_core::persist::AnyModel;
use sosc_core::{Hyperparams, SoscModel, StepReport, TpSoscModel};

use super::{check_dim, record_frames};
use crate::error::Result;

/// A fresh model: task-parameterized when `frames` is given.
pub fn new_model(dim: usize, hp: Hyperparams, frames: Option<usize>) -> Result<AnyModel> {
    Ok(match frames {
        None => AnyModel::Plain(SoscModel::new(dim, hp)?),
        Some(p) => AnyModel::Tp(TpSoscModel::new(dim, p, hp)?),
    })
}

/// Feeds `records` to `model` in order.
///
/// Records carrying `seq` are grouped into sequences: a change of `seq`
/// closes the running sequence, and so does the end of the input when the
/// last record carries one.
pub fn fit_records(model: &mut AnyModel, records: &[Record]) -> Result<Vec<StepReport>> {
    let dim = model.dim();
    let mut reports = Vec::with_capacity(records.len());
    let mut prev_seq: Option<usize> = None;
    for rec in records {
        if let (Some(prev), Some(cur)) = (prev_seq, rec.seq) {
            if prev != cur {
                end_sequence(model);
            }
        }
        prev_seq = rec.seq;
        let xi = rec.point();
        check_dim(&xi, dim)?;
        let report = match model {
            AnyModel::Plain(m) => m.observe(&xi)?,
            AnyModel::Tp(m) => {
                let frames = record_frames(rec, m.frame_count())?;
                m.observe(&xi, &frames)?
            }
        };
        reports.push(report);
    }
    if prev_seq.is_some() {
        end_sequence(model);
    }
    Ok(reports)
}

fn end_sequence(model: &mut AnyModel) {
    match model {
        AnyModel::Plain(m) => m.end_sequence(),
        AnyModel::Tp(m) => m.end_sequence(),
    }
}

/// CSV with one row per step: `t, z, K, d_z, loss, s`.
pub fn write_fit_log<W: Write>(out: W, reports: &[StepReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "z", "K", "d_z", "loss", "s"])?;
    for r in reports {
        w.write_record([
            r.t.to_string(),
            r.z.to_string(),
            r.k.to_string(),
            r.dim.to_string(),
            r.loss_after.to_string(),
            r.s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
