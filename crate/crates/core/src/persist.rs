//! Versioned JSON model files.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every parameter bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hsmm::{StreamCursor, TransitionCounts};
use crate::params::Hyperparams;
use crate::sosc::SoscModel;
use crate::subspace::{DurationStats, SubspaceCluster};
use crate::tp::{TpCluster, TpSoscModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DurDoc {
    mu: f64,
    sigma: f64,
    e: f64,
    n: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CursorDoc {
    t: u64,
    z: Option<usize>,
    s: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterDoc {
    id: usize,
    prior: f64,
    mean: Vec<f64>,
    /// Row-major `D × dim`.
    basis: Vec<f64>,
    eig_diag: Vec<f64>,
    dim: usize,
    weight: f64,
    avg_dist: Vec<Option<f64>>,
    dur: DurDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalDoc {
    mean: Vec<f64>,
    basis: Vec<f64>,
    eig_diag: Vec<f64>,
    dim: usize,
    avg_dist: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TpClusterDoc {
    id: usize,
    prior: f64,
    weight: f64,
    dur: DurDoc,
    locals: Vec<LocalDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc<C> {
    version: u32,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    hyperparams: Hyperparams,
    clusters: Vec<C>,
    counts: Vec<Vec<u64>>,
    cursor: CursorDoc,
    next_id: usize,
}

/// A model file of either flavour.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Plain(SoscModel),
    Tp(TpSoscModel),
}

impl AnyModel {
    pub fn dim(&self) -> usize {
        match self {
            AnyModel::Plain(m) => m.dim(),
            AnyModel::Tp(m) => m.dim(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AnyModel::Plain(m) => m.k(),
            AnyModel::Tp(m) => m.k(),
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        match self {
            AnyModel::Plain(m) => m.hyperparams(),
            AnyModel::Tp(m) => m.hyperparams(),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyModel::Plain(m) => save_json(m),
            AnyModel::Tp(m) => save_tp_json(m),
        }
    }
}

fn dur_doc(d: &DurationStats) -> DurDoc {
    DurDoc { mu: d.mu, sigma: d.sigma, e: d.e, n: d.n }
}

fn dur_from(d: DurDoc) -> Result<DurationStats> {
    if ![d.mu, d.sigma, d.e].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("duration statistics"));
    }
    if d.mu < 0.0 || d.sigma <= 0.0 || d.e < 0.0 {
        return Err(Error::Schema("duration statistics out of range".into()));
    }
    Ok(DurationStats { mu: d.mu, sigma: d.sigma, e: d.e, n: d.n })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn geometry_from(
    d: usize,
    mean: Vec<f64>,
    basis: Vec<f64>,
    eig: Vec<f64>,
    dim: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    if mean.len() != d {
        return Err(Error::Schema(format!("mean has {} entries, expected {d}", mean.len())));
    }
    if basis.len() != d * dim || eig.len() != dim {
        return Err(Error::Schema(format!("basis/eig_diag sizes do not match dim {dim}")));
    }
    if !mean.iter().chain(basis.iter()).chain(eig.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("cluster geometry"));
    }
    Ok((DVector::from_vec(mean), DMatrix::from_row_slice(d, dim, &basis), DVector::from_vec(eig)))
}

fn cursor_doc(c: &StreamCursor) -> CursorDoc {
    CursorDoc { t: c.t, z: c.z, s: c.s }
}

fn cursor_from(c: CursorDoc) -> StreamCursor {
    StreamCursor { t: c.t, z: c.z, s: c.s }
}

fn schema(e: serde_json::Error) -> Error {
    Error::Schema(e.to_string())
}

/// Serializes a model to its JSON document.
pub fn save_json(model: &SoscModel) -> String {
    let clusters = model
        .clusters()
        .iter()
        .map(|c| ClusterDoc {
            id: c.id(),
            prior: c.prior(),
            mean: c.mean().iter().cloned().collect(),
            basis: row_major(&c.basis()),
            eig_diag: c.eig_diag().iter().cloned().collect(),
            dim: c.dim(),
            weight: c.weight(),
            avg_dist: c.avg_dist().to_vec(),
            dur: dur_doc(c.duration()),
        })
        .collect();
    let doc = ModelDoc {
        version: FORMAT_VERSION,
        d: model.dim(),
        p: None,
        hyperparams: model.hyperparams().clone(),
        clusters,
        counts: model.counts().rows().to_vec(),
        cursor: cursor_doc(model.cursor()),
        next_id: model.next_id(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

/// Serializes a task-parameterized model.
pub fn save_tp_json(model: &TpSoscModel) -> String {
    let clusters = model
        .clusters()
        .iter()
        .map(|c| TpClusterDoc {
            id: c.id(),
            prior: c.prior(),
            weight: c.weight(),
            dur: dur_doc(c.duration()),
            locals: c
                .locals()
                .iter()
                .map(|l| LocalDoc {
                    mean: l.mean().iter().cloned().collect(),
                    basis: row_major(&l.basis()),
                    eig_diag: l.eig_diag().iter().cloned().collect(),
                    dim: l.dim(),
                    avg_dist: l.avg_dist().to_vec(),
                })
                .collect(),
        })
        .collect();
    let doc = ModelDoc {
        version: FORMAT_VERSION,
        d: model.dim(),
        p: Some(model.frame_count()),
        hyperparams: model.hyperparams().clone(),
        clusters,
        counts: model.counts().rows().to_vec(),
        cursor: cursor_doc(model.cursor()),
        next_id: model.next_id(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

fn check_version(value: &Value) -> Result<()> {
    let found = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Schema("missing or invalid version field".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::Version { found: found.min(u32::MAX as u64) as u32, expected: FORMAT_VERSION });
    }
    Ok(())
}

/// Parses either model flavour, dispatching on the presence of `P`.
pub fn load_any(text: &str) -> Result<AnyModel> {
    let value: Value = serde_json::from_str(text).map_err(schema)?;
    check_version(&value)?;
    if value.get("P").is_some() {
        Ok(AnyModel::Tp(tp_from_doc(serde_json::from_value(value).map_err(schema)?)?))
    } else {
        Ok(AnyModel::Plain(plain_from_doc(serde_json::from_value(value).map_err(schema)?)?))
    }
}

/// Parses a plain model document.
pub fn load_json(text: &str) -> Result<SoscModel> {
    match load_any(text)? {
        AnyModel::Plain(m) => Ok(m),
        AnyModel::Tp(_) => Err(Error::Schema("expected a model without frames".into())),
    }
}

/// Parses a task-parameterized model document.
pub fn load_tp_json(text: &str) -> Result<TpSoscModel> {
    match load_any(text)? {
        AnyModel::Tp(m) => Ok(m),
        AnyModel::Plain(_) => Err(Error::Schema("expected a task-parameterized model".into())),
    }
}

fn plain_from_doc(doc: ModelDoc<ClusterDoc>) -> Result<SoscModel> {
    let d = doc.d;
    let clusters = doc
        .clusters
        .into_iter()
        .map(|c| {
            let (mean, basis, eig) = geometry_from(d, c.mean, c.basis, c.eig_diag, c.dim)?;
            SubspaceCluster::from_parts(c.id, c.prior, mean, basis, eig, c.weight, c.avg_dist, dur_from(c.dur)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = TransitionCounts::from_rows(doc.counts)?;
    SoscModel::from_parts(d, doc.hyperparams, clusters, counts, cursor_from(doc.cursor), doc.next_id)
}

fn tp_from_doc(doc: ModelDoc<TpClusterDoc>) -> Result<TpSoscModel> {
    let d = doc.d;
    let p = doc.p.ok_or_else(|| Error::Schema("missing frame count".into()))?;
    let clusters = doc
        .clusters
        .into_iter()
        .map(|c| {
            let dur = dur_from(c.dur)?;
            let locals = c
                .locals
                .into_iter()
                .map(|l| {
                    let (mean, basis, eig) = geometry_from(d, l.mean, l.basis, l.eig_diag, l.dim)?;
                    SubspaceCluster::from_parts(c.id, c.prior, mean, basis, eig, c.weight, l.avg_dist, dur.clone())
                })
                .collect::<Result<Vec<_>>>()?;
            TpCluster::from_parts(c.id, c.prior, c.weight, dur, locals)
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = TransitionCounts::from_rows(doc.counts)?;
    TpSoscModel::from_parts(d, p, doc.hyperparams, clusters, counts, cursor_from(doc.cursor), doc.next_id)
}
