use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sosc_bench::{mean_match_error, nmi, silhouette, GeneratorSpec, Record};
use sosc_core::persist::AnyModel;
use sosc_core::DVector;

use super::{check_dim, record_frames};
use crate::error::{CliError, Result};

/// Clustering quality of a model on a labelled stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Silhouette of the decoded labels; absent with fewer than two
    /// decoded clusters.
    #[serde(rename = "SS")]
    pub ss: Option<f64>,
    /// Absent when the records carry no labels.
    #[serde(rename = "NMI")]
    pub nmi: Option<f64>,
    /// Absent without ground-truth centers.
    pub mean_match_error: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean_dim: f64,
    pub wall_time_s: f64,
}

/// Per-label sample means, ordered by label.
pub fn truth_means(records: &[Record]) -> Option<Vec<DVector<f64>>> {
    let mut sums: BTreeMap<usize, (DVector<f64>, usize)> = BTreeMap::new();
    for r in records {
        let label = r.label?;
        let x = r.point();
        let e = sums.entry(label).or_insert_with(|| (DVector::zeros(x.len()), 0));
        e.0 += x;
        e.1 += 1;
    }
    Some(sums.into_values().map(|(s, n)| s / n as f64).collect())
}

/// Centers of the clusters active at the end of a generated stream.
pub fn spec_means(spec: &GeneratorSpec) -> Vec<DVector<f64>> {
    spec.final_clusters().iter().map(|c| c.center()).collect()
}

/// Decodes every record to its nearest subspace and scores the result.
///
/// Task-parameterized models decode each record under its own frames and
/// report centers and dimensions under the frames of the first record.
pub fn evaluate(model: &AnyModel, records: &[Record], truth: Option<&[DVector<f64>]>) -> Result<Metrics> {
    if records.is_empty() {
        return Err(CliError::Data("no records to evaluate".into()));
    }
    let start = Instant::now();
    let points: Vec<DVector<f64>> = records.iter().map(Record::point).collect();
    for x in &points {
        check_dim(x, model.dim())?;
    }
    let (decoded, means, dims) = match model {
        AnyModel::Plain(m) => {
            let decoded = points.iter().map(|x| m.nearest(x)).collect::<sosc_core::Result<Vec<_>>>()?;
            let means = m.clusters().iter().map(|c| c.mean().clone()).collect::<Vec<_>>();
            let dims = m.clusters().iter().map(|c| c.dim()).collect::<Vec<_>>();
            (decoded, means, dims)
        }
        AnyModel::Tp(m) => {
            let p = m.frame_count();
            let decoded = records
                .iter()
                .zip(&points)
                .map(|(r, x)| Ok(m.nearest(x, &record_frames(r, p)?)?))
                .collect::<Result<Vec<_>>>()?;
            let combined = m.combine(&record_frames(&records[0], p)?)?;
            let means = combined.iter().map(|c| c.gaussian.mean().clone()).collect();
            let dims = combined.iter().map(|c| c.dim).collect();
            (decoded, means, dims)
        }
    };
    let ss = match silhouette(&points, &decoded) {
        Ok(v) => Some(v),
        Err(_) if distinct(&decoded) < 2 => None,
        Err(e) => return Err(e.into()),
    };
    let truth_labels: Option<Vec<usize>> = records.iter().map(|r| r.label).collect();
    let nmi = truth_labels.map(|t| nmi(&t, &decoded)).transpose()?;
    let mean_match_error = truth.map(|t| mean_match_error(&means, t, model.hyperparams().lambda));
    let mean_dim = if dims.is_empty() { 0.0 } else { dims.iter().sum::<usize>() as f64 / dims.len() as f64 };
    Ok(Metrics { ss, nmi, mean_match_error, k: model.k(), mean_dim, wall_time_s: start.elapsed().as_secs_f64() })
}

fn distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}
