use sosc_bench::reaching::{joint, ReachingTask};
use sosc_bench::{generate, GeneratorSpec, Record};

use crate::error::Result;

/// Built-in stream generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Four clusters in 3-D, then flipped dimensions, then two more clusters.
    Nonstationary,
    /// Four clusters in `dim` dimensions.
    Stationary,
    /// Reaching demonstrations in the joint `[x; x]` space, one `seq` each.
    ReachingDemos,
    /// One noisy operator reach in the plane.
    ReachingOperator,
}

/// Knobs that only some presets read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetOptions {
    pub dim: usize,
    pub length: usize,
    pub demos: usize,
    pub noise_sd: f64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { dim: 10, length: 2000, demos: 6, noise_sd: 0.05 }
    }
}

/// Records of the preset together with the generator spec, when the preset
/// has one.
pub fn generate_preset(preset: Preset, seed: u64, opts: PresetOptions) -> Result<(Vec<Record>, Option<GeneratorSpec>)> {
    let from_spec = |spec: GeneratorSpec| -> Result<(Vec<Record>, Option<GeneratorSpec>)> {
        let stream = generate(&spec)?;
        Ok((Vec::from(&stream), Some(spec)))
    };
    match preset {
        Preset::Nonstationary => from_spec(GeneratorSpec::nonstationary(seed)?),
        Preset::Stationary => from_spec(GeneratorSpec::stationary(opts.dim, opts.length, seed)?),
        Preset::ReachingDemos => {
            let demos = ReachingTask::default().demonstrations(opts.demos, seed);
            let records = demos
                .iter()
                .enumerate()
                .flat_map(|(seq, path)| path.iter().map(move |x| (seq, x)))
                .enumerate()
                .map(|(t, (seq, x))| plain_record(t, joint(x).as_slice().to_vec(), Some(seq)))
                .collect();
            Ok((records, None))
        }
        Preset::ReachingOperator => {
            let path = ReachingTask::default().operator(opts.noise_sd, seed);
            let records = path.iter().enumerate().map(|(t, x)| plain_record(t, x.as_slice().to_vec(), None)).collect();
            Ok((records, None))
        }
    }
}

fn plain_record(t: usize, x: Vec<f64>, seq: Option<usize>) -> Record {
    Record { t, x, label: None, stage: None, seq, frames: None }
}
