//! Scripted comparisons at desk scale: sampling strategies, samples per ray, number of
//! training views, and robustness to depth noise.
//!
//! Every run writes its resolved configuration and scores into its own directory under
//! the experiment output directory; the experiment writes `result.json` and `table.txt`.

use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate, Dataset, GenerateConfig, Split};
use crate::error::{Error, Result};
use crate::metrics::{score_table, EvalReport, Scores};
use crate::sampling::Strategy;
use crate::training::{evaluate, train, EpochSummary, Recorder, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Uniform, stratified local, Gaussian local and adaptive sampling at equal budget.
    Sampling,
    /// Samples per ray.
    SampleCount,
    /// Number of training views, scored on held-out views.
    ViewCount,
    /// Clean against inverse-depth-noisy supervision.
    Noise,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Sampling, Experiment::SampleCount, Experiment::ViewCount, Experiment::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sampling => "sampling",
            Experiment::SampleCount => "sample-count",
            Experiment::ViewCount => "view-count",
            Experiment::Noise => "noise",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown experiment '{s}', expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub data: GenerateConfig,
    /// Keys given here override the training defaults.
    #[serde(deserialize_with = "partial_train")]
    pub train: TrainConfig,
    /// Render each run with its own training sampler, steered by the frame depth.
    pub eval_with_depth: bool,
    pub sample_counts: Vec<usize>,
    pub view_counts: Vec<usize>,
    /// Held-out views used by the view-count experiment.
    pub held_out_views: usize,
    pub noise_sigma: f64,
}

fn partial_train<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    let map = serde_json::Map::deserialize(d)?;
    TrainConfig::default().merged(&map).map_err(serde::de::Error::custom)
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            data: GenerateConfig::default(),
            train: TrainConfig::default(),
            eval_with_depth: true,
            sample_counts: vec![16, 64, 128],
            view_counts: vec![8, 30, 100],
            held_out_views: 4,
            noise_sigma: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub label: String,
    pub scores: Scores,
    pub train_seconds: f64,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub rows: Vec<RunRow>,
}

impl ExperimentResult {
    pub fn row(&self, label: &str) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<(String, Scores)> = self
            .rows
            .iter()
            .map(|r| (format!("{} ({:.0}s)", r.label, r.train_seconds), r.scores.clone()))
            .collect();
        score_table(&rows)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::data(path, format!("cannot write: {e}")))
}

/// Trains and scores one configuration, leaving its artifacts in `dir`.
pub fn run_single(label: &str, ds: &Dataset, cfg: &TrainConfig, eval_with_depth: bool, dir: &Path) -> Result<RunRow> {
    fs::create_dir_all(dir).map_err(|e| Error::data(dir, format!("cannot create: {e}")))?;
    write_json(&dir.join("config.json"), cfg)?;
    log::info!("run {label}: training");
    let mut rec = Recorder::default();
    let start = Instant::now();
    let state = train(ds, cfg, None, &mut rec)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let mut frames = ds.split_indices(Split::Test);
    if frames.is_empty() {
        frames = ds.split_indices(Split::Train);
    }
    let (report, _) = evaluate(&state.params, ds, cfg, &frames, eval_with_depth)?;
    write_json(&dir.join("scores.json"), &report)?;
    Ok(RunRow {
        label: label.to_string(),
        scores: report.mean,
        train_seconds,
        epochs: rec.epochs,
    })
}

fn resolved(settings: &ExperimentSettings, ds: &Dataset) -> TrainConfig {
    let mut cfg = settings.train.clone();
    cfg.sampler.global_near = ds.near;
    cfg.sampler.global_far = ds.far;
    cfg
}

pub fn run(experiment: Experiment, settings: &ExperimentSettings, out: &Path) -> Result<ExperimentResult> {
    fs::create_dir_all(out).map_err(|e| Error::data(out, format!("cannot create: {e}")))?;
    write_json(&out.join("settings.json"), settings)?;
    let mut rows = Vec::new();
    match experiment {
        Experiment::Sampling => {
            let ds = generate(&settings.data)?;
            for strategy in Strategy::ALL {
                let mut cfg = resolved(settings, &ds);
                cfg.sampler.strategy = strategy;
                rows.push(run_single(strategy.name(), &ds, &cfg, settings.eval_with_depth, &out.join(strategy.name()))?);
            }
        }
        Experiment::SampleCount => {
            let ds = generate(&settings.data)?;
            for &n in &settings.sample_counts {
                let mut cfg = resolved(settings, &ds);
                cfg.sampler.n_samples = n;
                let label = format!("{n} samples");
                rows.push(run_single(&label, &ds, &cfg, settings.eval_with_depth, &out.join(format!("samples_{n}")))?);
            }
        }
        Experiment::ViewCount => {
            for &views in &settings.view_counts {
                let ds = generate(&GenerateConfig {
                    views,
                    test_views: settings.held_out_views.max(1),
                    ..settings.data.clone()
                })?;
                let cfg = resolved(settings, &ds);
                let label = format!("{views} views");
                rows.push(run_single(&label, &ds, &cfg, settings.eval_with_depth, &out.join(format!("views_{views}")))?);
            }
        }
        Experiment::Noise => {
            for (label, sigma) in [("clean", 0.0), ("noisy", settings.noise_sigma)] {
                let ds = generate(&GenerateConfig {
                    noise_sigma: sigma,
                    ..settings.data.clone()
                })?;
                let cfg = resolved(settings, &ds);
                rows.push(run_single(label, &ds, &cfg, settings.eval_with_depth, &out.join(label))?);
            }
        }
    }
    let result = ExperimentResult { experiment, rows };
    write_json(&out.join("result.json"), &result)?;
    fs::write(out.join("table.txt"), result.to_table())?;
    Ok(result)
}

/// Convenience wrapper returning the per-frame report of a single scored run.
pub fn load_scores(dir: &Path) -> Result<EvalReport> {
    let path = dir.join("scores.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::data(&path, format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::data(&path, format!("invalid scores: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingConfig;
    use crate::sampling::SamplerConfig;

    fn tiny() -> ExperimentSettings {
        ExperimentSettings {
            data: GenerateConfig {
                width: 12,
                height: 12,
                views: 2,
                ..GenerateConfig::default()
            },
            train: TrainConfig {
                epochs: 1,
                batch_rays: 64,
                hidden_width: 8,
                color_width: 4,
                sampler: SamplerConfig {
                    n_samples: 4,
                    ..SamplerConfig::default()
                },
                encoding: EncodingConfig {
                    ipe_bands: 2,
                    dir_bands: 1,
                    ..EncodingConfig::default()
                },
                ..TrainConfig::default()
            },
            sample_counts: vec![2, 4],
            view_counts: vec![1, 2],
            held_out_views: 1,
            ..ExperimentSettings::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("tables".parse::<Experiment>().is_err());
    }

    #[test]
    fn sampling_experiment_writes_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let result = run(Experiment::Sampling, &tiny(), dir.path()).unwrap();
        assert_eq!(result.rows.len(), 4);
        assert!(dir.path().join("result.json").exists());
        for s in Strategy::ALL {
            assert!(dir.path().join(s.name()).join("config.json").exists());
        }
    }

    #[test]
    fn zero_noise_matches_clean_run() {
        let dir = tempfile::tempdir().unwrap();
        let settings = ExperimentSettings {
            noise_sigma: 0.0,
            ..tiny()
        };
        let result = run(Experiment::Noise, &settings, dir.path()).unwrap();
        assert_eq!(result.rows[0].scores, result.rows[1].scores);
    }
}
