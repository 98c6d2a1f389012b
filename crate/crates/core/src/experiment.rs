//! Experiment runners behind the `mode` subcommands.
//!
//! Every runner takes an [`ExperimentConfig`] and writes its artifacts under
//! `output_dir` only. Split for a dataset of N days: the last day is served,
//! the day before it supplies validation and the previous-day history, and
//! the two days before the serving day are the training set.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, Dataset, GeneratorConfig};
use crate::error::{ModeError, Result};
use crate::evaluation::{EvalProtocol, EvalReport, LinearRate, Persistence};
use crate::model::{Head, MlpParams};
use crate::serving::{run_serving_day, ModeForecaster, ServingOutcome};
use crate::training::{train, TrainConfig, TrainOutcome};

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub protocol: EvalProtocol,
    /// Rates for the irregular-sampling sweep. Zero means the full dataset.
    pub missing_rates: Vec<f64>,
    pub missing_seed: u64,
    pub output_dir: PathBuf,
    /// Load this CSV instead of generating data.
    pub data_path: Option<PathBuf>,
    /// Lookback of the linear-rate baseline, in minutes.
    pub linear_window: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            train: TrainConfig::default(),
            protocol: EvalProtocol::default(),
            missing_rates: vec![0.0, 0.05, 0.1, 0.2, 0.3],
            missing_seed: 0,
            output_dir: PathBuf::from("out"),
            data_path: None,
            linear_window: LinearRate::default().window,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Missing fields take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ModeError::config("config", format!("cannot read {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.validate()?;
        self.protocol.validate()?;
        if let Some(r) = self.missing_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(ModeError::config("missing_rates", format!("{r} is outside [0, 1)")));
        }
        if self.linear_window == 0 {
            return Err(ModeError::config("linear_window", "must be at least 1"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ModeError::config("output_dir", "must not be empty"));
        }
        Ok(())
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        Ok(self.output_dir.join(name))
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data_path {
            Some(path) => Dataset::load_csv(path),
            None => gen_synthetic(&self.generator),
        }
    }
}

/// Day indices into a dataset for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub train: (usize, usize),
    pub validation: usize,
    pub serving: usize,
}

impl Split {
    pub fn for_days(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(ModeError::InsufficientHistory(format!(
                "need at least 2 days (training plus serving), got {n}"
            )));
        }
        let serving = n - 1;
        Ok(Self {
            train: (serving.saturating_sub(2), serving),
            validation: serving - 1,
            serving,
        })
    }

    pub fn train_set(&self, dataset: &Dataset) -> Dataset {
        dataset.subset(self.train.0..self.train.1)
    }

    pub fn validation_set(&self, dataset: &Dataset) -> Dataset {
        dataset.subset(self.validation..self.validation + 1)
    }
}

pub fn train_on(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let split = Split::for_days(dataset.len())?;
    train(&split.train_set(dataset), &split.validation_set(dataset), config)
}

/// Serving-day outcomes for MODE and the two baselines.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub mode: ServingOutcome,
    pub persistence: ServingOutcome,
    pub linear: ServingOutcome,
}

impl Comparison {
    pub fn reports(&self) -> [&EvalReport; 3] {
        [&self.mode.report, &self.persistence.report, &self.linear.report]
    }
}

pub fn serve(params: &MlpParams, dataset: &Dataset, config: &ExperimentConfig, name: &str) -> Result<ServingOutcome> {
    let split = Split::for_days(dataset.len())?;
    let forecaster = ModeForecaster::new(params.clone(), dataset.scale()).named(name);
    Ok(run_serving_day(
        &forecaster,
        dataset.day(split.serving),
        dataset.day(split.validation),
        &config.protocol,
        config.train.execution,
    ))
}

pub fn compare(params: &MlpParams, dataset: &Dataset, config: &ExperimentConfig) -> Result<Comparison> {
    let split = Split::for_days(dataset.len())?;
    let (day, prev) = (dataset.day(split.serving), dataset.day(split.validation));
    let execution = config.train.execution;
    let linear = LinearRate {
        window: config.linear_window,
    };
    Ok(Comparison {
        mode: serve(params, dataset, config, "mode")?,
        persistence: run_serving_day(&Persistence, day, prev, &config.protocol, execution),
        linear: run_serving_day(&linear, day, prev, &config.protocol, execution),
    })
}

fn write(config: &ExperimentConfig, name: &str, contents: &str) -> Result<PathBuf> {
    let path = config.out_path(name)?;
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn cmd_gen(config: &ExperimentConfig) -> Result<PathBuf> {
    let dataset = gen_synthetic(&config.generator)?;
    let path = config.out_path(DATASET_FILE)?;
    dataset.save_csv(&path)?;
    Ok(path)
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let dataset = config.dataset()?;
    let outcome = train_on(&dataset, &config.train)?;
    outcome.params.save_json(config.out_path(CHECKPOINT_FILE)?)?;
    write(config, HISTORY_FILE, &outcome.history_csv())?;
    Ok(outcome)
}

/// Serves the last day with MODE and both baselines. Uses the checkpoint in
/// `output_dir` when present, otherwise trains first.
pub fn cmd_eval(config: &ExperimentConfig, dump_forecasts: bool) -> Result<Comparison> {
    let dataset = config.dataset()?;
    let checkpoint = config.output_dir.join(CHECKPOINT_FILE);
    let params = if checkpoint.exists() {
        MlpParams::load_json(&checkpoint)?
    } else {
        cmd_train(config)?.params
    };
    let comparison = compare(&params, &dataset, config)?;
    let mut summary = String::from("model,interval,horizon,mean_mape,std_mape,n_requests\n");
    for outcome in [&comparison.mode, &comparison.persistence, &comparison.linear] {
        let report = &outcome.report;
        write(config, &format!("eval_{}.json", report.model), &report.to_json()?)?;
        write(config, &format!("eval_{}.csv", report.model), &report.to_csv())?;
        for c in &report.cells {
            summary.push_str(&format!(
                "{},{},{},{:?},{:?},{}\n",
                report.model, c.interval, c.horizon, c.mean_mape, c.std_mape, c.n_requests
            ));
        }
    }
    write(config, "eval_summary.csv", &summary)?;
    write(config, "latency_mode.csv", &comparison.mode.latency_csv())?;
    if dump_forecasts {
        write(config, "forecasts_mode.csv", &comparison.mode.forecasts_csv())?;
    }
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub missing_rate: f64,
    pub model: String,
    pub interval: String,
    pub horizon: u32,
    pub mean_mape: f64,
    pub std_mape: f64,
    pub n_requests: usize,
}

/// Train and serve once per missing rate. The mask covers every day,
/// including the serving day, whose missing minutes are not scored.
pub fn cmd_irregular_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let full = config.dataset()?;
    let mut rows = Vec::new();
    for &rate in &config.missing_rates {
        let dataset = if rate > 0.0 {
            full.apply_missing(rate, config.missing_seed)?
        } else {
            full.clone()
        };
        let outcome = train_on(&dataset, &config.train)?;
        let comparison = compare(&outcome.params, &dataset, config)?;
        for report in comparison.reports() {
            rows.extend(report.cells.iter().map(|c| SweepRow {
                missing_rate: rate,
                model: report.model.clone(),
                interval: c.interval.clone(),
                horizon: c.horizon,
                mean_mape: c.mean_mape,
                std_mape: c.std_mape,
                n_requests: c.n_requests,
            }));
        }
    }
    let mut csv = String::from("missing_rate,model,interval,horizon,mean_mape,std_mape,n_requests\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:?},{},{},{},{:?},{:?},{}\n",
            r.missing_rate, r.model, r.interval, r.horizon, r.mean_mape, r.std_mape, r.n_requests
        ));
    }
    write(config, "irregular_sweep.csv", &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub mode: ServingOutcome,
    /// MODE trained and served on days with a decreasing trend.
    pub without_di: ServingOutcome,
    /// Identity head in place of the ReLU head.
    pub without_mi: ServingOutcome,
}

impl Ablation {
    pub fn outcomes(&self) -> [&ServingOutcome; 3] {
        [&self.mode, &self.without_di, &self.without_mi]
    }
}

pub fn cmd_ablation(config: &ExperimentConfig) -> Result<Ablation> {
    let dataset = config.dataset()?;
    let mode = train_on(&dataset, &config.train)?;

    let decreasing = gen_synthetic(&GeneratorConfig {
        zeta_low: -10,
        zeta_high: -1,
        ..config.generator.clone()
    })?;
    let without_di = train_on(&decreasing, &config.train)?;

    let identity = TrainConfig {
        head: Head::Identity,
        ..config.train.clone()
    };
    let without_mi = train_on(&dataset, &identity)?;

    let ablation = Ablation {
        mode: serve(&mode.params, &dataset, config, "mode")?,
        without_di: serve(&without_di.params, &decreasing, config, "wo_di")?,
        without_mi: serve(&without_mi.params, &dataset, config, "wo_mi")?,
    };

    let mut csv = String::from("interval,horizon,mode,wo_di,wo_mi\n");
    for (i, c) in ablation.mode.report.cells.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{:?},{:?},{:?}\n",
            c.interval,
            c.horizon,
            c.mean_mape,
            ablation.without_di.report.cells[i].mean_mape,
            ablation.without_mi.report.cells[i].mean_mape
        ));
    }
    write(config, "ablation.csv", &csv)?;

    let mut counts = String::from("model,decreasing_forecasts,failures\n");
    for o in ablation.outcomes() {
        counts.push_str(&format!("{},{},{}\n", o.report.model, o.decreasing_forecasts(), o.failures.len()));
    }
    write(config, "ablation_monotonicity.csv", &counts)?;
    Ok(ablation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_uses_last_day_for_serving() {
        assert_eq!(
            Split::for_days(3).unwrap(),
            Split {
                train: (0, 2),
                validation: 1,
                serving: 2
            }
        );
        assert_eq!(Split::for_days(5).unwrap().train, (2, 4));
        assert_eq!(Split::for_days(2).unwrap().train, (0, 1));
        assert!(Split::for_days(1).is_err());
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"train": {"lr": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("lr"));

        let mut cfg = ExperimentConfig::default();
        cfg.missing_rates = vec![0.1, 1.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("missing_rates"));
        cfg = ExperimentConfig::default();
        cfg.linear_window = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("linear_window"));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
    }
}
