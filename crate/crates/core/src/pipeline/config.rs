use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::forecast::{IcMethod, SplitFractions, TrainOptions};
use crate::hyperopt::{SearchSpace, DEFAULT_BUDGET};
use crate::sentiment::{ChunkAggregation, DEFAULT_SHOCK_PERCENTILE};
use crate::stats::LagChoice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub trades: PathBuf,
    pub calendar: PathBuf,
    pub articles: PathBuf,
    #[serde(default)]
    pub probabilities: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub topic_blocklist: Vec<String>,
    /// Train/validation/test/evaluation boundaries for the article split.
    pub validation_start: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub evaluation_start: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentConfig {
    pub aggregation: ChunkAggregation,
    pub percentile: f64,
    /// One pair of shock thresholds across every (model, topic) series.
    pub pooled_thresholds: bool,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        Self {
            aggregation: ChunkAggregation::default(),
            percentile: DEFAULT_SHOCK_PERCENTILE,
            pooled_thresholds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    pub window_days: usize,
    /// Correlate only on shock days.
    pub shocks_only: bool,
    /// Add one grid column per instrument next to the pooled mean return.
    pub per_instrument: bool,
}

impl Default for EventsConfig {
    fn default() -> Self {
        Self {
            window_days: crate::events::DEFAULT_WINDOW_DAYS,
            shocks_only: false,
            per_instrument: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Halton,
    Tpe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub budget: usize,
    pub sampler: SamplerKind,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub fractions: SplitFractions,
    /// One network per model across all instruments.
    pub pooled: bool,
    pub ic_method: IcMethod,
    /// Model the others are tested against; defaults to the first model.
    pub reference_model: Option<String>,
    /// `"auto"` or a fixed lag.
    pub dm_lag: toml::Value,
    pub harvey: bool,
    /// Liquidity filter applied before forecasting.
    pub min_trades_per_day: u32,
    pub top_n: Option<usize>,
    pub space: SearchSpace,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            budget: DEFAULT_BUDGET,
            sampler: SamplerKind::Halton,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            fractions: SplitFractions::default(),
            pooled: false,
            ic_method: IcMethod::Pearson,
            reference_model: None,
            dm_lag: toml::Value::String("auto".into()),
            harvey: false,
            min_trades_per_day: 0,
            top_n: None,
            space: SearchSpace::default(),
        }
    }
}

impl ForecastConfig {
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            ic_method: self.ic_method,
        }
    }

    pub fn lag(&self) -> Result<LagChoice, PipelineError> {
        match &self.dm_lag {
            toml::Value::String(s) if s == "auto" => Ok(LagChoice::Automatic),
            toml::Value::Integer(n) if *n >= 0 => Ok(LagChoice::Fixed(*n as usize)),
            other => Err(PipelineError::Config(format!(
                "dm_lag must be \"auto\" or a non-negative integer, got {other}"
            ))),
        }
    }
}

/// Everything a pipeline run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub topics: Vec<String>,
    pub paths: Paths,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub sentiment: SentimentConfig,
    #[serde(default)]
    pub events: EventsConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
}

fn default_workers() -> usize {
    1
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub models: Vec<String>,
    pub topics: Vec<String>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.paths.trades = resolve(base_dir, &cfg.paths.trades);
        cfg.paths.calendar = resolve(base_dir, &cfg.paths.calendar);
        cfg.paths.articles = resolve(base_dir, &cfg.paths.articles);
        for p in &mut cfg.paths.probabilities {
            *p = resolve(base_dir, p);
        }
        cfg.out_dir = resolve(base_dir, &cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), PipelineError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if !o.models.is_empty() {
            self.models = o.models.clone();
        }
        if !o.topics.is_empty() {
            self.topics = o.topics.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let p = self.sentiment.percentile;
        if !(p > 0.0 && p < 50.0) {
            return bad(format!("percentile must lie in (0, 50), got {p}"));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.events.window_days < 2 {
            return bad(format!(
                "window_days must be at least 2, got {}",
                self.events.window_days
            ));
        }
        if self.forecast.budget == 0 {
            return bad("forecast budget must be at least 1".into());
        }
        self.forecast
            .fractions
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.forecast
            .space
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.forecast.lag()?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(m) = self.models.iter().find(|m| !seen.insert(m.as_str())) {
            return bad(format!("model {m} listed twice"));
        }
        Ok(())
    }

    /// The resolved config as TOML, written next to every command's outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
