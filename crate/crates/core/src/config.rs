//! Pipeline configuration.
//!
//! Every tunable lives in [`PipelineConfig`]. Configs are JSON documents;
//! absent keys take their defaults and `key = value` overrides (from the
//! command line) win over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::paths::PathMode;
use crate::tokens::TokenMode;
use crate::{Error, Result};

/// Closed calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[NaiveDate; 2]", into = "[NaiveDate; 2]")]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl From<[NaiveDate; 2]> for DateRange {
    fn from([start, end]: [NaiveDate; 2]) -> Self {
        Self { start, end }
    }
}

impl From<DateRange> for [NaiveDate; 2] {
    fn from(r: DateRange) -> Self {
        [r.start, r.end]
    }
}

/// Inclusive range of day differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct DayWindow {
    pub min_days: i64,
    pub max_days: i64,
}

impl DayWindow {
    pub fn new(min_days: i64, max_days: i64) -> Self {
        Self { min_days, max_days }
    }

    pub fn contains(&self, days: i64) -> bool {
        self.min_days <= days && days <= self.max_days
    }
}

impl From<[i64; 2]> for DayWindow {
    fn from([min_days, max_days]: [i64; 2]) -> Self {
        Self { min_days, max_days }
    }
}

impl From<DayWindow> for [i64; 2] {
    fn from(w: DayWindow) -> Self {
        [w.min_days, w.max_days]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum cosine similarity for two claims to share an edge.
    pub edge_threshold: f64,
    /// Editorial near-duplicate cutoff (same domain or author).
    pub near_dup_threshold: f64,
    /// Use `>` instead of `>=` when comparing against `edge_threshold`.
    pub strict_threshold: bool,

    pub n_hyperplanes: usize,
    /// The hyperplanes are split evenly into this many hash tables.
    pub n_tables: usize,
    /// Multi-probe Hamming radius within each table.
    pub n_probe_bits: usize,
    pub ann_initial_k: usize,

    pub min_verdict_count: usize,
    pub min_token_count: usize,
    pub alpha: f64,

    pub length_sd_multiplier: f64,
    /// Also reject headline/description shorter than `mean - k*sd`.
    pub length_window_two_sided: bool,
    pub per_domain_min_share: f64,
    pub date_range: DateRange,

    pub null_model_replicates: usize,
    pub inter_cluster_sample_cap: usize,
    pub rng_seed: u64,

    pub sweep_thresholds: Vec<f64>,
    pub path_mode: PathMode,
    /// Clusters larger than this use a sampled most-dissimilar scan.
    pub max_exhaustive_cluster: usize,

    pub drift_early_window: DayWindow,
    pub drift_late_window: DayWindow,
    pub drift_max_days: i64,
    pub drift_bin_width: i64,

    pub embed_endpoint: Option<String>,
    pub embed_batch_size: usize,
    pub translate_endpoint: Option<String>,
    pub tagger_endpoint: Option<String>,
    pub token_mode: TokenMode,

    /// Replaces the bundled boilerplate removal list (one literal per line).
    pub boilerplate_file: Option<PathBuf>,
    /// Replaces the bundled verdict table (JSON object).
    pub verdict_table_file: Option<PathBuf>,
    /// Replaces the bundled language family table (JSON object).
    pub family_table_file: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid default date");
        Self {
            edge_threshold: 0.875,
            near_dup_threshold: 0.95,
            strict_threshold: false,
            n_hyperplanes: 100,
            n_tables: 10,
            n_probe_bits: 2,
            ann_initial_k: 10,
            min_verdict_count: 50,
            min_token_count: 50,
            alpha: 0.01,
            length_sd_multiplier: 2.0,
            length_window_two_sided: false,
            per_domain_min_share: 0.05,
            date_range: DateRange::new(date(2020, 3, 1), date(2022, 3, 31)),
            null_model_replicates: 1000,
            inter_cluster_sample_cap: 10_000,
            rng_seed: 42,
            sweep_thresholds: vec![0.75, 0.8, 0.825, 0.85, 0.875, 0.9, 0.95],
            path_mode: PathMode::Hops,
            max_exhaustive_cluster: 2000,
            drift_early_window: DayWindow::new(0, 30),
            drift_late_window: DayWindow::new(335, 395),
            drift_max_days: 395,
            drift_bin_width: 1,
            embed_endpoint: None,
            embed_batch_size: 64,
            translate_endpoint: None,
            tagger_endpoint: None,
            token_mode: TokenMode::Auto,
            boilerplate_file: None,
            verdict_table_file: None,
            family_table_file: None,
        }
    }
}

fn unit_interval(key: &str, v: f64, allow_zero: bool) -> Result<()> {
    let lower_ok = if allow_zero { v >= 0.0 } else { v > 0.0 };
    if !(v.is_finite() && lower_ok && v <= 1.0) {
        let bound = if allow_zero { "[0, 1]" } else { "(0, 1]" };
        return Err(Error::config(key, format!("{v} is outside {bound}")));
    }
    Ok(())
}

fn positive(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(key, "must be strictly positive"));
    }
    Ok(())
}

impl PipelineConfig {
    /// Checks every invariant, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        unit_interval("edge_threshold", self.edge_threshold, false)?;
        unit_interval("near_dup_threshold", self.near_dup_threshold, false)?;
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "alpha",
                format!("{} is outside (0, 1)", self.alpha),
            ));
        }
        unit_interval("per_domain_min_share", self.per_domain_min_share, false)?;
        positive("n_hyperplanes", self.n_hyperplanes)?;
        positive("n_tables", self.n_tables)?;
        if !self.n_hyperplanes.is_multiple_of(self.n_tables) {
            return Err(Error::config(
                "n_tables",
                format!(
                    "{} does not divide n_hyperplanes = {}",
                    self.n_tables, self.n_hyperplanes
                ),
            ));
        }
        if self.n_hyperplanes / self.n_tables > 64 {
            return Err(Error::config(
                "n_tables",
                "at most 64 hyperplanes per table",
            ));
        }
        positive("ann_initial_k", self.ann_initial_k)?;
        positive("min_verdict_count", self.min_verdict_count)?;
        positive("min_token_count", self.min_token_count)?;
        positive("null_model_replicates", self.null_model_replicates)?;
        positive("inter_cluster_sample_cap", self.inter_cluster_sample_cap)?;
        positive("embed_batch_size", self.embed_batch_size)?;
        positive("max_exhaustive_cluster", self.max_exhaustive_cluster)?;
        if !(self.length_sd_multiplier.is_finite() && self.length_sd_multiplier >= 0.0) {
            return Err(Error::config(
                "length_sd_multiplier",
                "must be a nonnegative real",
            ));
        }
        if self.date_range.start >= self.date_range.end {
            return Err(Error::config("date_range", "start must precede end"));
        }
        if self.sweep_thresholds.is_empty() {
            return Err(Error::config("sweep_thresholds", "must not be empty"));
        }
        for &t in &self.sweep_thresholds {
            unit_interval("sweep_thresholds", t, false)?;
        }
        if self.sweep_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "sweep_thresholds",
                "must be strictly ascending",
            ));
        }
        for (key, w) in [
            ("drift_early_window", self.drift_early_window),
            ("drift_late_window", self.drift_late_window),
        ] {
            if w.min_days < 0 || w.min_days > w.max_days {
                return Err(Error::config(key, "need 0 <= min <= max"));
            }
        }
        if self.drift_bin_width < 1 {
            return Err(Error::config("drift_bin_width", "must be at least one day"));
        }
        if self.drift_max_days < 0 {
            return Err(Error::config("drift_max_days", "must be nonnegative"));
        }
        Ok(())
    }

    /// Parses a JSON document, applies overrides and validates.
    pub fn from_json_str(text: &str, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut doc: serde_json::Value = if text.trim().is_empty() {
            serde_json::Value::Object(Default::default())
        } else {
            serde_json::from_str(text)?
        };
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| Error::InvalidInput("config root must be a JSON object".into()))?;
        for (key, raw) in overrides {
            // Numbers, booleans, arrays and null are read as JSON; anything else is a string.
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            obj.insert(key.clone(), value);
        }
        let config: PipelineConfig = serde_json::from_value(doc).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            Error::Config { key, reason: msg }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Whether a similarity counts as an edge under the configured comparison.
    pub fn passes_edge(&self, similarity: f64) -> bool {
        passes(similarity, self.edge_threshold, self.strict_threshold)
    }
}

pub(crate) fn passes(similarity: f64, threshold: f64, strict: bool) -> bool {
    if strict {
        similarity > threshold
    } else {
        similarity >= threshold
    }
}

/// Loads a config file (a missing path means "all defaults") and applies overrides.
pub fn load_config(
    path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
) -> Result<PipelineConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    PipelineConfig::from_json_str(&text, overrides)
}
