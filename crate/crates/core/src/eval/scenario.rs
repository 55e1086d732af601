//! Declarative experiment runner: train (or reuse cached) weights from one
//! data selection, replay filter sessions over another at each threshold,
//! and assemble a reproducible report with content-hash provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{mae, Metrics};
use crate::filter::{run_session, BufferPolicy, FilterConfig, PadPolicy, SyncMode};
use crate::ingest::{
    chrono_split, fit_norm, make_windows, parse_csv, resample, CsvSchema, SeriesFrame, SourceKind,
    Timestamp,
};
use crate::predictor::{
    init_params, load_weights, save_weights, train, ModelMeta, ModelWeights, TrainConfig,
};

/// The four deployment shapes: where the training data comes from relative
/// to where inference runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SameSite,
    CrossSite,
    SatelliteSameSite,
    SatelliteCrossSite,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioKind::SameSite => "same_site",
            ScenarioKind::CrossSite => "cross_site",
            ScenarioKind::SatelliteSameSite => "satellite_same_site",
            ScenarioKind::SatelliteCrossSite => "satellite_cross_site",
        };
        write!(f, "{s}")
    }
}

/// ISO-8601 (de)serialization for optional timestamps in config documents.
mod iso_ts {
    use super::Timestamp;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Timestamp>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(ts) => s.serialize_some(&ts.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Timestamp>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        match text {
            None => Ok(None),
            Some(t) => Timestamp::parse(&t)
                .map(Some)
                .ok_or_else(|| de::Error::custom(format!("invalid timestamp '{t}'"))),
        }
    }
}

/// One side of a scenario: which file, which identity, and which slice of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSelector {
    /// CSV path, resolved relative to the data root when not absolute.
    pub file: PathBuf,
    pub source_id: String,
    pub kind: SourceKind,
    /// Inclusive lower bound of the slice.
    #[serde(default, with = "iso_ts")]
    pub start: Option<Timestamp>,
    /// Exclusive upper bound of the slice.
    #[serde(default, with = "iso_ts")]
    pub end: Option<Timestamp>,
    /// Optional target resolution in seconds (downsampling by mean).
    #[serde(default)]
    pub resample: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub k: usize,
    pub buffer_policy: BufferPolicy,
    pub sync_mode: SyncMode,
    pub pad_policy: PadPolicy,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            k: 24,
            buffer_policy: BufferPolicy::ResetOnTransmit,
            sync_mode: SyncMode::Synchronized,
            pad_policy: PadPolicy::ReplicateOldest,
        }
    }
}

impl FilterSettings {
    fn config(&self, epsilon: f64) -> FilterConfig {
        FilterConfig {
            epsilon,
            k: self.k,
            buffer_policy: self.buffer_policy,
            sync_mode: self.sync_mode,
            pad_policy: self.pad_policy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSettings {
    pub hidden: usize,
}

impl Default for ArchSettings {
    fn default() -> Self {
        ArchSettings { hidden: 64 }
    }
}

/// A full experiment: train on one selection, filter another at each
/// threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioKind,
    pub train: DataSelector,
    pub test: DataSelector,
    /// Tolerances in °C, one filter session per entry.
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub model: ArchSettings,
    #[serde(default)]
    pub train_cfg: TrainConfig,
}

impl ScenarioSpec {
    /// A human-readable identity for error messages and summaries.
    pub fn label(&self) -> String {
        format!(
            "{} {}->{}",
            self.name, self.train.source_id, self.test.source_id
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::ScenarioInvalid {
                name: self.label(),
                reason,
            })
        };
        if self.thresholds.is_empty() {
            return fail("thresholds must be nonempty".into());
        }
        if let Some(&bad) = self
            .thresholds
            .iter()
            .find(|t| **t <= 0.0 || !t.is_finite())
        {
            return fail(format!("threshold {bad} must be positive and finite"));
        }
        if self.filter.k == 0 {
            return fail("filter.k must be at least 1".into());
        }
        if self.model.hidden == 0 {
            return fail("model.hidden must be at least 1".into());
        }
        self.train_cfg.validate()?;

        // Same physical stream on both sides: the slices must not overlap,
        // otherwise the model would be evaluated on its own training data.
        let same_stream = self.train.file == self.test.file
            && self.train.source_id == self.test.source_id
            && self.train.kind == self.test.kind;
        if same_stream {
            let s1 = self.train.start.map(Timestamp::unix).unwrap_or(i64::MIN);
            let e1 = self.train.end.map(Timestamp::unix).unwrap_or(i64::MAX);
            let s2 = self.test.start.map(Timestamp::unix).unwrap_or(i64::MIN);
            let e2 = self.test.end.map(Timestamp::unix).unwrap_or(i64::MAX);
            if s1 < e2 && s2 < e1 {
                return fail(
                    "train and test ranges overlap on the same source stream".into(),
                );
            }
        }
        Ok(())
    }
}

/// Top-level scenario file: one `[[scenario]]` entry per experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<ScenarioSpec>,
}

impl ScenarioSuite {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let suite: ScenarioSuite = toml::from_str(&text).map_err(|e| Error::Toml {
            path: path.into(),
            message: e.to_string(),
        })?;
        Ok(suite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub epsilon: f64,
    pub metrics: Metrics,
}

/// Content hashes tying a report to its exact inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_data_sha256: String,
    pub test_data_sha256: String,
    pub weights_sha256: String,
    /// Key the trained weights are cached under; a function of the training
    /// data hash and the full training configuration.
    pub cache_key: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    /// Threshold-independent accuracy: MAE of open-loop rolling one-step
    /// forecasts over the test stream (buffer always holds actual readings,
    /// so predictions do not depend on any tolerance).
    pub mae: f64,
    pub per_threshold: Vec<ThresholdMetrics>,
    pub provenance: Provenance,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn resolve(root: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        root.join(file)
    }
}

/// Loads, relabels, optionally resamples, and slices one selector.
/// Returns the frame and the content hash of the raw file.
fn load_selector(selector: &DataSelector, data_root: &Path) -> Result<(SeriesFrame, String)> {
    let path = resolve(data_root, &selector.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let hash = sha256_hex(&bytes);
    let (frame, _) = parse_csv(&path, &CsvSchema::default())?;
    let mut frame = frame.with_identity(selector.source_id.clone(), selector.kind);
    if let Some(target) = selector.resample {
        frame = resample(&frame, target)?;
    }
    let frame = frame.slice(selector.start, selector.end)?;
    Ok((frame, hash))
}

/// Cache key: every input that affects the trained weights.
fn cache_key(spec: &ScenarioSpec, train_data_hash: &str) -> Result<String> {
    #[derive(Serialize)]
    struct KeyDoc<'a> {
        train_data_sha256: &'a str,
        train: &'a DataSelector,
        train_cfg: &'a TrainConfig,
        hidden: usize,
        window: usize,
    }
    let doc = KeyDoc {
        train_data_sha256: train_data_hash,
        train: &spec.train,
        train_cfg: &spec.train_cfg,
        hidden: spec.model.hidden,
        window: spec.filter.k,
    };
    Ok(sha256_hex(serde_json::to_string(&doc)?.as_bytes()))
}

/// Trains weights for the scenario or loads them from the cache under
/// `data_root/weights-cache/<key>.json`. A cached file whose architecture
/// does not match the request is an error rather than a silent retrain.
fn obtain_weights(
    spec: &ScenarioSpec,
    train_frame: &SeriesFrame,
    key: &str,
    data_root: &Path,
) -> Result<(ModelWeights, PathBuf)> {
    let cache_dir = data_root.join("weights-cache");
    let cache_path = cache_dir.join(format!("{key}.json"));
    if cache_path.exists() {
        let weights = load_weights(&cache_path)?;
        if weights.params.window != spec.filter.k || weights.params.hidden != spec.model.hidden {
            return Err(Error::CacheMismatch {
                path: cache_path,
                reason: format!(
                    "cached architecture (hidden {}, window {}) != requested (hidden {}, window {})",
                    weights.params.hidden,
                    weights.params.window,
                    spec.model.hidden,
                    spec.filter.k
                ),
            });
        }
        return Ok((weights, cache_path));
    }

    let stats = fit_norm(train_frame)?;
    let windows = make_windows(train_frame, spec.filter.k, &stats)?;
    let (train_set, val_set) = chrono_split(&windows, 1.0 - spec.train_cfg.val_frac)?;
    let initial = init_params(spec.model.hidden, 1, spec.filter.k, spec.train_cfg.seed)?;
    let meta = ModelMeta {
        source_id: spec.train.source_id.clone(),
        kind: spec.train.kind,
        seed: spec.train_cfg.seed,
    };
    let (weights, _) = train(initial, &train_set, &val_set, &spec.train_cfg, stats, meta)?;
    save_weights(&weights, &cache_path)?;
    Ok((weights, cache_path))
}

/// Runs one scenario end to end. Deterministic in (spec, data files, seed);
/// the provenance hashes change exactly when any input changes.
pub fn run_scenario(spec: &ScenarioSpec, data_root: &Path) -> Result<ScenarioReport> {
    spec.validate()?;
    let (train_frame, train_hash) = load_selector(&spec.train, data_root)?;
    let (test_frame, test_hash) = load_selector(&spec.test, data_root)?;

    let key = cache_key(spec, &train_hash)?;
    let (weights, weights_path) = obtain_weights(spec, &train_frame, &key, data_root)?;
    let weights_bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    let weights_hash = sha256_hex(&weights_bytes);

    // Open-loop accuracy: with a sliding buffer of actual readings the
    // forecasts are independent of the tolerance, so any epsilon works.
    let open_loop_cfg = FilterConfig {
        epsilon: spec.thresholds[0],
        k: spec.filter.k,
        buffer_policy: BufferPolicy::Sliding,
        sync_mode: SyncMode::EdgeActuals,
        pad_policy: spec.filter.pad_policy,
    };
    let (open_log, _) = run_session(&test_frame, &weights, &open_loop_cfg)?;
    let (preds, actuals) = open_log.predicted_pairs();
    let open_loop_mae = mae(&preds, &actuals)?;

    let mut per_threshold = Vec::with_capacity(spec.thresholds.len());
    for &eps in &spec.thresholds {
        let cfg = spec.filter.config(eps);
        let (log, _) = run_session(&test_frame, &weights, &cfg)?;
        per_threshold.push(ThresholdMetrics {
            epsilon: eps,
            metrics: Metrics::from_log(&log)?,
        });
    }

    Ok(ScenarioReport {
        spec: spec.clone(),
        mae: open_loop_mae,
        per_threshold,
        provenance: Provenance {
            train_data_sha256: train_hash,
            test_data_sha256: test_hash,
            weights_sha256: weights_hash,
            cache_key: key,
            seed: spec.train_cfg.seed,
        },
    })
}
