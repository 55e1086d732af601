//! Portable model weights: the self-contained artifact shared by the edge
//! and the cloud.
//!
//! The on-disk format is versioned JSON with every number serialized as a
//! shortest-round-trip decimal, so `load(save(w))` reproduces `w` bit for
//! bit. A model file carries its architecture, its normalization statistics,
//! and provenance metadata; inference needs nothing else.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{NormStats, SourceKind};
use crate::predictor::lstm::{self, LstmParams, Matrix, GATE_F, GATE_G, GATE_I, GATE_O};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

/// Provenance carried inside a weight file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub source_id: String,
    pub kind: SourceKind,
    pub seed: u64,
}

/// A trained forecaster plus everything needed to run it anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub params: LstmParams,
    pub norm: NormStats,
    pub meta: ModelMeta,
}

impl ModelWeights {
    pub fn new(params: LstmParams, norm: NormStats, meta: ModelMeta) -> Result<Self> {
        params.validate()?;
        norm.validate()?;
        Ok(ModelWeights { params, norm, meta })
    }
}

/// One-step-ahead forecast from a normalized window; the result is
/// denormalized back to physical units. Deterministic: dropout is never
/// applied at inference.
pub fn forward(window: &[f64], weights: &ModelWeights) -> Result<f64> {
    let y = lstm::forward_normalized(window, &weights.params)?;
    Ok(weights.norm.denormalize(y))
}

/// Anything the edge filter can use as its model: consumes the padded
/// physical-unit buffer, returns a physical-unit forecast.
pub trait Predictor {
    /// Number of recent values the predictor consumes per call.
    fn window_len(&self) -> usize;

    /// Forecast the next value from exactly `window_len` recent values (°C).
    fn predict(&self, recent: &[f64]) -> Result<f64>;
}

impl Predictor for ModelWeights {
    fn window_len(&self) -> usize {
        self.params.window
    }

    fn predict(&self, recent: &[f64]) -> Result<f64> {
        let normalized: Vec<f64> = recent.iter().map(|&v| self.norm.normalize(v)).collect();
        forward(&normalized, self)
    }
}

/// Baseline that predicts the most recent value. Used as the reference
/// point when judging whether a trained model earns its keep.
#[derive(Clone, Copy, Debug)]
pub struct PersistencePredictor {
    pub window: usize,
}

impl Predictor for PersistencePredictor {
    fn window_len(&self) -> usize {
        self.window
    }

    fn predict(&self, recent: &[f64]) -> Result<f64> {
        persistence_predict(recent)
    }
}

/// The last element of the window, unchanged.
pub fn persistence_predict(window: &[f64]) -> Result<f64> {
    window.last().copied().ok_or(Error::EmptyBuffer)
}

// On-disk schema.

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    arch: ArchDoc,
    norm: NormStats,
    params: ParamsDoc,
    metadata: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct ArchDoc {
    input: usize,
    hidden: usize,
    window: usize,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    wi: Vec<Vec<f64>>,
    wf: Vec<Vec<f64>>,
    wg: Vec<Vec<f64>>,
    wo: Vec<Vec<f64>>,
    ui: Vec<Vec<f64>>,
    uf: Vec<Vec<f64>>,
    ug: Vec<Vec<f64>>,
    uo: Vec<Vec<f64>>,
    bi: Vec<f64>,
    bf: Vec<f64>,
    bg: Vec<f64>,
    bo: Vec<f64>,
    dense_w: Vec<f64>,
    dense_b: f64,
}

/// Serializes weights to a JSON string (stable field order, lossless floats).
pub fn weights_to_json(w: &ModelWeights) -> Result<String> {
    w.params.validate()?;
    let p = &w.params;
    let doc = WeightsFile {
        format_version: WEIGHTS_FORMAT_VERSION,
        arch: ArchDoc {
            input: p.input,
            hidden: p.hidden,
            window: p.window,
        },
        norm: w.norm,
        params: ParamsDoc {
            wi: p.input_w[GATE_I].to_nested(),
            wf: p.input_w[GATE_F].to_nested(),
            wg: p.input_w[GATE_G].to_nested(),
            wo: p.input_w[GATE_O].to_nested(),
            ui: p.recur_w[GATE_I].to_nested(),
            uf: p.recur_w[GATE_F].to_nested(),
            ug: p.recur_w[GATE_G].to_nested(),
            uo: p.recur_w[GATE_O].to_nested(),
            bi: p.bias[GATE_I].clone(),
            bf: p.bias[GATE_F].clone(),
            bg: p.bias[GATE_G].clone(),
            bo: p.bias[GATE_O].clone(),
            dense_w: p.dense_w.clone(),
            dense_b: p.dense_b,
        },
        metadata: w.meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn weights_from_json(text: &str) -> Result<ModelWeights> {
    // Peek at the version before committing to the full schema, so a future
    // format fails loudly instead of half-parsing.
    #[derive(Deserialize)]
    struct VersionOnly {
        format_version: u32,
    }
    let version: VersionOnly = serde_json::from_str(text)?;
    if version.format_version != WEIGHTS_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version.format_version,
            supported: WEIGHTS_FORMAT_VERSION,
        });
    }
    let doc: WeightsFile = serde_json::from_str(text)?;
    let (hidden, input, window) = (doc.arch.hidden, doc.arch.input, doc.arch.window);

    let mat = |rows: Vec<Vec<f64>>, cols: usize, name: &str| -> Result<Matrix> {
        Matrix::from_rows(rows, hidden, cols)
            .map_err(|e| Error::CorruptWeights(format!("{name}: {e}")))
    };
    let vec_check = |v: Vec<f64>, name: &str| -> Result<Vec<f64>> {
        if v.len() != hidden {
            return Err(Error::CorruptWeights(format!(
                "{name} has length {}, expected {hidden}",
                v.len()
            )));
        }
        Ok(v)
    };

    let params = LstmParams {
        hidden,
        input,
        window,
        input_w: [
            mat(doc.params.wi, input, "wi")?,
            mat(doc.params.wf, input, "wf")?,
            mat(doc.params.wg, input, "wg")?,
            mat(doc.params.wo, input, "wo")?,
        ],
        recur_w: [
            mat(doc.params.ui, hidden, "ui")?,
            mat(doc.params.uf, hidden, "uf")?,
            mat(doc.params.ug, hidden, "ug")?,
            mat(doc.params.uo, hidden, "uo")?,
        ],
        bias: [
            vec_check(doc.params.bi, "bi")?,
            vec_check(doc.params.bf, "bf")?,
            vec_check(doc.params.bg, "bg")?,
            vec_check(doc.params.bo, "bo")?,
        ],
        dense_w: vec_check(doc.params.dense_w, "dense_w")?,
        dense_b: doc.params.dense_b,
    };
    params
        .validate()
        .map_err(|e| Error::CorruptWeights(e.to_string()))?;
    doc.norm
        .validate()
        .map_err(|e| Error::CorruptWeights(e.to_string()))?;
    Ok(ModelWeights {
        params,
        norm: doc.norm,
        meta: doc.metadata,
    })
}

/// Writes the weight file atomically (temp file + rename).
pub fn save_weights(w: &ModelWeights, path: &Path) -> Result<()> {
    let text = weights_to_json(w)?;
    crate::fsio::write_atomic(path, text.as_bytes())
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    weights_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::lstm::init_params;
    use rand::Rng;

    fn sample_weights() -> ModelWeights {
        ModelWeights::new(
            init_params(5, 1, 4, 21).unwrap(),
            NormStats {
                mean: 11.5,
                std: 7.25,
            },
            ModelMeta {
                source_id: "site-a".into(),
                kind: SourceKind::Satellite,
                seed: 21,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_network_predicts_the_mean() {
        let w = ModelWeights::new(
            LstmParams::zeros(4, 1, 6),
            NormStats {
                mean: 13.25,
                std: 2.0,
            },
            ModelMeta {
                source_id: "z".into(),
                kind: SourceKind::InSitu,
                seed: 0,
            },
        )
        .unwrap();
        for window in [[0.0; 6], [1.5; 6], [-3.0; 6]] {
            assert_eq!(forward(&window, &w).unwrap(), 13.25);
        }
    }

    #[test]
    fn zero_network_with_bias_predicts_mean_plus_scaled_bias() {
        let mut params = LstmParams::zeros(4, 1, 6);
        params.dense_b = 0.75;
        let w = ModelWeights::new(
            params,
            NormStats {
                mean: 10.0,
                std: 4.0,
            },
            ModelMeta {
                source_id: "z".into(),
                kind: SourceKind::InSitu,
                seed: 0,
            },
        )
        .unwrap();
        let pred = forward(&[0.2; 6], &w).unwrap();
        assert!((pred - (10.0 + 0.75 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let w = sample_weights();
        let window = [0.3, -0.7, 1.1, 0.0];
        let a = forward(&window, &w).unwrap();
        let b = forward(&window, &w).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn forward_rejects_length_mismatch() {
        let w = sample_weights();
        assert!(forward(&[0.0; 3], &w).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let w = sample_weights();
        let text = weights_to_json(&w).unwrap();
        let back = weights_from_json(&text).unwrap();
        assert_eq!(w, back);

        let mut rng = crate::predictor::rng_for_stream(3, 0);
        for _ in 0..100 {
            let window: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..40.0)).collect();
            let a = forward(&window, &w).unwrap();
            let b = forward(&window, &back).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn save_load_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let w = sample_weights();
        save_weights(&w, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn truncated_matrix_is_a_dimension_error() {
        let w = sample_weights();
        let text = weights_to_json(&w).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let rows = doc["params"]["ui"].as_array_mut().unwrap();
        rows.pop();
        let err = weights_from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, Error::CorruptWeights(_)), "got {err}");
    }

    #[test]
    fn future_format_version_is_rejected() {
        let w = sample_weights();
        let text = weights_to_json(&w).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["format_version"] = serde_json::json!(WEIGHTS_FORMAT_VERSION + 1);
        let err = weights_from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(
            err,
            Error::VersionMismatch {
                found: 2,
                supported: 1
            }
        ));
    }

    #[test]
    fn persistence_returns_last_element() {
        assert_eq!(persistence_predict(&[7.0]).unwrap(), 7.0);
        assert_eq!(persistence_predict(&[4.2, 4.2, 4.2]).unwrap(), 4.2);
        assert_eq!(persistence_predict(&[1.0, 2.0, 3.0]).unwrap(), 3.0);
        assert!(persistence_predict(&[]).is_err());
    }
}
