//! Late fusion of per-model class probabilities.
//!
//! The fused probability of a sample is the weighted sum over models,
//! p_bar = sum_i w_i * p_i, with nonnegative weights normalized to sum 1
//! (so p_bar stays a probability and the average and accuracy-weighted
//! strategies are directly comparable). Decision threshold is 0.5 with
//! ties classified sober.

use crate::error::{Error, Result};
use crate::training::decide;
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

/// Per-model intoxication probabilities, aligned to sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub ids: Vec<String>,
    pub probs: Vec<f64>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, ids: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if ids.len() != probs.len() {
            return Err(Error::Data(format!(
                "{} ids with {} probabilities",
                ids.len(),
                probs.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id '{id}'")));
            }
        }
        for (id, &p) in ids.iter().zip(&probs) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Data(format!(
                    "sample '{id}' has probability {p} outside [0,1]"
                )));
            }
        }
        Ok(PredictionSet {
            model_id: model_id.into(),
            ids,
            probs,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// CSV with header `sample_id,p_intoxicated`, shortest round-trip
    /// float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("sample_id,p_intoxicated\n");
        for (id, p) in self.ids.iter().zip(&self.probs) {
            out.push_str(&format!("{id},{p}\n"));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if headers.len() != 2 || &headers[0] != "sample_id" || &headers[1] != "p_intoxicated" {
            return Err(Error::Data(format!(
                "{}: expected header sample_id,p_intoxicated",
                path.display()
            )));
        }
        let mut ids = Vec::new();
        let mut probs = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if record.len() != 2 {
                return Err(Error::Data(format!(
                    "{} row {}: expected 2 fields",
                    path.display(),
                    i + 2
                )));
            }
            ids.push(record[0].to_string());
            probs.push(record[1].parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{} row {}: bad probability '{}'",
                    path.display(),
                    i + 2,
                    &record[1]
                ))
            })?);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "predictions".into());
        PredictionSet::new(name, ids, probs)
    }
}

/// Weighting strategy for fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionStrategy {
    /// All models weighted 1/m.
    Average,
    /// Weights proportional to per-model validation accuracy.
    ValidationAccuracy,
}

/// Normalized fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub weights: Vec<f64>,
}

/// Derives normalized weights. `Average` needs only the model count
/// (accuracies may be empty); `ValidationAccuracy` needs one accuracy in
/// (0, 1] per model.
pub fn derive_weights(
    strategy: FusionStrategy,
    model_count: usize,
    val_accuracies: &[f64],
) -> Result<EnsembleSpec> {
    if model_count == 0 {
        return Err(Error::Usage("ensemble needs at least one model".into()));
    }
    match strategy {
        FusionStrategy::Average => Ok(EnsembleSpec {
            weights: vec![1.0 / model_count as f64; model_count],
        }),
        FusionStrategy::ValidationAccuracy => {
            if val_accuracies.len() != model_count {
                return Err(Error::Usage(format!(
                    "{} accuracies for {model_count} models",
                    val_accuracies.len()
                )));
            }
            for &a in val_accuracies {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::Data(format!(
                        "validation accuracy {a} outside (0, 1]"
                    )));
                }
            }
            EnsembleSpec::from_weights(val_accuracies)
        }
    }
}

impl EnsembleSpec {
    /// Normalizes raw nonnegative weights to sum 1.
    pub fn from_weights(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Usage("ensemble needs at least one weight".into()));
        }
        if let Some(&w) = raw.iter().find(|&&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Data(format!("invalid ensemble weight {w}")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Arithmetic("ensemble weights sum to zero".into()));
        }
        Ok(EnsembleSpec {
            weights: raw.iter().map(|w| w / sum).collect(),
        })
    }

    pub fn model_count(&self) -> usize {
        self.weights.len()
    }
}

/// Fuses aligned prediction sets: per sample, p_bar = sum_i w_i * p_i.
/// Every set must cover exactly the same sample ids; the output follows the
/// first set's order.
pub fn fuse(predictions: &[PredictionSet], spec: &EnsembleSpec) -> Result<PredictionSet> {
    if predictions.is_empty() {
        return Err(Error::Usage("fuse needs at least one prediction set".into()));
    }
    if predictions.len() != spec.model_count() {
        return Err(Error::Usage(format!(
            "{} prediction sets with {} weights",
            predictions.len(),
            spec.model_count()
        )));
    }
    let first = &predictions[0];
    let mut lookups: Vec<HashMap<&str, f64>> = Vec::with_capacity(predictions.len() - 1);
    for other in &predictions[1..] {
        if other.len() != first.len() {
            return Err(Error::Data(format!(
                "prediction set '{}' covers {} samples, '{}' covers {}",
                other.model_id,
                other.len(),
                first.model_id,
                first.len()
            )));
        }
        let map: HashMap<&str, f64> = other
            .ids
            .iter()
            .map(|s| s.as_str())
            .zip(other.probs.iter().copied())
            .collect();
        for id in &first.ids {
            if !map.contains_key(id.as_str()) {
                return Err(Error::Data(format!(
                    "prediction set '{}' is missing sample '{id}'",
                    other.model_id
                )));
            }
        }
        lookups.push(map);
    }
    let mut probs = Vec::with_capacity(first.len());
    for (j, id) in first.ids.iter().enumerate() {
        let mut acc = 0.0f64;
        acc += spec.weights[0] * first.probs[j];
        for (i, map) in lookups.iter().enumerate() {
            acc += spec.weights[i + 1] * map[id.as_str()];
        }
        probs.push(acc);
    }
    PredictionSet::new("fused", first.ids.clone(), probs)
}

/// Fused decision for a sample probability (0.5 threshold, ties sober).
pub fn fused_decision(p: f64) -> usize {
    decide(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(model: &str, pairs: &[(&str, f64)]) -> PredictionSet {
        PredictionSet::new(
            model,
            pairs.iter().map(|(i, _)| i.to_string()).collect(),
            pairs.iter().map(|(_, p)| *p).collect(),
        )
        .unwrap()
    }

    #[test]
    fn average_weights() {
        let spec = derive_weights(FusionStrategy::Average, 3, &[]).unwrap();
        assert_eq!(spec.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn accuracy_weights_normalize() {
        let spec = derive_weights(FusionStrategy::ValidationAccuracy, 2, &[0.8, 0.6]).unwrap();
        assert!((spec.weights[0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((spec.weights[1] - 3.0 / 7.0).abs() < 1e-15);
        assert!((spec.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_accuracies_match_average() {
        let a = derive_weights(FusionStrategy::ValidationAccuracy, 3, &[0.7, 0.7, 0.7]).unwrap();
        let b = derive_weights(FusionStrategy::Average, 3, &[]).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_sum_weights_rejected() {
        assert!(matches!(
            EnsembleSpec::from_weights(&[0.0, 0.0]),
            Err(Error::Arithmetic(_))
        ));
        assert!(matches!(
            derive_weights(FusionStrategy::ValidationAccuracy, 1, &[0.0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn equation_arithmetic() {
        let a = set("a", &[("s1", 0.6)]);
        let b = set("b", &[("s1", 0.8)]);
        let spec = EnsembleSpec::from_weights(&[0.5, 0.5]).unwrap();
        let fused = fuse(&[a, b], &spec).unwrap();
        assert_eq!(fused.probs[0], 0.7);
    }

    #[test]
    fn three_model_arithmetic() {
        let a = set("a", &[("s", 1.0)]);
        let b = set("b", &[("s", 0.0)]);
        let c = set("c", &[("s", 1.0)]);
        let spec = EnsembleSpec::from_weights(&[0.2, 0.3, 0.5]).unwrap();
        let fused = fuse(&[a, b, c], &spec).unwrap();
        assert!((fused.probs[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_model_identity() {
        let a = set("a", &[("x", 0.3), ("y", 0.9)]);
        let spec = EnsembleSpec::from_weights(&[1.0]).unwrap();
        let fused = fuse(&[a.clone()], &spec).unwrap();
        assert_eq!(fused.probs, a.probs);
    }

    #[test]
    fn id_mismatch_rejected() {
        let a = set("a", &[("s1", 0.5)]);
        let b = set("b", &[("s2", 0.5)]);
        let spec = EnsembleSpec::from_weights(&[0.5, 0.5]).unwrap();
        assert!(matches!(fuse(&[a, b], &spec), Err(Error::Data(_))));
    }

    #[test]
    fn weight_count_mismatch_rejected() {
        let a = set("a", &[("s1", 0.5)]);
        let spec = EnsembleSpec::from_weights(&[0.5, 0.5]).unwrap();
        assert!(matches!(fuse(&[a], &spec), Err(Error::Usage(_))));
    }

    #[test]
    fn out_of_order_ids_align() {
        let a = set("a", &[("s1", 0.2), ("s2", 0.8)]);
        let b = set("b", &[("s2", 0.4), ("s1", 0.6)]);
        let spec = EnsembleSpec::from_weights(&[0.5, 0.5]).unwrap();
        let fused = fuse(&[a, b], &spec).unwrap();
        assert_eq!(fused.ids, vec!["s1", "s2"]);
        assert!((fused.probs[0] - 0.4).abs() < 1e-15);
        assert!((fused.probs[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        let a = set("a", &[("s1", 0.125), ("s2", 0.7500000000000001)]);
        a.write_csv(&path).unwrap();
        let got = PredictionSet::read_csv(&path).unwrap();
        assert_eq!(got.ids, a.ids);
        assert_eq!(got.probs, a.probs);
    }

    #[test]
    fn probability_bounds_validated() {
        assert!(PredictionSet::new("m", vec!["a".into()], vec![1.5]).is_err());
        assert!(PredictionSet::new("m", vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
    }
}
