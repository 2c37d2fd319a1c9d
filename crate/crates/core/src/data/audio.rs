//! Audio feature streams and the 87-segment windowing.
//!
//! Streams are CSVs with a header, a strictly increasing `t_sec` column,
//! and F real-valued feature columns per row (frame-level descriptors such
//! as pitch, loudness, intensity and cepstral coefficients, computed
//! elsewhere). Both segmentation modes emit exactly [87, F] or fail -
//! never a different segment count.

use crate::error::{Error, Result};
use crate::tensor::NDTensor;
use std::path::Path;

/// Frame-level feature rows plus the sample's declared duration.
#[derive(Debug, Clone)]
pub struct AudioFeatureStream {
    pub times: Vec<f64>,
    /// Row-major [rows, F].
    pub features: Vec<f64>,
    pub feat_dim: usize,
    pub duration_s: f64,
}

/// Windowing parameters. Fixed mode uses 75 ms windows at a 45 ms hop
/// (30 ms overlap); variable mode divides the whole duration into 87 equal
/// contiguous windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationSpec {
    pub mode: SegmentationMode,
    pub window_ms: u32,
    pub overlap_ms: u32,
    pub segment_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentationMode {
    Fixed,
    Variable,
}

impl SegmentationSpec {
    pub fn fixed() -> Self {
        SegmentationSpec {
            mode: SegmentationMode::Fixed,
            window_ms: 75,
            overlap_ms: 30,
            segment_count: 87,
        }
    }

    pub fn variable() -> Self {
        SegmentationSpec {
            mode: SegmentationMode::Variable,
            ..Self::fixed()
        }
    }

    pub fn hop_ms(&self) -> u32 {
        self.window_ms - self.overlap_ms
    }

    /// Minimum stream duration for fixed mode:
    /// window + (segments-1) * hop = 75 + 86*45 = 3945 ms.
    pub fn min_fixed_duration_s(&self) -> f64 {
        (self.window_ms as f64 + (self.segment_count as f64 - 1.0) * self.hop_ms() as f64) / 1000.0
    }
}

impl AudioFeatureStream {
    pub fn new(times: Vec<f64>, features: Vec<f64>, feat_dim: usize, duration_s: f64) -> Result<Self> {
        if feat_dim == 0 {
            return Err(Error::Data("feature dimension must be >= 1".into()));
        }
        if times.is_empty() {
            return Err(Error::Data("empty audio feature stream".into()));
        }
        if features.len() != times.len() * feat_dim {
            return Err(Error::Data(format!(
                "{} feature values do not tile {} rows x {feat_dim}",
                features.len(),
                times.len()
            )));
        }
        for pair in times.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Data(format!(
                    "t_sec must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if duration_s <= 0.0 {
            return Err(Error::Data(format!("non-positive duration {duration_s}")));
        }
        if *times.last().unwrap() >= duration_s {
            return Err(Error::Data(format!(
                "frame timestamp {} beyond declared duration {duration_s}",
                times.last().unwrap()
            )));
        }
        Ok(AudioFeatureStream {
            times,
            features,
            feat_dim,
            duration_s,
        })
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feat_dim..(i + 1) * self.feat_dim]
    }

    /// Reads a `t_sec,f0,...` CSV; duration comes from the manifest.
    pub fn read_csv(path: &Path, duration_s: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .clone();
        if headers.len() < 2 || headers.get(0) != Some("t_sec") {
            return Err(Error::Data(format!(
                "{}: expected header starting with t_sec and >= 1 feature column",
                path.display()
            )));
        }
        let feat_dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut features = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if record.len() != feat_dim + 1 {
                return Err(Error::Data(format!(
                    "{} row {}: {} fields, expected {}",
                    path.display(),
                    i + 2,
                    record.len(),
                    feat_dim + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{} row {}: bad number '{s}'", path.display(), i + 2)))
            };
            times.push(parse(&record[0])?);
            for j in 1..=feat_dim {
                features.push(parse(&record[j])?);
            }
        }
        Self::new(times, features, feat_dim, duration_s)
    }

    /// Writes the stream back out (shortest round-trip float formatting).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))?;
        let mut header = vec!["t_sec".to_string()];
        header.extend((0..self.feat_dim).map(|j| format!("f{j}")));
        w.write_record(&header)
            .map_err(|e| Error::Data(e.to_string()))?;
        for i in 0..self.rows() {
            let mut rec = vec![self.times[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean of the rows whose time lies in [start, end); `None` when the
    /// window is empty.
    fn window_mean(&self, start: f64, end: f64) -> Option<Vec<f64>> {
        let mut acc = vec![0.0f64; self.feat_dim];
        let mut count = 0usize;
        for (i, &t) in self.times.iter().enumerate() {
            if t >= start && t < end {
                for (a, &v) in acc.iter_mut().zip(self.row(i)) {
                    *a += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        for a in &mut acc {
            *a /= count as f64;
        }
        Some(acc)
    }

    /// Stream-level mean and standard deviation per feature column
    /// (population std): the pooled [2F] input of the perceptron models.
    pub fn pooled_mean_std(&self) -> Vec<f64> {
        let f = self.feat_dim;
        let n = self.rows() as f64;
        let mut mean = vec![0.0f64; f];
        for i in 0..self.rows() {
            for (m, &v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0f64; f];
        for i in 0..self.rows() {
            for j in 0..f {
                let d = self.row(i)[j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut out = mean;
        out.extend(var.into_iter().map(|v| (v / n).sqrt()));
        out
    }
}

/// Fixed windowing: segment k covers [k*hop, k*hop + window) ms from the
/// stream start; rows inside each window are mean-pooled. Exactly 87
/// segments or an error.
pub fn fixed_segments(stream: &AudioFeatureStream, spec: &SegmentationSpec) -> Result<NDTensor<f64>> {
    let min_dur = spec.min_fixed_duration_s();
    if stream.duration_s < min_dur {
        return Err(Error::Data(format!(
            "stream of {:.3} s too short for fixed segmentation; {} windows of {} ms \
             at {} ms hop need at least {min_dur} s",
            stream.duration_s,
            spec.segment_count,
            spec.window_ms,
            spec.hop_ms()
        )));
    }
    let hop = spec.hop_ms() as f64 / 1000.0;
    let window = spec.window_ms as f64 / 1000.0;
    let mut data = Vec::with_capacity(spec.segment_count * stream.feat_dim);
    for k in 0..spec.segment_count {
        let start = k as f64 * hop;
        let mean = stream.window_mean(start, start + window).ok_or_else(|| {
            Error::Data(format!(
                "no frames inside fixed window {k} [{start:.3}, {:.3}) s",
                start + window
            ))
        })?;
        data.extend(mean);
    }
    NDTensor::from_vec(&[spec.segment_count, stream.feat_dim], data)
}

/// Variable windowing: 87 equal contiguous windows spanning the full
/// duration, mean-pooled per window.
pub fn variable_segments(
    stream: &AudioFeatureStream,
    spec: &SegmentationSpec,
) -> Result<NDTensor<f64>> {
    if stream.rows() < spec.segment_count {
        return Err(Error::Data(format!(
            "{} frame rows cannot fill {} variable segments",
            stream.rows(),
            spec.segment_count
        )));
    }
    let step = stream.duration_s / spec.segment_count as f64;
    let mut data = Vec::with_capacity(spec.segment_count * stream.feat_dim);
    for k in 0..spec.segment_count {
        let start = k as f64 * step;
        let end = (k + 1) as f64 * step;
        let mean = stream.window_mean(start, end).ok_or_else(|| {
            Error::Data(format!(
                "no frames inside variable window {k} [{start:.3}, {end:.3}) s"
            ))
        })?;
        data.extend(mean);
    }
    NDTensor::from_vec(&[spec.segment_count, stream.feat_dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 10 ms frame grid with one feature column equal to t.
    fn ramp_stream(duration_s: f64) -> AudioFeatureStream {
        let mut times = Vec::new();
        let mut features = Vec::new();
        let mut i = 0usize;
        loop {
            let t = i as f64 * 0.01;
            if t >= duration_s {
                break;
            }
            times.push(t);
            features.push(t);
            i += 1;
        }
        AudioFeatureStream::new(times, features, 1, duration_s).unwrap()
    }

    #[test]
    fn minimum_fixed_duration_is_3945_ms() {
        let spec = SegmentationSpec::fixed();
        assert_eq!(spec.hop_ms(), 45);
        assert!((spec.min_fixed_duration_s() - 3.945).abs() < 1e-12);
    }

    #[test]
    fn fixed_mode_on_exactly_minimum_duration() {
        let stream = ramp_stream(3.945);
        let spec = SegmentationSpec::fixed();
        let seg = fixed_segments(&stream, &spec).unwrap();
        assert_eq!(seg.shape(), &[87, 1]);
        // The last window [3.870, 3.945) ends exactly at stream end and is
        // populated.
        assert!(seg.at(&[86, 0]) > 3.86);
    }

    #[test]
    fn fixed_mode_rejects_short_stream() {
        let stream = ramp_stream(3.0);
        let err = fixed_segments(&stream, &SegmentationSpec::fixed()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3.945"), "error should name the floor: {msg}");
    }

    #[test]
    fn constant_features_give_identical_segments() {
        let mut times = Vec::new();
        let mut feats = Vec::new();
        for i in 0..500 {
            times.push(i as f64 * 0.01);
            feats.extend_from_slice(&[2.5, -1.0]);
        }
        let stream = AudioFeatureStream::new(times, feats, 2, 5.0).unwrap();
        for seg in [
            fixed_segments(&stream, &SegmentationSpec::fixed()).unwrap(),
            variable_segments(&stream, &SegmentationSpec::variable()).unwrap(),
        ] {
            assert_eq!(seg.shape(), &[87, 2]);
            for k in 0..87 {
                assert_eq!(seg.at(&[k, 0]), 2.5);
                assert_eq!(seg.at(&[k, 1]), -1.0);
            }
        }
    }

    #[test]
    fn variable_mode_window_length_is_duration_over_87() {
        let stream = ramp_stream(8.7);
        let seg = variable_segments(&stream, &SegmentationSpec::variable()).unwrap();
        assert_eq!(seg.shape(), &[87, 1]);
        // Window k covers [k*d/87, (k+1)*d/87) = 100 ms each; with the ramp
        // feature the means must be an arithmetic progression with
        // difference ~0.1. Compare against an independent scan of the same
        // 10 ms grid using the same window boundaries.
        let step = 8.7 / 87.0;
        for k in 0..87 {
            let (lo, hi) = (k as f64 * step, (k + 1) as f64 * step);
            let vals: Vec<f64> = stream
                .times
                .iter()
                .copied()
                .filter(|&t| t >= lo && t < hi)
                .collect();
            let expect = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((seg.at(&[k, 0]) - expect).abs() < 1e-12);
        }
        let d0 = seg.at(&[1, 0]) - seg.at(&[0, 0]);
        for k in 2..87 {
            let d = seg.at(&[k, 0]) - seg.at(&[k - 1, 0]);
            assert!((d - d0).abs() < 1e-9, "window {k}: {d} vs {d0}");
        }
    }

    #[test]
    fn variable_mode_needs_87_rows() {
        let mut times = Vec::new();
        let mut feats = Vec::new();
        for i in 0..50 {
            times.push(i as f64 * 0.01);
            feats.push(0.0);
        }
        let stream = AudioFeatureStream::new(times, feats, 1, 1.0).unwrap();
        assert!(variable_segments(&stream, &SegmentationSpec::variable()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let stream = ramp_stream(4.0);
        stream.write_csv(&path).unwrap();
        let got = AudioFeatureStream::read_csv(&path, 4.0).unwrap();
        assert_eq!(got.times, stream.times);
        assert_eq!(got.features, stream.features);
    }

    #[test]
    fn non_increasing_times_rejected() {
        let r = AudioFeatureStream::new(vec![0.0, 0.0], vec![1.0, 2.0], 1, 1.0);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn pooled_mean_std() {
        let stream =
            AudioFeatureStream::new(vec![0.0, 0.01], vec![1.0, 3.0], 1, 1.0).unwrap();
        let pooled = stream.pooled_mean_std();
        assert_eq!(pooled.len(), 2);
        assert_eq!(pooled[0], 2.0);
        assert_eq!(pooled[1], 1.0);
    }
}
