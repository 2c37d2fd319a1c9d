//! Deterministic synthetic audio-visual dataset generation.
//!
//! The real recordings behind the task cannot be bundled, so these
//! generators produce desk-scale stand-ins whose classes are separable by
//! spatio-temporal structure but not by trivial shortcuts:
//!
//! * Video: a Gaussian blob drifts (slow for class 0, fast for class 1)
//!   while its amplitude flickers (low frequency vs high frequency), under
//!   additive noise. Every frame's mean intensity is normalized away and
//!   replaced with class-independent jitter, so no single frame's mean
//!   separates the classes.
//! * Audio: per-channel sinusoid features whose oscillation frequency and
//!   amplitude scale depend on the class, under noise. Durations respect
//!   the 3.945 s fixed-segmentation floor so both windowing modes apply.
//!
//! Same seed, same files, byte for byte.

use crate::data::audio::AudioFeatureStream;
use crate::data::container::{write_container, TensorEntry};
use crate::data::manifest::{ManifestRecord, SampleManifest, Split};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::NDTensor;
use std::f64::consts::TAU;
use std::path::Path;

/// Samples per split.
#[derive(Debug, Clone, Copy)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Container entry name that video sample files use.
pub const VIDEO_ENTRY: &str = "video";
/// Container entry name for precomputed feature sequences.
pub const FEATURES_ENTRY: &str = "features";

/// Nominal frame rate used to report video durations in the manifest.
const VIDEO_FPS: f64 = 8.0;

/// Label assignment shared by both generators: the first samples of each
/// split are sober, the rest intoxicated. Depending only on (index, count,
/// imbalance) keeps ids and labels aligned between the video and audio
/// datasets generated with the same counts, which late fusion relies on.
pub fn split_label(idx: usize, count: usize, imbalance: f64) -> usize {
    let positives = (count as f64 * imbalance).round() as usize;
    usize::from(idx >= count - positives)
}

fn reflect(pos: f64, lo: f64, hi: f64) -> f64 {
    // Triangle-wave reflection keeps the blob inside [lo, hi].
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let x = (pos - lo).rem_euclid(2.0 * span);
    lo + if x > span { 2.0 * span - x } else { x }
}

fn make_video(rng: &mut Rng, shape: (usize, usize, usize), label: usize) -> Result<NDTensor<f32>> {
    let (l, h, w) = shape;
    let (lf, hf, wf) = (l as f64, h as f64, w as f64);
    let sigma = (hf.min(wf) / 8.0).max(1.0);

    // Class-dependent motion speed and flicker frequency; everything else
    // is shared nuisance variation.
    let speed = [0.5, 2.5][label] * (0.85 + 0.3 * rng.unit_f64()) * (hf.min(wf) / 64.0).max(0.25);
    let flicker_cycles = [1.0, 4.0][label] * (0.9 + 0.2 * rng.unit_f64());
    let theta = TAU * rng.unit_f64();
    let phase = TAU * rng.unit_f64();
    let cx = sigma + rng.unit_f64() * (wf - 2.0 * sigma);
    let cy = sigma + rng.unit_f64() * (hf - 2.0 * sigma);
    let (vx, vy) = (speed * theta.cos(), speed * theta.sin());
    let gains = [1.0, 0.75, 0.55];

    let mut data = vec![0.0f32; 3 * l * h * w];
    for t in 0..l {
        let tf = t as f64;
        let amp = 1.0 + 0.6 * (TAU * flicker_cycles * tf / lf + phase).sin();
        let px = reflect(cx + vx * tf, sigma, wf - 1.0 - sigma);
        let py = reflect(cy + vy * tf, sigma, hf - 1.0 - sigma);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - px;
                let dy = y as f64 - py;
                let g = 1.5 * amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                for (c, gain) in gains.iter().enumerate() {
                    let noise = (rng.unit_f64() - 0.5) * 0.7;
                    data[((c * l + t) * h + y) * w + x] = (gain * g + noise) as f32;
                }
            }
        }
    }
    // Per-frame mean normalization removes the brightness shortcut; the
    // tiny class-independent jitter keeps frame means non-degenerate.
    let frame = h * w;
    for t in 0..l {
        let mut mean = 0.0f64;
        for c in 0..3 {
            for i in 0..frame {
                mean += data[(c * l + t) * frame + i] as f64;
            }
        }
        mean /= (3 * frame) as f64;
        let jitter = (rng.unit_f64() - 0.5) * 0.05;
        let delta = (jitter - mean) as f32;
        for c in 0..3 {
            for i in 0..frame {
                data[(c * l + t) * frame + i] += delta;
            }
        }
    }
    NDTensor::from_vec(&[3, l, h, w], data)
}

/// Generates labeled video containers plus a manifest under `dir`.
pub fn gen_synthetic_videos(
    rng: &mut Rng,
    dir: &Path,
    counts: SplitCounts,
    shape: (usize, usize, usize),
    imbalance: f64,
) -> Result<SampleManifest> {
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    for split in Split::ALL {
        let count = counts.get(split);
        for idx in 0..count {
            let label = split_label(idx, count, imbalance);
            let id = format!("{}-{idx:04}", split.as_str());
            let mut sample_rng = rng.split();
            let video = make_video(&mut sample_rng, shape, label)?;
            let file = format!("{id}.stc");
            write_container(
                &dir.join(&file),
                &[(VIDEO_ENTRY.to_string(), TensorEntry::F32(video))],
            )?;
            records.push(ManifestRecord {
                id,
                path: file,
                label,
                split,
                duration_s: shape.0 as f64 / VIDEO_FPS,
            });
        }
    }
    let manifest = SampleManifest::new(records)?;
    manifest.write(dir)?;
    Ok(manifest)
}

fn make_audio(
    rng: &mut Rng,
    feat_dim: usize,
    duration_range: (f64, f64),
    label: usize,
) -> Result<AudioFeatureStream> {
    let duration = duration_range.0 + rng.unit_f64() * (duration_range.1 - duration_range.0);
    let freq = [1.5, 4.0][label] * (0.9 + 0.2 * rng.unit_f64());
    let amp = [0.5, 1.1][label] * (0.9 + 0.2 * rng.unit_f64());

    let mut bases = Vec::with_capacity(feat_dim);
    let mut chan_amps = Vec::with_capacity(feat_dim);
    let mut phases = Vec::with_capacity(feat_dim);
    for _ in 0..feat_dim {
        bases.push((rng.unit_f64() - 0.5) * 2.0);
        chan_amps.push(0.5 + rng.unit_f64());
        phases.push(TAU * rng.unit_f64());
    }

    let hop = 0.01; // 10 ms frame grid
    let mut times = Vec::new();
    let mut features = Vec::new();
    let mut i = 0usize;
    loop {
        let t = i as f64 * hop;
        if t >= duration {
            break;
        }
        times.push(t);
        for j in 0..feat_dim {
            let osc = amp * chan_amps[j] * (TAU * freq * t + phases[j]).sin();
            let noise = (rng.unit_f64() - 0.5) * 0.2;
            features.push(bases[j] + osc + noise);
        }
        i += 1;
    }
    AudioFeatureStream::new(times, features, feat_dim, duration)
}

/// Generates labeled audio feature CSVs plus a manifest under `dir`.
/// The duration floor keeps every sample usable by both segmentation modes.
pub fn gen_synthetic_audio(
    rng: &mut Rng,
    dir: &Path,
    counts: SplitCounts,
    feat_dim: usize,
    imbalance: f64,
) -> Result<SampleManifest> {
    let duration_range = (4.5, 8.0);
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    for split in Split::ALL {
        let count = counts.get(split);
        for idx in 0..count {
            let label = split_label(idx, count, imbalance);
            let id = format!("{}-{idx:04}", split.as_str());
            let mut sample_rng = rng.split();
            let stream = make_audio(&mut sample_rng, feat_dim, duration_range, label)?;
            let file = format!("{id}.csv");
            stream.write_csv(&dir.join(&file))?;
            records.push(ManifestRecord {
                id,
                path: file,
                label,
                split,
                duration_s: stream.duration_s,
            });
        }
    }
    let manifest = SampleManifest::new(records)?;
    manifest.write(dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::audio::SegmentationSpec;
    use std::fs;
    use tempfile::tempdir;

    const SMALL: SplitCounts = SplitCounts {
        train: 4,
        val: 2,
        test: 2,
    };

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    #[test]
    fn video_generation_is_bit_deterministic() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let mut r1 = Rng::from_seed(99);
        let mut r2 = Rng::from_seed(99);
        gen_synthetic_videos(&mut r1, d1.path(), SMALL, (4, 12, 12), 0.5).unwrap();
        gen_synthetic_videos(&mut r2, d2.path(), SMALL, (4, 12, 12), 0.5).unwrap();
        assert_eq!(dir_bytes(d1.path()), dir_bytes(d2.path()));

        let mut r3 = Rng::from_seed(100);
        let d3 = tempdir().unwrap();
        gen_synthetic_videos(&mut r3, d3.path(), SMALL, (4, 12, 12), 0.5).unwrap();
        assert_ne!(dir_bytes(d1.path()), dir_bytes(d3.path()));
    }

    #[test]
    fn per_frame_means_do_not_separate_classes() {
        let dir = tempdir().unwrap();
        let counts = SplitCounts {
            train: 12,
            val: 1,
            test: 1,
        };
        let mut rng = Rng::from_seed(7);
        let manifest =
            gen_synthetic_videos(&mut rng, dir.path(), counts, (6, 16, 16), 0.5).unwrap();
        let mut by_class: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for rec in manifest.split(Split::Train) {
            let entries = crate::data::container::read_container(&dir.path().join(&rec.path))
                .unwrap();
            let video = crate::data::container::find_entry(entries, VIDEO_ENTRY)
                .unwrap()
                .into_tensor::<f32>()
                .unwrap();
            let s = video.shape().to_vec();
            let frame = s[2] * s[3];
            for t in 0..s[1] {
                let mut mean = 0.0f64;
                for c in 0..3 {
                    for i in 0..frame {
                        mean += video.data()[(c * s[1] + t) * frame + i] as f64;
                    }
                }
                by_class[rec.label].push(mean / (3 * frame) as f64);
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let gap = (avg(&by_class[0]) - avg(&by_class[1])).abs();
        // Frame means are pure jitter (scale 0.05); the class gap must sit
        // well inside that noise scale.
        assert!(gap < 0.02, "per-frame mean class gap {gap}");
    }

    #[test]
    fn audio_generation_deterministic_and_long_enough() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let mut r1 = Rng::from_seed(11);
        let mut r2 = Rng::from_seed(11);
        let m1 = gen_synthetic_audio(&mut r1, d1.path(), SMALL, 4, 0.5).unwrap();
        gen_synthetic_audio(&mut r2, d2.path(), SMALL, 4, 0.5).unwrap();
        assert_eq!(dir_bytes(d1.path()), dir_bytes(d2.path()));

        let floor = SegmentationSpec::fixed().min_fixed_duration_s();
        for rec in &m1.records {
            assert!(rec.duration_s >= floor, "{} too short", rec.id);
        }
    }

    #[test]
    fn imbalance_controls_label_fractions() {
        assert_eq!(split_label(0, 10, 0.7), 0);
        assert_eq!(split_label(2, 10, 0.7), 0);
        assert_eq!(split_label(3, 10, 0.7), 1);
        assert_eq!(split_label(9, 10, 0.7), 1);
        let positives: usize = (0..10).map(|i| split_label(i, 10, 0.7)).sum();
        assert_eq!(positives, 7);
    }
}
