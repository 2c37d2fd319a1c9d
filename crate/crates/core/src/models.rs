//! Named end-to-end architectures.
//!
//! Video networks are four blocks over the channel ladder
//! [3, 64, 64, 128, 128] followed by global average pooling and a linear
//! 128 -> 2 head. The seven named variants replace trailing fully-3D
//! blocks with factorized ones. The default ladder is a derived choice:
//! it is the unique power-of-two ladder whose closed-form counts reproduce
//! the reference parameter totals within 1% with decrease factors rounding
//! to 1.8 / 2.1 / 2.3 (see the enumeration test in the analysis module).
//!
//! Audio baselines: a two-hidden-layer perceptron over pooled features
//! (512-256 or 256-128 with batch norm, ReLU and dropout) and an LSTM over
//! exactly 87 feature segments. The feature-sequence model batch-normalizes
//! per-frame feature vectors and runs a single-layer LSTM.
//!
//! Class convention: index 1 is the positive ("intoxicated") class.

use crate::blocks::{Block, BlockKind, BlockSpec};
use crate::error::{Error, Result};
use crate::layers::{
    nested, nested_buf, BatchNorm, Dropout, Linear, Lstm, Param, Parameterized, Phase, Relu,
};
use crate::rng::Rng;
use crate::tensor::{NDTensor, Scalar};

/// Channel ladder reproducing the reference parameter table.
pub const DEFAULT_CHANNELS: [usize; 5] = [3, 64, 64, 128, 128];

/// Number of LSTM input segments in the audio models.
pub const AUDIO_SEGMENTS: usize = 87;

/// The architecture vocabulary; these identifiers are the stable CLI surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchName {
    Fully3d,
    TwoBlock1,
    TwoBlock2,
    TwoBlock2Plus,
    ThreeBlock2,
    ThreeBlock2Plus,
    TwoBlock3,
    AudioDnn512,
    AudioDnn256,
    AudioLstmFixed,
    AudioLstmVariable,
    FeatLstm,
}

impl ArchName {
    pub const ALL: [ArchName; 12] = [
        ArchName::Fully3d,
        ArchName::TwoBlock1,
        ArchName::TwoBlock2,
        ArchName::TwoBlock2Plus,
        ArchName::ThreeBlock2,
        ArchName::ThreeBlock2Plus,
        ArchName::TwoBlock3,
        ArchName::AudioDnn512,
        ArchName::AudioDnn256,
        ArchName::AudioLstmFixed,
        ArchName::AudioLstmVariable,
        ArchName::FeatLstm,
    ];

    pub const VIDEO: [ArchName; 7] = [
        ArchName::Fully3d,
        ArchName::TwoBlock1,
        ArchName::TwoBlock2,
        ArchName::TwoBlock2Plus,
        ArchName::ThreeBlock2,
        ArchName::ThreeBlock2Plus,
        ArchName::TwoBlock3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchName::Fully3d => "fully3d",
            ArchName::TwoBlock1 => "two-block1",
            ArchName::TwoBlock2 => "two-block2",
            ArchName::TwoBlock2Plus => "two-block2plus",
            ArchName::ThreeBlock2 => "three-block2",
            ArchName::ThreeBlock2Plus => "three-block2plus",
            ArchName::TwoBlock3 => "two-block3",
            ArchName::AudioDnn512 => "audio-dnn-512",
            ArchName::AudioDnn256 => "audio-dnn-256",
            ArchName::AudioLstmFixed => "audio-lstm-fixed",
            ArchName::AudioLstmVariable => "audio-lstm-variable",
            ArchName::FeatLstm => "feat-lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|a| a.as_str()).collect();
                Error::Usage(format!("unknown architecture '{s}'; known: {known:?}"))
            })
    }

    pub fn is_video(self) -> bool {
        Self::VIDEO.contains(&self)
    }

    /// Block kinds of the four video blocks, or None for audio/feature archs.
    pub fn block_kinds(self) -> Option<[BlockKind; 4]> {
        use BlockKind::*;
        match self {
            ArchName::Fully3d => Some([Fully3D, Fully3D, Fully3D, Fully3D]),
            ArchName::TwoBlock1 => Some([Fully3D, Fully3D, Block1, Block1]),
            ArchName::TwoBlock2 => Some([Fully3D, Fully3D, Block2, Block2]),
            ArchName::TwoBlock2Plus => Some([Fully3D, Fully3D, Block2Plus, Block2Plus]),
            ArchName::ThreeBlock2 => Some([Fully3D, Block2, Block2, Block2]),
            ArchName::ThreeBlock2Plus => Some([Fully3D, Block2Plus, Block2Plus, Block2Plus]),
            ArchName::TwoBlock3 => Some([Fully3D, Fully3D, Block3, Block3]),
            _ => None,
        }
    }
}

/// Structural description of a video network (blocks + channel ladder).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    pub name: ArchName,
    pub channels: [usize; 5],
    pub blocks: [BlockSpec; 4],
}

/// Builds the declarative description of one of the seven video rows.
/// Panics never: every video name has block kinds.
pub fn video_arch(name: ArchName, channels: [usize; 5]) -> NetworkArch {
    let kinds = name
        .block_kinds()
        .unwrap_or_else(|| panic!("{} is not a video architecture", name.as_str()));
    let blocks = [
        BlockSpec::new(kinds[0], channels[0], channels[1]),
        BlockSpec::new(kinds[1], channels[1], channels[2]),
        BlockSpec::new(kinds[2], channels[2], channels[3]),
        BlockSpec::new(kinds[3], channels[3], channels[4]),
    ];
    NetworkArch {
        name,
        channels,
        blocks,
    }
}

/// Build-time configuration shared by all architectures.
#[derive(Debug, Clone)]
pub struct ArchConfig {
    /// Video channel ladder.
    pub channels: [usize; 5],
    /// Input feature dimension: pooled feature width for the audio DNNs,
    /// per-segment width for the audio LSTMs, per-frame width for the
    /// feature-sequence LSTM.
    pub input_dim: usize,
    /// Hidden size of the LSTM models.
    pub lstm_hidden: usize,
    /// Dropout probability in the audio DNNs.
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            channels: DEFAULT_CHANNELS,
            input_dim: 16,
            lstm_hidden: 128,
            dropout: 0.5,
        }
    }
}

/// Four blocks, global average pooling, linear head.
#[derive(Debug, Clone)]
pub struct VideoNet<T> {
    pub arch: NetworkArch,
    blocks: Vec<Block<T>>,
    head: Linear<T>,
    gap_shape: Option<Vec<usize>>,
}

impl<T: Scalar> VideoNet<T> {
    pub fn new(arch: NetworkArch, rng: &mut Rng) -> Result<Self> {
        let blocks = arch
            .blocks
            .iter()
            .map(|spec| Block::new(*spec, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(arch.channels[4], 2, rng)?;
        Ok(VideoNet {
            arch,
            blocks,
            head,
            gap_shape: None,
        })
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        if x.rank() != 5 {
            return Err(Error::Shape(format!(
                "video net expects [N,C,L,H,W], got rank {}",
                x.rank()
            )));
        }
        if x.shape()[1] != self.arch.channels[0] {
            return Err(Error::Shape(format!(
                "video net expects {} input channels, got {}",
                self.arch.channels[0],
                x.shape()[1]
            )));
        }
        let mut cur = x.clone();
        for block in &mut self.blocks {
            cur = block.forward(&cur, phase)?;
        }
        // Global average pool over (L', H', W') per channel.
        let s = cur.shape().to_vec();
        let (n, c, vol) = (s[0], s[1], s[2] * s[3] * s[4]);
        let volf = T::of_f64(vol as f64);
        let mut pooled = NDTensor::zeros(&[n, c])?;
        for nn in 0..n {
            for ch in 0..c {
                let base = (nn * c + ch) * vol;
                let mut acc = T::zero();
                for i in 0..vol {
                    acc += cur.data()[base + i];
                }
                pooled.data_mut()[nn * c + ch] = acc / volf;
            }
        }
        if phase == Phase::Train {
            self.gap_shape = Some(s);
        }
        self.head.forward(&pooled, phase)
    }

    pub fn backward(&mut self, grad_logits: &NDTensor<T>) -> Result<NDTensor<T>> {
        let g = self.head.backward(grad_logits)?;
        let s = self
            .gap_shape
            .take()
            .ok_or_else(|| Error::Shape("video backward without training forward".into()))?;
        let (n, c, vol) = (s[0], s[1], s[2] * s[3] * s[4]);
        let volf = T::of_f64(vol as f64);
        let mut grad_pool = NDTensor::zeros(&s)?;
        for nn in 0..n {
            for ch in 0..c {
                let gv = g.data()[nn * c + ch] / volf;
                let base = (nn * c + ch) * vol;
                for i in 0..vol {
                    grad_pool.data_mut()[base + i] = gv;
                }
            }
        }
        let mut cur = grad_pool;
        for block in self.blocks.iter_mut().rev() {
            cur = block.backward(&cur)?;
        }
        Ok(cur)
    }
}

impl<T: Scalar> Parameterized<T> for VideoNet<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("block{}", i + 1);
            block.visit_params(&mut nested(&prefix, f));
        }
        self.head.visit_params(&mut nested("head", f));
    }
}

/// Two-hidden-layer perceptron with batch norm, ReLU and dropout.
#[derive(Debug, Clone)]
pub struct AudioDnn<T> {
    pub input_dim: usize,
    pub hidden: (usize, usize),
    l1: Linear<T>,
    bn1: BatchNorm<T>,
    relu1: Relu<T>,
    drop1: Dropout<T>,
    l2: Linear<T>,
    bn2: BatchNorm<T>,
    relu2: Relu<T>,
    drop2: Dropout<T>,
    l3: Linear<T>,
}

impl<T: Scalar> AudioDnn<T> {
    pub fn new(input_dim: usize, hidden: (usize, usize), dropout: f64, rng: &mut Rng) -> Result<Self> {
        Ok(AudioDnn {
            input_dim,
            hidden,
            l1: Linear::new(input_dim, hidden.0, rng)?,
            bn1: BatchNorm::new(hidden.0)?,
            relu1: Relu::new(),
            drop1: Dropout::new(dropout)?,
            l2: Linear::new(hidden.0, hidden.1, rng)?,
            bn2: BatchNorm::new(hidden.1)?,
            relu2: Relu::new(),
            drop2: Dropout::new(dropout)?,
            l3: Linear::new(hidden.1, 2, rng)?,
        })
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase, rng: &mut Rng) -> Result<NDTensor<T>> {
        if x.rank() != 2 || x.shape()[1] != self.input_dim {
            return Err(Error::Shape(format!(
                "audio dnn expects [N,{}], got {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let y = self.l1.forward(x, phase)?;
        let y = self.bn1.forward(&y, phase)?;
        let y = self.relu1.forward(&y, phase)?;
        let y = self.drop1.forward(&y, phase, rng)?;
        let y = self.l2.forward(&y, phase)?;
        let y = self.bn2.forward(&y, phase)?;
        let y = self.relu2.forward(&y, phase)?;
        let y = self.drop2.forward(&y, phase, rng)?;
        self.l3.forward(&y, phase)
    }

    pub fn backward(&mut self, grad_logits: &NDTensor<T>) -> Result<NDTensor<T>> {
        let g = self.l3.backward(grad_logits)?;
        let g = self.drop2.backward(&g)?;
        let g = self.relu2.backward(&g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.l2.backward(&g)?;
        let g = self.drop1.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.l1.backward(&g)
    }
}

impl<T: Scalar> Parameterized<T> for AudioDnn<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.l1.visit_params(&mut nested("l1", f));
        self.bn1.visit_params(&mut nested("bn1", f));
        self.l2.visit_params(&mut nested("l2", f));
        self.bn2.visit_params(&mut nested("bn2", f));
        self.l3.visit_params(&mut nested("l3", f));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut NDTensor<T>)) {
        self.bn1.visit_buffers(&mut nested_buf("bn1", f));
        self.bn2.visit_buffers(&mut nested_buf("bn2", f));
    }
}

/// LSTM over exactly 87 pooled audio segments; final hidden state feeds a
/// linear head.
#[derive(Debug, Clone)]
pub struct AudioLstm<T> {
    pub feat_dim: usize,
    lstm: Lstm<T>,
    head: Linear<T>,
}

impl<T: Scalar> AudioLstm<T> {
    pub fn new(feat_dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(AudioLstm {
            feat_dim,
            lstm: Lstm::new(feat_dim, hidden, rng)?,
            head: Linear::new(hidden, 2, rng)?,
        })
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        if x.rank() != 3 || x.shape()[1] != AUDIO_SEGMENTS || x.shape()[2] != self.feat_dim {
            return Err(Error::Shape(format!(
                "audio lstm expects [N,{AUDIO_SEGMENTS},{}], got {:?}",
                self.feat_dim,
                x.shape()
            )));
        }
        let (_, final_h) = self.lstm.forward(x, phase)?;
        self.head.forward(&final_h, phase)
    }

    pub fn backward(&mut self, grad_logits: &NDTensor<T>) -> Result<NDTensor<T>> {
        let g_final = self.head.backward(grad_logits)?;
        let n = g_final.shape()[0];
        let zeros = NDTensor::zeros(&[n, AUDIO_SEGMENTS, self.lstm.hidden_dim])?;
        self.lstm.backward(&zeros, Some(&g_final))
    }
}

impl<T: Scalar> Parameterized<T> for AudioLstm<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.lstm.visit_params(&mut nested("lstm", f));
        self.head.visit_params(&mut nested("head", f));
    }
}

/// Per-feature batch norm, then an LSTM over precomputed per-frame feature
/// vectors; final hidden state feeds the linear head.
#[derive(Debug, Clone)]
pub struct FeatLstm<T> {
    pub feat_dim: usize,
    bn: BatchNorm<T>,
    lstm: Lstm<T>,
    head: Linear<T>,
    lstm_t: Option<usize>,
}

impl<T: Scalar> FeatLstm<T> {
    pub fn new(feat_dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(FeatLstm {
            feat_dim,
            bn: BatchNorm::new(feat_dim)?,
            lstm: Lstm::new(feat_dim, hidden, rng)?,
            head: Linear::new(hidden, 2, rng)?,
            lstm_t: None,
        })
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        if x.rank() != 3 || x.shape()[2] != self.feat_dim {
            return Err(Error::Shape(format!(
                "feature lstm expects [N,T,{}], got {:?}",
                self.feat_dim,
                x.shape()
            )));
        }
        let y = self.bn.forward(x, phase)?;
        let (_, final_h) = self.lstm.forward(&y, phase)?;
        if phase == Phase::Train {
            self.lstm_t = Some(x.shape()[1]);
        }
        self.head.forward(&final_h, phase)
    }

    pub fn backward(&mut self, grad_logits: &NDTensor<T>) -> Result<NDTensor<T>> {
        let g_final = self.head.backward(grad_logits)?;
        let n = g_final.shape()[0];
        let t = self.lstm_t.take().ok_or_else(|| {
            Error::Shape("feature lstm backward without training forward".into())
        })?;
        let zeros = NDTensor::zeros(&[n, t, self.lstm.hidden_dim])?;
        let g = self.lstm.backward(&zeros, Some(&g_final))?;
        self.bn.backward(&g)
    }
}

impl<T: Scalar> Parameterized<T> for FeatLstm<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.bn.visit_params(&mut nested("bn", f));
        self.lstm.visit_params(&mut nested("lstm", f));
        self.head.visit_params(&mut nested("head", f));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut NDTensor<T>)) {
        self.bn.visit_buffers(&mut nested_buf("bn", f));
    }
}

/// Any buildable model, dispatching on input kind.
#[derive(Debug, Clone)]
pub enum Model<T> {
    Video(VideoNet<T>),
    AudioDnn(AudioDnn<T>),
    AudioLstm(AudioLstm<T>),
    FeatLstm(FeatLstm<T>),
}

impl<T: Scalar> Model<T> {
    /// Seeded construction by name; identical name + seed gives
    /// bit-identical initial parameters.
    pub fn build(name: ArchName, cfg: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        Ok(match name {
            n if n.is_video() => Model::Video(VideoNet::new(video_arch(n, cfg.channels), rng)?),
            ArchName::AudioDnn512 => {
                Model::AudioDnn(AudioDnn::new(cfg.input_dim, (512, 256), cfg.dropout, rng)?)
            }
            ArchName::AudioDnn256 => {
                Model::AudioDnn(AudioDnn::new(cfg.input_dim, (256, 128), cfg.dropout, rng)?)
            }
            ArchName::AudioLstmFixed | ArchName::AudioLstmVariable => {
                Model::AudioLstm(AudioLstm::new(cfg.input_dim, cfg.lstm_hidden, rng)?)
            }
            ArchName::FeatLstm => {
                Model::FeatLstm(FeatLstm::new(cfg.input_dim, cfg.lstm_hidden, rng)?)
            }
            _ => unreachable!(),
        })
    }

    /// Forward pass to logits [N, 2]. `rng` drives dropout in training.
    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase, rng: &mut Rng) -> Result<NDTensor<T>> {
        match self {
            Model::Video(m) => m.forward(x, phase),
            Model::AudioDnn(m) => m.forward(x, phase, rng),
            Model::AudioLstm(m) => m.forward(x, phase),
            Model::FeatLstm(m) => m.forward(x, phase),
        }
    }

    pub fn backward(&mut self, grad_logits: &NDTensor<T>) -> Result<NDTensor<T>> {
        match self {
            Model::Video(m) => m.backward(grad_logits),
            Model::AudioDnn(m) => m.backward(grad_logits),
            Model::AudioLstm(m) => m.backward(grad_logits),
            Model::FeatLstm(m) => m.backward(grad_logits),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Model<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        match self {
            Model::Video(m) => m.visit_params(f),
            Model::AudioDnn(m) => m.visit_params(f),
            Model::AudioLstm(m) => m.visit_params(f),
            Model::FeatLstm(m) => m.visit_params(f),
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut NDTensor<T>)) {
        match self {
            Model::Video(m) => m.visit_buffers(f),
            Model::AudioDnn(m) => m.visit_buffers(f),
            Model::AudioLstm(m) => m.visit_buffers(f),
            Model::FeatLstm(m) => m.visit_buffers(f),
        }
    }
}

/// Row-wise softmax over the class axis of [N, C] logits.
pub fn softmax<T: Scalar>(logits: &NDTensor<T>) -> Result<NDTensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::Shape("softmax expects [N,C]".into()));
    }
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    Ok(out)
}

/// Probability of the positive (intoxicated, index 1) class per sample.
pub fn positive_probabilities<T: Scalar>(logits: &NDTensor<T>) -> Result<Vec<f64>> {
    let probs = softmax(logits)?;
    let c = probs.shape()[1];
    Ok(probs
        .data()
        .chunks(c)
        .map(|row| row[1].as_f64())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_names_round_trip() {
        for a in ArchName::ALL {
            assert_eq!(ArchName::parse(a.as_str()).unwrap(), a);
        }
        assert!(matches!(ArchName::parse("nope"), Err(Error::Usage(_))));
    }

    #[test]
    fn video_rows_have_expected_block_kinds() {
        use BlockKind::*;
        let arch = video_arch(ArchName::ThreeBlock2Plus, DEFAULT_CHANNELS);
        let kinds: Vec<BlockKind> = arch.blocks.iter().map(|b| b.kind).collect();
        assert_eq!(kinds, vec![Fully3D, Block2Plus, Block2Plus, Block2Plus]);
        assert_eq!(arch.blocks[0].cin, 3);
        assert_eq!(arch.blocks[3].cout, 128);
    }

    #[test]
    fn zero_video_input_gives_uniform_probabilities() {
        let cfg = ArchConfig {
            channels: [3, 4, 4, 6, 6],
            ..Default::default()
        };
        let mut rng = Rng::from_seed(1);
        let mut model = Model::<f64>::build(ArchName::Fully3d, &cfg, &mut rng).unwrap();
        let x = NDTensor::<f64>::zeros(&[1, 3, 4, 8, 8]).unwrap();
        let logits = model.forward(&x, Phase::Eval, &mut rng).unwrap();
        // Zero input + zero head bias: logits [0,0], probabilities uniform.
        assert_eq!(logits.data(), &[0.0, 0.0]);
        let p = softmax(&logits).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
    }

    #[test]
    fn all_seven_video_archs_share_io_shapes() {
        let cfg = ArchConfig {
            channels: [3, 4, 4, 6, 6],
            ..Default::default()
        };
        let mut rng = Rng::from_seed(3);
        let x = NDTensor::<f32>::rand_uniform(&mut rng, &[2, 3, 8, 32, 32], -1.0, 1.0).unwrap();
        for name in ArchName::VIDEO {
            let mut model = Model::<f32>::build(name, &cfg, &mut rng).unwrap();
            let y = model.forward(&x, Phase::Eval, &mut rng).unwrap();
            assert_eq!(y.shape(), &[2, 2], "{}", name.as_str());
        }
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let cfg = ArchConfig::default();
        let collect = |seed: u64| -> Vec<f32> {
            let mut rng = Rng::from_seed(seed);
            let mut m = Model::<f32>::build(ArchName::TwoBlock3, &cfg, &mut rng).unwrap();
            let mut out = Vec::new();
            m.visit_params(&mut |_, p| out.extend_from_slice(p.value.data()));
            out
        };
        assert_eq!(collect(7), collect(7));
        assert_ne!(collect(7), collect(8));
    }

    #[test]
    fn audio_lstm_rejects_wrong_segment_count() {
        let cfg = ArchConfig {
            input_dim: 4,
            lstm_hidden: 8,
            ..Default::default()
        };
        let mut rng = Rng::from_seed(2);
        let mut model = Model::<f32>::build(ArchName::AudioLstmFixed, &cfg, &mut rng).unwrap();
        let bad = NDTensor::<f32>::zeros(&[1, 86, 4]).unwrap();
        assert!(matches!(
            model.forward(&bad, Phase::Eval, &mut rng),
            Err(Error::Shape(_))
        ));
        let good = NDTensor::<f32>::zeros(&[1, 87, 4]).unwrap();
        assert!(model.forward(&good, Phase::Eval, &mut rng).is_ok());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::from_seed(6);
        let logits = NDTensor::<f32>::rand_uniform(&mut rng, &[10, 2], -8.0, 8.0).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(2) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn feat_lstm_t1_matches_cell_step_shape() {
        let cfg = ArchConfig {
            input_dim: 5,
            lstm_hidden: 4,
            ..Default::default()
        };
        let mut rng = Rng::from_seed(4);
        let mut model = Model::<f64>::build(ArchName::FeatLstm, &cfg, &mut rng).unwrap();
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[3, 1, 5], -1.0, 1.0).unwrap();
        let y = model.forward(&x, Phase::Eval, &mut rng).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
    }
}
