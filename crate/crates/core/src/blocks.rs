//! The five spatio-temporal convolution block variants.
//!
//! Every block maps [N, cin, L, H, W] to [N, cout, ceil(L/4), ceil(H/4),
//! ceil(W/4)] under the default stride-2 convolutions and 2x2x2 ceil-mode
//! pooling, so the variants are drop-in replacements for one another:
//!
//! * `Fully3D`   - conv(3,3,3) -> ReLU -> maxpool
//! * `Block1`    - three parallel plane convs (HW, LH, LW) -> sum -> ReLU -> maxpool
//! * `Block2`    - HW-plane conv -> temporal 1D conv -> ReLU -> maxpool
//! * `Block2Plus`- Block2 with an extra ReLU between the 2D and 1D convs
//! * `Block3`    - three parallel axial convs (L, H, W), ReLU each -> sum -> ReLU -> maxpool
//!
//! Stride placement: parallel-branch kinds (Block1, Block3) stride every
//! axis in each branch so the branch outputs stay shape-aligned for the
//! sum; the sequential kind (Block2/2+) strides only the active axes of
//! each conv, putting the temporal stride on the 1D conv. Degenerate
//! (kernel-1) axes always get padding 0.

use crate::error::{Error, Result};
use crate::layers::{nested, Conv3d, ConvSpec, MaxPool3d, Param, Parameterized, Phase, Relu};
use crate::rng::Rng;
use crate::tensor::{NDTensor, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Fully3D,
    Block1,
    Block2,
    Block2Plus,
    Block3,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Fully3D => "fully3d",
            BlockKind::Block1 => "block1",
            BlockKind::Block2 => "block2",
            BlockKind::Block2Plus => "block2plus",
            BlockKind::Block3 => "block3",
        }
    }

    pub const ALL: [BlockKind; 5] = [
        BlockKind::Fully3D,
        BlockKind::Block1,
        BlockKind::Block2,
        BlockKind::Block2Plus,
        BlockKind::Block3,
    ];
}

/// Declarative description of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub cin: usize,
    pub cout: usize,
    /// Downsampling stride of the block; defaults to 2 on every axis.
    pub stride: (usize, usize, usize),
    /// Padding on active (kernel-3) axes; defaults to 1.
    pub padding: (usize, usize, usize),
}

impl BlockSpec {
    pub fn new(kind: BlockKind, cin: usize, cout: usize) -> Self {
        BlockSpec {
            kind,
            cin,
            cout,
            stride: (2, 2, 2),
            padding: (1, 1, 1),
        }
    }

    /// The constituent convolutions in their fixed construction order.
    ///
    /// Branch order is (HW, LH, LW) for Block1 and (L, H, W) for Block3;
    /// the summation happens in that same order regardless of evaluation
    /// order, which keeps results deterministic.
    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        let (cin, cout) = (self.cin, self.cout);
        let (sl, sh, sw) = self.stride;
        let (pl, ph, pw) = self.padding;
        match self.kind {
            BlockKind::Fully3D => vec![ConvSpec::new(
                cin,
                cout,
                (3, 3, 3),
                (sl, sh, sw),
                (pl, ph, pw),
            )],
            BlockKind::Block1 => vec![
                ConvSpec::new(cin, cout, (1, 3, 3), (sl, sh, sw), (0, ph, pw)),
                ConvSpec::new(cin, cout, (3, 3, 1), (sl, sh, sw), (pl, ph, 0)),
                ConvSpec::new(cin, cout, (3, 1, 3), (sl, sh, sw), (pl, 0, pw)),
            ],
            BlockKind::Block2 | BlockKind::Block2Plus => vec![
                ConvSpec::new(cin, cout, (1, 3, 3), (1, sh, sw), (0, ph, pw)),
                ConvSpec::new(cout, cout, (3, 1, 1), (sl, 1, 1), (pl, 0, 0)),
            ],
            BlockKind::Block3 => vec![
                ConvSpec::new(cin, cout, (3, 1, 1), (sl, sh, sw), (pl, 0, 0)),
                ConvSpec::new(cin, cout, (1, 3, 1), (sl, sh, sw), (0, ph, 0)),
                ConvSpec::new(cin, cout, (1, 1, 3), (sl, sh, sw), (0, 0, pw)),
            ],
        }
    }
}

/// An instantiated block with parameters and forward caches.
#[derive(Debug, Clone)]
pub struct Block<T> {
    pub spec: BlockSpec,
    convs: Vec<Conv3d<T>>,
    /// Inner ReLUs: one per branch for Block3, the extra one for Block2Plus.
    inner_relus: Vec<Relu<T>>,
    out_relu: Relu<T>,
    pool: MaxPool3d,
}

impl<T: Scalar> Block<T> {
    pub fn new(spec: BlockSpec, rng: &mut Rng) -> Result<Self> {
        if spec.cin == 0 || spec.cout == 0 {
            return Err(Error::Shape("block channel counts must be >= 1".into()));
        }
        let convs = spec
            .conv_specs()
            .into_iter()
            .map(|cs| Conv3d::new(cs, rng))
            .collect::<Result<Vec<_>>>()?;
        let inner = match spec.kind {
            BlockKind::Block2Plus => 1,
            BlockKind::Block3 => 3,
            _ => 0,
        };
        Ok(Block {
            spec,
            convs,
            inner_relus: (0..inner).map(|_| Relu::new()).collect(),
            out_relu: Relu::new(),
            pool: MaxPool3d::default(),
        })
    }

    /// Names of the constituent convs, matching `conv_specs` order.
    fn conv_names(&self) -> &'static [&'static str] {
        match self.spec.kind {
            BlockKind::Fully3D => &["conv"],
            BlockKind::Block1 => &["hw", "lh", "lw"],
            BlockKind::Block2 | BlockKind::Block2Plus => &["spatial", "temporal"],
            BlockKind::Block3 => &["l", "h", "w"],
        }
    }

    pub fn conv(&self, i: usize) -> &Conv3d<T> {
        &self.convs[i]
    }

    pub fn conv_mut(&mut self, i: usize) -> &mut Conv3d<T> {
        &mut self.convs[i]
    }

    /// Output extents for a given input volume (conv then ceil-mode pool).
    pub fn out_extents(&self, l: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let (cl, ch, cw) = self.convs[0].spec.out_extents(l, h, w)?;
        // Sequential kinds apply the second conv too.
        let (cl, ch, cw) = match self.spec.kind {
            BlockKind::Block2 | BlockKind::Block2Plus => {
                self.convs[1].spec.out_extents(cl, ch, cw)?
            }
            _ => (cl, ch, cw),
        };
        Ok(self.pool.out_extents(cl, ch, cw))
    }

    fn sum_branches(&self, outs: Vec<NDTensor<T>>) -> Result<NDTensor<T>> {
        let mut it = outs.into_iter();
        let mut acc = it.next().expect("at least one branch");
        for o in it {
            if o.shape() != acc.shape() {
                return Err(Error::Shape(format!(
                    "internal invariant violation: branch outputs misaligned \
                     ({:?} vs {:?}) in {} block",
                    acc.shape(),
                    o.shape(),
                    self.spec.kind.as_str()
                )));
            }
            acc.add_assign(&o)?;
        }
        Ok(acc)
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        let pre_pool = match self.spec.kind {
            BlockKind::Fully3D => {
                let y = self.convs[0].forward(x, phase)?;
                self.out_relu.forward(&y, phase)?
            }
            BlockKind::Block1 => {
                let outs = self
                    .convs
                    .iter_mut()
                    .map(|c| c.forward(x, phase))
                    .collect::<Result<Vec<_>>>()?;
                let sum = self.sum_branches(outs)?;
                self.out_relu.forward(&sum, phase)?
            }
            BlockKind::Block2 => {
                let y = self.convs[0].forward(x, phase)?;
                let y = self.convs[1].forward(&y, phase)?;
                self.out_relu.forward(&y, phase)?
            }
            BlockKind::Block2Plus => {
                let y = self.convs[0].forward(x, phase)?;
                let y = self.inner_relus[0].forward(&y, phase)?;
                let y = self.convs[1].forward(&y, phase)?;
                self.out_relu.forward(&y, phase)?
            }
            BlockKind::Block3 => {
                let mut outs = Vec::with_capacity(3);
                for (conv, relu) in self.convs.iter_mut().zip(&mut self.inner_relus) {
                    let y = conv.forward(x, phase)?;
                    outs.push(relu.forward(&y, phase)?);
                }
                let sum = self.sum_branches(outs)?;
                self.out_relu.forward(&sum, phase)?
            }
        };
        self.pool.forward(&pre_pool, phase)
    }

    pub fn backward(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        let g = self.pool.backward(grad_out)?;
        let g = self.out_relu.backward(&g)?;
        match self.spec.kind {
            BlockKind::Fully3D => self.convs[0].backward(&g),
            BlockKind::Block1 => {
                // The sum fans the same gradient into every branch; branch
                // input-gradients are summed back in fixed (HW, LH, LW) order.
                let mut acc: Option<NDTensor<T>> = None;
                for conv in self.convs.iter_mut() {
                    let gx = conv.backward(&g)?;
                    acc = Some(match acc {
                        None => gx,
                        Some(mut a) => {
                            a.add_assign(&gx)?;
                            a
                        }
                    });
                }
                Ok(acc.expect("three branches"))
            }
            BlockKind::Block2 => {
                let g = self.convs[1].backward(&g)?;
                self.convs[0].backward(&g)
            }
            BlockKind::Block2Plus => {
                let g = self.convs[1].backward(&g)?;
                let g = self.inner_relus[0].backward(&g)?;
                self.convs[0].backward(&g)
            }
            BlockKind::Block3 => {
                let mut acc: Option<NDTensor<T>> = None;
                for (conv, relu) in self.convs.iter_mut().zip(&mut self.inner_relus) {
                    let gb = relu.backward(&g)?;
                    let gx = conv.backward(&gb)?;
                    acc = Some(match acc {
                        None => gx,
                        Some(mut a) => {
                            a.add_assign(&gx)?;
                            a
                        }
                    });
                }
                Ok(acc.expect("three branches"))
            }
        }
    }

    /// Total allocated conv weight elements (excluding biases).
    pub fn weight_element_count(&self) -> usize {
        self.convs.iter().map(|c| c.weight.value.len()).sum()
    }
}

impl<T: Scalar> Parameterized<T> for Block<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        let names = self.conv_names();
        for (conv, name) in self.convs.iter_mut().zip(names) {
            conv.visit_params(&mut nested(name, f));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_fill(conv: &mut Conv3d<f64>) {
        // Center-tap identity kernel per output channel, summing channels.
        let (kl, kh, kw) = conv.spec.kernel;
        for v in conv.weight.value.data_mut() {
            *v = 0.0;
        }
        for co in 0..conv.spec.cout {
            for ci in 0..conv.spec.cin {
                *conv
                    .weight
                    .value
                    .at_mut(&[co, ci, kl / 2, kh / 2, kw / 2]) = 1.0;
            }
        }
        if let Some(b) = &mut conv.bias {
            for v in b.value.data_mut() {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn block1_delta_kernels_triple_the_input() {
        // Stride 1 so the plane convs pass the volume through; all three
        // branch kernels set to the delta kernel makes the pre-ReLU sum 3x.
        let mut spec = BlockSpec::new(BlockKind::Block1, 1, 1);
        spec.stride = (1, 1, 1);
        let mut rng = Rng::from_seed(1);
        let mut block = Block::<f64>::new(spec, &mut rng).unwrap();
        for i in 0..3 {
            delta_fill(block.conv_mut(i));
        }
        let x = NDTensor::<f64>::filled(&[1, 1, 2, 2, 2], 0.5).unwrap();
        // Non-negative input: ReLU is identity, pooling over equal values
        // returns the value itself.
        let y = block.forward(&x, Phase::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data()[0], 1.5);
    }

    #[test]
    fn all_kinds_share_output_shape() {
        let mut rng = Rng::from_seed(2);
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[2, 3, 5, 9, 7], -1.0, 1.0).unwrap();
        let mut shapes = Vec::new();
        for kind in BlockKind::ALL {
            let mut block = Block::<f64>::new(BlockSpec::new(kind, 3, 4), &mut rng).unwrap();
            let y = block.forward(&x, Phase::Eval).unwrap();
            assert_eq!(
                block.out_extents(5, 9, 7).unwrap(),
                (y.shape()[2], y.shape()[3], y.shape()[4])
            );
            shapes.push(y.shape().to_vec());
        }
        assert!(shapes.windows(2).all(|w| w[0] == w[1]), "shapes {shapes:?}");
    }

    #[test]
    fn block2plus_equals_block2_on_nonnegative_intermediates() {
        let mut rng = Rng::from_seed(3);
        let spec2 = BlockSpec::new(BlockKind::Block2, 2, 3);
        let spec2p = BlockSpec {
            kind: BlockKind::Block2Plus,
            ..spec2
        };
        let mut b2 = Block::<f64>::new(spec2, &mut rng).unwrap();
        let mut b2p = Block::<f64>::new(spec2p, &mut rng).unwrap();
        // Positive weights and inputs force a non-negative 2D-conv output,
        // where the inner ReLU is the identity.
        for i in 0..2 {
            let src = NDTensor::<f64>::rand_uniform(
                &mut rng,
                b2.conv(i).weight.value.shape(),
                0.01,
                0.5,
            )
            .unwrap();
            *&mut b2.conv_mut(i).weight.value = src.clone();
            *&mut b2p.conv_mut(i).weight.value = src;
        }
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[1, 2, 4, 6, 6], 0.0, 1.0).unwrap();
        let y2 = b2.forward(&x, Phase::Eval).unwrap();
        let y2p = b2p.forward(&x, Phase::Eval).unwrap();
        assert_eq!(y2, y2p);
    }

    #[test]
    fn parameter_counts_match_closed_forms() {
        // 100 random (cin, cout) pairs audited against the per-kind forms.
        let mut rng = Rng::from_seed(5);
        for _ in 0..100 {
            let cin = 1 + rng.below(64);
            let cout = 1 + rng.below(64);
            for kind in BlockKind::ALL {
                let expected = match kind {
                    BlockKind::Fully3D | BlockKind::Block1 => 27 * cin * cout,
                    BlockKind::Block2 | BlockKind::Block2Plus => {
                        9 * cin * cout + 3 * cout * cout
                    }
                    BlockKind::Block3 => 9 * cin * cout,
                };
                let spec = BlockSpec::new(kind, cin, cout);
                let total: usize = spec.conv_specs().iter().map(|c| c.weight_count()).sum();
                assert_eq!(total, expected, "{kind:?} cin={cin} cout={cout}");
            }
        }
    }

    #[test]
    fn known_weight_counts() {
        let count = |kind, cin, cout| -> usize {
            BlockSpec::new(kind, cin, cout)
                .conv_specs()
                .iter()
                .map(|c| c.weight_count())
                .sum()
        };
        assert_eq!(count(BlockKind::Block1, 64, 128), 221_184);
        assert_eq!(count(BlockKind::Fully3D, 64, 128), 221_184);
        assert_eq!(count(BlockKind::Block2, 128, 128), 196_608);
        assert_eq!(count(BlockKind::Block3, 64, 128), 73_728);
    }

    #[test]
    fn allocated_weights_match_spec_counts() {
        let mut rng = Rng::from_seed(9);
        for kind in BlockKind::ALL {
            let spec = BlockSpec::new(kind, 5, 7);
            let block = Block::<f32>::new(spec, &mut rng).unwrap();
            let expected: usize = spec.conv_specs().iter().map(|c| c.weight_count()).sum();
            assert_eq!(block.weight_element_count(), expected);
        }
    }
}
