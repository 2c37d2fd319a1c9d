//! Closed-form parameter and FLOP accounting for the video architectures.
//!
//! Totals cover convolution weights only; biases are reported separately
//! and the classifier head (identical across variants) is excluded, so the
//! numbers are directly comparable across block variants. With kernel
//! size 3 the per-block closed forms are:
//!
//! * fully-3D and three-plane (Block1): 27 * cin * cout
//! * 2D+1D (Block2 / Block2Plus):        9 * cin * cout + 3 * cout^2
//! * three-axial (Block3):               9 * cin * cout

use crate::blocks::BlockKind;
use crate::error::{Error, Result};
use crate::layers::MaxPool3d;
use crate::models::NetworkArch;
use serde::Serialize;

/// Per-layer and total parameter/FLOP accounting for one architecture.
#[derive(Debug, Clone, Serialize)]
pub struct ParamReport {
    pub name: String,
    /// Conv weight parameters per block in network order.
    pub per_block: Vec<usize>,
    /// Sum of `per_block`: conv weight parameters only.
    pub total_weights: usize,
    /// Conv bias parameters (one per conv output channel, all branches).
    pub total_biases: usize,
    /// fully3d total over this total, same channel ladder.
    pub decrease_factor: f64,
    /// Multiply-accumulate count for a given input volume, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flops: Option<u64>,
}

/// Closed-form conv weight count of one block (k = 3 on active axes).
pub fn block_weight_count(kind: BlockKind, cin: usize, cout: usize) -> usize {
    match kind {
        BlockKind::Fully3D | BlockKind::Block1 => 27 * cin * cout,
        BlockKind::Block2 | BlockKind::Block2Plus => 9 * cin * cout + 3 * cout * cout,
        BlockKind::Block3 => 9 * cin * cout,
    }
}

/// Closed-form conv bias count of one block (every conv carries a bias).
pub fn block_bias_count(kind: BlockKind, cout: usize) -> usize {
    match kind {
        BlockKind::Fully3D => cout,
        BlockKind::Block1 | BlockKind::Block3 => 3 * cout,
        BlockKind::Block2 | BlockKind::Block2Plus => 2 * cout,
    }
}

/// Counts parameters of a video architecture from the closed forms alone,
/// without allocating any tensors.
pub fn count_params(arch: &NetworkArch) -> Result<ParamReport> {
    let per_block: Vec<usize> = arch
        .blocks
        .iter()
        .map(|b| block_weight_count(b.kind, b.cin, b.cout))
        .collect();
    let total_weights = per_block.iter().sum();
    let total_biases = arch
        .blocks
        .iter()
        .map(|b| block_bias_count(b.kind, b.cout))
        .sum();
    let fully3d_total: usize = arch
        .blocks
        .iter()
        .map(|b| block_weight_count(BlockKind::Fully3D, b.cin, b.cout))
        .sum();
    if total_weights == 0 {
        return Err(Error::Arithmetic("zero parameter total".into()));
    }
    Ok(ParamReport {
        name: arch.name.as_str().to_string(),
        per_block,
        total_weights,
        total_biases,
        decrease_factor: fully3d_total as f64 / total_weights as f64,
        flops: None,
    })
}

/// Ratio of the fully-3D baseline total to this architecture's total.
/// The baseline must use the same channel ladder.
pub fn decrease_factor(report: &ParamReport, baseline: &ParamReport) -> Result<f64> {
    if report.total_weights == 0 {
        return Err(Error::Arithmetic("zero parameter total".into()));
    }
    Ok(baseline.total_weights as f64 / report.total_weights as f64)
}

/// Cross-check: builds the architecture's conv specs and sums the weight
/// element counts they would allocate. Independent of `count_params`'
/// closed forms.
pub fn allocated_weight_count(arch: &NetworkArch) -> Result<usize> {
    Ok(arch
        .blocks
        .iter()
        .map(|b| -> usize { b.conv_specs().iter().map(|c| c.weight_count()).sum() })
        .sum())
}

/// Multiply-accumulate count of every convolution in the network for a
/// single input volume [1, c0, L, H, W]: per conv, output positions x
/// kernel volume x input channels. Pooling, ReLU and the head are excluded.
pub fn count_flops(arch: &NetworkArch, input: (usize, usize, usize)) -> Result<u64> {
    let mut total: u64 = 0;
    let (mut l, mut h, mut w) = input;
    let pool = MaxPool3d::default();
    for spec in &arch.blocks {
        let mut shaped: Option<(usize, usize, usize)> = None;
        for (i, cs) in spec.conv_specs().iter().enumerate() {
            let is_sequential =
                matches!(spec.kind, BlockKind::Block2 | BlockKind::Block2Plus) && i > 0;
            let (il, ih, iw) = if is_sequential {
                shaped.expect("previous conv shaped")
            } else {
                (l, h, w)
            };
            let (ol, oh, ow) = cs.out_extents(il, ih, iw)?;
            let positions = (cs.cout * ol * oh * ow) as u64;
            total += positions * (cs.kernel_volume() * cs.cin) as u64;
            shaped = Some((ol, oh, ow));
        }
        let (cl, ch, cw) = shaped.expect("block has convs");
        let pooled = pool.out_extents(cl, ch, cw);
        l = pooled.0;
        h = pooled.1;
        w = pooled.2;
    }
    Ok(total)
}

/// Attaches a FLOP count for the given input volume to a report.
pub fn with_flops(mut report: ParamReport, arch: &NetworkArch, input: (usize, usize, usize)) -> Result<ParamReport> {
    report.flops = Some(count_flops(arch, input)?);
    Ok(report)
}
