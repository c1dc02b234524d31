//! Parameter and multiply-accumulate (MAC) accounting.
//!
//! Conventions:
//! - a bias addition counts as one MAC per output element;
//! - the forward and inverse 2D Hadamard transforms cost zero MACs (additions
//!   and subtractions only, normalization folded into the scaling);
//! - scaling plus soft-thresholding of the HT-perceptron costs one MAC per
//!   input element per path (one multiply for scaling, one add for the shrink);
//! - activations, pooling and dropout cost nothing.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// One layer's shape, enough to price it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDesc {
    /// `kernel x kernel` convolution, stride 1, same padding, on `size x size` maps.
    Conv2d {
        kernel: u64,
        in_channels: u64,
        out_channels: u64,
        size: u64,
        bias: bool,
    },
    /// `paths`-path HT-perceptron on `size x size` maps.
    HtPerceptron {
        paths: u64,
        in_channels: u64,
        out_channels: u64,
        size: u64,
    },
    Dense {
        fan_in: u64,
        fan_out: u64,
        bias: bool,
    },
    /// Parameter-free layers (activation, pooling, dropout, flatten).
    Free,
}

/// A named contribution to a [`CostReport`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostItem {
    pub label: String,
    pub params: u64,
    pub macs: u64,
}

/// Totals plus the per-operation enumeration they are summed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub params: u64,
    pub macs: u64,
    pub breakdown: Vec<CostItem>,
}

impl CostReport {
    fn from_items(breakdown: Vec<CostItem>) -> Self {
        let params = breakdown.iter().map(|i| i.params).sum();
        let macs = breakdown.iter().map(|i| i.macs).sum();
        Self {
            params,
            macs,
            breakdown,
        }
    }
}

fn item(label: String, params: u64, macs: u64) -> CostItem {
    CostItem {
        label,
        params,
        macs,
    }
}

impl LayerDesc {
    /// Per-operation enumeration of one layer.
    pub fn breakdown(&self, name: &str) -> Vec<CostItem> {
        match *self {
            LayerDesc::Conv2d {
                kernel,
                in_channels,
                out_channels,
                size,
                bias,
            } => {
                let mut items = vec![item(
                    format!("{name}.weight"),
                    kernel * kernel * in_channels * out_channels,
                    kernel * kernel * in_channels * out_channels * size * size,
                )];
                if bias {
                    items.push(item(
                        format!("{name}.bias"),
                        out_channels,
                        out_channels * size * size,
                    ));
                }
                items
            }
            LayerDesc::HtPerceptron {
                paths,
                in_channels,
                out_channels,
                size,
            } => {
                let n2 = size * size;
                let mut items = vec![item(format!("{name}.ht2d"), 0, 0)];
                for p in 0..paths {
                    items.push(item(
                        format!("{name}.path{p}.scaling"),
                        n2,
                        n2 * in_channels,
                    ));
                    items.push(item(
                        format!("{name}.path{p}.channelwise"),
                        in_channels * out_channels,
                        n2 * in_channels * out_channels,
                    ));
                    items.push(item(format!("{name}.path{p}.soft_threshold"), n2, 0));
                }
                items.push(item(format!("{name}.iht2d"), 0, 0));
                items
            }
            LayerDesc::Dense {
                fan_in,
                fan_out,
                bias,
            } => {
                let mut items = vec![item(
                    format!("{name}.weight"),
                    fan_in * fan_out,
                    fan_in * fan_out,
                )];
                if bias {
                    items.push(item(format!("{name}.bias"), fan_out, fan_out));
                }
                items
            }
            LayerDesc::Free => Vec::new(),
        }
    }
}

/// Closed-form parameter count of one layer.
pub fn count_params(layer: &LayerDesc) -> u64 {
    match *layer {
        LayerDesc::Conv2d {
            kernel,
            in_channels,
            out_channels,
            bias,
            ..
        } => kernel * kernel * in_channels * out_channels + if bias { out_channels } else { 0 },
        LayerDesc::HtPerceptron {
            paths,
            in_channels,
            out_channels,
            size,
        } => paths * (2 * size * size + in_channels * out_channels),
        LayerDesc::Dense {
            fan_in,
            fan_out,
            bias,
        } => fan_in * fan_out + if bias { fan_out } else { 0 },
        LayerDesc::Free => 0,
    }
}

/// Closed-form MAC count of one layer.
pub fn count_macs(layer: &LayerDesc) -> u64 {
    match *layer {
        LayerDesc::Conv2d {
            kernel,
            in_channels,
            out_channels,
            size,
            bias,
        } => {
            let n2 = size * size;
            kernel * kernel * n2 * in_channels * out_channels
                + if bias { n2 * out_channels } else { 0 }
        }
        LayerDesc::HtPerceptron {
            paths,
            in_channels,
            out_channels,
            size,
        } => {
            let n2 = size * size;
            paths * (n2 * in_channels + n2 * in_channels * out_channels)
        }
        LayerDesc::Dense {
            fan_in,
            fan_out,
            bias,
        } => fan_in * fan_out + if bias { fan_out } else { 0 },
        LayerDesc::Free => 0,
    }
}

/// Itemized report for a sequence of named layers.
pub fn cost_report<'a>(layers: impl IntoIterator<Item = (&'a str, LayerDesc)>) -> CostReport {
    CostReport::from_items(
        layers
            .into_iter()
            .flat_map(|(name, l)| l.breakdown(name))
            .collect(),
    )
}
