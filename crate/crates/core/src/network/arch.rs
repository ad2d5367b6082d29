use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// What follows a convolution + ReLU block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostOp {
    None,
    /// Average pooling, window 2, stride 2. Odd widths drop the last sample.
    AvgPool,
    /// Nearest-neighbour upsampling by 2.
    Upsample,
}

impl PostOp {
    pub fn code(self) -> u64 {
        match self {
            PostOp::None => 0,
            PostOp::AvgPool => 1,
            PostOp::Upsample => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(PostOp::None),
            1 => Some(PostOp::AvgPool),
            2 => Some(PostOp::Upsample),
            _ => None,
        }
    }

    pub fn output_width(self, width: usize) -> usize {
        match self {
            PostOp::None => width,
            PostOp::AvgPool => width / 2,
            PostOp::Upsample => width * 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub channels: usize,
    pub kernel_width: usize,
    pub padding: usize,
    pub stride: usize,
    pub post: PostOp,
}

impl ConvLayerSpec {
    /// Stride-1 layer with "same" padding for an odd kernel width.
    pub fn same(filters: usize, channels: usize, kernel_width: usize, post: PostOp) -> Self {
        ConvLayerSpec {
            filters,
            channels,
            kernel_width,
            padding: kernel_width.saturating_sub(1) / 2,
            stride: 1,
            post,
        }
    }

    /// `W - F + 2g + 1`.
    pub fn conv_width(&self, input_width: usize) -> Option<usize> {
        (input_width + 2 * self.padding + 1).checked_sub(self.kernel_width)
    }
}

/// Layer stack of the autoencoder: convolutions (each followed by ReLU and an
/// optional pool/upsample), a flatten, then one affine FC layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_len: usize,
    pub conv_layers: Vec<ConvLayerSpec>,
    pub fc_out: usize,
}

/// Widths seen by one convolution block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerWidths {
    pub input: usize,
    pub conv: usize,
    pub output: usize,
}

impl ArchSpec {
    /// CONV(16) pool, CONV(64) pool, CONV(64) up, CONV(16) up, FC, with
    /// kernel width 3 and same padding throughout. `input_len` is also the FC
    /// output size.
    pub fn standard(input_len: usize) -> Self {
        ArchSpec {
            input_len,
            conv_layers: vec![
                ConvLayerSpec::same(16, 1, 3, PostOp::AvgPool),
                ConvLayerSpec::same(64, 16, 3, PostOp::AvgPool),
                ConvLayerSpec::same(64, 64, 3, PostOp::Upsample),
                ConvLayerSpec::same(16, 64, 3, PostOp::Upsample),
            ],
            fc_out: input_len,
        }
    }

    /// Two-layer network on width 8, small enough for exhaustive gradient checks.
    pub fn tiny() -> Self {
        ArchSpec {
            input_len: 8,
            conv_layers: vec![
                ConvLayerSpec::same(2, 1, 3, PostOp::AvgPool),
                ConvLayerSpec::same(3, 2, 3, PostOp::Upsample),
            ],
            fc_out: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.input_len >= 1, "input length must be positive");
        ensure!(self.fc_out >= 1, "fc_out must be positive");
        ensure!(
            !self.conv_layers.is_empty(),
            "at least one conv layer required"
        );
        let mut channels = 1;
        let mut width = self.input_len;
        for (i, layer) in self.conv_layers.iter().enumerate() {
            ensure!(
                layer.stride == 1,
                "layer {}: only stride 1 is supported",
                i + 1
            );
            ensure!(
                layer.filters >= 1,
                "layer {}: needs at least one filter",
                i + 1
            );
            ensure!(
                layer.kernel_width >= 1,
                "layer {}: kernel width must be positive",
                i + 1
            );
            ensure!(
                layer.channels == channels,
                "layer {}: expects {} input channels but receives {}",
                i + 1,
                layer.channels,
                channels
            );
            let conv = layer.conv_width(width).filter(|&w| w >= 1);
            ensure!(
                conv.is_some(),
                "layer {}: kernel width {} too large for input width {}",
                i + 1,
                layer.kernel_width,
                width
            );
            let conv = conv.unwrap_or(0);
            if layer.post == PostOp::AvgPool {
                ensure!(conv >= 2, "layer {}: cannot pool width {}", i + 1, conv);
            }
            width = layer.post.output_width(conv);
            channels = layer.filters;
        }
        Ok(())
    }

    /// Per-layer widths; assumes a validated spec.
    pub fn widths(&self) -> Vec<LayerWidths> {
        let mut width = self.input_len;
        self.conv_layers
            .iter()
            .map(|layer| {
                let conv = layer.conv_width(width).unwrap_or(0);
                let output = layer.post.output_width(conv);
                let w = LayerWidths {
                    input: width,
                    conv,
                    output,
                };
                width = output;
                w
            })
            .collect()
    }

    /// Length of the flattened feature vector fed to the FC layer.
    pub fn flatten_dim(&self) -> usize {
        let last = self.conv_layers.last().map_or(0, |l| l.filters);
        let width = self.widths().last().map_or(self.input_len, |w| w.output);
        last * width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_dimension_chain() {
        let arch = ArchSpec::standard(250);
        arch.validate().unwrap();
        let chain: Vec<(usize, usize)> = arch.widths().iter().map(|w| (w.conv, w.output)).collect();
        assert_eq!(chain, vec![(250, 125), (125, 62), (62, 124), (124, 248)]);
        assert_eq!(arch.flatten_dim(), 16 * 248);
        assert_eq!(arch.flatten_dim(), 3968);
        assert_eq!(arch.fc_out, 250);
    }

    #[test]
    fn tiny_dimension_chain() {
        let arch = ArchSpec::tiny();
        arch.validate().unwrap();
        assert_eq!(arch.flatten_dim(), 3 * 8);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut arch = ArchSpec::standard(250);
        arch.conv_layers[2].channels = 32;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn stride_other_than_one_is_rejected() {
        let mut arch = ArchSpec::tiny();
        arch.conv_layers[0].stride = 2;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn pooling_a_single_sample_is_rejected() {
        let arch = ArchSpec {
            input_len: 1,
            conv_layers: vec![ConvLayerSpec::same(1, 1, 1, PostOp::AvgPool)],
            fc_out: 1,
        };
        assert!(arch.validate().is_err());
    }
}
