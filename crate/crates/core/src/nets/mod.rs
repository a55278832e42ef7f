//! Sparse U-Net encoders with projection and predictor heads.
//!
//! Each encoder is a pre-activation residual U-Net over a sparse voxel grid,
//! followed by a 1x1 projection (`z`) and a two-layer 1x1 predictor (`p`).
//! The 3D encoder sees individual frames; the 4D encoder sees the whole
//! sequence with time as the fourth axis.

mod input;
mod model;
mod unet;

pub use input::{frames_to_3d, gather_rows, locate, sequence_to_4d, voxelize_points, VoxelInput};
pub use model::{backbone_features, Encoded, Model, ModelConfig, Pass, PREFIX_3D, PREFIX_4D};
pub use unet::{EncoderHead, HeadOutput, Pyramid};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct UNetConfig {
    /// 3 or 4.
    pub dim: usize,
    pub in_channels: usize,
    /// Channel width per level; the level count is its length.
    pub channels: Vec<usize>,
    /// Residual blocks per level on each side of the U.
    pub blocks: usize,
    /// Odd kernel size of the stride-1 convolutions.
    pub kernel: usize,
    pub projection: usize,
    pub predictor_hidden: usize,
    /// Per-channel normalization before every activation.
    pub norm: bool,
}

impl UNetConfig {
    pub fn desk_3d() -> Self {
        Self {
            dim: 3,
            in_channels: 3,
            channels: vec![16, 32, 64],
            blocks: 1,
            kernel: 3,
            projection: 32,
            predictor_hidden: 32,
            norm: true,
        }
    }

    pub fn desk_4d() -> Self {
        Self {
            dim: 4,
            in_channels: 3,
            channels: vec![8, 16],
            blocks: 1,
            kernel: 3,
            projection: 32,
            predictor_hidden: 32,
            norm: true,
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 3 && self.dim != 4 {
            return Err(Error::Config(format!("network dim must be 3 or 4, got {}", self.dim)));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("network needs at least one level".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        let sizes = [self.in_channels, self.projection, self.predictor_hidden, self.kernel];
        if sizes.iter().chain(&self.channels).any(|&c| c == 0) {
            return Err(Error::Config("channel counts and kernel size must be positive".into()));
        }
        Ok(())
    }

    /// Taps of a stride-1 convolution.
    pub fn taps(&self) -> usize {
        self.kernel.pow(self.dim as u32)
    }

    /// Kernel extent per axis for the stride-1 convolutions.
    pub fn kernel_size(&self) -> [usize; 4] {
        let k = self.kernel;
        if self.dim == 4 { [k; 4] } else { [k, k, k, 1] }
    }

    /// Downsampling is spatial only; time keeps full resolution.
    pub fn down_stride(&self) -> [u32; 4] {
        [2, 2, 2, 1]
    }

    /// Scalars in the U-Net alone (no projection or predictor).
    pub fn backbone_param_count(&self) -> usize {
        let k = self.taps();
        let c = &self.channels;
        let block = |w: usize| 2 * k * w * w * self.blocks;
        let mut n = k * self.in_channels * c[0];
        for l in 0..c.len() {
            n += block(c[l]);
            if l > 0 {
                n += 8 * c[l - 1] * c[l];
            }
        }
        for l in 0..c.len().saturating_sub(1) {
            n += 8 * c[l] * c[l + 1] + k * 2 * c[l] * c[l] + block(c[l]);
        }
        n
    }

    /// Scalars in the full head: U-Net, projection, and predictor.
    pub fn param_count(&self) -> usize {
        let (c0, p, h) = (self.channels[0], self.projection, self.predictor_hidden);
        self.backbone_param_count() + c0 * p + p + p * h + h + h * p + p
    }
}
