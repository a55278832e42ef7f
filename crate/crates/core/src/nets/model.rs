use std::sync::Arc;

use super::{frames_to_3d, sequence_to_4d, EncoderHead, HeadOutput, Pyramid, UNetConfig, VoxelInput};
use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::seqgen::Sequence;
use crate::tensor::{Graph, Matrix, ParamStore, SparseTensor};

pub const PREFIX_3D: &str = "e3d";
pub const PREFIX_4D: &str = "e4d";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub net3d: UNetConfig,
    pub net4d: UNetConfig,
    pub voxel_3d: f64,
    pub voxel_4d: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            net3d: UNetConfig::desk_3d(),
            net4d: UNetConfig::desk_4d(),
            voxel_3d: 0.02,
            voxel_4d: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.net3d.validate()?;
        self.net4d.validate()?;
        if self.net3d.dim != 3 || self.net4d.dim != 4 {
            return Err(Error::Config("net3d must be 3D and net4d must be 4D".into()));
        }
        if self.net3d.projection != self.net4d.projection {
            return Err(Error::Config(format!(
                "3D and 4D projection widths differ ({} vs {})",
                self.net3d.projection, self.net4d.projection
            )));
        }
        for v in [self.voxel_3d, self.voxel_4d] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("voxel size must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Both encoder heads and their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub head3d: EncoderHead,
    pub head4d: EncoderHead,
    pub params: ParamStore,
}

/// Values of one head pass.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub input: VoxelInput,
    pub backbone: SparseTensor,
    pub z: SparseTensor,
    pub p: SparseTensor,
}

/// Graph nodes of one head pass together with its input bookkeeping.
pub struct Pass {
    pub input: VoxelInput,
    pub out: HeadOutput,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let head3d = EncoderHead::new(config.net3d.clone(), PREFIX_3D);
        let head4d = EncoderHead::new(config.net4d.clone(), PREFIX_4D);
        let mut params = ParamStore::new();
        head3d.init(&mut params, seed)?;
        head4d.init(&mut params, seed)?;
        Ok(Self {
            config,
            head3d,
            head4d,
            params,
        })
    }

    /// Builds the 3D pass over frame views (one batch slot per view).
    pub fn pass_3d(&self, g: &mut Graph, views: &[PointCloud]) -> Result<Pass> {
        let input = frames_to_3d(views, self.config.voxel_3d, self.config.net3d.in_channels)?;
        let pyr = Pyramid::build(&self.config.net3d, input.coords.clone())?;
        let x = g.constant(input.feats.clone());
        let out = self.head3d.forward(g, &self.params, &pyr, x)?;
        Ok(Pass { input, out })
    }

    /// Builds the 4D pass over a whole sequence.
    pub fn pass_4d(&self, g: &mut Graph, seq: &Sequence) -> Result<Pass> {
        let input = sequence_to_4d(seq, self.config.voxel_4d, self.config.net4d.in_channels)?;
        let pyr = Pyramid::build(&self.config.net4d, input.coords.clone())?;
        let x = g.constant(input.feats.clone());
        let out = self.head4d.forward(g, &self.params, &pyr, x)?;
        Ok(Pass { input, out })
    }

    pub fn encode_3d(&self, views: &[PointCloud]) -> Result<Encoded> {
        let mut g = Graph::new();
        let pass = self.pass_3d(&mut g, views)?;
        encoded(&g, pass)
    }

    pub fn encode_4d(&self, seq: &Sequence) -> Result<Encoded> {
        let mut g = Graph::new();
        let pass = self.pass_4d(&mut g, seq)?;
        encoded(&g, pass)
    }
}

fn encoded(g: &Graph, pass: Pass) -> Result<Encoded> {
    let coords = pass.input.coords.clone();
    let t = |m: &Matrix| SparseTensor::new(Arc::clone(&coords), m.clone());
    Ok(Encoded {
        backbone: t(g.value(pass.out.backbone))?,
        z: t(g.value(pass.out.z))?,
        p: t(g.value(pass.out.p))?,
        input: pass.input,
    })
}

/// Pre-projection features of a backbone-only parameter set, as exported.
pub fn backbone_features(config: &UNetConfig, params: &ParamStore, prefix: &str, views: &[PointCloud], voxel: f64) -> Result<SparseTensor> {
    let head = EncoderHead::new(config.clone(), prefix);
    let input = frames_to_3d(views, voxel, config.in_channels)?;
    let pyr = Pyramid::build(config, input.coords.clone())?;
    let mut g = Graph::new();
    let x = g.constant(input.feats.clone());
    let b = head.backbone(&mut g, params, &pyr, x)?;
    SparseTensor::new(input.coords.clone(), g.value(b).clone())
}
