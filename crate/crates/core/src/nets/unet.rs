use std::sync::Arc;

use super::UNetConfig;
use crate::error::Result;
use crate::tensor::{
    downsample_coords, fan_in_uniform, strided_map, submanifold_map, CoordSet, Graph, KernelMap, Matrix, ParamId,
    ParamStore, Var,
};

const NORM_EPS: f64 = 1e-5;

/// Coordinate sets and kernel maps of every U-Net level for one input.
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub coords: Vec<Arc<CoordSet>>,
    pub sub: Vec<Arc<KernelMap>>,
    /// `down[l]` maps level `l` onto level `l + 1`.
    pub down: Vec<Arc<KernelMap>>,
}

impl Pyramid {
    pub fn build(cfg: &UNetConfig, input: Arc<CoordSet>) -> Result<Self> {
        let mut coords = vec![input];
        let mut down = Vec::new();
        for _ in 1..cfg.levels() {
            let fine = coords.last().unwrap().clone();
            let coarse = Arc::new(downsample_coords(&fine, cfg.down_stride())?);
            down.push(Arc::new(strided_map(&fine, &coarse, cfg.down_stride())?));
            coords.push(coarse);
        }
        let sub = coords
            .iter()
            .map(|c| submanifold_map(c, cfg.kernel_size()).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Self { coords, sub, down })
    }
}

/// Graph nodes produced by one head pass; all share the input coordinates.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// Pre-projection U-Net features.
    pub backbone: Var,
    pub z: Var,
    pub p: Var,
}

/// A U-Net encoder with its projection and predictor, addressed by
/// parameter-name prefix inside a shared [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderHead {
    pub config: UNetConfig,
    pub prefix: String,
}

struct Ctx<'a> {
    head: &'a EncoderHead,
    store: &'a ParamStore,
}

impl Ctx<'_> {
    fn p(&self, g: &mut Graph, name: &str) -> Var {
        g.param(self.store, self.id(name))
    }

    fn id(&self, name: &str) -> ParamId {
        let full = format!("{}.{name}", self.head.prefix);
        self.store
            .find(&full)
            .unwrap_or_else(|| panic!("parameter {full} was never registered"))
    }

    fn act(&self, g: &mut Graph, x: Var) -> Var {
        let x = if self.head.config.norm { g.channel_norm(x, NORM_EPS) } else { x };
        g.relu(x)
    }

    /// `x + conv2(act(conv1(act(x))))`.
    fn block(&self, g: &mut Graph, x: Var, name: &str, map: &Arc<KernelMap>) -> Result<Var> {
        let h = self.act(g, x);
        let w1 = self.p(g, &format!("{name}.conv1"));
        let h = g.conv(h, w1, map.clone())?;
        let h = self.act(g, h);
        let w2 = self.p(g, &format!("{name}.conv2"));
        let h = g.conv(h, w2, map.clone())?;
        g.add(x, h)
    }
}

impl EncoderHead {
    pub fn new(config: UNetConfig, prefix: impl Into<String>) -> Self {
        Self {
            config,
            prefix: prefix.into(),
        }
    }

    /// Every parameter as `(name, rows, cols, fan_in)`, conv weights first.
    pub fn layout(&self) -> Vec<(String, usize, usize, usize)> {
        let c = &self.config;
        let k = c.taps();
        let ch = &c.channels;
        let mut v = Vec::new();
        let mut conv = |name: String, taps: usize, cin: usize, cout: usize| v.push((name, taps * cin, cout, taps * cin));
        conv("stem".into(), k, c.in_channels, ch[0]);
        for l in 0..ch.len() {
            if l > 0 {
                conv(format!("down{l}"), 8, ch[l - 1], ch[l]);
            }
            for b in 0..c.blocks {
                conv(format!("enc{l}.b{b}.conv1"), k, ch[l], ch[l]);
                conv(format!("enc{l}.b{b}.conv2"), k, ch[l], ch[l]);
            }
        }
        for l in (0..ch.len().saturating_sub(1)).rev() {
            // Shares the strided layout: (8 * fine) x coarse.
            conv(format!("up{l}"), 8, ch[l], ch[l + 1]);
            conv(format!("fuse{l}"), k, 2 * ch[l], ch[l]);
            for b in 0..c.blocks {
                conv(format!("dec{l}.b{b}.conv1"), k, ch[l], ch[l]);
                conv(format!("dec{l}.b{b}.conv2"), k, ch[l], ch[l]);
            }
        }
        let (p, h) = (c.projection, c.predictor_hidden);
        v.push(("proj.w".into(), ch[0], p, ch[0]));
        v.push(("proj.b".into(), 1, p, 0));
        v.push(("pred1.w".into(), p, h, p));
        v.push(("pred1.b".into(), 1, h, 0));
        v.push(("pred2.w".into(), h, p, h));
        v.push(("pred2.b".into(), 1, p, 0));
        v.into_iter().map(|(n, r, c, f)| (format!("{}.{n}", self.prefix), r, c, f)).collect()
    }

    /// Registers freshly initialized parameters. Biases start at zero.
    pub fn init(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        self.config.validate()?;
        for (name, rows, cols, fan_in) in self.layout() {
            let m = if fan_in == 0 {
                Matrix::zeros(rows, cols)
            } else {
                fan_in_uniform(rows, cols, fan_in, seed, &name)
            };
            store.add(name, m)?;
        }
        Ok(())
    }

    /// Names of the U-Net parameters (everything but projection and predictor).
    pub fn backbone_names(&self) -> Vec<String> {
        self.layout()
            .into_iter()
            .map(|l| l.0)
            .filter(|n| !is_head_param(n))
            .collect()
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.layout()
            .into_iter()
            .map(|l| l.0)
            .filter(|n| n.contains(".pred"))
            .collect()
    }

    /// Pre-projection features.
    pub fn backbone(&self, g: &mut Graph, store: &ParamStore, pyr: &Pyramid, input: Var) -> Result<Var> {
        let cx = Ctx { head: self, store };
        let levels = self.config.levels();
        let w = cx.p(g, "stem");
        let mut x = g.conv(input, w, pyr.sub[0].clone())?;
        let mut skips = Vec::with_capacity(levels);
        for l in 0..levels {
            if l > 0 {
                let w = cx.p(g, &format!("down{l}"));
                let h = cx.act(g, x);
                x = g.conv(h, w, pyr.down[l - 1].clone())?;
            }
            for b in 0..self.config.blocks {
                x = cx.block(g, x, &format!("enc{l}.b{b}"), &pyr.sub[l])?;
            }
            skips.push(x);
        }
        for l in (0..levels.saturating_sub(1)).rev() {
            let w = cx.p(g, &format!("up{l}"));
            let h = cx.act(g, x);
            let up = g.conv_transpose(h, w, pyr.down[l].clone())?;
            let cat = g.concat(up, skips[l])?;
            let w = cx.p(g, &format!("fuse{l}"));
            x = g.conv(cat, w, pyr.sub[l].clone())?;
            for b in 0..self.config.blocks {
                x = cx.block(g, x, &format!("dec{l}.b{b}"), &pyr.sub[l])?;
            }
        }
        Ok(cx.act(g, x))
    }

    /// Projection `z` and predictor `p` on top of the backbone.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, pyr: &Pyramid, input: Var) -> Result<HeadOutput> {
        let backbone = self.backbone(g, store, pyr, input)?;
        let cx = Ctx { head: self, store };
        let (w, b) = (cx.p(g, "proj.w"), cx.p(g, "proj.b"));
        let z = g.linear(backbone, w, Some(b))?;
        let (w, b) = (cx.p(g, "pred1.w"), cx.p(g, "pred1.b"));
        let h = g.linear(z, w, Some(b))?;
        let h = g.relu(h);
        let (w, b) = (cx.p(g, "pred2.w"), cx.p(g, "pred2.b"));
        let p = g.linear(h, w, Some(b))?;
        Ok(HeadOutput { backbone, z, p })
    }
}

fn is_head_param(name: &str) -> bool {
    name.contains(".proj.") || name.contains(".pred")
}
