//! `key = value` run configuration covering generation, model, and training.
//!
//! Unknown keys are rejected. Every value written by [`RunConfig::to_text`]
//! parses back to the same config.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{CrossStopGradient, Reduction};
use crate::nets::UNetConfig;
use crate::seqgen::{GenParams, HeadingPolicy};
use crate::trainer::{Precision, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub gen: GenParams,
    pub train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

pub fn parse_f64(key: &str, v: &str) -> Result<f64> {
    parse(key, v)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn line(out: &mut String, key: &str, v: impl Display) {
    out.push_str(&format!("{key} = {v}\n"));
}

/// Lines `model.<name>.<key> = value` for one U-Net.
pub fn unet_text(name: &str, c: &UNetConfig) -> String {
    let mut s = String::new();
    let k = |f: &str| format!("model.{name}.{f}");
    line(&mut s, &k("in_channels"), c.in_channels);
    line(&mut s, &k("channels"), join(&c.channels));
    line(&mut s, &k("blocks"), c.blocks);
    line(&mut s, &k("kernel"), c.kernel);
    line(&mut s, &k("projection"), c.projection);
    line(&mut s, &k("predictor_hidden"), c.predictor_hidden);
    line(&mut s, &k("norm"), c.norm);
    s
}

/// Sets one U-Net field by its short key (without the `model.<name>.` prefix).
pub fn set_unet_key(c: &mut UNetConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "in_channels" => c.in_channels = parse(key, v)?,
        "channels" => c.channels = parse_list(key, v)?,
        "blocks" => c.blocks = parse(key, v)?,
        "kernel" => c.kernel = parse(key, v)?,
        "projection" => c.projection = parse(key, v)?,
        "predictor_hidden" => c.predictor_hidden = parse(key, v)?,
        "norm" => c.norm = parse_bool(key, v)?,
        _ => return Err(Error::Config(format!("unknown key model.*.{key}"))),
    }
    Ok(())
}

fn heading_name(h: HeadingPolicy) -> &'static str {
    match h {
        HeadingPolicy::FollowPath => "follow_path",
        HeadingPolicy::Random => "random",
    }
}

impl RunConfig {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.gen;
        line(&mut s, "gen.map_cell", g.map_cell);
        line(&mut s, "gen.max_accumulation", g.max_accumulation);
        line(&mut s, "gen.floor_band", g.floor_band);
        line(&mut s, "gen.floor_fraction", g.floor_fraction);
        line(&mut s, "gen.step_min", g.step_min);
        line(&mut s, "gen.step_max", g.step_max);
        line(&mut s, "gen.max_turn", g.max_turn);
        line(&mut s, "gen.step_retries", g.step_retries);
        line(&mut s, "gen.start_attempts", g.start_attempts);
        line(&mut s, "gen.heading", heading_name(g.heading));
        line(&mut s, "gen.scene_voxel", g.scene_voxel);
        line(&mut s, "gen.object_points", g.object_points);
        line(&mut s, "gen.chunk_count_min", g.scene_aug.chunk_count.0);
        line(&mut s, "gen.chunk_count_max", g.scene_aug.chunk_count.1);
        line(&mut s, "gen.chunk_fraction_min", g.scene_aug.chunk_fraction.0);
        line(&mut s, "gen.chunk_fraction_max", g.scene_aug.chunk_fraction.1);
        line(&mut s, "gen.resample_keep", g.scene_aug.resample_keep);
        line(&mut s, "gen.yaw_min", g.static_aug.yaw.0);
        line(&mut s, "gen.yaw_max", g.static_aug.yaw.1);
        line(&mut s, "gen.translation", g.static_aug.translation);
        line(&mut s, "gen.scale_min", g.static_aug.scale.0);
        line(&mut s, "gen.scale_max", g.static_aug.scale.1);
        line(&mut s, "gen.min_scene_consistent", g.min_scene_consistent);
        line(&mut s, "gen.min_object_consistent", g.min_object_consistent);
        line(&mut s, "gen.min_retention", g.min_retention);
        line(&mut s, "gen.per_scene", g.per_scene);
        line(&mut s, "gen.frames", g.frames);

        let t = &self.train;
        line(&mut s, "train.lr", t.lr);
        match t.batch {
            Some(b) => line(&mut s, "train.batch", b),
            None => line(&mut s, "train.batch", "auto"),
        }
        line(&mut s, "train.steps", t.steps);
        line(&mut s, "train.decay", t.decay);
        line(&mut s, "train.decay_every", t.decay_every);
        line(&mut s, "train.momentum", t.momentum);
        line(&mut s, "train.seed", t.seed);
        line(&mut s, "train.frames", t.frames);
        line(&mut s, "train.w_3d", t.weights.w_3d);
        line(&mut s, "train.w_3d4d", t.weights.w_3d4d);
        line(&mut s, "train.w_4d", t.weights.w_4d);
        let red = match t.loss.reduction {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        };
        line(&mut s, "train.reduction", red);
        let sg = match t.loss.cross_sg {
            CrossStopGradient::Predictor => "predictor",
            CrossStopGradient::Projection => "projection",
        };
        line(&mut s, "train.cross_stop_gradient", sg);
        line(&mut s, "train.eps", t.loss.eps);
        let prec = match t.precision {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        };
        line(&mut s, "train.precision", prec);
        line(&mut s, "train.workers", t.workers);
        line(&mut s, "model.voxel_3d", t.model.voxel_3d);
        line(&mut s, "model.voxel_4d", t.model.voxel_4d);
        s.push_str(&unet_text("net3d", &t.model.net3d));
        s.push_str(&unet_text("net4d", &t.model.net4d));
        s
    }

    /// Starts from the defaults and applies every line of `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                    e => e,
                })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.gen;
        let t = &mut self.train;
        match key {
            "gen.map_cell" => g.map_cell = parse(key, v)?,
            "gen.max_accumulation" => g.max_accumulation = parse(key, v)?,
            "gen.floor_band" => g.floor_band = parse(key, v)?,
            "gen.floor_fraction" => g.floor_fraction = parse(key, v)?,
            "gen.step_min" => g.step_min = parse(key, v)?,
            "gen.step_max" => g.step_max = parse(key, v)?,
            "gen.max_turn" => g.max_turn = parse(key, v)?,
            "gen.step_retries" => g.step_retries = parse(key, v)?,
            "gen.start_attempts" => g.start_attempts = parse(key, v)?,
            "gen.heading" => {
                g.heading = match v {
                    "follow_path" => HeadingPolicy::FollowPath,
                    "random" => HeadingPolicy::Random,
                    _ => return Err(Error::Config(format!("{key}: expected follow_path or random"))),
                }
            }
            "gen.scene_voxel" => g.scene_voxel = parse(key, v)?,
            "gen.object_points" => g.object_points = parse(key, v)?,
            "gen.chunk_count_min" => g.scene_aug.chunk_count.0 = parse(key, v)?,
            "gen.chunk_count_max" => g.scene_aug.chunk_count.1 = parse(key, v)?,
            "gen.chunk_fraction_min" => g.scene_aug.chunk_fraction.0 = parse(key, v)?,
            "gen.chunk_fraction_max" => g.scene_aug.chunk_fraction.1 = parse(key, v)?,
            "gen.resample_keep" => g.scene_aug.resample_keep = parse(key, v)?,
            "gen.yaw_min" => g.static_aug.yaw.0 = parse(key, v)?,
            "gen.yaw_max" => g.static_aug.yaw.1 = parse(key, v)?,
            "gen.translation" => g.static_aug.translation = parse(key, v)?,
            "gen.scale_min" => g.static_aug.scale.0 = parse(key, v)?,
            "gen.scale_max" => g.static_aug.scale.1 = parse(key, v)?,
            "gen.min_scene_consistent" => g.min_scene_consistent = parse(key, v)?,
            "gen.min_object_consistent" => g.min_object_consistent = parse(key, v)?,
            "gen.min_retention" => g.min_retention = parse(key, v)?,
            "gen.per_scene" => g.per_scene = parse(key, v)?,
            "gen.frames" => g.frames = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.batch" => t.batch = if v == "auto" { None } else { Some(parse(key, v)?) },
            "train.steps" => t.steps = parse(key, v)?,
            "train.decay" => t.decay = parse(key, v)?,
            "train.decay_every" => t.decay_every = parse(key, v)?,
            "train.momentum" => t.momentum = parse(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "train.frames" => t.frames = parse(key, v)?,
            "train.w_3d" => t.weights.w_3d = parse(key, v)?,
            "train.w_3d4d" => t.weights.w_3d4d = parse(key, v)?,
            "train.w_4d" => t.weights.w_4d = parse(key, v)?,
            "train.reduction" => {
                t.loss.reduction = match v {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    _ => return Err(Error::Config(format!("{key}: expected mean or sum"))),
                }
            }
            "train.cross_stop_gradient" => {
                t.loss.cross_sg = match v {
                    "predictor" => CrossStopGradient::Predictor,
                    "projection" => CrossStopGradient::Projection,
                    _ => return Err(Error::Config(format!("{key}: expected predictor or projection"))),
                }
            }
            "train.eps" => t.loss.eps = parse(key, v)?,
            "train.precision" => {
                t.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("{key}: expected f32 or f64"))),
                }
            }
            "train.workers" => t.workers = parse(key, v)?,
            "model.voxel_3d" => t.model.voxel_3d = parse(key, v)?,
            "model.voxel_4d" => t.model.voxel_4d = parse(key, v)?,
            _ => {
                if let Some(k) = key.strip_prefix("model.net3d.") {
                    return set_unet_key(&mut t.model.net3d, k, v);
                }
                if let Some(k) = key.strip_prefix("model.net4d.") {
                    return set_unet_key(&mut t.model.net4d, k, v);
                }
                return Err(Error::Config(format!("unknown key {key}")));
            }
        }
        Ok(())
    }
}
