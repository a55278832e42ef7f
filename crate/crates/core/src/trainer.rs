//! Pre-training loop, checkpoints, backbone export, and the similarity probe.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{loss_3d, loss_3d4d, loss_4d, loss_total, LossOptions, LossReport, LossWeights};
use crate::nets::{frames_to_3d, sequence_to_4d, HeadOutput, Model, ModelConfig, Pyramid, VoxelInput};
use crate::seqgen::{build_correspondences, Sequence};
use crate::tensor::{checkpoint, Graph, Matrix, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Parameters are rounded to float32 after init and every update.
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Sequences per step; `None` picks [`balance_batch`] of the sequence length.
    pub batch: Option<usize>,
    pub steps: usize,
    pub decay: f64,
    pub decay_every: usize,
    pub momentum: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub loss: LossOptions,
    pub model: ModelConfig,
    /// Sequence length the batch balancing assumes when the data does not say.
    pub frames: usize,
    pub precision: Precision,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.25,
            batch: None,
            steps: 1000,
            decay: 0.99,
            decay_every: 1000,
            momentum: 0.0,
            seed: 0,
            weights: LossWeights::default(),
            loss: LossOptions::default(),
            model: ModelConfig::default(),
            frames: 4,
            precision: Precision::F32,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch == Some(0) {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        self.weights.validate()?;
        self.model.validate()
    }

    /// `lr0 * decay^floor(step / decay_every)` for the 0-based step.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.decay.powi((step / self.decay_every) as i32)
    }

    pub fn effective_batch(&self, frames: usize) -> Result<usize> {
        match self.batch {
            Some(b) => Ok(b),
            None => balance_batch(frames),
        }
    }
}

/// Sequences per batch for a sequence length: 16/12/10 for t = 3/4/5,
/// otherwise `round(48 / t)`.
pub fn balance_batch(t: usize) -> Result<usize> {
    match t {
        0 => Err(Error::InvalidArgument("sequence length must be at least 1".into())),
        3 => Ok(16),
        4 => Ok(12),
        5 => Ok(10),
        t => Ok(((48.0 / t as f64).round() as usize).max(1)),
    }
}

/// Everything about a sequence that does not depend on the weights.
pub struct PreparedSequence {
    pub in3: VoxelInput,
    pub pyr3: Pyramid,
    pub in4: VoxelInput,
    pub pyr4: Pyramid,
    /// Per frame pair `(i, j)`, `i < j`: 3D row pairs.
    pub sets_3d: Vec<Vec<(u32, u32)>>,
    /// Per frame: `(3D row, 4D row)`.
    pub sets_3d4d: Vec<Vec<(u32, u32)>>,
    /// Per frame pair: 4D row pairs.
    pub sets_4d: Vec<Vec<(u32, u32)>>,
    pub dropped: usize,
}

pub fn prepare_sequence(config: &ModelConfig, seq: &Sequence) -> Result<PreparedSequence> {
    if seq.frames.len() < 2 {
        return Err(Error::InvalidArgument("training sequences need at least two frames".into()));
    }
    let views: Vec<_> = seq.frames.iter().map(|f| f.view_3d()).collect();
    let in3 = frames_to_3d(&views, config.voxel_3d, config.net3d.in_channels)?;
    let in4 = sequence_to_4d(seq, config.voxel_4d, config.net4d.in_channels)?;
    let pyr3 = Pyramid::build(&config.net3d, in3.coords.clone())?;
    let pyr4 = Pyramid::build(&config.net4d, in4.coords.clone())?;
    let corr = build_correspondences(seq);
    let mut sets_3d = Vec::new();
    let mut sets_4d = Vec::new();
    for (&(i, j), pairs) in &corr.pair_maps {
        let (r3i, r3j) = (&in3.point_rows[i], &in3.point_rows[j]);
        let (r4i, r4j) = (&in4.point_rows[i], &in4.point_rows[j]);
        sets_3d.push(pairs.iter().map(|&(a, b)| (r3i[a as usize], r3j[b as usize])).collect());
        sets_4d.push(pairs.iter().map(|&(a, b)| (r4i[a as usize], r4j[b as usize])).collect());
    }
    let sets_3d4d = corr
        .per_frame
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            pts.iter()
                .map(|&a| (in3.point_rows[i][a as usize], in4.point_rows[i][a as usize]))
                .collect()
        })
        .collect();
    // Every point voxelizes into its own frame's input set, so no
    // correspondence is lost to quantization here.
    Ok(PreparedSequence {
        in3,
        pyr3,
        in4,
        pyr4,
        sets_3d,
        sets_3d4d,
        sets_4d,
        dropped: 0,
    })
}

/// Graph of one sequence's joint loss. Terms with zero weight are not built.
pub fn sequence_loss(
    model: &Model,
    prep: &PreparedSequence,
    weights: &LossWeights,
    opts: &LossOptions,
    g: &mut Graph,
) -> Result<(Var, LossReport)> {
    let need3 = weights.w_3d > 0.0 || weights.w_3d4d > 0.0;
    let need4 = weights.w_3d4d > 0.0 || weights.w_4d > 0.0;
    let run = |g: &mut Graph, head: &crate::nets::EncoderHead, input: &VoxelInput, pyr: &Pyramid| -> Result<HeadOutput> {
        let x = g.constant(input.feats.clone());
        head.forward(g, &model.params, pyr, x)
    };
    let o3 = if need3 { Some(run(g, &model.head3d, &prep.in3, &prep.pyr3)?) } else { None };
    let o4 = if need4 { Some(run(g, &model.head4d, &prep.in4, &prep.pyr4)?) } else { None };
    let mut report = LossReport {
        dropped: prep.dropped,
        ..Default::default()
    };
    let mut terms = [None, None, None];
    if weights.w_3d > 0.0 {
        let o = o3.unwrap();
        let v = loss_3d(g, o.p, o.z, &prep.sets_3d, opts)?;
        report.l3d = g.scalar(v);
        report.n3d = prep.sets_3d.iter().map(Vec::len).sum();
        terms[0] = Some(v);
    }
    if weights.w_3d4d > 0.0 {
        let (a, b) = (o3.unwrap(), o4.unwrap());
        let v = loss_3d4d(g, (a.p, a.z), (b.p, b.z), &prep.sets_3d4d, opts)?;
        report.l3d4d = g.scalar(v);
        report.n3d4d = prep.sets_3d4d.iter().map(Vec::len).sum();
        terms[1] = Some(v);
    }
    if weights.w_4d > 0.0 {
        let o = o4.unwrap();
        let v = loss_4d(g, o.p, o.z, &prep.sets_4d, opts)?;
        report.l4d = g.scalar(v);
        report.n4d = prep.sets_4d.iter().map(Vec::len).sum();
        terms[2] = Some(v);
    }
    let total = loss_total(g, terms, weights)?;
    report.total = g.scalar(total);
    Ok((total, report))
}

/// Weights plus the optimizer step and the config they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub step: usize,
    /// `key = value` config snapshot.
    pub config_text: String,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut meta = format!("kind = full\nstep = {}\n", self.step);
        meta.push_str(&self.config_text);
        checkpoint::encode(&self.model.params, &meta)
    }

    /// Rebuilds the model from the embedded config and checks that every
    /// tensor matches its layout.
    pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
        let file = checkpoint::decode(buf)?;
        let kv = crate::seqgen::format::parse_kv(&file.meta)?;
        if kv.get("kind").map(String::as_str) != Some("full") {
            return Err(Error::Config("not a full checkpoint".into()));
        }
        let step = kv
            .get("step")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("checkpoint lacks a step count".into()))?;
        let config_text: String = file
            .meta
            .lines()
            .filter(|l| !l.starts_with("kind =") && !l.starts_with("step ="))
            .map(|l| format!("{l}\n"))
            .collect();
        let run = crate::config::RunConfig::from_text(&config_text)?;
        let mut model = Model::new(run.train.model.clone(), 0)?;
        if model.params.len() != file.params.len() {
            return Err(Error::Config("checkpoint tensors do not match its config".into()));
        }
        for id in model.params.ids() {
            let name = model.params.name(id).to_string();
            let src = file
                .params
                .find(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks {name}")))?;
            let v = file.params.value(src);
            if v.shape() != model.params.value(id).shape() {
                return Err(Error::Config(format!("tensor {name} has the wrong shape")));
            }
            *model.params.value_mut(id) = v.clone();
        }
        Ok(Checkpoint { model, step, config_text })
    }
}

/// 3D U-Net weights only, with the architecture needed to run them.
pub fn export_backbone(ckpt: &Checkpoint) -> Vec<u8> {
    let head = &ckpt.model.head3d;
    let mut params = ParamStore::new();
    for name in head.backbone_names() {
        let id = ckpt.model.params.find(&name).expect("layout and store agree");
        params.add(name, ckpt.model.params.value(id).clone()).expect("unique names");
    }
    let mut meta = String::from("kind = backbone3d\n");
    meta.push_str(&crate::config::unet_text("net3d", &ckpt.model.config.net3d));
    let _ = writeln!(meta, "model.voxel_3d = {}", ckpt.model.config.voxel_3d);
    checkpoint::encode(&params, &meta)
}

/// An exported backbone ready for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub config: crate::nets::UNetConfig,
    pub voxel: f64,
    pub params: ParamStore,
}

impl Backbone {
    pub fn decode(buf: &[u8]) -> Result<Backbone> {
        let file = checkpoint::decode(buf)?;
        let kv = crate::seqgen::format::parse_kv(&file.meta)?;
        if kv.get("kind").map(String::as_str) != Some("backbone3d") {
            return Err(Error::Config("not an exported backbone".into()));
        }
        let mut config = crate::nets::UNetConfig::desk_3d();
        let mut voxel = 0.02;
        for (k, v) in &kv {
            if let Some(key) = k.strip_prefix("model.net3d.") {
                crate::config::set_unet_key(&mut config, key, v)?;
            } else if k == "model.voxel_3d" {
                voxel = crate::config::parse_f64(k, v)?;
            }
        }
        config.validate()?;
        Ok(Backbone {
            config,
            voxel,
            params: file.params,
        })
    }

    pub fn features(&self, views: &[crate::geom::PointCloud]) -> Result<crate::tensor::SparseTensor> {
        crate::nets::backbone_features(&self.config, &self.params, crate::nets::PREFIX_3D, views, self.voxel)
    }
}

/// Either kind of weight file, for commands that only need 3D features.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Full(Box<Checkpoint>),
    Backbone(Backbone),
}

impl Weights {
    pub fn decode(buf: &[u8]) -> Result<Weights> {
        let file = checkpoint::decode(buf)?;
        let kv = crate::seqgen::format::parse_kv(&file.meta)?;
        match kv.get("kind").map(String::as_str) {
            Some("full") => Ok(Weights::Full(Box::new(Checkpoint::decode(buf)?))),
            Some("backbone3d") => Ok(Weights::Backbone(Backbone::decode(buf)?)),
            _ => Err(Error::Config("weight file has no recognized kind".into())),
        }
    }

    pub fn voxel(&self) -> f64 {
        match self {
            Weights::Full(c) => c.model.config.voxel_3d,
            Weights::Backbone(b) => b.voxel,
        }
    }

    /// Pre-projection 3D features, one batch slot per view.
    pub fn features(&self, views: &[crate::geom::PointCloud]) -> Result<crate::tensor::SparseTensor> {
        match self {
            Weights::Full(c) => c.model.encode_3d(views).map(|e| e.backbone),
            Weights::Backbone(b) => b.features(views),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub report: LossReport,
}

impl StepLog {
    pub const HEADER: &'static str = "step\tlr\tL3D\tL3D4D\tL4D\ttotal\tdropped";

    pub fn tsv(&self) -> String {
        let r = &self.report;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.step, self.lr, r.l3d, r.l3d4d, r.l4d, r.total, r.dropped
        )
    }
}

/// Positional data order: sequence index of batch slot `k` at `step`.
fn order_index(n: usize, batch: usize, step: usize, k: usize, seed: u64, cache: &mut Vec<(usize, Vec<usize>)>) -> usize {
    let q = step * batch + k;
    let epoch = q / n;
    if !cache.iter().any(|(e, _)| *e == epoch) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000 ^ (epoch as u64).wrapping_mul(0x9e37_79b9)));
        cache.push((epoch, perm));
        if cache.len() > 2 {
            cache.remove(0);
        }
    }
    cache.iter().find(|(e, _)| *e == epoch).unwrap().1[q % n]
}

/// SGD over the dataset. `on_step` sees every log line as it is produced.
pub fn pretrain(
    data: &[Sequence],
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<(Checkpoint, Vec<StepLog>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let mut model = Model::new(config.model.clone(), config.seed)?;
    if config.precision == Precision::F32 {
        model.params.round_to_f32();
    }
    let frames = data[0].frames.len();
    if data.iter().any(|s| s.frames.len() != frames) {
        return Err(Error::InvalidArgument("training sequences differ in length".into()));
    }
    let batch = config.effective_batch(frames)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let prepared: Vec<PreparedSequence> =
        pool.install(|| data.par_iter().map(|s| prepare_sequence(&config.model, s)).collect::<Result<_>>())?;

    let mut velocity: Vec<Matrix> = model
        .params
        .ids()
        .map(|id| {
            let (r, c) = model.params.value(id).shape();
            Matrix::zeros(r, c)
        })
        .collect();
    let mut logs = Vec::with_capacity(config.steps);
    let mut perm_cache = Vec::new();
    for step in 0..config.steps {
        let idx: Vec<usize> = (0..batch)
            .map(|k| order_index(prepared.len(), batch, step, k, config.seed, &mut perm_cache))
            .collect();
        let model_ref = &model;
        let results: Vec<Result<(Vec<(usize, Matrix)>, LossReport)>> = pool.install(|| {
            idx.par_iter()
                .map(|&i| {
                    let mut g = Graph::new();
                    let (loss, report) = sequence_loss(model_ref, &prepared[i], &config.weights, &config.loss, &mut g)?;
                    let grads = g.backward(loss)?;
                    let grads = grads.params().map(|(id, m)| (id.0, m.clone())).collect();
                    Ok((grads, report))
                })
                .collect()
        });
        let mut reports = Vec::with_capacity(batch);
        let mut sum: Vec<Option<Matrix>> = vec![None; model.params.len()];
        for r in results {
            let (grads, report) = r?;
            for (id, m) in grads {
                match &mut sum[id] {
                    Some(acc) => acc.add_assign(&m),
                    slot => *slot = Some(m),
                }
            }
            reports.push(report);
        }
        let report = LossReport::mean(&reports);
        let lr = config.lr_at(step);
        let log = StepLog { step: step + 1, lr, report };
        if !report_finite(&log.report) || sum.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                step: step + 1,
                detail: format!(
                    "L3D={} L3D4D={} L4D={} total={}",
                    log.report.l3d, log.report.l3d4d, log.report.l4d, log.report.total
                ),
            });
        }
        let scale = 1.0 / batch as f64;
        for (i, g) in sum.into_iter().enumerate() {
            let Some(mut g) = g else { continue };
            g.scale(scale);
            let v = &mut velocity[i];
            if config.momentum > 0.0 {
                v.scale(config.momentum);
                v.add_assign(&g);
            } else {
                *v = g;
            }
            let p = model.params.value_mut(crate::tensor::ParamId(i));
            for (w, d) in p.data_mut().iter_mut().zip(v.data()) {
                *w -= lr * d;
            }
        }
        if config.precision == Precision::F32 {
            model.params.round_to_f32();
        }
        on_step(&log);
        logs.push(log);
    }
    let config_text = crate::config::RunConfig {
        train: config.clone(),
        ..Default::default()
    }
    .to_text();
    Ok((
        Checkpoint {
            model,
            step: config.steps,
            config_text,
        },
        logs,
    ))
}

fn report_finite(r: &LossReport) -> bool {
    [r.l3d, r.l3d4d, r.l4d, r.total].iter().all(|v| v.is_finite())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    /// Mean cosine similarity of 3D features at corresponding points.
    pub corresponding: f64,
    /// Mean cosine similarity at random pairs of distinct canonical points.
    pub random: f64,
    pub margin: f64,
    pub pairs: usize,
}

/// `None` when either vector is zero.
fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Compares backbone features of corresponding points across frames with
/// those of random non-corresponding pairs, drawing up to `pairs` of each.
/// Pairs involving an all-zero feature vector are skipped.
pub fn probe(
    features: impl Fn(&[crate::geom::PointCloud]) -> Result<crate::tensor::SparseTensor>,
    voxel: f64,
    data: &[Sequence],
    pairs: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_seq = pairs.div_ceil(data.len().max(1));
    let (mut corr_sum, mut rand_sum, mut n_corr, mut n_rand) = (0.0, 0.0, 0usize, 0usize);
    for seq in data {
        let views: Vec<_> = seq.frames.iter().map(|f| f.view_3d()).collect();
        let feats = features(&views)?;
        let coords = Arc::clone(&feats.coords);
        let rows = |i: usize| crate::nets::locate(&coords, &views[i].points, voxel, i as i32, 0);
        let rows: Vec<Vec<Option<u32>>> = (0..views.len()).map(rows).collect();
        let corr = build_correspondences(seq);
        let all: Vec<(usize, usize, u32, u32)> = corr
            .pair_maps
            .iter()
            .flat_map(|(&(i, j), m)| m.iter().map(move |&(a, b)| (i, j, a, b)))
            .collect();
        if all.is_empty() {
            continue;
        }
        let f = |i: usize, a: u32| rows[i][a as usize].map(|r| feats.feats.row(r as usize));
        for _ in 0..per_seq {
            let (i, j, a, b) = all[rng.gen_range(0..all.len())];
            if let Some(c) = f(i, a).zip(f(j, b)).and_then(|(x, y)| cosine(x, y)) {
                corr_sum += c;
                n_corr += 1;
            }
            // Random partner in frame j with a different identity.
            let bj = rng.gen_range(0..views[j].len()) as u32;
            if seq.frames[j].ids()[bj as usize] != seq.frames[i].ids()[a as usize] {
                if let Some(c) = f(i, a).zip(f(j, bj)).and_then(|(x, y)| cosine(x, y)) {
                    rand_sum += c;
                    n_rand += 1;
                }
            }
        }
    }
    if n_corr == 0 || n_rand == 0 {
        return Err(Error::LossUndefined);
    }
    let corresponding = corr_sum / n_corr as f64;
    let random = rand_sum / n_rand as f64;
    Ok(ProbeReport {
        corresponding,
        random,
        margin: corresponding - random,
        pairs: n_corr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_and_balancing() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 0.25);
        assert!((c.lr_at(2500) - 0.245025).abs() < 1e-15);
        assert_eq!(c.lr_at(999), 0.25);
        assert_eq!(balance_batch(4).unwrap(), 12);
        assert_eq!(balance_batch(3).unwrap(), 16);
        assert_eq!(balance_batch(5).unwrap(), 10);
        assert_eq!(balance_batch(6).unwrap(), 8);
        assert!(balance_batch(0).is_err());
    }
}
