//! Finite-difference check of every loss term through small U-Nets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geom::{PointCloud, SimilarityTransform, OBJECT_ID_BASE};
use crate::losses::{LossOptions, LossWeights};
use crate::nets::{Model, ModelConfig, UNetConfig};
use crate::seqgen::{Sequence, SequenceFrame, Trajectory};
use crate::tensor::{Graph, ParamId};
use crate::trainer::{prepare_sequence, sequence_loss, PreparedSequence};

pub const TERMS: [&str; 3] = ["L3D", "L3D4D", "L4D"];

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Parameter entries probed per term.
    pub entries: usize,
    /// Floor of the relative-error denominator.
    pub rel_floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            entries: 16,
            rel_floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermCheck {
    pub term: &'static str,
    pub checked: usize,
    pub max_rel: f64,
    /// Entry with the largest error: `(param name, index, analytic, numeric)`.
    pub worst: (String, usize, f64, f64),
}

pub fn small_model_config() -> ModelConfig {
    let net = |dim| UNetConfig {
        dim,
        in_channels: 2,
        channels: vec![3, 4],
        blocks: 1,
        kernel: 3,
        projection: 5,
        predictor_hidden: 4,
        norm: true,
    };
    ModelConfig {
        net3d: net(3),
        net4d: net(4),
        voxel_3d: 0.1,
        voxel_4d: 0.1,
    }
}

/// A three-frame sequence of random points in a small box; ids repeat across
/// frames so every term has correspondences.
pub fn small_sequence(rng: &mut impl Rng) -> Sequence {
    let frames = (0..3)
        .map(|_| {
            let mut pts = Vec::new();
            let mut ids = Vec::new();
            for id in 0..40u32 {
                if rng.gen_bool(0.75) {
                    pts.push([rng.gen_range(0.0..0.6), rng.gen_range(0.0..0.6), rng.gen_range(0.0..0.3)]);
                    ids.push(if id < 30 { id } else { OBJECT_ID_BASE + id });
                }
            }
            SequenceFrame {
                cloud: PointCloud::with_provenance(pts, ids),
                object_pose: SimilarityTransform::identity(),
                static_aug: SimilarityTransform::yaw(rng.gen_range(0.0..6.0), 1.0, [0.0; 3]),
            }
        })
        .collect();
    let mut seq = Sequence {
        scene_id: 0,
        object_id: 0,
        frames,
        trajectory: Trajectory::default(),
        stats: Default::default(),
    };
    seq.stats = seq.inferred_stats();
    seq
}

fn term_weights(term: usize) -> LossWeights {
    let mut w = [0.0; 3];
    w[term] = 1.0;
    LossWeights {
        w_3d: w[0],
        w_3d4d: w[1],
        w_4d: w[2],
    }
}

fn eval(model: &Model, prep: &PreparedSequence, w: &LossWeights, opts: &LossOptions, frozen: &[crate::tensor::Matrix]) -> Result<f64> {
    let mut g = Graph::with_frozen_stop_gradients(frozen.to_vec());
    let (l, _) = sequence_loss(model, prep, w, opts, &mut g)?;
    Ok(g.scalar(l))
}

/// Central differences against backprop for each loss term on one random
/// instance. Stop-gradient values are frozen at the unperturbed forward pass.
pub fn gradcheck(seed: u64, opts: &GradcheckOptions, loss: &LossOptions) -> Result<Vec<TermCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(small_model_config(), seed)?;
    // Non-zero biases keep the check away from symmetric special cases.
    for id in model.params.ids().collect::<Vec<_>>() {
        if model.params.name(id).ends_with(".b") {
            for v in model.params.value_mut(id).data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let seq = small_sequence(&mut rng);
    let prep = prepare_sequence(&model.config, &seq)?;
    let mut out = Vec::new();
    for (t, &term) in TERMS.iter().enumerate() {
        let w = term_weights(t);
        let mut g = Graph::new();
        let (l, _) = sequence_loss(&model, &prep, &w, loss, &mut g)?;
        let grads = g.backward(l)?;
        let frozen = g.stop_gradient_values();
        let mut check = TermCheck {
            term,
            checked: 0,
            max_rel: 0.0,
            worst: (String::new(), 0, 0.0, 0.0),
        };
        for _ in 0..opts.entries {
            let id = ParamId(rng.gen_range(0..model.params.len()));
            let e = rng.gen_range(0..model.params.value(id).data().len());
            let analytic = grads.param(id).map_or(0.0, |m| m.data()[e]);
            let orig = model.params.value(id).data()[e];
            model.params.value_mut(id).data_mut()[e] = orig + opts.step;
            let up = eval(&model, &prep, &w, loss, &frozen)?;
            model.params.value_mut(id).data_mut()[e] = orig - opts.step;
            let down = eval(&model, &prep, &w, loss, &frozen)?;
            model.params.value_mut(id).data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.rel_floor);
            check.checked += 1;
            if rel >= check.max_rel {
                check.max_rel = rel;
                check.worst = (model.params.name(id).to_string(), e, analytic, numeric);
            }
        }
        out.push(check);
    }
    Ok(out)
}
