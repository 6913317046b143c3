use super::{adam_step, backward, forward, network_input, AdamConfig, AdamState, NetParams};
use crate::error::{Error, Result};
use crate::loss::{loss_backward, per_class_loss_backward, LossBreakdown, LossConfig};
use crate::maps::LabelMap;
use crate::synthdata::{augment, rng_from_seed, uniform_index, Augment, Scene};

/// A training image with instance labels and, for multi-class data, the
/// semantic class of every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scene: Scene,
    pub semantic: Option<LabelMap>,
}

impl From<Scene> for Sample {
    fn from(scene: Scene) -> Self {
        Self { scene, semantic: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Drives data order and augmentation.
    pub seed: u64,
    /// Random left-right flip and quarter-turn rotation per step.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 1000, adam: AdamConfig::default(), seed: 0, augment: false }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub optimizer: AdamState,
    /// Loss of the batch seen at each step, measured before the update.
    pub trace: Vec<LossBreakdown>,
}

fn augmented(sample: &Sample, rng: &mut impl rand_core::RngCore) -> Result<Sample> {
    // flip with probability 1/2, then one of four rotations
    let mut scene = sample.scene.clone();
    let mut semantic = sample.semantic.clone();
    let flip = uniform_index(rng, 2) == 1;
    let rot = uniform_index(rng, 4);
    let mut ops = Vec::new();
    if flip {
        ops.push(Augment::FlipLR);
    }
    if rot > 0 {
        ops.push([Augment::Rot90, Augment::Rot180, Augment::Rot270][rot - 1]);
    }
    for op in ops {
        if let Some(sem) = semantic.as_mut() {
            let carrier = Scene { image: scene.image.clone(), instances: sem.clone(), seed: scene.seed };
            *sem = augment(&carrier, op)?.instances;
        }
        scene = augment(&scene, op)?;
    }
    Ok(Sample { scene, semantic })
}

/// Adam on one image per step. Images are visited in a fresh seeded
/// permutation each epoch.
pub fn train(params: NetParams, dataset: &[Sample], loss: &LossConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    let state = AdamState::new(&params, config.adam);
    train_from(params, state, dataset, loss, config)
}

/// Continues training from an existing optimizer state.
pub fn train_from(
    mut params: NetParams,
    mut optimizer: AdamState,
    dataset: &[Sample],
    loss: &LossConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    loss.validate()?;
    config.adam.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        if order.is_empty() {
            order = (0..dataset.len()).collect();
            for i in (1..order.len()).rev() {
                let j = uniform_index(&mut rng, i + 1);
                order.swap(i, j);
            }
            order.reverse();
        }
        let idx = order.pop().expect("refilled above");
        let sample = if config.augment { augmented(&dataset[idx], &mut rng)? } else { dataset[idx].clone() };
        let input = network_input(&sample.scene.image);
        let (emb, cache) = match forward(&params, &input) {
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, total: f64::NAN }),
            other => other?,
        };
        let (breakdown, grad) = match &sample.semantic {
            Some(sem) => per_class_loss_backward(&emb, sem, &sample.scene.instances, loss)?,
            None => loss_backward(&emb, &sample.scene.instances, loss)?,
        };
        if !breakdown.total.is_finite() {
            return Err(Error::Diverged { step, total: breakdown.total });
        }
        let grads = backward(&params, &cache, &grad)?;
        adam_step(&mut params, &grads, &mut optimizer)?;
        trace.push(breakdown);
    }
    Ok(TrainOutcome { params, optimizer, trace })
}
