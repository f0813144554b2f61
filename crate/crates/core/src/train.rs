//! Paired mini-batch training and stack-level evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frucforge_nn::{adam_step, bce_loss, AdamConfig, Mode, Tensor};

use crate::corpus::VideoPair;
use crate::fcdnet::FcdNet;
use crate::metrics::{argmax_label, compute_metrics, MetricsReport};
use crate::preprocess::{augment_pair, extract_stack, sample_origins, video_id, InputKind, Label, ResidualStack};
use crate::{invalid, Result};

/// Original and forged stacks taken at the same window and crop of a pair.
#[derive(Clone, Debug, Default)]
pub struct PairedDataset {
    pub originals: Vec<ResidualStack>,
    pub forged: Vec<ResidualStack>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    /// `per_pair` random windows from each pair; both videos must have the
    /// same length and frame size.
    pub fn from_pairs(pairs: &[VideoPair], per_pair: usize, crop: usize, seed: u64) -> Result<Self> {
        Self::from_pairs_with(pairs, per_pair, crop, InputKind::Residual5, true, seed)
    }

    /// As [`PairedDataset::from_pairs`] with a chosen input builder and
    /// scaling, for input-type ablations.
    pub fn from_pairs_with(
        pairs: &[VideoPair],
        per_pair: usize,
        crop: usize,
        kind: InputKind,
        normalize: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::default();
        for pair in pairs {
            let (o, f) = (&pair.original, &pair.forged);
            if o.len() != f.len() || o.geometry() != f.geometry() {
                return invalid(format!("pair {} has mismatched original and forged videos", pair.name));
            }
            let (w, h, _) = o.geometry().expect("non-empty video");
            let id = video_id(&pair.name);
            for origin in sample_origins(o.len(), (w, h), crop, kind.frames_needed(), per_pair, id, &mut rng)? {
                out.originals
                    .push(extract_stack(o, origin, crop, kind, normalize)?.with_label(Label::Original));
                out.forged
                    .push(extract_stack(f, origin, crop, kind, normalize)?.with_label(Label::Forged));
            }
        }
        Ok(out)
    }

    /// Every stack, originals first.
    pub fn all_stacks(&self) -> impl Iterator<Item = &ResidualStack> {
        self.originals.iter().chain(&self.forged)
    }
}

/// Half originals, half forged, matched index by index.
#[derive(Clone, Debug)]
pub struct PairedBatch {
    pub originals: Vec<ResidualStack>,
    pub forged: Vec<ResidualStack>,
}

impl PairedBatch {
    /// Input tensor with the originals first, and the matching labels.
    pub fn to_tensor(&self) -> Result<(Tensor<f32>, Vec<u8>)> {
        let stacks: Vec<&ResidualStack> = self.originals.iter().chain(&self.forged).collect();
        let labels = stacks.iter().map(|s| s.label.map_or(0, Label::as_u8)).collect();
        Ok((stack_tensor(&stacks)?, labels))
    }
}

pub fn stack_tensor(stacks: &[&ResidualStack]) -> Result<Tensor<f32>> {
    let Some(first) = stacks.first() else {
        return invalid("cannot batch zero stacks");
    };
    let (planes, crop) = (first.planes(), first.crop);
    let mut data = Vec::with_capacity(stacks.len() * planes * crop * crop);
    for s in stacks {
        if s.planes() != planes || s.crop != crop {
            return invalid("stacks in a batch differ in shape");
        }
        data.extend_from_slice(&s.data);
    }
    Ok(Tensor::from_vec(&[stacks.len(), planes, crop, crop], data)?)
}

/// One epoch of paired batches over a shuffled pair order. The last batch
/// may be smaller; each batch holds `batch_size / 2` pairs.
pub fn paired_batches<R: Rng + ?Sized>(
    data: &PairedDataset,
    batch_size: usize,
    augment: bool,
    rng: &mut R,
) -> Result<Vec<PairedBatch>> {
    if data.is_empty() {
        return invalid("dataset has no original/forged pairs");
    }
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return invalid(format!("batch size {batch_size} must be even and at least 2"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size / 2)
        .map(|chunk| {
            let mut batch = PairedBatch {
                originals: Vec::with_capacity(chunk.len()),
                forged: Vec::with_capacity(chunk.len()),
            };
            for &i in chunk {
                let (mut o, mut f) = (data.originals[i].clone(), data.forged[i].clone());
                if augment {
                    augment_pair(&mut o, &mut f, rng)?;
                }
                batch.originals.push(o);
                batch.forged.push(f);
            }
            Ok(batch)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            augment: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept (best validation F1, else the last).
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn loss_curve_csv(&self) -> String {
        let mut s = format!("epoch,train_loss,{}\n", MetricsReport::CSV_HEADER);
        for e in &self.history {
            let val = e.val.as_ref().map_or_else(|| ",,,,,,,,,".to_string(), |m| m.csv_row());
            s.push_str(&format!("{},{:.6},{val}\n", e.epoch, e.train_loss));
        }
        s
    }
}

/// One optimizer step on a batch; returns the mean loss.
pub fn train_step(net: &mut FcdNet<f32>, batch: &PairedBatch, adam: &AdamConfig) -> Result<f64> {
    let (x, labels) = batch.to_tensor()?;
    net.store_mut().zero_grads();
    let probs = net.forward(x, Mode::Train)?;
    let (loss, grad) = bce_loss(&probs, &labels)?;
    net.backward(grad)?;
    adam_step(net.store_mut(), adam)?;
    Ok(loss)
}

/// Trains for `cfg.epochs`, keeping the weights with the best validation
/// F1 (earliest on ties). `on_epoch` sees each epoch's statistics.
pub fn train(
    net: &mut FcdNet<f32>,
    train_set: &PairedDataset,
    val_set: Option<&PairedDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return invalid("training set has no original/forged pairs");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, frucforge_nn::ParamStore<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let batches = paired_batches(train_set, cfg.batch_size, cfg.augment, &mut rng)?;
        let mut total = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let n = 2 * batch.originals.len();
            total += train_step(net, batch, &cfg.adam)? * n as f64;
            seen += n;
        }
        let val = match val_set {
            Some(v) => Some(evaluate(net, v)?),
            None => None,
        };
        if let Some(m) = &val {
            let f1 = if m.f1.is_nan() { -1.0 } else { m.f1 };
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, net.store().clone()));
            }
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / seen as f64,
            val,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    let best_epoch = match best {
        Some((_, epoch, store)) => {
            *net.store_mut() = store;
            epoch
        }
        None => cfg.epochs,
    };
    Ok(TrainOutcome { history, best_epoch })
}

pub const EVAL_BATCH: usize = 32;

/// Forged probability of every stack, in eval mode.
pub fn forged_probabilities(net: &mut FcdNet<f32>, stacks: &[&ResidualStack]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(stacks.len());
    for chunk in stacks.chunks(EVAL_BATCH) {
        let probs = net.forward(stack_tensor(chunk)?, Mode::Eval)?;
        out.extend(probs.data().chunks(2).map(|r| r[1]));
    }
    Ok(out)
}

/// Stack-level metrics by argmax over all stacks of `data`.
pub fn evaluate(net: &mut FcdNet<f32>, data: &PairedDataset) -> Result<MetricsReport> {
    let stacks: Vec<&ResidualStack> = data.all_stacks().collect();
    let probs = forged_probabilities(net, &stacks)?;
    let predicted: Vec<Label> = probs.iter().map(|&p| argmax_label(1.0 - p, p)).collect();
    let truth: Vec<Label> = stacks.iter().map(|s| s.label.unwrap_or(Label::Original)).collect();
    compute_metrics(&predicted, &truth)
}
