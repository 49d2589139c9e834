use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::encoder::{forward, EncoderConfig, Padding, InferenceSession, LayerNames, ModelCheckpoint};

use super::{LabeledReaction, PretrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    /// Optimizer steps of linear warmup from 0 to `lr`.
    pub warmup_steps: usize,
    /// Cosine-anneal the rate to 0 over `epochs` after warmup.
    pub cosine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            patience: 10,
            grad_clip: 1.0,
            warmup_steps: 50,
            cosine: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PretrainError::Config(format!("split fractions {fr:?} must be in [0,1] and sum to 1")));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(PretrainError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(PretrainError::Config(format!("grad_clip {} must be finite and non-negative", self.grad_clip)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PretrainError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Corpus indices of each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffle, then each class is cut by the configured fractions,
/// so every split keeps the corpus class ratio (up to rounding).
pub fn stratified_split(corpus: &[LabeledReaction], cfg: &TrainConfig) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus[i].is_real == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = (n as f64 * cfg.train_frac).round() as usize;
        let n_val = ((n as f64 * cfg.val_frac).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    pub split: Split,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auroc: Option<f64>,
}

fn target(e: &LabeledReaction) -> f32 {
    if e.is_real {
        1.0
    } else {
        0.0
    }
}

/// Accuracy at threshold 0.5 and rank-statistic AUROC (tied scores share
/// their mean rank).
pub fn metrics(probs: &[f64], labels: &[bool]) -> Result<EvalReport, PretrainError> {
    if probs.is_empty() {
        return Err(PretrainError::EmptySet);
    }
    let correct = probs.iter().zip(labels).filter(|&(&p, &y)| (p >= 0.5) == y).count();
    let accuracy = correct as f64 / probs.len() as f64;

    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    let auroc = if pos == 0 || neg == 0 {
        None
    } else {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
        let mut rank_sum = 0.0;
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
                j += 1;
            }
            let mid = (i + j) as f64 / 2.0 + 1.0;
            rank_sum += (i..=j).filter(|&k| labels[order[k]]).count() as f64 * mid;
            i = j + 1;
        }
        let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
        Some(u / (pos * neg) as f64)
    };
    Ok(EvalReport { accuracy, auroc })
}

pub fn predict(model: &ModelCheckpoint, set: &[LabeledReaction]) -> Result<Vec<f64>, PretrainError> {
    let mut session = InferenceSession::new(model);
    set.iter().map(|e| Ok(session.probability(&e.reaction)?)).collect()
}

pub fn evaluate(model: &ModelCheckpoint, set: &[LabeledReaction]) -> Result<EvalReport, PretrainError> {
    if set.is_empty() {
        return Err(PretrainError::EmptySet);
    }
    let probs = predict(model, set)?;
    let labels: Vec<bool> = set.iter().map(|e| e.is_real).collect();
    metrics(&probs, &labels)
}

fn mean_loss(model: &ModelCheckpoint, set: &[&LabeledReaction]) -> Result<f64, PretrainError> {
    let mut session = InferenceSession::new(model);
    let mut total = 0.0;
    for e in set {
        let p = session.probability(&e.reaction)?.clamp(1e-12, 1.0 - 1e-12);
        total -= if e.is_real { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / set.len() as f64)
}

/// One Adam step on the mean BCE of `batch`, after rescaling the gradient
/// to global norm `grad_clip` if it is larger; returns the summed loss.
fn train_batch(
    params: &mut BTreeMap<String, Tensor<f32>>,
    state: &mut AdamState<f32>,
    adam: &AdamConfig,
    grad_clip: f64,
    cfg: &EncoderConfig,
    batch: &[&LabeledReaction],
) -> Result<f64, PretrainError> {
    let mut tape = Tape::<f32>::new();
    let vars: BTreeMap<String, Var> = params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
    let names = LayerNames::new(vars);
    let mut losses = Vec::with_capacity(batch.len());
    for e in batch {
        let pass = forward(&mut tape, cfg, &names, &e.reaction, Padding::Compact)?;
        losses.push(tape.bce_with_logits(pass.logit, target(e)).map_err(crate::encoder::EncoderError::from)?);
    }
    let summed: f64 = losses.iter().map(|&l| f64::from(tape.value(l).data()[0])).sum();
    let mean = (|| {
        let all = tape.concat_cols(&losses)?;
        let total = tape.sum(all)?;
        tape.scale(total, 1.0 / batch.len() as f32)
    })()
    .map_err(crate::encoder::EncoderError::from)?;
    let mut grads = tape.backward(mean).map_err(crate::encoder::EncoderError::from)?;
    let mut grads: BTreeMap<String, Tensor<f32>> = names
        .vars()
        .iter()
        .map(|(k, &v)| (k.clone(), grads.take(v).expect("parameters always receive a gradient")))
        .collect();
    if grad_clip > 0.0 {
        let norm = grads.values().flat_map(|g| g.data()).map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm > grad_clip {
            let s = (grad_clip / norm) as f32;
            grads.values_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= s));
        }
    }
    adam_step(params, &grads, state, adam).map_err(crate::encoder::EncoderError::from)?;
    Ok(summed)
}

/// Mini-batch Adam on mean binary cross-entropy with a stratified split,
/// keeping the parameters of the best validation epoch and stopping after
/// `patience` epochs without improvement. Fully determined by the corpus,
/// both configs and `cfg.seed`.
pub fn train(
    corpus: &[LabeledReaction],
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, PretrainError> {
    cfg.validate()?;
    if !corpus.iter().any(|e| e.is_real) || corpus.iter().all(|e| e.is_real) {
        return Err(PretrainError::SingleClassCorpus);
    }
    let split = stratified_split(corpus, cfg);
    if split.train.is_empty() {
        return Err(PretrainError::EmptySet);
    }
    let mut model = ModelCheckpoint::init(enc_cfg.clone(), cfg.seed)?;
    let mut adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let steps_per_epoch = split.train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let rate = |step: usize| -> f64 {
        let warm = if step < cfg.warmup_steps { (step + 1) as f64 / cfg.warmup_steps as f64 } else { 1.0 };
        let decay = if cfg.cosine && total_steps > cfg.warmup_steps && step >= cfg.warmup_steps {
            let t = (step - cfg.warmup_steps) as f64 / (total_steps - cfg.warmup_steps) as f64;
            0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            1.0
        };
        cfg.lr * warm * decay
    };
    let mut step = 0usize;
    let mut state = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let train_set: Vec<&LabeledReaction> = split.train.iter().map(|&i| &corpus[i]).collect();
    let val_set: Vec<LabeledReaction> = split.val.iter().map(|&i| corpus[i].clone()).collect();
    let val_acc = |m: &ModelCheckpoint| -> Result<f64, PretrainError> {
        if val_set.is_empty() {
            Ok(0.0)
        } else {
            Ok(evaluate(m, &val_set)?.accuracy)
        }
    };

    let initial = EpochRecord { epoch: 0, train_loss: mean_loss(&model, &train_set)?, val_acc: val_acc(&model)? };
    info!("epoch 0: train_loss {:.4} val_acc {:.4}", initial.train_loss, initial.val_acc);
    let mut best = (initial.val_acc, 0, model.params.clone());
    let mut history = vec![initial];

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledReaction> = chunk.iter().map(|&i| train_set[i]).collect();
            adam.lr = rate(step);
            train_batch(&mut model.params, &mut state, &adam, cfg.grad_clip, enc_cfg, &batch)?;
            step += 1;
        }
        let rec = EpochRecord { epoch, train_loss: mean_loss(&model, &train_set)?, val_acc: val_acc(&model)? };
        info!("epoch {epoch}: train_loss {:.4} val_acc {:.4}", rec.train_loss, rec.val_acc);
        if rec.val_acc > best.0 {
            best = (rec.val_acc, epoch, model.params.clone());
        }
        history.push(rec);
        if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    model.params = best.2;
    Ok(TrainOutcome { checkpoint: model, history, split, best_epoch: best.1 })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::pretrain::{make_fictitious_corpus, synth_templates};

    fn brute_auroc(probs: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..probs.len() {
            for j in 0..probs.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if probs[i] > probs[j] {
                        1.0
                    } else if probs[i] == probs[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(m, EvalReport { accuracy: 1.0, auroc: Some(1.0) });
        let m = metrics(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(m.auroc, Some(0.5));
        assert_eq!(metrics(&[], &[]), Err(PretrainError::EmptySet));
        assert_eq!(metrics(&[0.7], &[true]).unwrap().auroc, None);
    }

    proptest! {
        #[test]
        fn auroc_matches_all_pairs(data in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
            let probs: Vec<f64> = data.iter().map(|(p, _)| f64::from(*p) / 20.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            let got = metrics(&probs, &labels).unwrap();
            if labels.iter().any(|&y| y) && labels.iter().any(|&y| !y) {
                prop_assert!((got.auroc.unwrap() - brute_auroc(&probs, &labels)).abs() < 1e-12);
            } else {
                prop_assert_eq!(got.auroc, None);
            }
        }
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let corpus = make_fictitious_corpus(&synth_templates(50, 0), 0).unwrap();
        let split = stratified_split(&corpus, &TrainConfig::default());
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..corpus.len()).collect::<Vec<_>>());
        for part in [&split.train, &split.val, &split.test] {
            let real = part.iter().filter(|&&i| corpus[i].is_real).count();
            assert!(real.abs_diff(part.len() - real) <= 1, "{real} of {}", part.len());
        }
    }

    fn tiny() -> EncoderConfig {
        EncoderConfig { gnn_hidden: 8, d_model: 8, tf_heads: 2, ffn_dim: 16, emb_dim: 8, ..EncoderConfig::default() }
    }

    #[test]
    fn smoke_one_epoch_on_eight_reactions() {
        let corpus = make_fictitious_corpus(&synth_templates(4, 1), 1).unwrap();
        assert_eq!(corpus.len(), 8);
        let cfg = TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::default() };
        let out = train(&corpus, &tiny(), &cfg).unwrap();
        assert_eq!(out.history.len(), 2);
        assert!(out.history.iter().all(|r| r.train_loss.is_finite()));
    }

    #[test]
    fn training_is_reproducible() {
        let corpus = make_fictitious_corpus(&synth_templates(30, 2), 2).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, seed: 3, ..TrainConfig::default() };
        let a = train(&corpus, &tiny(), &cfg).unwrap();
        let b = train(&corpus, &tiny(), &cfg).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn one_epoch_lowers_training_loss() {
        let corpus = make_fictitious_corpus(&synth_templates(60, 2), 2).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 8, ..TrainConfig::default() };
        let out = train(&corpus, &tiny(), &cfg).unwrap();
        let (before, after) = (out.history[0].train_loss, out.history[1].train_loss);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn single_class_is_rejected() {
        let corpus: Vec<LabeledReaction> = make_fictitious_corpus(&synth_templates(4, 1), 1)
            .unwrap()
            .into_iter()
            .filter(|e| e.is_real)
            .collect();
        assert_eq!(train(&corpus, &tiny(), &TrainConfig::default()).unwrap_err(), PretrainError::SingleClassCorpus);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let cfg = TrainConfig { train_frac: 0.9, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(PretrainError::Config(_))));
    }
}
