//! Mini-batch Adamax training with validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{batch_loss, SannConfig, SannGrads, SannModel};
use crate::nn::NnError;
use crate::seed;
use crate::subtree::EncodedProgram;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split contains a single class; both labels are required")]
    SingleClassDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Per-epoch record of a training run. `grad_items` counts every item that
/// contributed a gradient, so tests can assert validation data never
/// leaked into an update. Wall-clock throughput is kept out of the CSV to
/// keep metrics files reproducible.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub grad_items: u64,
    pub predict_items_per_sec: Option<f64>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_acc
            ));
        }
        out
    }
}

impl SannGrads {
    fn zero(&mut self) {
        self.e_subtree.fill_zero();
        self.e_node.fill_zero();
        self.td_w.fill_zero();
        self.td_b.fill_zero();
        self.av.fill_zero();
        self.clf_w.fill_zero();
        self.clf_b.fill_zero();
    }
}

/// Train from scratch, returning the parameters of the best validation
/// epoch. Stopping rule: after each epoch, if the count of epochs since
/// the best validation loss reaches the patience, stop (patience 0 stops
/// after the first epoch).
pub fn train_sann(
    train: &[EncodedProgram],
    val: &[EncodedProgram],
    subtree_vocab_size: usize,
    node_vocab_size: usize,
    config: &SannConfig,
) -> Result<(SannModel, History), TrainError> {
    assert!(!val.is_empty(), "validation split must be non-empty");
    let has_pos = train.iter().any(|p| p.label == 1);
    let has_neg = train.iter().any(|p| p.label == 0);
    if !has_pos || !has_neg {
        return Err(TrainError::SingleClassDataset);
    }

    let mut model = SannModel::init(subtree_vocab_size, node_vocab_size, config);
    let mut grads = SannGrads::zeros(&model);
    let mut history = History::default();
    let mut best: Option<(f64, Vec<(String, crate::nn::Tensor)>, usize)> = None;
    let mut since_best = 0usize;

    let mut indices: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(config.seed, "sann.shuffle", epoch as u64));
        indices.shuffle(&mut rng);

        let mut train_loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ep = &train[i];
                let (out, cache) = model.forward_cached(ep)?;
                train_loss_sum += model.item_loss(&out, ep.label);
                model.backward_into(ep, &cache, ep.label, scale, &mut grads);
            }
            grads.apply(&mut model.store);
            model.store.adamax_step(config.lr, 0.9, 0.999, 1e-8);
            model.store.zero_grads();
            history.grad_items += batch.len() as u64;
        }
        let train_loss = train_loss_sum / train.len() as f64;

        let outputs = model.predict_batch(val)?;
        let labels: Vec<u8> = val.iter().map(|p| p.label).collect();
        let val_loss = batch_loss(&model, &outputs, &labels);
        let correct = outputs
            .iter()
            .zip(&labels)
            .filter(|(o, &y)| (o.prob_correct >= 0.5) == (y == 1))
            .count();
        let val_acc = correct as f64 / val.len() as f64;

        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, model.store.snapshot(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.early_stop_patience {
            break;
        }
    }

    let (_, snapshot, best_epoch) = best.expect("at least one epoch ran");
    model.store.restore(&snapshot);
    history.best_epoch = best_epoch;
    Ok((model, history))
}
