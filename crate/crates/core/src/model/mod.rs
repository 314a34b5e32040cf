//! The subtree-attention classifier.
//!
//! Per subtree `i` of an encoded program:
//!
//! ```text
//! u_i  = concat(E_subtree[id_i], mean(E_node[node ids_i]))
//! sv_i = tanh(u_i · W_td + b_td)          (time-distributed dense)
//! a_i  = σ(sv_i · av)                     (independent sigmoid attention)
//! c    = (1/n) Σ a_i · sv_i               (code vector)
//! p    = σ(c · w_clf + b_clf)             (probability the program is correct)
//! ```
//!
//! The training loss is binary cross-entropy plus the entropy regularizer
//! `H(a) = -λ Σ a_i log(a_i + ε)`, which pushes attention away from the
//! diffuse middle so that flagged subtrees stay few. A config switch swaps
//! the attention for a normalized softmax, kept for ablation comparisons.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use train::{train_sann, EpochStats, History, TrainError};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::Span;
use crate::nn::{
    bce_loss, dense, dense_backward, embedding_backward, embedding_lookup, entropy_regularizer,
    entropy_regularizer_grad, glorot_uniform, masked_mean_pool, masked_mean_pool_backward,
    sigmoid, sigmoid_attention_pool, sigmoid_attention_pool_backward, softmax_attention_pool,
    softmax_attention_pool_backward, uniform_init, NnError, ParamStore, Tensor,
};
use crate::seed;
use crate::subtree::EncodedProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SannConfig {
    pub embed_dim: usize,
    pub max_subtrees: usize,
    pub max_nodes: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub lr: f64,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub attention: AttentionKind,
}

impl Default for SannConfig {
    fn default() -> Self {
        SannConfig {
            embed_dim: 128,
            max_subtrees: 128,
            max_nodes: 64,
            lambda: 3.5e-5,
            epsilon: 1e-8,
            lr: 0.001,
            epochs: 100,
            early_stop_patience: 20,
            batch_size: 32,
            seed: 17,
            attention: AttentionKind::Sigmoid,
        }
    }
}

/// Attention on one subtree, mapped back to source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttnEntry {
    pub index: usize,
    pub weight: f64,
    pub span: Span,
    pub subtree: String,
}

/// Everything the forward pass exposes for one program.
#[derive(Debug, Clone)]
pub struct SannOutput {
    pub prob_correct: f64,
    pub code_vector: Tensor,
    pub attention: Vec<AttnEntry>,
}

/// Trained parameters plus the dimensions they were built for.
#[derive(Debug, Clone)]
pub struct SannModel {
    pub store: ParamStore,
    pub config: SannConfig,
    pub subtree_vocab_size: usize,
    pub node_vocab_size: usize,
}

pub(crate) struct ForwardCache {
    u: Tensor,
    sv: Tensor,
    a: Vec<f64>,
    c: Tensor,
    p: f64,
}

/// Batch gradient buffers, one tensor per parameter.
pub(crate) struct SannGrads {
    e_subtree: Tensor,
    e_node: Tensor,
    td_w: Tensor,
    td_b: Tensor,
    av: Tensor,
    clf_w: Tensor,
    clf_b: Tensor,
}

impl SannGrads {
    pub(crate) fn zeros(model: &SannModel) -> SannGrads {
        let d = model.config.embed_dim;
        SannGrads {
            e_subtree: Tensor::zeros(&[model.subtree_vocab_size, d]),
            e_node: Tensor::zeros(&[model.node_vocab_size, d]),
            td_w: Tensor::zeros(&[2 * d, d]),
            td_b: Tensor::zeros(&[d]),
            av: Tensor::zeros(&[d]),
            clf_w: Tensor::zeros(&[d, 1]),
            clf_b: Tensor::zeros(&[1]),
        }
    }

    pub(crate) fn apply(&self, store: &mut ParamStore) {
        store.add_grad("embed.subtree", &self.e_subtree);
        store.add_grad("embed.node", &self.e_node);
        store.add_grad("td.w", &self.td_w);
        store.add_grad("td.b", &self.td_b);
        store.add_grad("attn.av", &self.av);
        store.add_grad("clf.w", &self.clf_w);
        store.add_grad("clf.b", &self.clf_b);
    }
}

impl SannModel {
    /// Fresh parameters: uniform(-0.05, 0.05) embeddings, Glorot dense
    /// weights, zero biases. All draws come from the config seed.
    pub fn init(subtree_vocab_size: usize, node_vocab_size: usize, config: &SannConfig) -> Self {
        let d = config.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "sann.init"));
        let mut store = ParamStore::new();
        store.insert(
            "embed.subtree",
            uniform_init(&[subtree_vocab_size, d], -0.05, 0.05, &mut rng),
        );
        store.insert(
            "embed.node",
            uniform_init(&[node_vocab_size, d], -0.05, 0.05, &mut rng),
        );
        store.insert("td.w", glorot_uniform(2 * d, d, &mut rng));
        store.insert("td.b", Tensor::zeros(&[d]));
        store.insert("attn.av", {
            let t = glorot_uniform(d, 1, &mut rng);
            Tensor::from_vec(&[d], t.data().to_vec())
        });
        store.insert("clf.w", glorot_uniform(d, 1, &mut rng));
        store.insert("clf.b", Tensor::zeros(&[1]));
        SannModel {
            store,
            config: config.clone(),
            subtree_vocab_size,
            node_vocab_size,
        }
    }

    pub fn forward(&self, ep: &EncodedProgram) -> Result<SannOutput, NnError> {
        let (out, _) = self.forward_cached(ep)?;
        Ok(out)
    }

    pub(crate) fn forward_cached(
        &self,
        ep: &EncodedProgram,
    ) -> Result<(SannOutput, ForwardCache), NnError> {
        assert!(!ep.is_empty(), "encoder guarantees at least one subtree");
        let d = self.config.embed_dim;
        let n = ep.len();
        let l = ep.node_id_seqs[0].len();

        let e_s = embedding_lookup(&ep.subtree_ids, self.store.value("embed.subtree"))?;
        let flat_ids: Vec<u32> = ep.node_id_seqs.iter().flatten().copied().collect();
        let node_rows = embedding_lookup(&flat_ids, self.store.value("embed.node"))?;
        let x3 = Tensor::from_vec(&[n, l, d], node_rows.data().to_vec());
        let m = masked_mean_pool(&x3, &ep.lengths)?;

        let mut u = Tensor::zeros(&[n, 2 * d]);
        for i in 0..n {
            u.row_mut(i)[..d].copy_from_slice(e_s.row(i));
            u.row_mut(i)[d..].copy_from_slice(m.row(i));
        }
        let z = dense(&u, self.store.value("td.w"), self.store.value("td.b"))?;
        let mut sv = z;
        sv.data_mut().iter_mut().for_each(|v| *v = v.tanh());

        let (c, a) = match self.config.attention {
            AttentionKind::Sigmoid => sigmoid_attention_pool(&sv, self.store.value("attn.av")),
            AttentionKind::Softmax => softmax_attention_pool(&sv, self.store.value("attn.av")),
        };

        let c2 = Tensor::from_vec(&[1, d], c.data().to_vec());
        let logit = dense(&c2, self.store.value("clf.w"), self.store.value("clf.b"))?;
        let p = sigmoid(logit.data()[0]);

        let attention = (0..n)
            .map(|i| AttnEntry {
                index: i,
                weight: a[i],
                span: ep.spans[i],
                subtree: ep.serializations[i].clone(),
            })
            .collect();
        let out = SannOutput {
            prob_correct: p,
            code_vector: c.clone(),
            attention,
        };
        Ok((out, ForwardCache { u, sv, a, c, p }))
    }

    /// Loss of one program under the combined objective.
    pub fn item_loss(&self, out: &SannOutput, label: u8) -> f64 {
        let weights: Vec<f64> = out.attention.iter().map(|e| e.weight).collect();
        bce_loss(out.prob_correct, label).0
            + entropy_regularizer(&weights, self.config.lambda, self.config.epsilon)
    }

    /// Accumulate gradients of `scale * [bce(p, label) + H(a)]` for one
    /// program into `grads`.
    pub(crate) fn backward_into(
        &self,
        ep: &EncodedProgram,
        cache: &ForwardCache,
        label: u8,
        scale: f64,
        grads: &mut SannGrads,
    ) {
        let d = self.config.embed_dim;
        let n = ep.len();
        let l = ep.node_id_seqs[0].len();

        let (_, dp) = bce_loss(cache.p, label);
        let dlogit = scale * dp * cache.p * (1.0 - cache.p);

        let clf_w = self.store.value("clf.w");
        let mut dc = Tensor::zeros(&[d]);
        for k in 0..d {
            dc.data_mut()[k] = dlogit * clf_w.data()[k];
            grads.clf_w.data_mut()[k] += dlogit * cache.c.data()[k];
        }
        grads.clf_b.data_mut()[0] += dlogit;

        let mut da = entropy_regularizer_grad(&cache.a, self.config.lambda, self.config.epsilon);
        da.iter_mut().for_each(|v| *v *= scale);

        let av = self.store.value("attn.av");
        let (dsv, dav) = match self.config.attention {
            AttentionKind::Sigmoid => {
                sigmoid_attention_pool_backward(&cache.sv, av, &cache.a, &dc, Some(&da))
            }
            AttentionKind::Softmax => {
                softmax_attention_pool_backward(&cache.sv, av, &cache.a, &dc, Some(&da))
            }
        };
        grads.av.add_assign(&dav);

        let mut dz = dsv;
        for (dzv, svv) in dz.data_mut().iter_mut().zip(cache.sv.data()) {
            *dzv *= 1.0 - svv * svv;
        }
        let (du, dtd_w, dtd_b) = dense_backward(&cache.u, self.store.value("td.w"), &dz);
        grads.td_w.add_assign(&dtd_w);
        grads.td_b.add_assign(&dtd_b);

        let mut de_s = Tensor::zeros(&[n, d]);
        let mut dm = Tensor::zeros(&[n, d]);
        for i in 0..n {
            de_s.row_mut(i).copy_from_slice(&du.row(i)[..d]);
            dm.row_mut(i).copy_from_slice(&du.row(i)[d..]);
        }
        embedding_backward(&ep.subtree_ids, &de_s, &mut grads.e_subtree);

        let dx3 = masked_mean_pool_backward(&dm, &ep.lengths, l);
        let flat_ids: Vec<u32> = ep.node_id_seqs.iter().flatten().copied().collect();
        let dx2 = Tensor::from_vec(&[n * l, d], dx3.data().to_vec());
        embedding_backward(&flat_ids, &dx2, &mut grads.e_node);
    }

    /// Forward over a batch, order preserving.
    pub fn predict_batch(&self, items: &[EncodedProgram]) -> Result<Vec<SannOutput>, NnError> {
        items.iter().map(|ep| self.forward(ep)).collect()
    }

    /// Put the analytic gradients of the mean combined loss over a batch
    /// into the store; returns that loss. One step of what `train_sann`
    /// does, exposed for gradient verification.
    pub fn accumulate_batch_gradients(
        &mut self,
        batch: &[EncodedProgram],
        labels: &[u8],
    ) -> Result<f64, NnError> {
        let mut grads = SannGrads::zeros(self);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (ep, &y) in batch.iter().zip(labels) {
            let (out, cache) = self.forward_cached(ep)?;
            loss += self.item_loss(&out, y);
            self.backward_into(ep, &cache, y, scale, &mut grads);
        }
        grads.apply(&mut self.store);
        Ok(loss * scale)
    }
}

/// Mean combined loss over a batch of outputs, the quantity `train_sann`
/// minimizes and reports.
pub fn batch_loss(model: &SannModel, outputs: &[SannOutput], labels: &[u8]) -> f64 {
    assert!(!outputs.is_empty(), "batch must be non-empty");
    assert_eq!(outputs.len(), labels.len());
    let total: f64 = outputs
        .iter()
        .zip(labels)
        .map(|(o, &y)| model.item_loss(o, y))
        .sum();
    total / outputs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;

    /// Hand-built two-subtree program against a 6/8 vocabulary.
    fn tiny_program(label: u8) -> EncodedProgram {
        EncodedProgram {
            subtree_ids: vec![2, 4],
            node_id_seqs: vec![vec![2, 3, 4, 0], vec![5, 6, 0, 0]],
            lengths: vec![3, 2],
            spans: vec![Span::new(0, 20), Span::new(4, 12)],
            serializations: vec!["(A VAR1)".into(), "(B VAR1)".into()],
            label,
        }
    }

    fn tiny_config(attention: AttentionKind) -> SannConfig {
        SannConfig {
            embed_dim: 4,
            max_subtrees: 8,
            max_nodes: 4,
            lambda: 0.01,
            epsilon: 1e-8,
            seed: 5,
            attention,
            ..SannConfig::default()
        }
    }

    #[test]
    fn forward_is_deterministic_bit_for_bit() {
        let model = SannModel::init(6, 8, &tiny_config(AttentionKind::Sigmoid));
        let ep = tiny_program(1);
        let a = model.forward(&ep).unwrap();
        let b = model.forward(&ep).unwrap();
        assert_eq!(a.prob_correct.to_bits(), b.prob_correct.to_bits());
        assert_eq!(a.code_vector.data(), b.code_vector.data());
    }

    #[test]
    fn single_subtree_code_vector_is_weighted_subtree_vector() {
        let model = SannModel::init(6, 8, &tiny_config(AttentionKind::Sigmoid));
        let ep = EncodedProgram {
            subtree_ids: vec![3],
            node_id_seqs: vec![vec![2, 0]],
            lengths: vec![1],
            spans: vec![Span::new(0, 5)],
            serializations: vec!["(A)".into()],
            label: 0,
        };
        let out = model.forward(&ep).unwrap();
        // with n=1 the mean is a_1·sv_1, so ||c|| = a_1·||sv_1||
        let a1 = out.attention[0].weight;
        assert!(a1 > 0.0 && a1 < 1.0);
        let (_, cache) = model.forward_cached(&ep).unwrap();
        for (cv, svv) in out.code_vector.data().iter().zip(cache.sv.row(0)) {
            assert!((cv - a1 * svv).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_zero_reduces_loss_to_plain_bce() {
        let mut config = tiny_config(AttentionKind::Sigmoid);
        config.lambda = 0.0;
        let model = SannModel::init(6, 8, &config);
        let ep = tiny_program(1);
        let out = model.forward(&ep).unwrap();
        let expected = bce_loss(out.prob_correct, 1).0;
        assert_eq!(batch_loss(&model, &[out], &[1]), expected);
    }

    #[test]
    fn batch_loss_matches_hand_composition() {
        let model = SannModel::init(6, 8, &tiny_config(AttentionKind::Sigmoid));
        let eps = [tiny_program(1), tiny_program(0)];
        let outs = model.predict_batch(&eps).unwrap();
        let mut expected = 0.0;
        for (o, y) in outs.iter().zip([1u8, 0u8]) {
            let ws: Vec<f64> = o.attention.iter().map(|e| e.weight).collect();
            expected += bce_loss(o.prob_correct, y).0
                + entropy_regularizer(&ws, model.config.lambda, model.config.epsilon);
        }
        expected /= 2.0;
        let got = batch_loss(&model, &outs, &[1, 0]);
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn permuting_subtrees_permutes_attention_and_keeps_code_vector() {
        let model = SannModel::init(6, 8, &tiny_config(AttentionKind::Sigmoid));
        let ep = tiny_program(1);
        let mut flipped = ep.clone();
        flipped.subtree_ids.reverse();
        flipped.node_id_seqs.reverse();
        flipped.lengths.reverse();
        flipped.spans.reverse();
        flipped.serializations.reverse();
        let a = model.forward(&ep).unwrap();
        let b = model.forward(&flipped).unwrap();
        assert!((a.prob_correct - b.prob_correct).abs() < 1e-12);
        for (x, y) in a.code_vector.data().iter().zip(b.code_vector.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.attention[0].weight - b.attention[1].weight).abs() < 1e-12);
        assert!((a.attention[1].weight - b.attention[0].weight).abs() < 1e-12);
    }

    fn end_to_end_gradcheck(attention: AttentionKind) -> f64 {
        let config = tiny_config(attention);
        let mut model = SannModel::init(6, 8, &config);
        let batch = [tiny_program(1), tiny_program(0)];
        let labels = [1u8, 0u8];

        let mut grads = SannGrads::zeros(&model);
        for (ep, &y) in batch.iter().zip(&labels) {
            let (_, cache) = model.forward_cached(ep).unwrap();
            model.backward_into(ep, &cache, y, 0.5, &mut grads);
        }
        grads.apply(&mut model.store);

        let config2 = config.clone();
        let batch2 = batch.clone();
        let mut probe = SannModel::init(6, 8, &config2);
        finite_diff_check(
            &mut model.store,
            move |s| {
                probe.store = s.clone();
                let outs = probe.predict_batch(&batch2).unwrap();
                batch_loss(&probe, &outs, &labels)
            },
            1e-5,
        )
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let max_rel = end_to_end_gradcheck(AttentionKind::Sigmoid);
        assert!(max_rel <= 1e-4, "sigmoid max_rel = {max_rel}");
        let max_rel = end_to_end_gradcheck(AttentionKind::Softmax);
        assert!(max_rel <= 1e-4, "softmax max_rel = {max_rel}");
    }
}
