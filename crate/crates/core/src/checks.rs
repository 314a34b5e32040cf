//! Gradient integrity harness: every layer and all three end-to-end
//! losses verified against central finite differences. Single layers must
//! land within 1e-5 relative error, deep compositions within 1e-4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::Span;
use crate::model::{batch_loss, AttentionKind, SannConfig, SannModel};
use crate::nn::{
    dense, dense_backward, embedding_backward, embedding_lookup, entropy_regularizer,
    entropy_regularizer_grad, finite_diff_check, glorot_uniform, lstm_step, lstm_step_backward,
    masked_mean_pool, masked_mean_pool_backward, sigmoid_attention_pool,
    sigmoid_attention_pool_backward, softmax_attention_pool, softmax_attention_pool_backward,
    uniform_init, LstmGrads, ParamStore, Tensor,
};
use crate::student::dkt::{DktConfig, DktModel, DktTrace};
use crate::student::grade::{assemble_grade_features, GradeConfig, GradeModel};
use crate::subtree::EncodedProgram;

#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

const LAYER_TOL: f64 = 1e-5;
const END_TO_END_TOL: f64 = 1e-4;

/// Run the full battery; deterministic, a few seconds of work.
pub fn run_gradient_checks() -> Vec<GradCheckResult> {
    vec![
        check_dense(),
        check_embedding(),
        check_mean_pool(),
        check_sigmoid_attention_with_entropy(),
        check_softmax_attention(),
        check_bce(),
        check_lstm_bptt(),
        check_sann_combined_loss(),
        check_dkt_loss(),
        check_grade_mse(),
    ]
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(20240)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dense() -> GradCheckResult {
    let mut r = rng();
    let mut store = ParamStore::new();
    store.insert("x", uniform_init(&[4, 5], -1.0, 1.0, &mut r));
    store.insert("w", glorot_uniform(5, 3, &mut r));
    store.insert("b", uniform_init(&[3], -0.5, 0.5, &mut r));
    let probe = uniform_init(&[4, 3], -1.0, 1.0, &mut r);
    let (dx, dw, db) = dense_backward(store.value("x"), store.value("w"), &probe);
    store.add_grad("x", &dx);
    store.add_grad("w", &dw);
    store.add_grad("b", &db);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            let y = dense(s.value("x"), s.value("w"), s.value("b")).unwrap();
            dot(y.data(), probe.data())
        },
        1e-5,
    );
    GradCheckResult {
        name: "dense",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_embedding() -> GradCheckResult {
    let mut r = rng();
    let ids = [1u32, 3, 1, 0];
    let mut store = ParamStore::new();
    store.insert("e", uniform_init(&[5, 4], -1.0, 1.0, &mut r));
    let probe = uniform_init(&[4, 4], -1.0, 1.0, &mut r);
    let mut de = Tensor::zeros(&[5, 4]);
    embedding_backward(&ids, &probe, &mut de);
    store.add_grad("e", &de);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            let y = embedding_lookup(&ids, s.value("e")).unwrap();
            dot(y.data(), probe.data())
        },
        1e-5,
    );
    GradCheckResult {
        name: "embedding_lookup",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_mean_pool() -> GradCheckResult {
    let mut r = rng();
    let lengths = [2usize, 3, 1];
    let mut store = ParamStore::new();
    store.insert("x", uniform_init(&[3, 3, 2], -1.0, 1.0, &mut r));
    let probe = uniform_init(&[3, 2], -1.0, 1.0, &mut r);
    let dx = masked_mean_pool_backward(&probe, &lengths, 3);
    store.add_grad("x", &dx);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            let y = masked_mean_pool(s.value("x"), &lengths).unwrap();
            dot(y.data(), probe.data())
        },
        1e-5,
    );
    GradCheckResult {
        name: "masked_mean_pool",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_sigmoid_attention_with_entropy() -> GradCheckResult {
    let mut r = rng();
    let (lambda, eps) = (0.21, 1e-8);
    let mut store = ParamStore::new();
    store.insert("sv", uniform_init(&[5, 4], -1.0, 1.0, &mut r));
    store.insert("av", uniform_init(&[4], -1.0, 1.0, &mut r));
    let probe = uniform_init(&[4], -1.0, 1.0, &mut r);
    let (_, a) = sigmoid_attention_pool(store.value("sv"), store.value("av"));
    let da = entropy_regularizer_grad(&a, lambda, eps);
    let (dsv, dav) =
        sigmoid_attention_pool_backward(store.value("sv"), store.value("av"), &a, &probe, Some(&da));
    store.add_grad("sv", &dsv);
    store.add_grad("av", &dav);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            let (c, a) = sigmoid_attention_pool(s.value("sv"), s.value("av"));
            dot(c.data(), probe.data()) + entropy_regularizer(&a, lambda, eps)
        },
        1e-5,
    );
    GradCheckResult {
        name: "sigmoid_attention_pool+entropy",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_softmax_attention() -> GradCheckResult {
    let mut r = rng();
    let mut store = ParamStore::new();
    store.insert("sv", uniform_init(&[4, 3], -1.0, 1.0, &mut r));
    store.insert("av", uniform_init(&[3], -1.0, 1.0, &mut r));
    let probe = uniform_init(&[3], -1.0, 1.0, &mut r);
    let (_, a) = softmax_attention_pool(store.value("sv"), store.value("av"));
    let (dsv, dav) =
        softmax_attention_pool_backward(store.value("sv"), store.value("av"), &a, &probe, None);
    store.add_grad("sv", &dsv);
    store.add_grad("av", &dav);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            let (c, _) = softmax_attention_pool(s.value("sv"), s.value("av"));
            dot(c.data(), probe.data())
        },
        1e-5,
    );
    GradCheckResult {
        name: "softmax_attention_pool",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_bce() -> GradCheckResult {
    let mut store = ParamStore::new();
    store.insert("p", Tensor::from_vec(&[2], vec![0.3, 0.8]));
    let labels = [1u8, 0u8];
    let mut dp = Tensor::zeros(&[2]);
    for i in 0..2 {
        let (_, g) = crate::nn::bce_loss(store.value("p").data()[i], labels[i]);
        dp.data_mut()[i] = g;
    }
    store.add_grad("p", &dp);
    let max_rel = finite_diff_check(
        &mut store,
        |s| {
            s.value("p")
                .data()
                .iter()
                .zip(labels)
                .map(|(p, y)| crate::nn::bce_loss(*p, y).0)
                .sum()
        },
        1e-6,
    );
    GradCheckResult {
        name: "bce_loss",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn check_lstm_bptt() -> GradCheckResult {
    let mut r = rng();
    let (d_in, hidden, steps) = (3usize, 4usize, 3usize);
    let mut store = ParamStore::new();
    store.insert("wx", glorot_uniform(d_in, 4 * hidden, &mut r));
    store.insert("wh", glorot_uniform(hidden, 4 * hidden, &mut r));
    let mut b = Tensor::zeros(&[4 * hidden]);
    for k in 0..hidden {
        b.data_mut()[hidden + k] = 1.0;
    }
    store.insert("b", b);
    let xs: Vec<Tensor> = (0..steps)
        .map(|_| uniform_init(&[d_in], -1.0, 1.0, &mut r))
        .collect();
    let probes: Vec<Tensor> = (0..steps)
        .map(|_| uniform_init(&[hidden], -1.0, 1.0, &mut r))
        .collect();

    let run = |s: &ParamStore| {
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        let mut total = 0.0;
        for t in 0..steps {
            let st = lstm_step(xs[t].data(), &h, &c, s.value("wx"), s.value("wh"), s.value("b"));
            total += dot(&st.h_new, probes[t].data());
            h = st.h_new.clone();
            c = st.c_new.clone();
        }
        total
    };

    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches = Vec::new();
    for t in 0..steps {
        let st = lstm_step(
            xs[t].data(),
            &h,
            &c,
            store.value("wx"),
            store.value("wh"),
            store.value("b"),
        );
        caches.push((h.clone(), c.clone(), st.clone()));
        h = st.h_new.clone();
        c = st.c_new.clone();
    }
    let mut grads = LstmGrads::zeros(d_in, hidden);
    let mut dh = vec![0.0; hidden];
    let mut dc = vec![0.0; hidden];
    for t in (0..steps).rev() {
        let (h_prev, c_prev, st) = &caches[t];
        for (dhv, p) in dh.iter_mut().zip(probes[t].data()) {
            *dhv += p;
        }
        let (_, dh_prev, dc_prev) = lstm_step_backward(
            xs[t].data(),
            h_prev,
            c_prev,
            st,
            store.value("wx"),
            store.value("wh"),
            &dh,
            &dc,
            &mut grads,
        );
        dh = dh_prev;
        dc = dc_prev;
    }
    store.add_grad("wx", &grads.dwx);
    store.add_grad("wh", &grads.dwh);
    store.add_grad("b", &grads.db);
    let max_rel = finite_diff_check(&mut store, run, 1e-5);
    GradCheckResult {
        name: "lstm_bptt_3_steps",
        max_rel_error: max_rel,
        tolerance: LAYER_TOL,
    }
}

fn tiny_encoded(label: u8, marker: u32) -> EncodedProgram {
    EncodedProgram {
        subtree_ids: vec![marker, 4],
        node_id_seqs: vec![vec![2, 3, marker, 0], vec![5, 1, 0, 0]],
        lengths: vec![3, 2],
        spans: vec![Span::new(0, 20), Span::new(4, 12)],
        serializations: vec!["(A VAR1)".into(), "(B VAR1)".into()],
        label,
    }
}

fn check_sann_combined_loss() -> GradCheckResult {
    let config = SannConfig {
        embed_dim: 4,
        max_subtrees: 4,
        max_nodes: 4,
        lambda: 0.02,
        epsilon: 1e-8,
        seed: 31,
        attention: AttentionKind::Sigmoid,
        ..SannConfig::default()
    };
    let mut model = SannModel::init(6, 6, &config);
    let batch = [tiny_encoded(1, 2), tiny_encoded(0, 3)];
    let labels = [1u8, 0u8];
    model.accumulate_batch_gradients(&batch, &labels).unwrap();

    let probe_config = config.clone();
    let probe_batch = batch.clone();
    let mut probe = SannModel::init(6, 6, &probe_config);
    let max_rel = finite_diff_check(
        &mut model.store,
        move |s| {
            probe.store = s.clone();
            let outs = probe.predict_batch(&probe_batch).unwrap();
            batch_loss(&probe, &outs, &labels)
        },
        1e-5,
    );
    GradCheckResult {
        name: "sann_combined_loss_2_programs",
        max_rel_error: max_rel,
        tolerance: END_TO_END_TOL,
    }
}

fn check_dkt_loss() -> GradCheckResult {
    let mut r = rng();
    let problems = 3;
    let code_dim = 2;
    let trace = DktTrace {
        student_id: "probe".into(),
        steps: vec![(1, 1), (3, 0), (2, 1)],
        code: (0..3)
            .map(|_| (0..code_dim).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect(),
    };
    let config = DktConfig {
        hidden: 4,
        dropout: 0.0,
        code_dim,
        seed: 32,
        ..DktConfig::default()
    };
    let mut model = DktModel::init(problems, &config);
    model.accumulate_trace_gradients(&trace).unwrap();

    let probe_config = config.clone();
    let probe_trace = trace.clone();
    let mut probe = DktModel::init(problems, &probe_config);
    let max_rel = finite_diff_check(
        &mut model.store,
        move |s| {
            probe.store = s.clone();
            probe.trace_loss(&probe_trace).unwrap()
        },
        1e-5,
    );
    GradCheckResult {
        name: "dkt_loss_3_step_trace",
        max_rel_error: max_rel,
        tolerance: END_TO_END_TOL,
    }
}

fn check_grade_mse() -> GradCheckResult {
    let mut r = rng();
    let d = 2;
    let features: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| {
            let subs: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|_| {
                    (0..2)
                        .map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect();
            let outs: Vec<Vec<u8>> = subs.iter().map(|s| vec![1; s.len()]).collect();
            assemble_grade_features(&subs, &outs, d)
        })
        .collect();
    let grades = [0.4, 0.9];
    let config = GradeConfig {
        lstm_hidden: 3,
        fc_hidden: 2,
        seed: 33,
        ..GradeConfig::default()
    };
    let mut model = GradeModel::init(features[0][0].len(), &config);
    model
        .accumulate_batch_gradients(&features, &grades)
        .unwrap();

    let probe_config = config.clone();
    let row_dim = features[0][0].len();
    let probe_features = features.clone();
    let mut probe = GradeModel::init(row_dim, &probe_config);
    let max_rel = finite_diff_check(
        &mut model.store,
        move |s| {
            probe.store = s.clone();
            probe_features
                .iter()
                .zip(grades)
                .map(|(f, g)| probe.student_loss(f, g).unwrap())
                .sum::<f64>()
                / grades.len() as f64
        },
        1e-5,
    );
    GradCheckResult {
        name: "grade_mse_2_students",
        max_rel_error: max_rel,
        tolerance: END_TO_END_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_gradient_check_passes() {
        for result in run_gradient_checks() {
            assert!(
                result.passed(),
                "{}: {} > {}",
                result.name,
                result.max_rel_error,
                result.tolerance
            );
        }
    }
}
