//! Deep knowledge tracing over attempt sequences.
//!
//! Each attempt `(q_t, a_t)` becomes a one-hot vector of length `2M` with
//! the bit at 1-based position `q_t + M(1-a_t)`; in code-vector mode the
//! frozen program vector of the submission is concatenated. An LSTM reads
//! the sequence and a sigmoid output layer of width `M` predicts the
//! probability of success on every problem; the prediction for the next
//! attempt is the entry at `q_{t+1}`.
//!
//! The one-hot block and the code block of the input weight matrix are
//! initialized from independent seed streams, and zero code vectors
//! receive (and send) no gradient, so running the wide model on zeroed
//! code vectors reproduces the plain model bit for bit.

use rand::prelude::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StudentError;
use crate::nn::{
    bce_loss, lstm_step, lstm_step_backward, sigmoid, uniform_init, LstmGrads, LstmStep, NnError,
    ParamStore, Tensor,
};
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DktConfig {
    pub hidden: usize,
    /// Input-connection dropout, training only.
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Traces per optimizer step.
    pub batch_size: usize,
    /// Width of the concatenated code vector; 0 is plain DKT.
    pub code_dim: usize,
    pub seed: u64,
}

impl Default for DktConfig {
    fn default() -> Self {
        DktConfig {
            hidden: 200,
            dropout: 0.2,
            lr: 0.005,
            epochs: 20,
            batch_size: 8,
            code_dim: 0,
            seed: 17,
        }
    }
}

/// One student's attempt sequence with per-attempt code vectors
/// (`code_dim` wide; empty vectors are allowed when `code_dim` is 0).
#[derive(Debug, Clone)]
pub struct DktTrace {
    pub student_id: String,
    pub steps: Vec<(usize, u8)>,
    pub code: Vec<Vec<f64>>,
}

/// One-hot encode an attempt: 1-based bit position `q + M(1-a)`.
pub fn encode_dkt_step(q: usize, a: u8, problems: usize) -> Result<Vec<f64>, NnError> {
    if q == 0 || q > problems {
        return Err(NnError::IndexOutOfRange {
            id: q,
            size: problems,
        });
    }
    let mut v = vec![0.0; 2 * problems];
    v[(q - 1) + problems * usize::from(a == 0)] = 1.0;
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct DktModel {
    pub store: ParamStore,
    pub config: DktConfig,
    pub problems: usize,
}

impl DktModel {
    pub fn init(problems: usize, config: &DktConfig) -> DktModel {
        let h = config.hidden;
        let onehot_dim = 2 * problems;
        let mut store = ParamStore::new();

        // the one-hot rows never see the code stream, so plain and
        // code-vector models share their initialization exactly
        let mut rng_onehot =
            ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "dkt.init.wx_onehot"));
        let limit = (6.0 / (onehot_dim + 4 * h) as f64).sqrt();
        let onehot_block = uniform_init(&[onehot_dim, 4 * h], -limit, limit, &mut rng_onehot);
        let mut wx = Tensor::zeros(&[onehot_dim + config.code_dim, 4 * h]);
        wx.data_mut()[..onehot_dim * 4 * h].copy_from_slice(onehot_block.data());
        if config.code_dim > 0 {
            let mut rng_code =
                ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "dkt.init.wx_code"));
            let climit = (6.0 / (config.code_dim + 4 * h) as f64).sqrt();
            let code_block =
                uniform_init(&[config.code_dim, 4 * h], -climit, climit, &mut rng_code);
            wx.data_mut()[onehot_dim * 4 * h..].copy_from_slice(code_block.data());
        }
        store.insert("lstm.wx", wx);

        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "dkt.init.rest"));
        let hlimit = (6.0 / (h + 4 * h) as f64).sqrt();
        store.insert(
            "lstm.wh",
            uniform_init(&[h, 4 * h], -hlimit, hlimit, &mut rng),
        );
        let mut b = Tensor::zeros(&[4 * h]);
        for k in 0..h {
            b.data_mut()[h + k] = 1.0;
        }
        store.insert("lstm.b", b);
        let olimit = (6.0 / (h + problems) as f64).sqrt();
        store.insert("out.w", uniform_init(&[h, problems], -olimit, olimit, &mut rng));
        store.insert("out.b", Tensor::zeros(&[problems]));
        DktModel {
            store,
            config: config.clone(),
            problems,
        }
    }

    fn input_vector(&self, q: usize, a: u8, code: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut x = encode_dkt_step(q, a, self.problems)?;
        if self.config.code_dim > 0 {
            if code.len() != self.config.code_dim {
                return Err(NnError::ShapeMismatch {
                    op: "dkt input",
                    detail: format!(
                        "code vector has {} entries, expected {}",
                        code.len(),
                        self.config.code_dim
                    ),
                });
            }
            x.extend_from_slice(code);
        }
        Ok(x)
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        let w = self.store.value("out.w");
        let b = self.store.value("out.b");
        (0..self.problems)
            .map(|j| {
                let z: f64 = (0..h.len()).map(|k| h[k] * w.at2(k, j)).sum::<f64>() + b.data()[j];
                sigmoid(z)
            })
            .collect()
    }

    /// Per-problem success probabilities after consuming a trace prefix
    /// (evaluation mode, dropout off).
    pub fn predict(&self, steps: &[(usize, u8)], code: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        assert!(!steps.is_empty());
        let h_dim = self.config.hidden;
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        for (t, &(q, a)) in steps.iter().enumerate() {
            let x = self.input_vector(q, a, code.get(t).map(Vec::as_slice).unwrap_or(&[]))?;
            let st = lstm_step(
                &x,
                &h,
                &c,
                self.store.value("lstm.wx"),
                self.store.value("lstm.wh"),
                self.store.value("lstm.b"),
            );
            h = st.h_new;
            c = st.c_new;
        }
        Ok(self.output(&h))
    }

    /// `(score, label)` pairs for every next-attempt prediction in a trace.
    pub fn score_trace(&self, trace: &DktTrace) -> Result<Vec<(f64, u8)>, NnError> {
        let h_dim = self.config.hidden;
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut scored = Vec::new();
        for t in 0..trace.steps.len() - 1 {
            let (q, a) = trace.steps[t];
            let x = self.input_vector(q, a, &trace.code[t])?;
            let st = lstm_step(
                &x,
                &h,
                &c,
                self.store.value("lstm.wx"),
                self.store.value("lstm.wh"),
                self.store.value("lstm.b"),
            );
            h = st.h_new;
            c = st.c_new;
            let y = self.output(&h);
            let (q_next, a_next) = trace.steps[t + 1];
            scored.push((y[q_next - 1], a_next));
        }
        Ok(scored)
    }

    /// Mean next-attempt BCE of a trace, dropout off; used for gradient
    /// verification and reporting.
    pub fn trace_loss(&self, trace: &DktTrace) -> Result<f64, NnError> {
        let scored = self.score_trace(trace)?;
        let total: f64 = scored.iter().map(|(p, y)| bce_loss(*p, *y).0).sum();
        Ok(total / scored.len() as f64)
    }

    /// Put the analytic gradients of one trace's mean step loss into the
    /// store (dropout off); returns that loss.
    pub fn accumulate_trace_gradients(&mut self, trace: &DktTrace) -> Result<f64, NnError> {
        let mut grads = DktGrads::zeros(self);
        let scale = 1.0 / (trace.steps.len() - 1) as f64;
        let loss = self.backprop_trace(trace, scale, None, &mut grads)?;
        grads.apply(&mut self.store);
        Ok(loss * scale)
    }

    /// Forward + backward over one trace, gradients scaled by `scale` and
    /// accumulated; returns the summed step loss (pre-scale). Dropout
    /// masks derive from `dropout_seed` per step, so the one-hot
    /// coordinates draw the same mask whether or not code coordinates
    /// follow them.
    pub(crate) fn backprop_trace(
        &self,
        trace: &DktTrace,
        scale: f64,
        dropout_seed: Option<u64>,
        grads: &mut DktGrads,
    ) -> Result<f64, NnError> {
        let h_dim = self.config.hidden;
        let steps = trace.steps.len();
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(steps - 1);
        let mut caches: Vec<(Vec<f64>, Vec<f64>, LstmStep)> = Vec::with_capacity(steps - 1);
        let mut dys: Vec<Vec<f64>> = Vec::with_capacity(steps - 1);
        let mut loss_sum = 0.0;

        let keep = 1.0 - self.config.dropout;
        for t in 0..steps - 1 {
            let (q, a) = trace.steps[t];
            let mut x = self.input_vector(q, a, &trace.code[t])?;
            if let Some(s) = dropout_seed {
                if self.config.dropout > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(
                        s,
                        "dkt.dropout.step",
                        t as u64,
                    ));
                    for v in x.iter_mut() {
                        if rng.gen_bool(self.config.dropout) {
                            *v = 0.0;
                        } else {
                            *v /= keep;
                        }
                    }
                }
            }
            let st = lstm_step(
                &x,
                &h,
                &c,
                self.store.value("lstm.wx"),
                self.store.value("lstm.wh"),
                self.store.value("lstm.b"),
            );
            caches.push((h.clone(), c.clone(), st.clone()));
            h = st.h_new.clone();
            c = st.c_new.clone();
            xs.push(x);

            let y = self.output(&h);
            let (q_next, a_next) = trace.steps[t + 1];
            let p = y[q_next - 1];
            let (loss, dp) = bce_loss(p, a_next);
            loss_sum += loss;
            let mut dy = vec![0.0; self.problems];
            dy[q_next - 1] = dp * p * (1.0 - p) * scale;
            dys.push(dy);
        }

        // backward through time
        let w_out = self.store.value("out.w");
        let mut dh = vec![0.0; h_dim];
        let mut dc = vec![0.0; h_dim];
        for t in (0..steps - 1).rev() {
            let (h_prev, c_prev, st) = &caches[t];
            let dy = &dys[t];
            for j in 0..self.problems {
                if dy[j] == 0.0 {
                    continue;
                }
                for k in 0..h_dim {
                    grads.out_w.data_mut()[k * self.problems + j] += st.h_new[k] * dy[j];
                    dh[k] += w_out.at2(k, j) * dy[j];
                }
                grads.out_b.data_mut()[j] += dy[j];
            }
            let (_, dh_prev, dc_prev) = lstm_step_backward(
                &xs[t],
                h_prev,
                c_prev,
                st,
                self.store.value("lstm.wx"),
                self.store.value("lstm.wh"),
                &dh,
                &dc,
                &mut grads.lstm,
            );
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok(loss_sum)
    }
}

pub(crate) struct DktGrads {
    lstm: LstmGrads,
    out_w: Tensor,
    out_b: Tensor,
}

impl DktGrads {
    fn zeros(model: &DktModel) -> DktGrads {
        let d_in = 2 * model.problems + model.config.code_dim;
        DktGrads {
            lstm: LstmGrads::zeros(d_in, model.config.hidden),
            out_w: Tensor::zeros(&[model.config.hidden, model.problems]),
            out_b: Tensor::zeros(&[model.problems]),
        }
    }

    fn zero(&mut self) {
        self.lstm.dwx.fill_zero();
        self.lstm.dwh.fill_zero();
        self.lstm.db.fill_zero();
        self.out_w.fill_zero();
        self.out_b.fill_zero();
    }

    fn apply(&self, store: &mut ParamStore) {
        store.add_grad("lstm.wx", &self.lstm.dwx);
        store.add_grad("lstm.wh", &self.lstm.dwh);
        store.add_grad("lstm.b", &self.lstm.db);
        store.add_grad("out.w", &self.out_w);
        store.add_grad("out.b", &self.out_b);
    }
}

/// Mini-batch Adamax training over traces. Traces need at least two
/// events; dropout applies during training only.
pub fn dkt_train(
    traces: &[DktTrace],
    problems: usize,
    config: &DktConfig,
) -> Result<DktModel, StudentError> {
    for t in traces {
        if t.steps.len() < 2 {
            return Err(StudentError::TraceTooShort {
                student: t.student_id.clone(),
            });
        }
    }
    let model_config = config.clone();
    let mut model = DktModel::init(problems, &model_config);
    let mut grads = DktGrads::zeros(&model);
    let mut order: Vec<usize> = (0..traces.len()).collect();

    for epoch in 0..config.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(config.seed, "dkt.shuffle", epoch as u64));
        order.shuffle(&mut shuffle_rng);
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let total_steps: usize = batch.iter().map(|&i| traces[i].steps.len() - 1).sum();
            let scale = 1.0 / total_steps as f64;
            for (slot, &i) in batch.iter().enumerate() {
                let drop_seed = seed::derive_indexed(
                    config.seed,
                    "dkt.dropout",
                    ((epoch as u64) << 40) ^ ((batch_index as u64) << 20) ^ slot as u64,
                );
                model.backprop_trace(&traces[i], scale, Some(drop_seed), &mut grads)?;
            }
            grads.apply(&mut model.store);
            model.store.adamax_step(config.lr, 0.9, 0.999, 1e-8);
            model.store.zero_grads();
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;

    #[test]
    fn encoding_matches_the_worked_examples() {
        assert_eq!(encode_dkt_step(1, 1, 2).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode_dkt_step(1, 0, 2).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        // M=3, q=2, a=0: 1-based position 5
        assert_eq!(
            encode_dkt_step(2, 0, 3).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        assert!(encode_dkt_step(0, 1, 3).is_err());
        assert!(encode_dkt_step(4, 1, 3).is_err());
    }

    #[test]
    fn encoding_matches_exhaustive_enumeration_for_small_m() {
        for m in 1..=5usize {
            for q in 1..=m {
                for a in [0u8, 1u8] {
                    let v = encode_dkt_step(q, a, m).unwrap();
                    assert_eq!(v.len(), 2 * m);
                    assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
                    let expected_pos = q + m * usize::from(a == 0);
                    assert_eq!(v[expected_pos - 1], 1.0, "m={m} q={q} a={a}");
                }
            }
        }
    }

    fn zero_codes(n: usize, dim: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0; dim]; n]
    }

    fn rule_traces(count: usize, len: usize, problems: usize, code_dim: usize) -> Vec<DktTrace> {
        // fixed per-problem success: low-numbered problems always succeed
        (0..count)
            .map(|s| {
                let steps: Vec<(usize, u8)> = (0..len)
                    .map(|t| {
                        let q = 1 + (s + t) % problems;
                        (q, u8::from(q <= problems / 2))
                    })
                    .collect();
                DktTrace {
                    student_id: format!("s{s}"),
                    code: zero_codes(steps.len(), code_dim),
                    steps,
                }
            })
            .collect()
    }

    fn small_config(code_dim: usize) -> DktConfig {
        DktConfig {
            hidden: 16,
            dropout: 0.2,
            lr: 0.01,
            epochs: 25,
            batch_size: 4,
            code_dim,
            seed: 11,
        }
    }

    #[test]
    fn memorizes_a_fixed_success_rule() {
        let traces = rule_traces(20, 10, 4, 0);
        let model = dkt_train(&traces, 4, &small_config(0)).unwrap();
        let mut scored = Vec::new();
        for t in &traces {
            scored.extend(model.score_trace(t).unwrap());
        }
        let auc = crate::student::metrics::auc(&scored).unwrap();
        assert!(auc >= 0.9, "training AUC {auc}");
    }

    #[test]
    fn untrained_model_scores_near_chance_on_random_labels() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let problems = 5;
        let traces: Vec<DktTrace> = (0..250)
            .map(|s| {
                let steps: Vec<(usize, u8)> = (0..21)
                    .map(|_| (rng.gen_range(1..=problems), u8::from(rng.gen_bool(0.5))))
                    .collect();
                DktTrace {
                    student_id: format!("s{s}"),
                    code: zero_codes(steps.len(), 0),
                    steps,
                }
            })
            .collect();
        let model = DktModel::init(problems, &small_config(0));
        let mut scored = Vec::new();
        for t in &traces {
            scored.extend(model.score_trace(t).unwrap());
        }
        assert!(scored.len() == 250 * 20);
        let auc = crate::student::metrics::auc(&scored).unwrap();
        assert!((auc - 0.5).abs() <= 0.05, "untrained AUC {auc}");
    }

    #[test]
    fn prediction_shape_and_determinism() {
        let model = DktModel::init(4, &small_config(0));
        let prefix = [(1usize, 1u8), (2, 0)];
        let y1 = model.predict(&prefix, &zero_codes(2, 0)).unwrap();
        let y2 = model.predict(&prefix, &zero_codes(2, 0)).unwrap();
        assert_eq!(y1.len(), 4);
        assert!(y1.iter().all(|p| *p > 0.0 && *p < 1.0));
        assert_eq!(y1, y2);
    }

    #[test]
    fn trained_twice_same_seed_is_identical_and_eval_has_no_dropout() {
        let traces = rule_traces(8, 6, 3, 0);
        let mut config = small_config(0);
        config.epochs = 3;
        let a = dkt_train(&traces, 3, &config).unwrap();
        let b = dkt_train(&traces, 3, &config).unwrap();
        for name in ["lstm.wx", "lstm.wh", "lstm.b", "out.w", "out.b"] {
            assert_eq!(a.store.value(name).data(), b.store.value(name).data());
        }
        let y1 = a.predict(&traces[0].steps, &traces[0].code).unwrap();
        let y2 = a.predict(&traces[0].steps, &traces[0].code).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn zeroed_code_vectors_reproduce_plain_dkt_bit_for_bit() {
        let problems = 3;
        let plain_traces = rule_traces(6, 6, problems, 0);
        let wide_traces = rule_traces(6, 6, problems, 8);
        let mut config = small_config(0);
        config.epochs = 4;
        let plain = dkt_train(&plain_traces, problems, &config).unwrap();
        let mut wide_config = config.clone();
        wide_config.code_dim = 8;
        let wide = dkt_train(&wide_traces, problems, &wide_config).unwrap();

        for name in ["lstm.wh", "lstm.b", "out.w", "out.b"] {
            assert_eq!(
                plain.store.value(name).data(),
                wide.store.value(name).data(),
                "{name} diverged"
            );
        }
        // shared input rows match; code rows never moved from their init
        let pw = plain.store.value("lstm.wx");
        let ww = wide.store.value("lstm.wx");
        let shared = 2 * problems * 4 * config.hidden;
        assert_eq!(pw.data()[..shared], ww.data()[..shared]);
        let fresh = DktModel::init(problems, &wide_config);
        assert_eq!(
            ww.data()[shared..],
            fresh.store.value("lstm.wx").data()[shared..]
        );
        // and predictions agree exactly
        let yp = plain
            .predict(&plain_traces[0].steps, &plain_traces[0].code)
            .unwrap();
        let yw = wide
            .predict(&wide_traces[0].steps, &wide_traces[0].code)
            .unwrap();
        for (a, b) in yp.iter().zip(&yw) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn short_traces_are_rejected() {
        let traces = vec![DktTrace {
            student_id: "s0".into(),
            steps: vec![(1, 1)],
            code: zero_codes(1, 0),
        }];
        assert!(matches!(
            dkt_train(&traces, 2, &small_config(0)),
            Err(StudentError::TraceTooShort { .. })
        ));
    }

    #[test]
    fn dkt_loss_gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let problems = 3;
        let code_dim = 2;
        let trace = DktTrace {
            student_id: "s0".into(),
            steps: vec![(1, 1), (3, 0), (2, 1)],
            code: (0..3)
                .map(|_| (0..code_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        };
        let config = DktConfig {
            hidden: 4,
            dropout: 0.0,
            code_dim,
            seed: 2,
            ..DktConfig::default()
        };
        let mut model = DktModel::init(problems, &config);
        let mut grads = DktGrads::zeros(&model);
        let scale = 1.0 / (trace.steps.len() - 1) as f64;
        model
            .backprop_trace(&trace, scale, None, &mut grads)
            .unwrap();
        grads.apply(&mut model.store);

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
        assert!(max_rel <= 1e-4, "max_rel = {max_rel}");
    }
}
