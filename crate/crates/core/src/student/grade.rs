//! Final-grade regression from per-problem submission histories.
//!
//! For each problem the student's submission code vectors are stacked
//! into 30 slots (zeros in front, newest last; beyond 30 the oldest are
//! dropped) and joined with the per-problem behavior features
//! `(n_correct, n_incorrect, n_total, problem_id/M)`. An LSTM reads the
//! `M` problem rows in order, a tanh dense layer condenses the final
//! hidden state, and a linear head predicts the grade; predictions are
//! clamped to [0, 1] at inference while training sees the raw output
//! under mean squared error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StudentError;
use crate::nn::{
    dense, dense_backward, glorot_uniform, lstm_step, lstm_step_backward, LstmGrads, LstmStep,
    NnError, ParamStore, Tensor,
};
use crate::seed;

pub const SUBMISSION_SLOTS: usize = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GradeConfig {
    pub lstm_hidden: usize,
    pub fc_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GradeConfig {
    fn default() -> Self {
        GradeConfig {
            lstm_hidden: 512,
            fc_hidden: 128,
            lr: 0.001,
            epochs: 40,
            batch_size: 8,
            seed: 17,
        }
    }
}

/// Stack one student's submissions into `M` rows of `30·d + 4` features,
/// rows ordered by problem id. `submissions[i]` holds problem `i+1`'s code
/// vectors oldest first; counts come from `outcomes[i]` (1 correct / 0
/// incorrect per submission).
pub fn assemble_grade_features(
    submissions: &[Vec<Vec<f64>>],
    outcomes: &[Vec<u8>],
    code_dim: usize,
) -> Vec<Vec<f64>> {
    assert_eq!(submissions.len(), outcomes.len());
    let problems = submissions.len();
    let mut rows = Vec::with_capacity(problems);
    for (i, (subs, outs)) in submissions.iter().zip(outcomes).enumerate() {
        assert_eq!(subs.len(), outs.len(), "problem {}: counts disagree", i + 1);
        let mut row = vec![0.0; SUBMISSION_SLOTS * code_dim + 4];
        let kept = subs.len().min(SUBMISSION_SLOTS);
        let dropped = subs.len() - kept;
        for (slot, sub) in subs[dropped..].iter().enumerate() {
            assert_eq!(sub.len(), code_dim);
            let at = (SUBMISSION_SLOTS - kept + slot) * code_dim;
            row[at..at + code_dim].copy_from_slice(sub);
        }
        let n_correct = outs.iter().filter(|&&a| a == 1).count() as f64;
        let n_total = outs.len() as f64;
        let base = SUBMISSION_SLOTS * code_dim;
        row[base] = n_correct;
        row[base + 1] = n_total - n_correct;
        row[base + 2] = n_total;
        row[base + 3] = (i + 1) as f64 / problems as f64;
        rows.push(row);
    }
    rows
}

#[derive(Debug, Clone)]
pub struct GradeModel {
    pub store: ParamStore,
    pub config: GradeConfig,
    pub row_dim: usize,
}

impl GradeModel {
    pub fn init(row_dim: usize, config: &GradeConfig) -> GradeModel {
        let h = config.lstm_hidden;
        let f = config.fc_hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "grade.init"));
        let mut store = ParamStore::new();
        store.insert("lstm.wx", glorot_uniform(row_dim, 4 * h, &mut rng));
        store.insert("lstm.wh", glorot_uniform(h, 4 * h, &mut rng));
        let mut b = Tensor::zeros(&[4 * h]);
        for k in 0..h {
            b.data_mut()[h + k] = 1.0;
        }
        store.insert("lstm.b", b);
        store.insert("fc.w", glorot_uniform(h, f, &mut rng));
        store.insert("fc.b", Tensor::zeros(&[f]));
        store.insert("out.w", glorot_uniform(f, 1, &mut rng));
        store.insert("out.b", Tensor::zeros(&[1]));
        GradeModel {
            store,
            config: config.clone(),
            row_dim,
        }
    }

    fn forward_raw(&self, rows: &[Vec<f64>]) -> Result<(f64, GradeCache), NnError> {
        let h_dim = self.config.lstm_hidden;
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut caches = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != self.row_dim {
                return Err(NnError::ShapeMismatch {
                    op: "grade forward",
                    detail: format!("row has {} features, expected {}", row.len(), self.row_dim),
                });
            }
            let st = lstm_step(
                row,
                &h,
                &c,
                self.store.value("lstm.wx"),
                self.store.value("lstm.wh"),
                self.store.value("lstm.b"),
            );
            caches.push((h.clone(), c.clone(), st.clone()));
            h = st.h_new.clone();
            c = st.c_new.clone();
        }
        let h_t = Tensor::from_vec(&[1, h_dim], h.clone());
        let z = dense(&h_t, self.store.value("fc.w"), self.store.value("fc.b"))?;
        let mut fc = z;
        fc.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let out = dense(&fc, self.store.value("out.w"), self.store.value("out.b"))?;
        let raw = out.data()[0];
        Ok((
            raw,
            GradeCache {
                lstm: caches,
                h_final: h_t,
                fc,
            },
        ))
    }

    /// Predicted grade, clamped to [0, 1].
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<f64, NnError> {
        Ok(self.forward_raw(rows)?.0.clamp(0.0, 1.0))
    }

    /// Squared-error loss of one student (raw output, no clamp).
    pub fn student_loss(&self, rows: &[Vec<f64>], grade: f64) -> Result<f64, NnError> {
        let (raw, _) = self.forward_raw(rows)?;
        Ok((raw - grade) * (raw - grade))
    }

    /// Put the analytic gradients of the batch-mean squared error into
    /// the store; returns that loss.
    pub fn accumulate_batch_gradients(
        &mut self,
        features: &[Vec<Vec<f64>>],
        grades: &[f64],
    ) -> Result<f64, NnError> {
        let mut grads = GradeGrads::zeros(self);
        let scale = 1.0 / grades.len() as f64;
        let mut loss = 0.0;
        for (f, &g) in features.iter().zip(grades) {
            loss += self.backprop(f, g, scale, &mut grads)?;
        }
        grads.apply(&mut self.store);
        Ok(loss * scale)
    }

    fn backprop(
        &self,
        rows: &[Vec<f64>],
        grade: f64,
        scale: f64,
        grads: &mut GradeGrads,
    ) -> Result<f64, NnError> {
        let (raw, cache) = self.forward_raw(rows)?;
        let loss = (raw - grade) * (raw - grade);
        let draw = 2.0 * (raw - grade) * scale;

        let dout = Tensor::from_vec(&[1, 1], vec![draw]);
        let (dfc, dout_w, dout_b) = dense_backward(&cache.fc, self.store.value("out.w"), &dout);
        grads.out_w.add_assign(&dout_w);
        grads.out_b.add_assign(&dout_b);
        let mut dz = dfc;
        for (dzv, fcv) in dz.data_mut().iter_mut().zip(cache.fc.data()) {
            *dzv *= 1.0 - fcv * fcv;
        }
        let (dh_t, dfc_w, dfc_b) = dense_backward(&cache.h_final, self.store.value("fc.w"), &dz);
        grads.fc_w.add_assign(&dfc_w);
        grads.fc_b.add_assign(&dfc_b);

        let h_dim = self.config.lstm_hidden;
        let mut dh = dh_t.data().to_vec();
        let mut dc = vec![0.0; h_dim];
        for t in (0..rows.len()).rev() {
            let (h_prev, c_prev, st) = &cache.lstm[t];
            let (_, dh_prev, dc_prev) = lstm_step_backward(
                &rows[t],
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
        Ok(loss)
    }
}

struct GradeCache {
    lstm: Vec<(Vec<f64>, Vec<f64>, LstmStep)>,
    h_final: Tensor,
    fc: Tensor,
}

struct GradeGrads {
    lstm: LstmGrads,
    fc_w: Tensor,
    fc_b: Tensor,
    out_w: Tensor,
    out_b: Tensor,
}

impl GradeGrads {
    fn zeros(model: &GradeModel) -> GradeGrads {
        GradeGrads {
            lstm: LstmGrads::zeros(model.row_dim, model.config.lstm_hidden),
            fc_w: Tensor::zeros(&[model.config.lstm_hidden, model.config.fc_hidden]),
            fc_b: Tensor::zeros(&[model.config.fc_hidden]),
            out_w: Tensor::zeros(&[model.config.fc_hidden, 1]),
            out_b: Tensor::zeros(&[1]),
        }
    }

    fn zero(&mut self) {
        self.lstm.dwx.fill_zero();
        self.lstm.dwh.fill_zero();
        self.lstm.db.fill_zero();
        self.fc_w.fill_zero();
        self.fc_b.fill_zero();
        self.out_w.fill_zero();
        self.out_b.fill_zero();
    }

    fn apply(&self, store: &mut ParamStore) {
        store.add_grad("lstm.wx", &self.lstm.dwx);
        store.add_grad("lstm.wh", &self.lstm.dwh);
        store.add_grad("lstm.b", &self.lstm.db);
        store.add_grad("fc.w", &self.fc_w);
        store.add_grad("fc.b", &self.fc_b);
        store.add_grad("out.w", &self.out_w);
        store.add_grad("out.b", &self.out_b);
    }
}

/// Mean-squared-error Adamax training over one feature sequence per
/// student.
pub fn grade_train(
    features: &[Vec<Vec<f64>>],
    grades: &[f64],
    config: &GradeConfig,
) -> Result<GradeModel, StudentError> {
    assert_eq!(features.len(), grades.len());
    assert!(!features.is_empty());
    let row_dim = features[0][0].len();
    let mut model = GradeModel::init(row_dim, config);
    let mut grads = GradeGrads::zeros(&model);
    let mut order: Vec<usize> = (0..features.len()).collect();

    for epoch in 0..config.epochs {
        use rand::prelude::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(
            config.seed,
            "grade.shuffle",
            epoch as u64,
        ));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                model.backprop(&features[i], grades[i], scale, &mut grads)?;
            }
            grads.apply(&mut model.store);
            model.store.adamax_step(config.lr, 0.9, 0.999, 1e-8);
            model.store.zero_grads();
        }
    }
    Ok(model)
}
