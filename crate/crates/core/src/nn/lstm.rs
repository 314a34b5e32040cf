//! Single LSTM cell with packed gate weights and exact backward-through-time
//! gradients.
//!
//! Gate layout along the `4H` axis is `[input | forget | candidate | output]`:
//!
//! ```text
//! z  = x·Wx + h·Wh + b
//! i  = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The forget-gate bias block is initialized to 1 by the model builders.

use super::ops::sigmoid;
use super::tensor::Tensor;

/// Cached activations of one step, everything backward needs.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_new: Vec<f64>,
    pub h_new: Vec<f64>,
    tanh_c_new: Vec<f64>,
}

/// Gradient accumulators for one cell's parameters.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub dwx: Tensor,
    pub dwh: Tensor,
    pub db: Tensor,
}

impl LstmGrads {
    pub fn zeros(d_in: usize, hidden: usize) -> LstmGrads {
        LstmGrads {
            dwx: Tensor::zeros(&[d_in, 4 * hidden]),
            dwh: Tensor::zeros(&[hidden, 4 * hidden]),
            db: Tensor::zeros(&[4 * hidden]),
        }
    }
}

/// One forward step. `wx: [d_in, 4H]`, `wh: [H, 4H]`, `b: [4H]`.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], wx: &Tensor, wh: &Tensor, b: &Tensor) -> LstmStep {
    let hidden = h.len();
    debug_assert_eq!(wx.rows(), x.len());
    debug_assert_eq!(wx.cols(), 4 * hidden);
    debug_assert_eq!(wh.shape(), [hidden, 4 * hidden]);
    debug_assert_eq!(b.shape(), [4 * hidden]);

    let mut z = b.data().to_vec();
    for (k, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = wx.row(k);
        for (zv, wv) in z.iter_mut().zip(row) {
            *zv += xv * wv;
        }
    }
    for (k, &hv) in h.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        let row = wh.row(k);
        for (zv, wv) in z.iter_mut().zip(row) {
            *zv += hv * wv;
        }
    }

    let mut step = LstmStep {
        i: vec![0.0; hidden],
        f: vec![0.0; hidden],
        g: vec![0.0; hidden],
        o: vec![0.0; hidden],
        c_new: vec![0.0; hidden],
        h_new: vec![0.0; hidden],
        tanh_c_new: vec![0.0; hidden],
    };
    for k in 0..hidden {
        step.i[k] = sigmoid(z[k]);
        step.f[k] = sigmoid(z[hidden + k]);
        step.g[k] = z[2 * hidden + k].tanh();
        step.o[k] = sigmoid(z[3 * hidden + k]);
        step.c_new[k] = step.f[k] * c[k] + step.i[k] * step.g[k];
        step.tanh_c_new[k] = step.c_new[k].tanh();
        step.h_new[k] = step.o[k] * step.tanh_c_new[k];
        debug_assert!(step.h_new[k].is_finite(), "non-finite value after lstm_step");
    }
    step
}

/// Backward for one step. `dh_next`/`dc_next` are the gradients flowing
/// into this step's outputs; parameter gradients accumulate into `grads`
/// and the returned `(dx, dh_prev, dc_prev)` feed the previous step.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    step: &LstmStep,
    wx: &Tensor,
    wh: &Tensor,
    dh_next: &[f64],
    dc_next: &[f64],
    grads: &mut LstmGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = h_prev.len();
    let mut dz = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let do_ = dh_next[k] * step.tanh_c_new[k];
        let dtanh = dh_next[k] * step.o[k];
        let dc_total = dc_next[k] + dtanh * (1.0 - step.tanh_c_new[k] * step.tanh_c_new[k]);
        let di = dc_total * step.g[k];
        let df = dc_total * c_prev[k];
        let dg = dc_total * step.i[k];
        dc_prev[k] = dc_total * step.f[k];
        dz[k] = di * step.i[k] * (1.0 - step.i[k]);
        dz[hidden + k] = df * step.f[k] * (1.0 - step.f[k]);
        dz[2 * hidden + k] = dg * (1.0 - step.g[k] * step.g[k]);
        dz[3 * hidden + k] = do_ * step.o[k] * (1.0 - step.o[k]);
    }

    let mut dx = vec![0.0; x.len()];
    for (k, dxv) in dx.iter_mut().enumerate() {
        let row = wx.row(k);
        *dxv = row.iter().zip(&dz).map(|(w, d)| w * d).sum();
    }
    let mut dh_prev = vec![0.0; hidden];
    for (k, dhv) in dh_prev.iter_mut().enumerate() {
        let row = wh.row(k);
        *dhv = row.iter().zip(&dz).map(|(w, d)| w * d).sum();
    }
    for (k, &xv) in x.iter().enumerate() {
        if xv != 0.0 {
            let row = grads.dwx.row_mut(k);
            for (gv, dzv) in row.iter_mut().zip(&dz) {
                *gv += xv * dzv;
            }
        }
    }
    for (k, &hv) in h_prev.iter().enumerate() {
        if hv != 0.0 {
            let row = grads.dwh.row_mut(k);
            for (gv, dzv) in row.iter_mut().zip(&dz) {
                *gv += hv * dzv;
            }
        }
    }
    for (gv, dzv) in grads.db.data_mut().iter_mut().zip(&dz) {
        *gv += dzv;
    }
    (dx, dh_prev, dc_prev)
}
