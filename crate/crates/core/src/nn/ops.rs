//! Forward/backward pairs for the layers the models are built from.
//!
//! Backward functions take whatever the chain rule needs (saved inputs and
//! forward outputs) and return fresh gradient tensors, except the embedding
//! backward which scatter-accumulates into the table gradient directly.

use super::tensor::Tensor;
use super::NnError;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise affine map `x · w + b` for `x: [n, in]`, `w: [in, out]`,
/// `b: [out]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, d_in) = (x.rows(), x.cols());
    let (w_in, d_out) = (w.rows(), w.cols());
    if d_in != w_in || b.shape() != [d_out] {
        return Err(NnError::ShapeMismatch {
            op: "dense",
            detail: format!(
                "x {:?} · w {:?} + b {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        });
    }
    let mut y = Tensor::zeros(&[n, d_out]);
    for i in 0..n {
        let yr = &mut y.data_mut()[i * d_out..(i + 1) * d_out];
        yr.copy_from_slice(b.data());
        for k in 0..d_in {
            let xv = x.at2(i, k);
            if xv == 0.0 {
                continue;
            }
            let wr = w.row(k);
            for (yv, wv) in yr.iter_mut().zip(wr) {
                *yv += xv * wv;
            }
        }
    }
    y.debug_assert_finite("dense");
    Ok(y)
}

/// Gradients of `dense`: returns `(dx, dw, db)`.
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d_in) = (x.rows(), x.cols());
    let d_out = w.cols();
    debug_assert_eq!(dy.shape(), [n, d_out]);
    let mut dx = Tensor::zeros(&[n, d_in]);
    let mut dw = Tensor::zeros(&[d_in, d_out]);
    let mut db = Tensor::zeros(&[d_out]);
    for i in 0..n {
        let dyr = dy.row(i);
        for (dbv, dyv) in db.data_mut().iter_mut().zip(dyr) {
            *dbv += dyv;
        }
        for k in 0..d_in {
            let wr = w.row(k);
            let mut acc = 0.0;
            for (wv, dyv) in wr.iter().zip(dyr) {
                acc += wv * dyv;
            }
            dx.data_mut()[i * d_in + k] = acc;
            let xv = x.at2(i, k);
            if xv != 0.0 {
                let dwr = dw.row_mut(k);
                for (dwv, dyv) in dwr.iter_mut().zip(dyr) {
                    *dwv += xv * dyv;
                }
            }
        }
    }
    (dx, dw, db)
}

/// Gather rows of `table: [V, d]` by id. PAD rows participate like any
/// other row; masking is the caller's job.
pub fn embedding_lookup(ids: &[u32], table: &Tensor) -> Result<Tensor, NnError> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= v {
            return Err(NnError::IndexOutOfRange { id, size: v });
        }
        out.row_mut(i).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatter-accumulate `dy` rows into the table gradient; duplicate ids sum.
pub fn embedding_backward(ids: &[u32], dy: &Tensor, dtable: &mut Tensor) {
    debug_assert_eq!(dy.rows(), ids.len());
    debug_assert_eq!(dy.cols(), dtable.cols());
    for (i, &id) in ids.iter().enumerate() {
        let src = dy.row(i);
        let dst = dtable.row_mut(id as usize);
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

/// Per-row mean over the first `lengths[i]` vectors of `x: [n, len, d]`;
/// PAD positions beyond the length are excluded.
pub fn masked_mean_pool(x: &Tensor, lengths: &[usize]) -> Result<Tensor, NnError> {
    let shape = x.shape();
    debug_assert_eq!(shape.len(), 3);
    let (n, l, d) = (shape[0], shape[1], shape[2]);
    debug_assert_eq!(lengths.len(), n);
    let mut y = Tensor::zeros(&[n, d]);
    for i in 0..n {
        let len = lengths[i];
        if len == 0 {
            return Err(NnError::ZeroLength);
        }
        if len > l {
            return Err(NnError::ShapeMismatch {
                op: "masked_mean_pool",
                detail: format!("length {len} exceeds sequence capacity {l}"),
            });
        }
        let yr = &mut y.data_mut()[i * d..(i + 1) * d];
        for t in 0..len {
            let base = (i * l + t) * d;
            for (k, yv) in yr.iter_mut().enumerate() {
                *yv += x.data()[base + k];
            }
        }
        let inv = 1.0 / len as f64;
        yr.iter_mut().for_each(|v| *v *= inv);
    }
    y.debug_assert_finite("masked_mean_pool");
    Ok(y)
}

/// Gradient of `masked_mean_pool`: `1/len` routed to unmasked rows only.
pub fn masked_mean_pool_backward(dy: &Tensor, lengths: &[usize], l: usize) -> Tensor {
    let (n, d) = (dy.rows(), dy.cols());
    let mut dx = Tensor::zeros(&[n, l, d]);
    for i in 0..n {
        let len = lengths[i];
        let inv = 1.0 / len as f64;
        let dyr = dy.row(i);
        for t in 0..len {
            let base = (i * l + t) * d;
            for (k, dyv) in dyr.iter().enumerate() {
                dx.data_mut()[base + k] = dyv * inv;
            }
        }
    }
    dx
}

/// Independent sigmoid attention: `a_i = σ(sv_i · av)` with no
/// normalization across subtrees, pooled as `c = (1/n) Σ a_i sv_i`.
/// Returns `(c, a)`.
pub fn sigmoid_attention_pool(sv: &Tensor, av: &Tensor) -> (Tensor, Vec<f64>) {
    let (n, d) = (sv.rows(), sv.cols());
    debug_assert_eq!(av.shape(), [d]);
    debug_assert!(n >= 1);
    let mut a = Vec::with_capacity(n);
    let mut c = Tensor::zeros(&[d]);
    for i in 0..n {
        let row = sv.row(i);
        let score: f64 = row.iter().zip(av.data()).map(|(x, y)| x * y).sum();
        let w = sigmoid(score);
        a.push(w);
        for (cv, x) in c.data_mut().iter_mut().zip(row) {
            *cv += w * x;
        }
    }
    let inv = 1.0 / n as f64;
    c.data_mut().iter_mut().for_each(|v| *v *= inv);
    c.debug_assert_finite("sigmoid_attention_pool");
    (c, a)
}

/// Gradients of `sigmoid_attention_pool`. `da_direct` carries any loss
/// term applied to the weights themselves (the entropy regularizer);
/// returns `(dsv, dav)`.
pub fn sigmoid_attention_pool_backward(
    sv: &Tensor,
    av: &Tensor,
    a: &[f64],
    dc: &Tensor,
    da_direct: Option<&[f64]>,
) -> (Tensor, Tensor) {
    let (n, d) = (sv.rows(), sv.cols());
    let inv = 1.0 / n as f64;
    let mut dsv = Tensor::zeros(&[n, d]);
    let mut dav = Tensor::zeros(&[d]);
    for i in 0..n {
        let row = sv.row(i);
        let dc_dot_sv: f64 = dc.data().iter().zip(row).map(|(x, y)| x * y).sum();
        let mut da = inv * dc_dot_sv;
        if let Some(extra) = da_direct {
            da += extra[i];
        }
        let ds = da * a[i] * (1.0 - a[i]);
        let dsv_row = dsv.row_mut(i);
        for k in 0..d {
            dsv_row[k] = inv * a[i] * dc.data()[k] + ds * av.data()[k];
        }
        for (davv, x) in dav.data_mut().iter_mut().zip(row) {
            *davv += ds * x;
        }
    }
    (dsv, dav)
}

/// Softmax-attention ablation: weights normalized across subtrees
/// (`Σ a_i = 1`), pooled as the weighted average `c = Σ a_i sv_i`.
pub fn softmax_attention_pool(sv: &Tensor, av: &Tensor) -> (Tensor, Vec<f64>) {
    let (n, d) = (sv.rows(), sv.cols());
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let row = sv.row(i);
        scores.push(row.iter().zip(av.data()).map(|(x, y)| x * y).sum::<f64>());
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let a: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut c = Tensor::zeros(&[d]);
    for i in 0..n {
        let row = sv.row(i);
        for (cv, x) in c.data_mut().iter_mut().zip(row) {
            *cv += a[i] * x;
        }
    }
    c.debug_assert_finite("softmax_attention_pool");
    (c, a)
}

/// Gradients of `softmax_attention_pool`; returns `(dsv, dav)`.
pub fn softmax_attention_pool_backward(
    sv: &Tensor,
    av: &Tensor,
    a: &[f64],
    dc: &Tensor,
    da_direct: Option<&[f64]>,
) -> (Tensor, Tensor) {
    let (n, d) = (sv.rows(), sv.cols());
    let mut da = vec![0.0; n];
    for i in 0..n {
        let row = sv.row(i);
        da[i] = dc.data().iter().zip(row).map(|(x, y)| x * y).sum::<f64>();
        if let Some(extra) = da_direct {
            da[i] += extra[i];
        }
    }
    let dot: f64 = a.iter().zip(&da).map(|(ai, dai)| ai * dai).sum();
    let mut dsv = Tensor::zeros(&[n, d]);
    let mut dav = Tensor::zeros(&[d]);
    for i in 0..n {
        let ds = a[i] * (da[i] - dot);
        let row = sv.row(i);
        let dsv_row = dsv.row_mut(i);
        for k in 0..d {
            dsv_row[k] = a[i] * dc.data()[k] + ds * av.data()[k];
        }
        for (davv, x) in dav.data_mut().iter_mut().zip(row) {
            *davv += ds * x;
        }
    }
    (dsv, dav)
}

/// Entropy penalty `H(a) = -λ Σ a_i log(a_i + ε)`. A weight of exactly 0
/// contributes exactly 0 for any ε.
pub fn entropy_regularizer(a: &[f64], lambda: f64, epsilon: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    let mut h = 0.0;
    for &ai in a {
        if ai != 0.0 {
            h += ai * (ai + epsilon).ln();
        }
    }
    -lambda * h
}

/// `∂H/∂a_i = -λ (log(a_i + ε) + a_i / (a_i + ε))`.
pub fn entropy_regularizer_grad(a: &[f64], lambda: f64, epsilon: f64) -> Vec<f64> {
    a.iter()
        .map(|&ai| -lambda * ((ai + epsilon).ln() + ai / (ai + epsilon)))
        .collect()
}

/// Binary cross-entropy on a probability. The input is clamped to
/// `[1e-7, 1 - 1e-7]`; returns `(loss, dloss/dp)` with zero gradient where
/// the clamp saturates.
pub fn bce_loss(p: f64, y: u8) -> (f64, f64) {
    const EDGE: f64 = 1e-7;
    let pc = p.clamp(EDGE, 1.0 - EDGE);
    let y = f64::from(y);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = if p < EDGE || p > 1.0 - EDGE {
        0.0
    } else {
        (pc - y) / (pc * (1.0 - pc))
    };
    (loss, grad)
}
