//! Central-difference gradient verification.
//!
//! The caller computes the loss with its analytic backward pass (leaving
//! gradients in the store), then this harness perturbs every coordinate by
//! `±h` and compares `(f(θ+h) - f(θ-h)) / 2h` against the stored gradient.

use super::store::ParamStore;

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Max over all parameter coordinates of
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
/// Gradients already in `store` are treated as the analytic values; `f`
/// must be pure and deterministic in the parameter values.
pub fn finite_diff_check(
    store: &mut ParamStore,
    mut f: impl FnMut(&ParamStore) -> f64,
    h: f64,
) -> f64 {
    let names: Vec<String> = store.names().map(String::from).collect();
    let mut max_rel: f64 = 0.0;
    for name in &names {
        let len = store.value(name).len();
        for idx in 0..len {
            let orig = store.value(name).data()[idx];
            store.value_mut(name).data_mut()[idx] = orig + h;
            let up = f(store);
            store.value_mut(name).data_mut()[idx] = orig - h;
            let down = f(store);
            store.value_mut(name).data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = store.grad(name).data()[idx];
            let rel = (analytic - numeric).abs() / 1e-12f64.max(analytic.abs() + numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::super::lstm::{lstm_step, lstm_step_backward, LstmGrads};
    use super::super::ops::*;
    use super::super::store::{glorot_uniform, uniform_init, ParamStore};
    use super::super::tensor::Tensor;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polynomial_is_exact_to_rounding() {
        // central differences are exact for quadratics up to float noise
        let numeric = central_diff(|t| t * t, 3.0, 1e-5);
        assert!((numeric - 6.0).abs() < 1e-9);
        let mut store = ParamStore::new();
        store.insert("theta", Tensor::from_vec(&[1], vec![3.0]));
        store.add_grad("theta", &Tensor::from_vec(&[1], vec![6.0]));
        let max_rel = finite_diff_check(&mut store, |s| {
            let t = s.value("theta").data()[0];
            t * t
        }, 1e-5);
        assert!(max_rel < 1e-9, "max_rel = {max_rel}");
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1234)
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut r = rng();
        let mut store = ParamStore::new();
        store.insert("x", uniform_init(&[4, 5], -1.0, 1.0, &mut r));
        store.insert("w", glorot_uniform(5, 3, &mut r));
        store.insert("b", uniform_init(&[3], -0.5, 0.5, &mut r));
        let probe = uniform_init(&[4, 3], -1.0, 1.0, &mut r);

        let loss = |s: &ParamStore| {
            let y = dense(s.value("x"), s.value("w"), s.value("b")).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let _ = loss(&store);
        let (dx, dw, db) = dense_backward(store.value("x"), store.value("w"), &probe);
        store.add_grad("x", &dx);
        store.add_grad("w", &dw);
        store.add_grad("b", &db);
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-6, "max_rel = {max_rel}");
    }

    #[test]
    fn embedding_gradients_match_finite_differences() {
        let mut r = rng();
        let ids = [2u32, 0, 2, 3];
        let mut store = ParamStore::new();
        store.insert("e", uniform_init(&[5, 4], -1.0, 1.0, &mut r));
        let probe = uniform_init(&[4, 4], -1.0, 1.0, &mut r);

        let loss = |s: &ParamStore| {
            let y = embedding_lookup(&ids, s.value("e")).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let mut de = Tensor::zeros(&[5, 4]);
        embedding_backward(&ids, &probe, &mut de);
        store.add_grad("e", &de);
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-6, "max_rel = {max_rel}");
    }

    #[test]
    fn mean_pool_gradients_match_finite_differences() {
        let mut r = rng();
        let lengths = [1usize, 3, 2];
        let mut store = ParamStore::new();
        store.insert("x", uniform_init(&[3, 3, 2], -1.0, 1.0, &mut r));
        let probe = uniform_init(&[3, 2], -1.0, 1.0, &mut r);

        let loss = |s: &ParamStore| {
            let y = masked_mean_pool(s.value("x"), &lengths).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let dx = masked_mean_pool_backward(&probe, &lengths, 3);
        store.add_grad("x", &dx);
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-6, "max_rel = {max_rel}");
    }

    #[test]
    fn sigmoid_attention_with_entropy_matches_finite_differences() {
        let mut r = rng();
        let (lambda, eps) = (0.35, 1e-8);
        let mut store = ParamStore::new();
        store.insert("sv", uniform_init(&[5, 4], -1.0, 1.0, &mut r));
        store.insert("av", uniform_init(&[4], -1.0, 1.0, &mut r));
        let probe = uniform_init(&[4], -1.0, 1.0, &mut r);

        let loss = |s: &ParamStore| {
            let (c, a) = sigmoid_attention_pool(s.value("sv"), s.value("av"));
            let pooled: f64 = c.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            pooled + entropy_regularizer(&a, lambda, eps)
        };
        let (_, a) = sigmoid_attention_pool(store.value("sv"), store.value("av"));
        let da = entropy_regularizer_grad(&a, lambda, eps);
        let (dsv, dav) = sigmoid_attention_pool_backward(
            store.value("sv"),
            store.value("av"),
            &a,
            &probe,
            Some(&da),
        );
        store.add_grad("sv", &dsv);
        store.add_grad("av", &dav);
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-6, "max_rel = {max_rel}");
    }

    #[test]
    fn softmax_attention_matches_finite_differences() {
        let mut r = rng();
        let mut store = ParamStore::new();
        store.insert("sv", uniform_init(&[4, 3], -1.0, 1.0, &mut r));
        store.insert("av", uniform_init(&[3], -1.0, 1.0, &mut r));
        let probe = uniform_init(&[3], -1.0, 1.0, &mut r);

        let loss = |s: &ParamStore| {
            let (c, _) = softmax_attention_pool(s.value("sv"), s.value("av"));
            c.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let (_, a) = softmax_attention_pool(store.value("sv"), store.value("av"));
        let (dsv, dav) = softmax_attention_pool_backward(
            store.value("sv"),
            store.value("av"),
            &a,
            &probe,
            None,
        );
        store.add_grad("sv", &dsv);
        store.add_grad("av", &dav);
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-6, "max_rel = {max_rel}");
    }

    #[test]
    fn lstm_bptt_matches_finite_differences_over_three_steps() {
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

        let loss = |s: &ParamStore| {
            let mut h = vec![0.0; hidden];
            let mut c = vec![0.0; hidden];
            let mut total = 0.0;
            for t in 0..steps {
                let st = lstm_step(xs[t].data(), &h, &c, s.value("wx"), s.value("wh"), s.value("b"));
                total += st
                    .h_new
                    .iter()
                    .zip(probes[t].data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                h = st.h_new.clone();
                c = st.c_new.clone();
            }
            total
        };

        // analytic pass
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
        let max_rel = finite_diff_check(&mut store, loss, 1e-5);
        assert!(max_rel <= 1e-5, "max_rel = {max_rel}");
    }
}
