//! Evaluation metrics: rank-based AUC and regression RMSE/R².

use super::StudentError;

/// Area under the ROC curve via the Mann-Whitney U statistic:
/// `U / (n_pos · n_neg)` with tied scores counted half.
pub fn auc(scored: &[(f64, u8)]) -> Result<f64, StudentError> {
    let n_pos = scored.iter().filter(|(_, y)| *y == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(StudentError::SingleClassSet);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).expect("finite scores"));

    // average ranks over tie groups (1-based ranks)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            if scored[k].1 == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], truths: &[f64]) -> f64 {
    assert_eq!(preds.len(), truths.len());
    assert!(!preds.is_empty());
    let mse: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64;
    mse.sqrt()
}

/// `(RMSE, R²)` with `R² = 1 - SS_res/SS_tot` about the truth mean.
pub fn regression_metrics(preds: &[f64], truths: &[f64]) -> Result<(f64, f64), StudentError> {
    assert_eq!(preds.len(), truths.len());
    assert!(preds.len() >= 2, "need at least two points");
    let mean: f64 = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(StudentError::ZeroVarianceTruth);
    }
    let ss_res: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((rmse(preds, truths), 1.0 - ss_res / ss_tot))
}
