use super::TrainError;

fn check(scores: &[f64], y: &[u8]) -> Result<(usize, usize), TrainError> {
    if scores.len() != y.len() {
        return Err(TrainError::Shape(format!("{} scores for {} labels", scores.len(), y.len())));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(TrainError::SingleClass);
    }
    Ok((pos, neg))
}

/// Probability that a random positive outranks a random negative, ties ½.
///
/// Computed from average ranks (Mann-Whitney U).
pub fn auc(scores: &[f64], y: &[u8]) -> Result<f64, TrainError> {
    let (pos, neg) = check(scores, y)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TrainError::Shape("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (doubled) ranks of positives; doubling keeps tie averages integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1; average doubled = (i+1)+(j+1).
        let avg2 = (i + j + 2) as u128;
        for &k in &order[i..=j] {
            if y[k] == 1 {
                rank_sum2 += avg2;
            }
        }
        i = j + 1;
    }
    let p = pos as u128;
    // 2U = 2R - p(p+1)
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Mean squared difference between probabilities and labels.
pub fn brier(probs: &[f64], y: &[u8]) -> Result<f64, TrainError> {
    if probs.len() != y.len() || probs.is_empty() {
        return Err(TrainError::Shape(format!("{} probabilities for {} labels", probs.len(), y.len())));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(TrainError::Shape("probability outside [0, 1]".into()));
    }
    Ok(probs.iter().zip(y).map(|(p, &l)| (p - l as f64).powi(2)).sum::<f64>() / probs.len() as f64)
}

/// Share of rows where `p > threshold` agrees with the label.
pub fn accuracy(probs: &[f64], y: &[u8], threshold: f64) -> Result<f64, TrainError> {
    if probs.len() != y.len() || probs.is_empty() {
        return Err(TrainError::Shape(format!("{} probabilities for {} labels", probs.len(), y.len())));
    }
    let hits = probs.iter().zip(y).filter(|(p, &l)| u8::from(**p > threshold) == l).count();
    Ok(hits as f64 / probs.len() as f64)
}
