use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::logreg::LinearModel;
use super::metrics::auc;
use super::TrainError;

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub column: usize,
    /// Baseline AUC minus mean AUC with the column shuffled.
    pub importance: f64,
}

/// Permutation importance with AUC as the metric, sorted descending
/// (ties by column index).
pub fn permutation_importance(
    model: &LinearModel,
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    seed: u64,
    repeats: usize,
) -> Result<Vec<FeatureImportance>, TrainError> {
    let d = model.coefficients.len();
    if names.len() != d {
        return Err(TrainError::Shape(format!("{} names for {d} coefficients", names.len())));
    }
    if repeats == 0 {
        return Err(TrainError::Config("repeats must be positive".into()));
    }
    let baseline = auc(&model.raw_scores(x), y)?;
    let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Importance);
    let mut out = Vec::with_capacity(d);
    let mut scores = vec![0.0; x.len()];
    for (j, name) in names.iter().enumerate() {
        let mut column: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let mut total = 0.0;
        for _ in 0..repeats {
            column.shuffle(&mut rng);
            // Only column j changes, so adjust each raw score in place.
            for (i, row) in x.iter().enumerate() {
                scores[i] = model.raw(row) + model.coefficients[j] * (column[i] - row[j]);
            }
            total += auc(&scores, y)?;
        }
        out.push(FeatureImportance { feature: name.clone(), column: j, importance: baseline - total / repeats as f64 });
    }
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.column.cmp(&b.column)));
    Ok(out)
}
