use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::registry::{sigmoid, PlattParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: u32,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters { learning_rate: 0.1, epochs: 30, l2: 0.001, batch_size: 64, seed: 7 }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(TrainError::Config("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        LinearModel { intercept: 0.0, coefficients: vec![0.0; d] }
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn raw_scores(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.raw(r)).collect()
    }
}

fn check_data(x: &[Vec<f64>], y: &[u8]) -> Result<usize, TrainError> {
    if x.len() != y.len() {
        return Err(TrainError::Shape(format!("{} rows for {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(TrainError::Shape("need at least 2 rows".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(TrainError::Shape("ragged feature matrix".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TrainError::Shape("non-finite feature value".into()));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(TrainError::Shape("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(TrainError::SingleClass);
    }
    Ok(d)
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss over `rows` plus `(l2/2)·‖w‖²`.
pub fn objective(model: &LinearModel, x: &[Vec<f64>], y: &[u8], rows: &[usize], l2: f64) -> f64 {
    let data: f64 = rows
        .iter()
        .map(|&i| {
            let z = model.raw(&x[i]);
            softplus(z) - y[i] as f64 * z
        })
        .sum::<f64>()
        / rows.len() as f64;
    data + 0.5 * l2 * model.coefficients.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`objective`]: `(1/m)Σ(σ(w·x+b) − y)x + l2·w`, and
/// `(1/m)Σ(σ(w·x+b) − y)` for the intercept.
pub fn gradient(model: &LinearModel, x: &[Vec<f64>], y: &[u8], rows: &[usize], l2: f64) -> LinearModel {
    let mut g = LinearModel::zeros(model.coefficients.len());
    for &i in rows {
        let r = sigmoid(model.raw(&x[i])) - y[i] as f64;
        g.intercept += r;
        for (gj, xj) in g.coefficients.iter_mut().zip(&x[i]) {
            *gj += r * xj;
        }
    }
    let m = rows.len() as f64;
    g.intercept /= m;
    for (gj, wj) in g.coefficients.iter_mut().zip(&model.coefficients) {
        *gj = *gj / m + l2 * wj;
    }
    g
}

/// Mini-batch gradient descent from zero weights. Rows are reshuffled each
/// epoch by a generator seeded once from `hp.seed`.
pub fn train_logreg(x: &[Vec<f64>], y: &[u8], hp: &Hyperparameters) -> Result<LinearModel, TrainError> {
    hp.validate()?;
    let d = check_data(x, y)?;
    let mut model = LinearModel::zeros(d);
    let mut rng = crate::rng::seeded(hp.seed, crate::rng::Stream::Sgd);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let g = gradient(&model, x, y, batch, hp.l2);
            model.intercept -= hp.learning_rate * g.intercept;
            for (w, gj) in model.coefficients.iter_mut().zip(&g.coefficients) {
                *w -= hp.learning_rate * gj;
            }
        }
    }
    if !model.intercept.is_finite() || model.coefficients.iter().any(|w| !w.is_finite()) {
        return Err(TrainError::Diverged);
    }
    Ok(model)
}

/// Per-column mean and standard deviation (population); zero spread maps to 1.
pub fn column_stats(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; d];
    for r in x {
        for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, sd)
}

/// Trains on z-scored columns and maps the weights back to the raw scale,
/// so the returned model scores raw feature values.
pub fn train_logreg_standardized(x: &[Vec<f64>], y: &[u8], hp: &Hyperparameters) -> Result<LinearModel, TrainError> {
    check_data(x, y)?;
    let (mean, sd) = column_stats(x);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let m = train_logreg(&z, y, hp)?;
    let coefficients: Vec<f64> = m.coefficients.iter().zip(&sd).map(|(w, s)| w / s).collect();
    let intercept = m.intercept - coefficients.iter().zip(&mean).map(|(w, mu)| w * mu).sum::<f64>();
    Ok(LinearModel { intercept, coefficients })
}

pub const PLATT_MAX_ITER: usize = 100;
pub const PLATT_TOL: f64 = 1e-8;

/// Fits `σ(a·s + b)` to smoothed targets `t₊ = (N₊+1)/(N₊+2)`,
/// `t₋ = 1/(N₋+2)` by Newton's method with step halving.
pub fn fit_platt(scores: &[f64], y: &[u8]) -> Result<PlattParams, TrainError> {
    if scores.len() != y.len() {
        return Err(TrainError::Shape(format!("{} scores for {} labels", scores.len(), y.len())));
    }
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(TrainError::Calibration("both classes are required".into()));
    }
    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let t: Vec<f64> = y.iter().map(|&l| if l == 1 { t_pos } else { t_neg }).collect();
    let loss = |a: f64, b: f64| -> f64 {
        scores.iter().zip(&t).map(|(s, ti)| {
            let z = a * s + b;
            softplus(z) - ti * z
        }).sum()
    };

    let (mut a, mut b) = (1.0, 0.0);
    let mut f = loss(a, b);
    for _ in 0..PLATT_MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (s, ti) in scores.iter().zip(&t) {
            let p = sigmoid(a * s + b);
            let r = p - ti;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        // Small ridge keeps the Hessian invertible on degenerate inputs.
        haa += 1e-12;
        hbb += 1e-12;
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let nf = loss(na, nb);
            if nf <= f + 1e-12 {
                a = na;
                b = nb;
                f = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || (step * da).abs().max((step * db).abs()) < PLATT_TOL {
            break;
        }
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(TrainError::Calibration("solver diverged".into()));
    }
    Ok(PlattParams { a, b })
}
