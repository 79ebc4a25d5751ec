//! Linear learners: normal-equation OLS/ridge, mini-batch gradient descent
//! (log, hinge and squared loss) and the classic perceptron.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Prediction};

/// Column mean and population standard deviation from the training rows.
/// Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let d = x[0].len();
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Output {
    /// Raw linear value (regression).
    Identity,
    /// Signed margin (ridge classifier, hinge, perceptron).
    Margin,
    /// Logistic probability minus one half.
    Probability,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearModel {
    standardizer: Option<Standardizer>,
    pub weights: Vec<f64>,
    pub bias: f64,
    output: Output,
    loss_history: Option<Vec<f64>>,
}

impl LinearModel {
    pub fn loss_history(&self) -> Option<&[f64]> {
        self.loss_history.as_deref()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    fn raw(&self, x: &[f64]) -> f64 {
        let z;
        let x = match &self.standardizer {
            Some(s) => {
                z = s.transform(x);
                &z[..]
            }
            None => x,
        };
        self.bias + dot(&self.weights, x)
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let m = self.raw(x);
        match self.output {
            Output::Identity => Prediction::Value(m),
            Output::Margin => Prediction::from_score(m),
            Output::Probability => Prediction::from_score(sigmoid(m) - 0.5),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(m))` without overflow.
fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

/// Solves `(AᵀA + P) w = Aᵀy` on the intercept-augmented design `A = [1 | X]`
/// with `P = diag(0, λ, …, λ)`. Rank-deficient systems get the minimum-norm
/// solution through the SVD pseudo-inverse.
pub(crate) fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64, classifier: bool) -> LinearModel {
    let n = x.len();
    let d = x[0].len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let mut normal = a.transpose() * &a;
    for j in 1..=d {
        normal[(j, j)] += lambda;
    }
    let rhs = a.transpose() * yv;
    let svd = normal.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * (d + 1) as f64 * f64::EPSILON;
    let w = svd.solve(&rhs, eps).unwrap_or_else(|_| DVector::zeros(d + 1));
    LinearModel {
        standardizer: None,
        weights: w.iter().skip(1).copied().collect(),
        bias: w[0],
        output: if classifier { Output::Margin } else { Output::Identity },
        loss_history: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Loss {
    /// Targets in {0, 1}.
    Log,
    /// Targets in {0, 1}, used as ±1.
    Hinge,
    /// Real targets; step normalized by the batch's mean squared input norm.
    Squared,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GdParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

fn point_loss(loss: Loss, m: f64, y: f64) -> f64 {
    match loss {
        // -[y log σ(m) + (1-y) log(1-σ(m))]
        Loss::Log => softplus(m) - y * m,
        Loss::Hinge => (1.0 - (2.0 * y - 1.0) * m).max(0.0),
        Loss::Squared => 0.5 * (m - y).powi(2),
    }
}

/// d loss / d margin.
fn point_grad(loss: Loss, m: f64, y: f64) -> f64 {
    match loss {
        Loss::Log => sigmoid(m) - y,
        Loss::Hinge => {
            let s = 2.0 * y - 1.0;
            if s * m < 1.0 {
                -s
            } else {
                0.0
            }
        }
        Loss::Squared => m - y,
    }
}

fn objective(loss: Loss, z: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let data = z.iter().zip(y).map(|(r, &t)| point_loss(loss, b + dot(w, r), t)).sum::<f64>() / z.len() as f64;
    data + 0.5 * l2 * dot(w, w)
}

/// Mini-batch gradient descent on standardized features. Each epoch visits
/// the rows in a fresh permutation drawn from the model seed.
pub(crate) fn fit_gradient(
    x: &[Vec<f64>],
    y: &[f64],
    loss: Loss,
    p: &GdParams,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    let standardizer = Standardizer::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.transform(r)).collect();
    let n = z.len();
    let d = z[0].len();
    let batch = p.batch_size.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(p.epochs);
    let mut gw = vec![0.0; d];

    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            let mut sq_norm = 0.0;
            for &i in chunk {
                let g = point_grad(loss, b + dot(&w, &z[i]), y[i]);
                for (gj, zj) in gw.iter_mut().zip(&z[i]) {
                    *gj += g * zj;
                }
                gb += g;
                sq_norm += 1.0 + dot(&z[i], &z[i]);
            }
            let k = chunk.len() as f64;
            let step = match loss {
                Loss::Squared => p.learning_rate / (sq_norm / k),
                _ => p.learning_rate,
            };
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= step * (gj / k + p.l2 * *wj);
            }
            b -= step * gb / k;
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Diverged(match loss {
                Loss::Squared => "sgd_r",
                _ => "gradient classifier",
            }));
        }
        history.push(objective(loss, &z, y, &w, b, p.l2));
    }

    Ok(LinearModel {
        standardizer: Some(standardizer),
        weights: w,
        bias: b,
        output: match loss {
            Loss::Log => Output::Probability,
            Loss::Hinge => Output::Margin,
            Loss::Squared => Output::Identity,
        },
        loss_history: Some(history),
    })
}

/// Mistake-driven perceptron on raw features, rows visited in order, stopping
/// after the first clean epoch.
pub(crate) fn fit_perceptron(x: &[Vec<f64>], y: &[f64], epochs: usize) -> LinearModel {
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..epochs {
        let mut mistakes = 0;
        for (row, &t) in x.iter().zip(y) {
            let s = 2.0 * t - 1.0;
            if s * (b + dot(&w, row)) <= 0.0 {
                for (wj, xj) in w.iter_mut().zip(row) {
                    *wj += s * xj;
                }
                b += s;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            break;
        }
    }
    LinearModel { standardizer: None, weights: w, bias: b, output: Output::Margin, loss_history: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_handles_constant_columns() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn rank_deficient_ols_is_finite() {
        // More parameters than rows and a duplicated column.
        let x = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 1.0]];
        let m = fit_ridge(&x, &[1.0, 2.0], 0.0, false);
        assert!(m.weights.iter().all(|w| w.is_finite()));
        match m.predict(&[2.0, 2.0, 1.0]) {
            Prediction::Value(v) => assert!((v - 2.0).abs() < 1e-9),
            _ => unreachable!(),
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn squared_loss_converges_on_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + 0.1 * r[0]).collect();
        let p = GdParams { learning_rate: 0.5, l2: 0.0, epochs: 200, batch_size: 4 };
        let m = fit_gradient(&x, &y, Loss::Squared, &p, 1).unwrap();
        match m.predict(&[10.0]) {
            Prediction::Value(v) => assert!((v - 1.5).abs() < 1e-3, "{v}"),
            _ => unreachable!(),
        }
    }
}
