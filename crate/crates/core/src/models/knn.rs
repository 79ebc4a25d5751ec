//! k-nearest neighbours on standardized rows (Euclidean distance).

use super::linear::Standardizer;
use super::{Prediction, Targets};

#[derive(Debug, Clone, PartialEq)]
enum Stored {
    /// 1.0 for up, 0.0 for down.
    Class(Vec<f64>),
    Value(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KnnModel {
    pub standardizer: Standardizer,
    rows: Vec<Vec<f64>>,
    targets: Stored,
    k: usize,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: Targets<'_>, k: usize) -> Self {
        let standardizer = Standardizer::fit(x);
        let rows = x.iter().map(|r| standardizer.transform(r)).collect();
        let targets = match y {
            Targets::Class(_) => Stored::Class(y.as_reals()),
            Targets::Value(v) => Stored::Value(v.to_vec()),
        };
        Self { standardizer, rows, targets, k: k.max(1) }
    }

    /// Indices of the `k` nearest stored rows; equal distances keep the
    /// lower training index first.
    fn neighbours(&self, z: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.into_iter().take(self.k.min(self.rows.len())).map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let z = self.standardizer.transform(x);
        let nn = self.neighbours(&z);
        let k = nn.len() as f64;
        match &self.targets {
            Stored::Class(y) => {
                let up = nn.iter().map(|&i| y[i]).sum::<f64>();
                Prediction::from_score(up / k - 0.5)
            }
            Stored::Value(y) => Prediction::Value(nn.iter().map(|&i| y[i]).sum::<f64>() / k),
        }
    }
}
