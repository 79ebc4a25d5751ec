//! Bootstrap ensembles of CART trees (random forest, bagging) and vote/mean
//! aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{leaf_prediction, Tree, TreeParams};
use super::{ModelError, Prediction, Task};
use crate::dataset::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// Majority vote over member directions; ties resolve to down.
    Majority,
    /// Arithmetic mean of member values.
    Mean,
}

/// Combines member outputs. Majority mode scores the up-vote share minus one
/// half; mean mode averages values (or scores, for class outputs).
pub fn ensemble_aggregate(outputs: &[Prediction], mode: AggregateMode) -> Result<Prediction, ModelError> {
    if outputs.is_empty() {
        return Err(ModelError::EmptyEnsemble);
    }
    let n = outputs.len() as f64;
    Ok(match mode {
        AggregateMode::Majority => {
            let up = outputs
                .iter()
                .filter(|p| match p {
                    Prediction::Class { direction, .. } => *direction == Direction::Up,
                    Prediction::Value(v) => *v > 0.0,
                })
                .count() as f64;
            Prediction::from_score(up / n - 0.5)
        }
        AggregateMode::Mean => {
            let (sum, class) = outputs.iter().fold((0.0, false), |(s, c), p| match p {
                Prediction::Class { score, .. } => (s + score, true),
                Prediction::Value(v) => (s + v, c),
            });
            if class {
                Prediction::from_score(sum / n)
            } else {
                Prediction::Value(sum / n)
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ForestParams {
    pub n_members: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Forest {
    members: Vec<Tree>,
}

impl Forest {
    /// Member `m` draws its bootstrap sample and grows its tree from the
    /// stream seeded with `seed + m`, so parallel construction matches
    /// sequential construction.
    pub fn fit(x: &[Vec<f64>], y: &[f64], p: &ForestParams, seed: u64) -> Self {
        let n = x.len();
        let members = (0..p.n_members.max(1))
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(m as u64));
                let rows: Vec<usize> = if p.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::fit_rows(x, y, rows, &p.tree, &mut rng)
            })
            .collect();
        Self { members }
    }

    pub fn predict(&self, x: &[f64], task: Task) -> Prediction {
        let outputs: Vec<Prediction> = self.members.iter().map(|t| leaf_prediction(t.predict(x), task)).collect();
        let mode = match task {
            Task::Classifier => AggregateMode::Majority,
            Task::Regressor => AggregateMode::Mean,
        };
        ensemble_aggregate(&outputs, mode).expect("forest has at least one member")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::Criterion;

    fn vote(d: Direction) -> Prediction {
        Prediction::Class { direction: d, score: 0.0 }
    }

    #[test]
    fn aggregation_examples() {
        use Direction::*;
        let p = ensemble_aggregate(&[vote(Up), vote(Up), vote(Down)], AggregateMode::Majority).unwrap();
        assert!(matches!(p, Prediction::Class { direction: Up, .. }));
        let p = ensemble_aggregate(&[vote(Up), vote(Down)], AggregateMode::Majority).unwrap();
        assert!(matches!(p, Prediction::Class { direction: Down, .. }));
        let p = ensemble_aggregate(
            &[Prediction::Value(0.01), Prediction::Value(0.02), Prediction::Value(0.06)],
            AggregateMode::Mean,
        )
        .unwrap();
        match p {
            Prediction::Value(v) => assert!((v - 0.03).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert_eq!(ensemble_aggregate(&[], AggregateMode::Mean), Err(ModelError::EmptyEnsemble));
    }

    #[test]
    fn parallel_construction_is_reproducible() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let p = ForestParams {
            n_members: 16,
            bootstrap: true,
            tree: TreeParams {
                criterion: Criterion::Variance,
                max_depth: 0,
                min_samples_leaf: 1,
                max_features: 1,
                random_thresholds: false,
            },
        };
        let a = Forest::fit(&x, &y, &p, 5);
        let b = Forest::fit(&x, &y, &p, 5);
        assert_eq!(a, b);
        let c = Forest::fit(&x, &y, &p, 6);
        assert_ne!(a, c);
    }
}
