//! Classifier and regressor roster behind one fit/predict contract.
//!
//! Classifiers emit a [`Direction`] plus a real score whose sign agrees with
//! the direction (`score > 0` means up; a zero score is down). Regressors
//! emit the predicted next-interval log return.
//!
//! Windows with fewer than two rows, and classification windows holding a
//! single class, fit a constant model instead of failing.

mod ensemble;
mod knn;
mod linear;
mod naive_bayes;
mod params;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Direction;

pub use ensemble::{ensemble_aggregate, AggregateMode};
pub use params::{
    default_space, parse_params, validate_params, Distribution, HyperParamSpace, ParamValue, Params,
};
pub use tree::{cart_best_split, impurity, CandidateMode, Criterion, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in model input")]
    NonFiniteInput,
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTraining,
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("{kind} is a {task}; the requested operation needs the other task")]
    KindMismatch { kind: &'static str, task: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("{0} diverged: non-finite weights")]
    Diverged(&'static str),
    #[error("ensemble has no member outputs")]
    EmptyEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classifier,
    Regressor,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classifier => "classifier",
            Task::Regressor => "regressor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LogisticC,
    RidgeC,
    PerceptronC,
    SgdC,
    KnnC,
    BernoulliNbC,
    DecisionTreeC,
    ExtraTreeC,
    RandomForestC,
    BaggingC,
    OlsR,
    RidgeR,
    SgdR,
    KnnR,
    DecisionTreeR,
    ExtraTreeR,
    RandomForestR,
    BaggingR,
}

impl ModelKind {
    pub const ALL: [ModelKind; 18] = [
        ModelKind::LogisticC,
        ModelKind::RidgeC,
        ModelKind::PerceptronC,
        ModelKind::SgdC,
        ModelKind::KnnC,
        ModelKind::BernoulliNbC,
        ModelKind::DecisionTreeC,
        ModelKind::ExtraTreeC,
        ModelKind::RandomForestC,
        ModelKind::BaggingC,
        ModelKind::OlsR,
        ModelKind::RidgeR,
        ModelKind::SgdR,
        ModelKind::KnnR,
        ModelKind::DecisionTreeR,
        ModelKind::ExtraTreeR,
        ModelKind::RandomForestR,
        ModelKind::BaggingR,
    ];

    /// Config/CLI name, e.g. `random_forest_c`.
    pub fn name(self) -> &'static str {
        use ModelKind::*;
        match self {
            LogisticC => "logistic_c",
            RidgeC => "ridge_c",
            PerceptronC => "perceptron_c",
            SgdC => "sgd_c",
            KnnC => "knn_c",
            BernoulliNbC => "bernoulli_nb_c",
            DecisionTreeC => "decision_tree_c",
            ExtraTreeC => "extra_tree_c",
            RandomForestC => "random_forest_c",
            BaggingC => "bagging_c",
            OlsR => "ols_r",
            RidgeR => "ridge_r",
            SgdR => "sgd_r",
            KnnR => "knn_r",
            DecisionTreeR => "decision_tree_r",
            ExtraTreeR => "extra_tree_r",
            RandomForestR => "random_forest_r",
            BaggingR => "bagging_r",
        }
    }

    /// Human-readable name used in report tables.
    pub fn label(self) -> &'static str {
        use ModelKind::*;
        match self {
            LogisticC => "LogisticRegression",
            RidgeC => "RidgeClassifier",
            PerceptronC => "Perceptron",
            SgdC => "SGDClassifier",
            KnnC => "KNeighborsClassifier",
            BernoulliNbC => "BernoulliNB",
            DecisionTreeC => "DecisionTreeClassifier",
            ExtraTreeC => "ExtraTreeClassifier",
            RandomForestC => "RandomForestClassifier",
            BaggingC => "BaggingClassifier",
            OlsR => "LinearRegression",
            RidgeR => "Ridge",
            SgdR => "SGDRegressor",
            KnnR => "KNeighborsRegressor",
            DecisionTreeR => "DecisionTreeRegressor",
            ExtraTreeR => "ExtraTreeRegressor",
            RandomForestR => "RandomForestRegressor",
            BaggingR => "BaggingRegressor",
        }
    }

    pub fn task(self) -> Task {
        if self.name().ends_with("_c") {
            Task::Classifier
        } else {
            Task::Regressor
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, params: Params::new(), seed: 0 }
    }

    pub fn with_param(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_params(self.kind, &self.params)
    }
}

/// Training targets; the variant must match the kind's task.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Class(&'a [Direction]),
    Value(&'a [f64]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Class(y) => y.len(),
            Targets::Value(y) => y.len(),
        }
    }

    fn task(&self) -> Task {
        match self {
            Targets::Class(_) => Task::Classifier,
            Targets::Value(_) => Task::Regressor,
        }
    }

    /// Classes as 1.0 (up) / 0.0 (down); values unchanged.
    fn as_reals(&self) -> Vec<f64> {
        match self {
            Targets::Class(y) => y.iter().map(|d| if *d == Direction::Up { 1.0 } else { 0.0 }).collect(),
            Targets::Value(y) => y.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Class { direction: Direction, score: f64 },
    Value(f64),
}

impl Prediction {
    /// Classification output from a score; ties resolve to down.
    pub fn from_score(score: f64) -> Self {
        Prediction::Class { direction: Direction::from_sign(score), score }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Constant(Prediction),
    Linear(linear::LinearModel),
    Knn(knn::KnnModel),
    NaiveBayes(naive_bayes::BernoulliNb),
    Tree(tree::Tree),
    Forest(ensemble::Forest),
}

/// Fitted, immutable model state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    kind: ModelKind,
    feature_width: usize,
    state: Fitted,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// True when the window was degenerate and a constant model was fitted.
    pub fn is_constant(&self) -> bool {
        matches!(self.state, Fitted::Constant(_))
    }

    /// Per-epoch training loss for gradient-trained kinds.
    pub fn training_loss(&self) -> Option<&[f64]> {
        match &self.state {
            Fitted::Linear(m) => m.loss_history(),
            _ => None,
        }
    }

    /// Stored standardization (mean, scale) for kinds that standardize.
    pub fn standardization(&self) -> Option<(&[f64], &[f64])> {
        match &self.state {
            Fitted::Linear(m) => m.standardizer().map(|s| (s.mean.as_slice(), s.scale.as_slice())),
            Fitted::Knn(m) => Some((m.standardizer.mean.as_slice(), m.standardizer.scale.as_slice())),
            _ => None,
        }
    }

    /// `(intercept, weights)` for linear kinds, in the space the model was fitted in.
    pub fn linear_coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.state {
            Fitted::Linear(m) => Some((m.bias, m.weights.as_slice())),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        if x.len() != self.feature_width {
            return Err(ModelError::WidthMismatch { expected: self.feature_width, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        let task = self.kind.task();
        Ok(match &self.state {
            Fitted::Constant(p) => *p,
            Fitted::Linear(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::NaiveBayes(m) => Prediction::from_score(m.prob_up(x) - 0.5),
            Fitted::Tree(t) => tree::leaf_prediction(t.predict(x), task),
            Fitted::Forest(f) => f.predict(x, task),
        })
    }
}

pub fn predict_class(model: &TrainedModel, x: &[f64]) -> Result<(Direction, f64), ModelError> {
    if model.kind.task() != Task::Classifier {
        return Err(ModelError::KindMismatch { kind: model.kind.name(), task: "regressor" });
    }
    match model.predict(x)? {
        Prediction::Class { direction, score } => Ok((direction, score)),
        Prediction::Value(_) => unreachable!("classifier produced a value"),
    }
}

pub fn predict_value(model: &TrainedModel, x: &[f64]) -> Result<f64, ModelError> {
    if model.kind.task() != Task::Regressor {
        return Err(ModelError::KindMismatch { kind: model.kind.name(), task: "classifier" });
    }
    match model.predict(x)? {
        Prediction::Value(v) => Ok(v),
        Prediction::Class { .. } => unreachable!("regressor produced a class"),
    }
}

fn constant_class(d: Direction) -> Prediction {
    Prediction::Class { direction: d, score: if d == Direction::Up { 0.5 } else { -0.5 } }
}

pub fn fit(spec: &ModelSpec, x: &[Vec<f64>], y: Targets<'_>) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    if x.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch { rows: x.len(), targets: y.len() });
    }
    let kind = spec.kind;
    if y.task() != kind.task() {
        return Err(ModelError::KindMismatch { kind: kind.name(), task: kind.task().as_str() });
    }
    let width = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(ModelError::WidthMismatch { expected: width, got: bad.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    if let Targets::Value(v) = y {
        if v.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
    }

    let constant = match y {
        Targets::Class(c) if c.iter().all(|d| *d == c[0]) => Some(constant_class(c[0])),
        Targets::Class(c) if c.len() < 2 => Some(constant_class(c[0])),
        Targets::Value(v) if v.len() < 2 => Some(Prediction::Value(v.iter().sum::<f64>() / v.len() as f64)),
        _ => None,
    };
    if let Some(p) = constant {
        return Ok(TrainedModel { kind, feature_width: width, state: Fitted::Constant(p) });
    }

    let p = params::Resolved::new(kind, &spec.params);
    use ModelKind::*;
    let state = match kind {
        OlsR => Fitted::Linear(linear::fit_ridge(x, &y.as_reals(), 0.0, false)),
        RidgeR => Fitted::Linear(linear::fit_ridge(x, &y.as_reals(), p.f64("alpha"), false)),
        RidgeC => {
            let signed: Vec<f64> = y.as_reals().iter().map(|v| 2.0 * v - 1.0).collect();
            Fitted::Linear(linear::fit_ridge(x, &signed, p.f64("alpha"), true))
        }
        LogisticC => Fitted::Linear(linear::fit_gradient(x, &y.as_reals(), linear::Loss::Log, &gd(&p), spec.seed)?),
        SgdC => {
            let loss = if p.str("loss") == "log" { linear::Loss::Log } else { linear::Loss::Hinge };
            Fitted::Linear(linear::fit_gradient(x, &y.as_reals(), loss, &gd(&p), spec.seed)?)
        }
        SgdR => Fitted::Linear(linear::fit_gradient(x, &y.as_reals(), linear::Loss::Squared, &gd(&p), spec.seed)?),
        PerceptronC => Fitted::Linear(linear::fit_perceptron(x, &y.as_reals(), p.usize("epochs"))),
        KnnC | KnnR => Fitted::Knn(knn::KnnModel::fit(x, y, p.usize("k"))),
        BernoulliNbC => Fitted::NaiveBayes(naive_bayes::BernoulliNb::fit(x, &y.as_reals(), p.f64("alpha"))),
        DecisionTreeC | DecisionTreeR | ExtraTreeC | ExtraTreeR => {
            let params = tree::TreeParams {
                criterion: criterion_for(kind.task()),
                max_depth: p.usize("max_depth"),
                min_samples_leaf: p.usize("min_samples_leaf"),
                max_features: width,
                random_thresholds: matches!(kind, ExtraTreeC | ExtraTreeR),
            };
            Fitted::Tree(tree::Tree::fit(x, &y.as_reals(), &params, spec.seed))
        }
        RandomForestC | RandomForestR | BaggingC | BaggingR => {
            let max_features = if matches!(kind, RandomForestC | RandomForestR) {
                match p.str("max_features") {
                    "sqrt" => ((width as f64).sqrt().round() as usize).max(1),
                    "half" => width.div_ceil(2),
                    _ => width,
                }
            } else {
                width
            };
            let params = ensemble::ForestParams {
                n_members: p.usize("n_members"),
                bootstrap: p.str("bootstrap") == "true",
                tree: tree::TreeParams {
                    criterion: criterion_for(kind.task()),
                    max_depth: p.usize("max_depth"),
                    min_samples_leaf: p.usize("min_samples_leaf"),
                    max_features,
                    random_thresholds: false,
                },
            };
            Fitted::Forest(ensemble::Forest::fit(x, &y.as_reals(), &params, spec.seed))
        }
    };
    Ok(TrainedModel { kind, feature_width: width, state })
}

fn gd(p: &params::Resolved) -> linear::GdParams {
    linear::GdParams {
        learning_rate: p.f64("learning_rate"),
        l2: p.f64("l2"),
        epochs: p.usize("epochs"),
        batch_size: p.usize("batch_size"),
    }
}

fn criterion_for(task: Task) -> Criterion {
    match task {
        Task::Classifier => Criterion::Gini,
        Task::Regressor => Criterion::Variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::{Down, Up};

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert_eq!(ModelKind::ALL.iter().filter(|k| k.task() == Task::Classifier).count(), 10);
        assert!("svm_c".parse::<ModelKind>().is_err());
    }

    #[test]
    fn ols_recovers_line_and_predicts() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 3.0 + 2.0 * i as f64).collect();
        let m = fit(&ModelSpec::new(ModelKind::OlsR), &x, Targets::Value(&y)).unwrap();
        let (b, w) = m.linear_coefficients().unwrap();
        assert!((b - 3.0).abs() < 1e-8);
        assert!((w[0] - 2.0).abs() < 1e-8);
        assert!((predict_value(&m, &[10.0]).unwrap() - 23.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_shrinks_to_zero() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 - 4.0, ((i * 7) % 5) as f64 - 2.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 * r[0] - 0.25 * r[1]).collect();
        let spec = ModelSpec::new(ModelKind::RidgeR).with_param("alpha", ParamValue::Float(1e9));
        let m = fit(&spec, &x, Targets::Value(&y)).unwrap();
        let (_, w) = m.linear_coefficients().unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-6), "{w:?}");
    }

    #[test]
    fn degenerate_windows_fit_constants() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        for kind in ModelKind::ALL.into_iter().filter(|k| k.task() == Task::Classifier) {
            let m = fit(&ModelSpec::new(kind), &x, Targets::Class(&[Up, Up, Up])).unwrap();
            assert!(m.is_constant());
            assert_eq!(predict_class(&m, &[7.0]).unwrap(), (Up, 0.5));
        }
        let m = fit(&ModelSpec::new(ModelKind::KnnR), &x[..1], Targets::Value(&[0.02])).unwrap();
        assert_eq!(predict_value(&m, &[0.0]).unwrap(), 0.02);
        let m = fit(&ModelSpec::new(ModelKind::SgdC), &x[..1], Targets::Class(&[Down])).unwrap();
        assert_eq!(predict_class(&m, &[0.0]).unwrap(), (Down, -0.5));
    }

    #[test]
    fn fit_error_paths() {
        let spec = ModelSpec::new(ModelKind::OlsR);
        assert_eq!(fit(&spec, &[], Targets::Value(&[])), Err(ModelError::EmptyTraining));
        assert!(matches!(
            fit(&spec, &[vec![1.0], vec![1.0, 2.0]], Targets::Value(&[0.0, 1.0])),
            Err(ModelError::WidthMismatch { .. })
        ));
        assert_eq!(
            fit(&spec, &[vec![f64::NAN], vec![1.0]], Targets::Value(&[0.0, 1.0])),
            Err(ModelError::NonFiniteInput)
        );
        assert!(matches!(
            fit(&spec, &[vec![1.0], vec![2.0]], Targets::Class(&[Up, Down])),
            Err(ModelError::KindMismatch { .. })
        ));
        let bad = ModelSpec::new(ModelKind::KnnC).with_param("k", ParamValue::Int(-1));
        assert!(matches!(
            fit(&bad, &[vec![1.0], vec![2.0]], Targets::Class(&[Up, Down])),
            Err(ModelError::InvalidParam(_))
        ));
    }

    #[test]
    fn predict_contract_errors() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = fit(&ModelSpec::new(ModelKind::KnnC), &x, Targets::Class(&[Up, Down])).unwrap();
        assert!(matches!(predict_class(&m, &[1.0]), Err(ModelError::WidthMismatch { .. })));
        assert!(matches!(predict_value(&m, &[1.0, 0.0]), Err(ModelError::KindMismatch { .. })));
        assert_eq!(predict_class(&m, &[f64::INFINITY, 0.0]), Err(ModelError::NonFiniteInput));
    }

    #[test]
    fn knn_single_point_and_mean() {
        let m = fit(&ModelSpec::new(ModelKind::KnnC), &[vec![1.0, 2.0]], Targets::Class(&[Up])).unwrap();
        assert_eq!(predict_class(&m, &[-5.0, 9.0]).unwrap().0, Up);

        let x = vec![vec![0.0], vec![1.0], vec![10.0]];
        let spec = ModelSpec::new(ModelKind::KnnR).with_param("k", ParamValue::Int(2));
        let m = fit(&spec, &x, Targets::Value(&[0.01, 0.03, 0.5])).unwrap();
        assert!((predict_value(&m, &[0.4]).unwrap() - 0.02).abs() < 1e-15);
    }

    /// Separable fixture worked through by hand (no standardization, zero
    /// init, examples visited in order, update on `y * (w.x + b) <= 0`):
    ///
    /// epoch 1: (2,1,+) mistake -> w=(2,1), b=1; (1,3,+) ok; (-1,-1,-) ok;
    ///          (-2,1,-) margin -(-4+1+1)=2 ok.
    /// epoch 2: no mistakes, stop.
    #[test]
    fn perceptron_matches_hand_run() {
        let x = vec![vec![2.0, 1.0], vec![1.0, 3.0], vec![-1.0, -1.0], vec![-2.0, 1.0]];
        let y = [Up, Up, Down, Down];
        let m = fit(&ModelSpec::new(ModelKind::PerceptronC), &x, Targets::Class(&y)).unwrap();
        let (b, w) = m.linear_coefficients().unwrap();
        assert_eq!((b, w), (1.0, &[2.0, 1.0][..]));
        for (row, label) in x.iter().zip(y) {
            assert_eq!(predict_class(&m, row).unwrap().0, label);
        }
    }

    #[test]
    fn knn_k1_reproduces_training_labels() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()]).collect();
        let y: Vec<Direction> = (0..30).map(|i| if (i * 7) % 3 == 0 { Up } else { Down }).collect();
        let spec = ModelSpec::new(ModelKind::KnnC).with_param("k", ParamValue::Int(1));
        let m = fit(&spec, &x, Targets::Class(&y)).unwrap();
        for (row, label) in x.iter().zip(&y) {
            assert_eq!(predict_class(&m, row).unwrap().0, *label);
        }
    }

    fn wavy(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.31).sin(), (t * 0.17).cos(), ((t * 0.05).sin() * 3.0).round()]
            })
            .collect();
        let y = x.iter().map(|r| 0.01 * r[0] - 0.02 * r[1] * r[2] + 0.001 * (r[0] * 9.0).sin()).collect();
        (x, y)
    }

    #[test]
    fn forest_of_one_equals_base_tree() {
        let (x, y) = wavy(50);
        let classes: Vec<Direction> = y.iter().map(|v| Direction::from_sign(*v)).collect();
        let one = |kind: ModelKind| {
            let mut s = ModelSpec::new(kind)
                .with_seed(17)
                .with_param("n_members", ParamValue::Int(1))
                .with_param("bootstrap", ParamValue::Text("false".into()));
            if matches!(kind, ModelKind::RandomForestC | ModelKind::RandomForestR) {
                s = s.with_param("max_features", ParamValue::Text("all".into()));
            }
            s
        };
        let cases = [
            (ModelKind::RandomForestR, ModelKind::DecisionTreeR),
            (ModelKind::BaggingR, ModelKind::DecisionTreeR),
            (ModelKind::RandomForestC, ModelKind::DecisionTreeC),
            (ModelKind::BaggingC, ModelKind::DecisionTreeC),
        ];
        for (ens, base) in cases {
            let targets = match base.task() {
                Task::Classifier => Targets::Class(&classes),
                Task::Regressor => Targets::Value(&y),
            };
            let e = fit(&one(ens), &x, targets).unwrap();
            let b = fit(&ModelSpec::new(base).with_seed(17), &x, targets).unwrap();
            for row in &x {
                let (pe, pb) = (e.predict(row).unwrap(), b.predict(row).unwrap());
                match (pe, pb) {
                    (Prediction::Value(a), Prediction::Value(b)) => assert_eq!(a.to_bits(), b.to_bits()),
                    (Prediction::Class { direction: da, .. }, Prediction::Class { direction: db, .. }) => {
                        assert_eq!(da, db)
                    }
                    _ => panic!("task mismatch"),
                }
            }
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let (x, y) = wavy(40);
        let classes: Vec<Direction> = y.iter().map(|v| Direction::from_sign(*v)).collect();
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind).with_seed(99);
            let targets = match kind.task() {
                Task::Classifier => Targets::Class(&classes),
                Task::Regressor => Targets::Value(&y),
            };
            let a = fit(&spec, &x, targets).unwrap();
            let b = fit(&spec, &x, targets).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn standardization_is_stored_and_reapplied() {
        let (x, y) = wavy(25);
        let m = fit(&ModelSpec::new(ModelKind::SgdR).with_seed(3), &x, Targets::Value(&y)).unwrap();
        let (mean, scale) = m.standardization().unwrap();
        for j in 0..3 {
            let col: Vec<f64> = x.iter().map(|r| (r[j] - mean[j]) / scale[j]).collect();
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mu.abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_loss_is_monotone_on_separable_pair() {
        let x = vec![vec![-1.0, 0.5], vec![1.0, -0.5]];
        let y = [Down, Up];
        for (kind, loss) in [(ModelKind::LogisticC, "log"), (ModelKind::SgdC, "hinge"), (ModelKind::SgdC, "log")] {
            let mut spec = ModelSpec::new(kind)
                .with_param("learning_rate", ParamValue::Float(0.1))
                .with_param("l2", ParamValue::Float(0.0))
                .with_param("epochs", ParamValue::Int(100))
                .with_param("batch_size", ParamValue::Int(2));
            if kind == ModelKind::SgdC {
                spec = spec.with_param("loss", ParamValue::Text(loss.into()));
            }
            let m = fit(&spec, &x, Targets::Class(&y)).unwrap();
            let hist = m.training_loss().unwrap();
            assert_eq!(hist.len(), 100);
            assert!(hist.windows(2).all(|w| w[1] <= w[0]), "{kind:?}/{loss}: {hist:?}");
            assert!(hist[99] < hist[0]);
        }
    }

    #[test]
    fn every_kind_handles_real_windows() {
        let (x, y) = wavy(28);
        let classes: Vec<Direction> = y.iter().map(|v| Direction::from_sign(*v)).collect();
        for kind in ModelKind::ALL {
            let targets = match kind.task() {
                Task::Classifier => Targets::Class(&classes),
                Task::Regressor => Targets::Value(&y),
            };
            let m = fit(&ModelSpec::new(kind).with_seed(1), &x, targets).unwrap();
            let p = m.predict(&x[3]).unwrap();
            match p {
                Prediction::Class { direction, score } => {
                    assert!(score.is_finite());
                    assert_eq!(direction, Direction::from_sign(score));
                }
                Prediction::Value(v) => assert!(v.is_finite()),
            }
        }
    }
}
