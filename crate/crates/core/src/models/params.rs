//! Hyperparameter values, search spaces and per-kind declarations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

impl ParamValue {
    /// Parses a CLI-style literal: integer, then float, then bare text.
    pub fn parse_literal(s: &str) -> Self {
        if let Ok(i) = s.parse::<i64>() {
            ParamValue::Int(i)
        } else if let Ok(f) = s.parse::<f64>() {
            ParamValue::Float(f)
        } else {
            ParamValue::Text(s.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Float(v) if v.fract() == 0.0 && v.is_finite() => Some(*v as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Parses `name=value` pairs separated by commas, e.g. `k=5,weights=uniform`.
pub fn parse_params(text: &str) -> Result<Params, ModelError> {
    let mut params = Params::new();
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| ModelError::InvalidParam(format!("expected name=value, got `{pair}`")))?;
        params.insert(name.trim().to_string(), ParamValue::parse_literal(value.trim()));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Inclusive on both ends; `lo == hi` is a fixed value.
    Int { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

impl Distribution {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN bounds must fail
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Distribution::Uniform { lo, hi } if !(lo < hi) => Err(format!("uniform({lo}, {hi}): lo >= hi")),
            Distribution::LogUniform { lo, hi } if !(lo < hi && *lo > 0.0) => {
                Err(format!("loguniform({lo}, {hi}): need 0 < lo < hi"))
            }
            Distribution::Int { lo, hi } if lo > hi => Err(format!("int({lo}, {hi}): lo > hi")),
            Distribution::Categorical { choices } if choices.is_empty() => Err("empty categorical".into()),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match self {
            Distribution::Uniform { lo, hi } | Distribution::LogUniform { lo, hi } => {
                value.as_f64().is_some_and(|v| v >= *lo && v <= *hi)
            }
            Distribution::Int { lo, hi } => value.as_i64().is_some_and(|v| v >= *lo && v <= *hi),
            Distribution::Categorical { choices } => value.as_str().is_some_and(|v| choices.iter().any(|c| c == v)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperParamSpace {
    pub dims: Vec<(String, Distribution)>,
}

impl HyperParamSpace {
    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Distribution> {
        self.dims.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.dims.iter().try_for_each(|(n, d)| d.validate().map_err(|e| format!("{n}: {e}")))
    }
}

/// Admissible values of a parameter, wider than its search range.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Domain {
    PositiveReal,
    NonNegReal,
    PositiveInt,
    /// 0 means "unlimited" where the parameter is a limit.
    NonNegInt,
    OneOf(&'static [&'static str]),
}

impl Domain {
    fn admits(&self, v: &ParamValue) -> bool {
        match self {
            Domain::PositiveReal => v.as_f64().is_some_and(|x| x.is_finite() && x > 0.0),
            Domain::NonNegReal => v.as_f64().is_some_and(|x| x.is_finite() && x >= 0.0),
            Domain::PositiveInt => v.as_i64().is_some_and(|x| x >= 1),
            Domain::NonNegInt => v.as_i64().is_some_and(|x| x >= 0),
            Domain::OneOf(set) => v.as_str().is_some_and(|s| set.contains(&s)),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ParamDef {
    pub name: &'static str,
    pub domain: Domain,
    pub default: ParamValue,
    pub search: Option<Distribution>,
}

fn def(name: &'static str, domain: Domain, default: ParamValue, search: Option<Distribution>) -> ParamDef {
    ParamDef { name, domain, default, search }
}

fn learning_rate(default: f64) -> ParamDef {
    def(
        "learning_rate",
        Domain::PositiveReal,
        ParamValue::Float(default),
        Some(Distribution::LogUniform { lo: 1e-4, hi: 1.0 }),
    )
}

fn l2() -> ParamDef {
    def("l2", Domain::NonNegReal, ParamValue::Float(1e-4), Some(Distribution::LogUniform { lo: 1e-6, hi: 1.0 }))
}

fn epochs() -> ParamDef {
    def("epochs", Domain::PositiveInt, ParamValue::Int(50), Some(Distribution::Int { lo: 5, hi: 200 }))
}

fn batch_size(default: i64) -> ParamDef {
    def("batch_size", Domain::PositiveInt, ParamValue::Int(default), Some(Distribution::Int { lo: 1, hi: 32 }))
}

fn ridge_alpha() -> ParamDef {
    def("alpha", Domain::NonNegReal, ParamValue::Float(1.0), Some(Distribution::LogUniform { lo: 1e-6, hi: 1e3 }))
}

fn tree_defs() -> Vec<ParamDef> {
    vec![
        def("max_depth", Domain::NonNegInt, ParamValue::Int(0), Some(Distribution::Int { lo: 1, hi: 12 })),
        def("min_samples_leaf", Domain::PositiveInt, ParamValue::Int(1), Some(Distribution::Int { lo: 1, hi: 20 })),
    ]
}

fn ensemble_defs(default_members: i64) -> Vec<ParamDef> {
    let mut defs = vec![def(
        "n_members",
        Domain::PositiveInt,
        ParamValue::Int(default_members),
        Some(Distribution::Int { lo: 5, hi: 200 }),
    )];
    defs.extend(tree_defs());
    defs.push(def("bootstrap", Domain::OneOf(&["true", "false"]), ParamValue::Text("true".into()), None));
    defs
}

const MAX_FEATURES: &[&str] = &["sqrt", "half", "all"];

fn max_features(default: &str) -> ParamDef {
    def(
        "max_features",
        Domain::OneOf(MAX_FEATURES),
        ParamValue::Text(default.into()),
        Some(Distribution::Categorical { choices: MAX_FEATURES.iter().map(|s| s.to_string()).collect() }),
    )
}

pub(crate) fn param_defs(kind: ModelKind) -> Vec<ParamDef> {
    use ModelKind::*;
    match kind {
        LogisticC => vec![learning_rate(0.1), l2(), epochs(), batch_size(8)],
        SgdC => vec![
            def(
                "loss",
                Domain::OneOf(&["hinge", "log"]),
                ParamValue::Text("hinge".into()),
                Some(Distribution::Categorical { choices: vec!["hinge".into(), "log".into()] }),
            ),
            learning_rate(0.01),
            l2(),
            epochs(),
            batch_size(1),
        ],
        SgdR => vec![learning_rate(0.01), l2(), epochs(), batch_size(1)],
        RidgeC | RidgeR => vec![ridge_alpha()],
        PerceptronC => vec![epochs()],
        KnnC | KnnR => {
            vec![def("k", Domain::PositiveInt, ParamValue::Int(5), Some(Distribution::Int { lo: 1, hi: 25 }))]
        }
        BernoulliNbC => vec![def(
            "alpha",
            Domain::PositiveReal,
            ParamValue::Float(1.0),
            Some(Distribution::LogUniform { lo: 1e-3, hi: 10.0 }),
        )],
        DecisionTreeC | DecisionTreeR | ExtraTreeC | ExtraTreeR => tree_defs(),
        RandomForestC => {
            let mut d = ensemble_defs(100);
            d.push(max_features("sqrt"));
            d
        }
        RandomForestR => {
            let mut d = ensemble_defs(100);
            d.push(max_features("all"));
            d
        }
        BaggingC | BaggingR => ensemble_defs(10),
        OlsR => vec![],
    }
}

/// The kind's search space: every tunable parameter with its distribution.
pub fn default_space(kind: ModelKind) -> HyperParamSpace {
    HyperParamSpace {
        dims: param_defs(kind)
            .into_iter()
            .filter_map(|d| d.search.map(|s| (d.name.to_string(), s)))
            .collect(),
    }
}

pub fn validate_params(kind: ModelKind, params: &Params) -> Result<(), ModelError> {
    let defs = param_defs(kind);
    for (name, value) in params {
        let def = defs
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| ModelError::InvalidParam(format!("{} has no parameter `{name}`", kind.name())))?;
        if !def.domain.admits(value) {
            return Err(ModelError::InvalidParam(format!("{}: `{name}` = {value} is out of domain", kind.name())));
        }
    }
    Ok(())
}

/// Typed lookup with declared defaults. Assumes params already validated.
pub(crate) struct Resolved {
    defs: Vec<ParamDef>,
    params: Params,
}

impl Resolved {
    pub fn new(kind: ModelKind, params: &Params) -> Self {
        Self { defs: param_defs(kind), params: params.clone() }
    }

    fn value(&self, name: &str) -> &ParamValue {
        self.params
            .get(name)
            .or_else(|| self.defs.iter().find(|d| d.name == name).map(|d| &d.default))
            .unwrap_or_else(|| panic!("undeclared parameter `{name}`"))
    }

    pub fn f64(&self, name: &str) -> f64 {
        self.value(name).as_f64().expect("validated real")
    }

    pub fn usize(&self, name: &str) -> usize {
        self.value(name).as_i64().expect("validated integer") as usize
    }

    pub fn str(&self, name: &str) -> &str {
        self.value(name).as_str().expect("validated text")
    }
}
