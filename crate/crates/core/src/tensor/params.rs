use std::collections::BTreeMap;

use super::tsr::{NamedTensor, WeightFile};
use super::{numel, Graph, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Host-side parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::Shape(format!("param shape {shape:?} vs {} values", data.len())));
        }
        Ok(Param {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Param {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Param {
            shape: shape.to_vec(),
            data: vec![v; numel(shape)],
        }
    }

    /// He-uniform: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let data = (0..numel(shape)).map(|_| rng.uniform(-bound, bound)).collect();
        Param {
            shape: shape.to_vec(),
            data,
        }
    }
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Param) {
        self.params.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Moves every parameter of `other` in, each name prefixed by `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: ParamStore) {
        for (k, v) in other.params {
            self.params.insert(format!("{prefix}{k}"), v);
        }
    }

    /// Parameters whose name starts with `prefix`, with the prefix removed.
    pub fn sub_store(&self, prefix: &str) -> ParamStore {
        let params = self
            .params
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        ParamStore { params }
    }

    /// Single precision copy for a `TSR1` file.
    pub fn to_weight_file(&self) -> WeightFile {
        let tensors = self
            .params
            .iter()
            .map(|(name, p)| NamedTensor {
                name: name.clone(),
                shape: p.shape.clone(),
                data: p.data.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        WeightFile { tensors }
    }

    pub fn from_weight_file(w: &WeightFile) -> Result<Self> {
        let mut store = ParamStore::new();
        for t in &w.tensors {
            let data = t.data.iter().map(|&v| v as f64).collect();
            if store.contains(&t.name) {
                return Err(Error::Format(format!("duplicate tensor {:?}", t.name)));
            }
            store.insert(t.name.clone(), Param::new(&t.shape, data)?);
        }
        Ok(store)
    }

    /// Places every parameter on `graph`, as variables when `trainable`.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> Result<BoundParams<'g>> {
        let mut map = BTreeMap::new();
        for (name, p) in &self.params {
            let t = if trainable {
                graph.variable(p.data.clone(), &p.shape)?
            } else {
                graph.constant(p.data.clone(), &p.shape)?
            };
            map.insert(name.clone(), t);
        }
        Ok(BoundParams { map })
    }

    /// Plain gradient descent: `p -= lr * grad` for every bound parameter
    /// that received a gradient.
    pub fn sgd_step(&mut self, bound: &BoundParams<'_>, lr: f64) {
        for (name, t) in &bound.map {
            if let (Some(p), Some(g)) = (self.params.get_mut(name), t.grad()) {
                for (v, g) in p.data.iter_mut().zip(g) {
                    *v -= lr * g;
                }
            }
        }
    }
}

/// Parameters of a [`ParamStore`] placed on one graph.
#[derive(Debug, Clone)]
pub struct BoundParams<'g> {
    map: BTreeMap<String, Tensor<'g>>,
}

impl<'g> BoundParams<'g> {
    pub fn get(&self, name: &str) -> Result<Tensor<'g>> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    /// Optional parameter, e.g. a bias.
    pub fn opt(&self, name: &str) -> Option<Tensor<'g>> {
        self.map.get(name).copied()
    }

    /// Replaces (or adds) one bound parameter, e.g. to differentiate with
    /// respect to it alone.
    pub fn with(mut self, name: &str, t: Tensor<'g>) -> Self {
        self.map.insert(name.to_string(), t);
        self
    }
}
