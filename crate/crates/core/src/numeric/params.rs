use std::collections::HashMap;
use std::ops::{Deref, DerefMut};

use indexmap::IndexMap;

use super::{Graph, NumericError, Real, Result, Tensor, Var};

/// Named trainable tensors in a fixed registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F> {
    tensors: IndexMap<String, Tensor<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<F>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<F>> {
        self.get(name)
            .ok_or_else(|| NumericError::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// All scalars flattened in registration order.
    pub fn flatten(&self) -> Vec<F> {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Overwrites all scalars from a flat buffer in registration order.
    pub fn assign_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(NumericError::InvalidArgument(format!(
                "flat buffer has {} values, store holds {}",
                flat.len(),
                self.scalar_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// A [`Graph`] bound to a parameter store. Parameters are recorded lazily,
/// once per tape, the first time they are requested.
pub struct Tape<'p, F> {
    graph: Graph<F>,
    store: &'p ParamStore<F>,
    bound: HashMap<String, Var>,
}

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(store: &'p ParamStore<F>) -> Self {
        Self {
            graph: Graph::new(),
            store,
            bound: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore<F> {
        self.store
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let tensor = self.store.require(name)?.clone();
        let v = self.graph.leaf(tensor)?;
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&mut self, tensor: Tensor<F>) -> Result<Var> {
        self.graph.leaf(tensor)
    }

    pub fn graph(&self) -> &Graph<F> {
        &self.graph
    }

    /// Gradient of `loss` for every parameter in the store; parameters that
    /// were never recorded get zeros.
    pub fn param_gradients(&self, loss: Var) -> Result<IndexMap<String, Tensor<F>>> {
        let mut grads = self.graph.backward(loss)?;
        let mut out = IndexMap::with_capacity(self.store.len());
        for (name, t) in self.store.iter() {
            let g = self
                .bound
                .get(name)
                .and_then(|&v| grads.take(v))
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()));
            out.insert(name.to_string(), g);
        }
        Ok(out)
    }
}

impl<F> Deref for Tape<'_, F> {
    type Target = Graph<F>;

    fn deref(&self) -> &Graph<F> {
        &self.graph
    }
}

impl<F> DerefMut for Tape<'_, F> {
    fn deref_mut(&mut self) -> &mut Graph<F> {
        &mut self.graph
    }
}
