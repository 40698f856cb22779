use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

/// Named parameter tensors in a fixed insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Rc<Tensor>>,
    index: HashMap<String, usize>,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a.bit_eq(b))
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(Rc::new(value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &*self.values[i])
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        Ok(Rc::make_mut(&mut self.values[i]))
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(Error::shape("set_param", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(|v| &**v))
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter_mut().map(Rc::make_mut))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Parameter count of the entries whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// FNV-1a over names, shapes and exact value bits.
    pub fn content_hash(&self) -> u64 {
        let mut h = crate::cli::archive::Fnv1a::new();
        for (name, t) in self.iter() {
            h.write(name.as_bytes());
            h.write(&t.bit_hash().to_le_bytes());
        }
        h.finish()
    }

    /// Adds every parameter to `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound<'_> {
        let ids = self.values.iter().map(|v| graph.leaf_rc(v.clone())).collect();
        Bound { store: self, ids }
    }

    /// Moves all entries of `other` in, prefixing their names.
    pub fn absorb(&mut self, prefix: &str, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            self.insert(format!("{prefix}{name}"), t.clone())?;
        }
        Ok(())
    }

    /// Entries under `prefix`, names kept whole.
    pub fn extract_prefixed(&self, prefix: &str) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            if name.starts_with(prefix) {
                out.insert(name, t.clone())?;
            }
        }
        Ok(out)
    }

    /// Entries under `prefix`, with the prefix stripped.
    pub fn extract(&self, prefix: &str) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, t.clone())?;
            }
        }
        Ok(out)
    }
}

/// Graph handles for a bound [`ParamStore`].
pub struct Bound<'a> {
    store: &'a ParamStore,
    ids: Vec<NodeId>,
}

impl<'a> Bound<'a> {
    /// Handles for `store` that already exist in a graph, in store order.
    pub fn from_ids(store: &'a ParamStore, ids: &[NodeId]) -> Result<Self> {
        if ids.len() != store.len() {
            return Err(Error::shape("bind", &[ids.len()], &[store.len()]));
        }
        Ok(Bound {
            store,
            ids: ids.to_vec(),
        })
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.store
            .index
            .get(name)
            .map(|&i| self.ids[i])
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// All handles, in store order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}
