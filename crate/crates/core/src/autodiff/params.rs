use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tape::Tensor;
use crate::error::{Error, Result};

/// Named trainable arrays. Ids are insertion indices and stay stable for the
/// lifetime of the store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(self.values.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(|i| &mut self.values[i])
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn zeros_like(&self) -> GradMap {
        GradMap { grads: self.values.iter().map(|v| Array2::zeros(v.dim())).collect() }
    }

    pub fn to_serialized(&self) -> BTreeMap<String, SerializedTensor> {
        self.iter().map(|(n, v)| (n.to_string(), SerializedTensor::from(v))).collect()
    }

    /// Overwrites every parameter from `map`. The key sets must match exactly
    /// and every shape must agree.
    pub fn load_serialized(&mut self, map: &BTreeMap<String, SerializedTensor>) -> Result<()> {
        if map.len() != self.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, architecture expects {}",
                map.len(),
                self.len()
            )));
        }
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let t = map
                .get(name)
                .ok_or_else(|| Error::config(format!("checkpoint is missing tensor `{name}`")))?;
            let loaded = t.to_tensor()?;
            if loaded.dim() != value.dim() {
                return Err(Error::config(format!(
                    "tensor `{name}` has shape {:?}, architecture expects {:?}",
                    loaded.dim(),
                    value.dim()
                )));
            }
            *value = loaded;
        }
        Ok(())
    }
}

/// `{shape: [rows, cols], data: [...]}` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerializedTensor {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl From<&Tensor> for SerializedTensor {
    fn from(t: &Tensor) -> Self {
        let (r, c) = t.dim();
        Self { shape: [r, c], data: t.iter().copied().collect() }
    }
}

impl SerializedTensor {
    pub fn to_tensor(&self) -> Result<Tensor> {
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| Error::config(format!("bad tensor data: {e}")))
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradMap {
    grads: Vec<Tensor>,
}

impl GradMap {
    pub fn get(&self, id: usize) -> &Tensor {
        &self.grads[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.grads[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn add_assign(&mut self, other: &GradMap) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }
}
