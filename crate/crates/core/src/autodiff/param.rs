use std::sync::RwLock;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named model state. Trainable parameters collect gradients; buffers
/// (e.g. normalisation running statistics) are only checkpointed.
pub struct Parameter {
    name: String,
    trainable: bool,
    value: RwLock<Tensor>,
}

impl Clone for Parameter {
    fn clone(&self) -> Self {
        let v = self.value();
        let fresh = if self.trainable {
            Tensor::leaf(v.shape(), v.to_vec()).expect("finite parameter")
        } else {
            v.detach()
        };
        Parameter {
            name: self.name.clone(),
            trainable: self.trainable,
            value: RwLock::new(fresh),
        }
    }
}

impl std::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parameter")
            .field("name", &self.name)
            .field("shape", &self.shape())
            .field("trainable", &self.trainable)
            .finish()
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            trainable: true,
            value: RwLock::new(Tensor::leaf(shape, data)?),
        })
    }

    pub fn buffer(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            trainable: false,
            value: RwLock::new(Tensor::new(shape, data)?),
        })
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n]).expect("zeros are finite")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    /// Current value; trainable values are graph leaves.
    pub fn value(&self) -> Tensor {
        self.value.read().expect("parameter lock").clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    /// Gradient accumulated since the value was last replaced.
    pub fn grad(&self) -> Vec<f64> {
        self.value().grad()
    }

    pub fn zero_grad(&self) {
        self.value().zero_grad();
    }

    /// Replace the value (which also discards any accumulated gradient).
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        let shape = self.shape();
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(
                "set_data",
                format!("{}: {} values for shape {shape:?}", self.name, data.len()),
            ));
        }
        let t = if self.trainable {
            Tensor::leaf(&shape, data)?
        } else {
            Tensor::new(&shape, data)?
        };
        *self.value.write().expect("parameter lock") = t;
        Ok(())
    }
}

/// Anything that owns parameters, visited in a stable order.
pub trait Module {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>);

    fn param_list(&self) -> Vec<&Parameter> {
        let mut v = Vec::new();
        self.parameters(&mut v);
        v
    }

    /// Number of trainable scalars.
    fn num_params(&self) -> usize {
        self.param_list().iter().filter(|p| p.is_trainable()).map(|p| p.numel()).sum()
    }

    fn zero_grad(&self) {
        for p in self.param_list() {
            p.zero_grad();
        }
    }
}
