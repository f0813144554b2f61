use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
    FcWeight,
    FcBias,
}

impl ParamKind {
    pub fn tag(self) -> &'static str {
        match self {
            ParamKind::ConvWeight => "conv_weight",
            ParamKind::ConvBias => "conv_bias",
            ParamKind::BnGamma => "bn_gamma",
            ParamKind::BnBeta => "bn_beta",
            ParamKind::FcWeight => "fc_weight",
            ParamKind::FcBias => "fc_bias",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "conv_weight" => ParamKind::ConvWeight,
            "conv_bias" => ParamKind::ConvBias,
            "bn_gamma" => ParamKind::BnGamma,
            "bn_beta" => ParamKind::BnBeta,
            "fc_weight" => ParamKind::FcWeight,
            "fc_bias" => ParamKind::FcBias,
            _ => return None,
        })
    }
}

/// One trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub kind: ParamKind,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    /// Set once a backward pass has written into `grad`.
    pub has_grad: bool,
}

/// Element counts per parameter category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub conv_weights: usize,
    pub conv_biases: usize,
    pub bn_affine: usize,
    pub fc_weights: usize,
    pub fc_biases: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.conv_weights + self.conv_biases + self.bn_affine + self.fc_weights + self.fc_biases
    }
}

/// Ordered name → parameter map plus non-trainable buffers (batch-norm
/// running statistics). Iteration order is insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: IndexMap<String, Param<T>>,
    buffers: IndexMap<String, Tensor<T>>,
    pub step_count: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
            buffers: IndexMap::new(),
            step_count: 0,
        }
    }

    pub fn add(&mut self, name: &str, kind: ParamKind, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) || self.buffers.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter name `{name}`")));
        }
        let zeros = Tensor::zeros(value.shape());
        self.params.insert(
            name.to_string(),
            Param {
                kind,
                grad: zeros.clone(),
                adam_m: zeros.clone(),
                adam_v: zeros,
                value,
                has_grad: false,
            },
        );
        Ok(())
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) || self.buffers.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate buffer name `{name}`")));
        }
        self.buffers.insert(name.to_string(), value);
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.param(name)?.value)
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Two buffers borrowed mutably at once (running mean and variance).
    pub fn buffer_pair_mut(&mut self, a: &str, b: &str) -> Result<(&mut Tensor<T>, &mut Tensor<T>)> {
        let ia = self
            .buffers
            .get_index_of(a)
            .ok_or_else(|| Error::UnknownParam(a.to_string()))?;
        let ib = self
            .buffers
            .get_index_of(b)
            .ok_or_else(|| Error::UnknownParam(b.to_string()))?;
        if ia == ib {
            return Err(Error::Invalid(format!("buffer `{a}` requested twice")));
        }
        let [x, y] = self
            .buffers
            .get_disjoint_indices_mut([ia, ib])
            .map_err(|e| Error::Invalid(e.to_string()))?;
        Ok((x.1, y.1))
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let p = self.param_mut(name)?;
        p.grad.add_assign(grad)?;
        p.has_grad = true;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
            p.has_grad = false;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars; running statistics are not counted.
    pub fn count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn breakdown(&self) -> ParamBreakdown {
        let mut b = ParamBreakdown::default();
        for p in self.params.values() {
            let n = p.value.len();
            match p.kind {
                ParamKind::ConvWeight => b.conv_weights += n,
                ParamKind::ConvBias => b.conv_biases += n,
                ParamKind::BnGamma | ParamKind::BnBeta => b.bn_affine += n,
                ParamKind::FcWeight => b.fc_weights += n,
                ParamKind::FcBias => b.fc_biases += n,
            }
        }
        b
    }

    /// Same names, shapes and values in another precision. Gradients and
    /// optimizer state are reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, p) in &self.params {
            out.add(name, p.kind, p.value.cast()).expect("unique names");
        }
        for (name, b) in &self.buffers {
            out.add_buffer(name, b.cast()).expect("unique names");
        }
        out.step_count = self.step_count;
        out
    }
}

/// He-normal initialization with standard deviation `sqrt(2 / fan_in)`.
pub fn he_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}
