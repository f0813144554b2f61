//! Stateful layers over the functional kernels, plus the three combinators
//! the detector needs: a plain chain, an identity-skip residual, and a
//! two-path sum.
//!
//! Parameters live in a shared [`ParamStore`] under `"{layer}.{field}"`
//! names; layers only remember their own names and the activations needed
//! for the backward pass.

use rand::Rng;

use crate::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::norm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormConfig};
use crate::ops;
use crate::params::{he_normal, ParamKind};
use crate::{Error, ParamStore, Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Flattened description of a leaf layer, used for parameter and MAC
/// accounting independently of the stored tensors.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        name: String,
        geometry: ConvGeometry,
        bias: bool,
    },
    BatchNorm {
        name: String,
        channels: usize,
        cfg: BatchNormConfig,
    },
    Relu,
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    FullyConnected {
        name: String,
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { geometry: g, .. } => {
                if g.kernel == 1 && g.groups == 1 {
                    "pointwise-conv"
                } else if g.groups == g.in_channels && g.in_channels == g.out_channels {
                    "depthwise-conv"
                } else {
                    "conv2d"
                }
            }
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::GlobalAvgPool => "global-avg-pool",
            LayerSpec::FullyConnected { .. } => "fully-connected",
            LayerSpec::Softmax => "softmax",
        }
    }
}

pub trait Layer<T: Scalar>: Send {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Consumes the gradient of the output, accumulates parameter gradients
    /// into `store`, and returns the gradient of the input.
    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>>;

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>>;

    /// Multiply-accumulates for one forward pass over `in_dims`.
    fn macs(&self, in_dims: &[usize]) -> Result<u64>;

    fn specs(&self, out: &mut Vec<LayerSpec>);
}

fn no_cache(layer: &str) -> Error {
    Error::Invalid(format!("{layer}: backward called before forward"))
}

fn dims4(d: &[usize]) -> Result<[usize; 4]> {
    d.try_into()
        .map_err(|_| Error::Shape(format!("expected rank-4 dims, got {d:?}")))
}

pub struct Conv2d<T> {
    name: String,
    geometry: ConvGeometry,
    bias: bool,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Registers `{name}.weight` (He-normal, fan-in = taps per output) and,
    /// when `bias`, a zero `{name}.bias`.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        geometry: ConvGeometry,
        bias: bool,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        geometry.validate()?;
        let fan_in = geometry.in_per_group() * geometry.kernel * geometry.kernel;
        store.add(
            &format!("{name}.weight"),
            ParamKind::ConvWeight,
            he_normal(&geometry.weight_shape(), fan_in, rng),
        )?;
        if bias {
            store.add(
                &format!("{name}.bias"),
                ParamKind::ConvBias,
                Tensor::zeros(&[geometry.out_channels]),
            )?;
        }
        Ok(Self {
            name: name.to_string(),
            geometry,
            bias,
            input: None,
        })
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let w = store.value(&format!("{}.weight", self.name))?;
        let b = if self.bias {
            Some(store.value(&format!("{}.bias", self.name))?)
        } else {
            None
        };
        let y = conv2d_forward(&x, w, b, &self.geometry)?;
        self.input = Some(x);
        Ok(y)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| no_cache(&self.name))?;
        let wname = format!("{}.weight", self.name);
        let grads = conv2d_backward(&x, store.value(&wname)?, &grad, self.bias, &self.geometry)?;
        store.accumulate_grad(&wname, &grads.w)?;
        if let Some(gb) = grads.b {
            store.accumulate_grad(&format!("{}.bias", self.name), &gb)?;
        }
        Ok(grads.x)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let [b, c, h, w] = dims4(in_dims)?;
        if c != self.geometry.in_channels {
            return Err(Error::Shape(format!(
                "{}: expects {} channels, got {c}",
                self.name, self.geometry.in_channels
            )));
        }
        let (ho, wo) = self.geometry.out_size(h, w)?;
        Ok(vec![b, self.geometry.out_channels, ho, wo])
    }

    fn macs(&self, in_dims: &[usize]) -> Result<u64> {
        let [b, _, h, w] = dims4(in_dims)?;
        Ok(b as u64 * self.geometry.macs(h, w)?)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::Conv2d {
            name: self.name.clone(),
            geometry: self.geometry,
            bias: self.bias,
        });
    }
}

pub struct BatchNorm<T> {
    name: String,
    channels: usize,
    cfg: BatchNormConfig,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    /// Registers `{name}.gamma` = 1, `{name}.beta` = 0 and the running
    /// statistics buffers.
    pub fn new(name: &str, channels: usize, cfg: BatchNormConfig, store: &mut ParamStore<T>) -> Result<Self> {
        store.add(
            &format!("{name}.gamma"),
            ParamKind::BnGamma,
            Tensor::full(&[channels], T::one()),
        )?;
        store.add(&format!("{name}.beta"), ParamKind::BnBeta, Tensor::zeros(&[channels]))?;
        store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[channels]))?;
        store.add_buffer(&format!("{name}.running_var"), Tensor::full(&[channels], T::one()))?;
        Ok(Self {
            name: name.to_string(),
            channels,
            cfg,
            cache: None,
        })
    }

    pub fn gamma_name(&self) -> String {
        format!("{}.gamma", self.name)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let gamma = store.value(&format!("{}.gamma", self.name))?.clone();
        let beta = store.value(&format!("{}.beta", self.name))?.clone();
        let (rm, rv) = store.buffer_pair_mut(
            &format!("{}.running_mean", self.name),
            &format!("{}.running_var", self.name),
        )?;
        let (y, cache) = batchnorm_forward(
            &x,
            &gamma,
            &beta,
            rm.data_mut(),
            rv.data_mut(),
            self.cfg,
            mode == Mode::Train,
        )?;
        self.cache = Some(cache);
        Ok(y)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| no_cache(&self.name))?;
        let gname = format!("{}.gamma", self.name);
        let (gx, gg, gb) = batchnorm_backward(&grad, store.value(&gname)?, &cache)?;
        store.accumulate_grad(&gname, &gg)?;
        store.accumulate_grad(&format!("{}.beta", self.name), &gb)?;
        Ok(gx)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let [_, c, _, _] = dims4(in_dims)?;
        if c != self.channels {
            return Err(Error::Shape(format!(
                "{}: expects {} channels, got {c}",
                self.name, self.channels
            )));
        }
        Ok(in_dims.to_vec())
    }

    fn macs(&self, _in_dims: &[usize]) -> Result<u64> {
        Ok(0)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::BatchNorm {
            name: self.name.clone(),
            channels: self.channels,
            cfg: self.cfg,
        });
    }
}

#[derive(Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn forward(&mut self, _store: &mut ParamStore<T>, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = ops::relu_forward(&x);
        self.input = Some(x);
        Ok(y)
    }

    fn backward(&mut self, _store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| no_cache("relu"))?;
        ops::relu_backward(&x, &grad)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        Ok(in_dims.to_vec())
    }

    fn macs(&self, _in_dims: &[usize]) -> Result<u64> {
        Ok(0)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::Relu);
    }
}

pub struct AvgPool {
    kernel: usize,
    stride: usize,
    in_dims: Option<[usize; 4]>,
}

impl AvgPool {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            in_dims: None,
        }
    }
}

impl<T: Scalar> Layer<T> for AvgPool {
    fn forward(&mut self, _store: &mut ParamStore<T>, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.in_dims = Some(x.dims4()?);
        ops::avgpool_forward(&x, self.kernel, self.stride)
    }

    fn backward(&mut self, _store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let dims = self.in_dims.take().ok_or_else(|| no_cache("avgpool"))?;
        ops::avgpool_backward(dims, &grad, self.kernel, self.stride)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let [b, c, h, w] = dims4(in_dims)?;
        let (ho, wo) = ops::avgpool_out_size(h, w, self.kernel, self.stride)?;
        Ok(vec![b, c, ho, wo])
    }

    fn macs(&self, _in_dims: &[usize]) -> Result<u64> {
        Ok(0)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::AvgPool {
            kernel: self.kernel,
            stride: self.stride,
        });
    }
}

#[derive(Default)]
pub struct GlobalAvgPool {
    in_dims: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self { in_dims: None }
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn forward(&mut self, _store: &mut ParamStore<T>, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.in_dims = Some(x.dims4()?);
        ops::gap_forward(&x)
    }

    fn backward(&mut self, _store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let dims = self.in_dims.take().ok_or_else(|| no_cache("global-avg-pool"))?;
        ops::gap_backward(dims, &grad)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let [b, c, _, _] = dims4(in_dims)?;
        Ok(vec![b, c])
    }

    fn macs(&self, _in_dims: &[usize]) -> Result<u64> {
        Ok(0)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::GlobalAvgPool);
    }
}

pub struct Linear<T> {
    name: String,
    in_features: usize,
    out_features: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    /// Registers `{name}.weight` `(out, in)` He-normal and a zero `{name}.bias`.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_features: usize,
        out_features: usize,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        store.add(
            &format!("{name}.weight"),
            ParamKind::FcWeight,
            he_normal(&[out_features, in_features], in_features, rng),
        )?;
        store.add(
            &format!("{name}.bias"),
            ParamKind::FcBias,
            Tensor::zeros(&[out_features]),
        )?;
        Ok(Self {
            name: name.to_string(),
            in_features,
            out_features,
            input: None,
        })
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = ops::linear_forward(
            &x,
            store.value(&format!("{}.weight", self.name))?,
            Some(store.value(&format!("{}.bias", self.name))?),
        )?;
        self.input = Some(x);
        Ok(y)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| no_cache(&self.name))?;
        let wname = format!("{}.weight", self.name);
        let (gx, gw, gb) = ops::linear_backward(&x, store.value(&wname)?, &grad)?;
        store.accumulate_grad(&wname, &gw)?;
        store.accumulate_grad(&format!("{}.bias", self.name), &gb)?;
        Ok(gx)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        match in_dims {
            [b, f] if *f == self.in_features => Ok(vec![*b, self.out_features]),
            _ => Err(Error::Shape(format!(
                "{}: expects (B, {}), got {in_dims:?}",
                self.name, self.in_features
            ))),
        }
    }

    fn macs(&self, in_dims: &[usize]) -> Result<u64> {
        Ok((in_dims[0] * self.in_features * self.out_features) as u64)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        out.push(LayerSpec::FullyConnected {
            name: self.name.clone(),
            in_features: self.in_features,
            out_features: self.out_features,
            bias: true,
        });
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn with(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.push(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Output dims after each top-level layer.
    pub fn trace_dims(&self, in_dims: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut dims = in_dims.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            dims = l.out_dims(&dims)?;
            out.push(dims.clone());
        }
        Ok(out)
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        for l in &mut self.layers {
            x = l.forward(store, x, mode)?;
        }
        Ok(x)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        for l in self.layers.iter_mut().rev() {
            grad = l.backward(store, grad)?;
        }
        Ok(grad)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let mut dims = in_dims.to_vec();
        for l in &self.layers {
            dims = l.out_dims(&dims)?;
        }
        Ok(dims)
    }

    fn macs(&self, in_dims: &[usize]) -> Result<u64> {
        let mut dims = in_dims.to_vec();
        let mut total = 0;
        for l in &self.layers {
            total += l.macs(&dims)?;
            dims = l.out_dims(&dims)?;
        }
        Ok(total)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        for l in &self.layers {
            l.specs(out);
        }
    }
}

/// `inner(x) + x`.
pub struct Residual<T> {
    inner: Sequential<T>,
}

impl<T: Scalar> Residual<T> {
    pub fn new(inner: Sequential<T>) -> Self {
        Self { inner }
    }
}

impl<T: Scalar> Layer<T> for Residual<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut y = self.inner.forward(store, x.clone(), mode)?;
        y.add_assign(&x)?;
        Ok(y)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let mut gx = self.inner.backward(store, grad.clone())?;
        gx.add_assign(&grad)?;
        Ok(gx)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let d = self.inner.out_dims(in_dims)?;
        if d != in_dims {
            return Err(Error::Shape(format!("residual body maps {in_dims:?} to {d:?}")));
        }
        Ok(d)
    }

    fn macs(&self, in_dims: &[usize]) -> Result<u64> {
        self.inner.macs(in_dims)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        self.inner.specs(out);
    }
}

/// `a(x) + b(x)`; both paths must produce the same shape.
pub struct TwoPath<T> {
    a: Sequential<T>,
    b: Sequential<T>,
}

impl<T: Scalar> TwoPath<T> {
    pub fn new(a: Sequential<T>, b: Sequential<T>) -> Self {
        Self { a, b }
    }

    pub fn path_dims(&self, in_dims: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        Ok((self.a.out_dims(in_dims)?, self.b.out_dims(in_dims)?))
    }
}

impl<T: Scalar> Layer<T> for TwoPath<T> {
    fn forward(&mut self, store: &mut ParamStore<T>, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut ya = self.a.forward(store, x.clone(), mode)?;
        let yb = self.b.forward(store, x, mode)?;
        ya.add_assign(&yb)?;
        Ok(ya)
    }

    fn backward(&mut self, store: &mut ParamStore<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let mut ga = self.a.backward(store, grad.clone())?;
        let gb = self.b.backward(store, grad)?;
        ga.add_assign(&gb)?;
        Ok(ga)
    }

    fn out_dims(&self, in_dims: &[usize]) -> Result<Vec<usize>> {
        let (da, db) = self.path_dims(in_dims)?;
        if da != db {
            return Err(Error::Shape(format!("two-path outputs differ: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn macs(&self, in_dims: &[usize]) -> Result<u64> {
        Ok(self.a.macs(in_dims)? + self.b.macs(in_dims)?)
    }

    fn specs(&self, out: &mut Vec<LayerSpec>) {
        self.a.specs(out);
        self.b.specs(out);
    }
}

/// Depthwise `k×k` conv followed by a pointwise conv, as one chain.
pub fn depthwise_separable<T: Scalar, R: Rng + ?Sized>(
    name: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    store: &mut ParamStore<T>,
    rng: &mut R,
) -> Result<Sequential<T>> {
    let dw = Conv2d::new(
        &format!("{name}.dw"),
        ConvGeometry::depthwise(in_channels, kernel),
        false,
        store,
        rng,
    )?;
    let pw = Conv2d::new(
        &format!("{name}.pw"),
        ConvGeometry::pointwise(in_channels, out_channels),
        false,
        store,
        rng,
    )?;
    Ok(Sequential::new().with(dw).with(pw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn depthwise_separable_params() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = depthwise_separable("ds", 30, 30, 3, &mut store, &mut rng).unwrap();
        assert_eq!(store.count(), 270 + 900);
        let mut specs = Vec::new();
        ds.specs(&mut specs);
        assert_eq!(specs[0].kind(), "depthwise-conv");
        assert_eq!(specs[1].kind(), "pointwise-conv");
    }

    #[test]
    fn fc_10_to_2_counts() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fc = Linear::new("fc", 10, 2, &mut store, &mut rng).unwrap();
        assert_eq!(store.count(), 22);
        assert_eq!(Layer::<f32>::macs(&fc, &[1, 10]).unwrap(), 20);
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut store = ParamStore::<f32>::new();
        let mut relu = Relu::new();
        assert!(relu.backward(&mut store, Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn residual_rejects_shape_change() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new("c", ConvGeometry::pointwise(2, 3), false, &mut store, &mut rng).unwrap();
        let r = Residual::new(Sequential::new().with(conv));
        assert!(r.out_dims(&[1, 2, 4, 4]).is_err());
    }
}
